#include <catch_amalgamated.hpp>

#include "rwre/envspec.hpp"
#include "rwre/exact.hpp"
#include "rwre/experiments.hpp"
#include "rwre/tree.hpp"

using namespace rwre;
using Catch::Approx;

TEST_CASE("annealed accessible mean against tree averages", "[experiments][mc]") {
  const auto spec = calibrate_lognormal();
  const int l = 6;
  for (double Phi : {0.5, 2.0}) {
    RunningStats trees;
    for (std::uint64_t i = 0; i < 20'000; ++i) {
      TreeArena t(spec, derive_seed(1, "test-trees", 0, i));
      trees.add(static_cast<double>(accessible_count_grow(t, Phi, l)));
    }
    const auto a = annealed_accessible_mean(spec, l, Phi, 200'000, 2);
    CHECK(std::abs(a.value - trees.mean()) <= 5 * std::hypot(a.std_error, trees.stderr_mean()));
  }
}

TEST_CASE("annealed quenched kernel against tree averages", "[experiments][mc]") {
  const auto spec = calibrate_lognormal();
  const int l = 4;
  const double log_n = std::log(30.0);
  RunningStats trees;
  for (std::uint64_t i = 0; i < 20'000; ++i) {
    TreeArena t(spec, derive_seed(2, "test-trees", 0, i));
    t.grow_to_depth(l);
    trees.add(quenched_mean_K(t, 30, l));
  }
  const auto a = annealed_quenched_mean(spec, log_n, l, 200'000, 3);
  CHECK(std::abs(a.value - trees.mean()) <= 5 * std::hypot(a.std_error, trees.stderr_mean()));
}

TEST_CASE("chunked means do not depend on the thread count", "[experiments][property]") {
  const auto spec = calibrate_lognormal();
  const auto one = annealed_accessible_mean(spec, 10, 3.0, 50'000, 7, 1);
  const auto three = annealed_accessible_mean(spec, 10, 3.0, 50'000, 7, 3);
  CHECK(one.value == three.value);
  CHECK(one.std_error == three.std_error);
  const auto other = annealed_accessible_mean(spec, 10, 3.0, 50'000, 8, 1);
  CHECK(one.value != other.value);
}

TEST_CASE("tilt for a target drift", "[experiments]") {
  for (const auto& spec : {calibrate_lognormal(), calibrate_two_point(false)}) {
    const auto law = spine_increment_law(spec);
    CHECK(detail::tilt_for_drift(law, -1.0) == 0.0);
    const double th = detail::tilt_for_drift(law, 0.4);
    CHECK(law.tilted(th).mean() == Approx(0.4).epsilon(1e-6));
  }
}

TEST_CASE("z score floor", "[experiments]") {
  CHECK(detail::z_score(0.0, 0.0, 0) == 0.0);
  CHECK(detail::z_score(1.0, 0.0, 0) == INFINITY);
  CHECK(detail::z_score(0.01, 0.0, 100) == Approx(1.0));
  CHECK(detail::z_score(-0.3, 0.1, 100) == Approx(3.0));
  CHECK(detail::effective_depth(std::exp(1.0), 1.0) == 7);
}

TEST_CASE("generation size law", "[experiments][oracle]") {
  const auto two = generation_size_law(OffspringLaw::deterministic(2), 5, 64);
  for (int g = 1; g <= 5; ++g) CHECK(two[static_cast<std::size_t>(g - 1)][static_cast<std::size_t>(1 << g)] == 1.0);
  const auto q = OffspringLaw::from_pairs({{1, 0.5}, {2, 0.5}});
  const auto law = generation_size_law(q, 10, 256);
  for (int g = 1; g <= 10; ++g) {
    const auto& row = law[static_cast<std::size_t>(g - 1)];
    CHECK(row[1] == Approx(std::pow(0.5, g)).epsilon(1e-12));
    double s = 0;
    for (double p : row) {
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(s <= 1.0 + 1e-12);
    if ((1 << g) < 256) CHECK(s == Approx(1.0).epsilon(1e-12));
  }
  CHECK(law[1][2] == Approx(0.375).epsilon(1e-12));  // q1 q2 + q2 q1^2
  // with extinction: P(Z_1 = 0) = q0, P(Z_2 = 0) = G(q0)
  const auto e = generation_size_law(OffspringLaw::from_pairs({{0, 0.25}, {3, 0.75}}), 2, 16);
  CHECK(e[0][0] == Approx(0.25));
  CHECK(e[1][0] == Approx(0.25 + 0.75 * std::pow(0.25, 3)).epsilon(1e-12));
  CHECK_THROWS_AS(generation_size_law(q, 0, 8), DomainError);
}

TEST_CASE("min V-bar", "[experiments]") {
  TreeArena flat(flat_environment(OffspringLaw::deterministic(3)), 1);
  CHECK(min_vbar(flat, 5) == 0.0);
  const auto spec = calibrate_lognormal();
  for (std::uint64_t seed : {1ULL, 2ULL}) {
    TreeArena lazy(spec, seed), full(spec, seed);
    full.grow_to_depth(8);
    CHECK(min_vbar(lazy, 8) == generation_stats(full, 8).min_Vbar);
  }
  TreeArena frozen(spec, 3);
  frozen.grow_to_depth(2);
  frozen.freeze();
  CHECK(min_vbar(frozen, 3) == INFINITY);
}

TEST_CASE("report helpers", "[experiments]") {
  ExperimentReport r{"demo", "gauss2", 5};
  r.measure({{"n", 1.0}}, "K", Estimate{2.0, 0.1, 10});
  r.exact({{"n", 1.0}}, "kernel", 2.05);
  r.predict({{"n", 2.0}}, "K", 3.0);
  r.verdict("a", true);
  CHECK(r.all_pass());
  r.verdict("b", false, "why");
  CHECK_FALSE(r.all_pass());
  REQUIRE(r.find_verdict("b") != nullptr);
  CHECK(r.find_verdict("b")->detail == "why");
  CHECK(r.find_verdict("c") == nullptr);
  CHECK(r.find("K")->value == 2.0);
  CHECK(r.find("K", {{"n", 2.0}})->predicted);
  CHECK(r.find("missing") == nullptr);
  CHECK(r.censoring_rate() == 0.0);
  r.runs = 4;
  r.censored = 1;
  CHECK(r.censoring_rate() == 0.25);
}

TEST_CASE("quenched mean experiment is deterministic", "[experiments]") {
  QuenchedMeanOptions o;
  o.trees = 2;
  o.replicas = 50;
  o.max_l = 4;
  o.n = 20;
  const auto spec = calibrate_lognormal();
  const auto a = quenched_mean_experiment(spec, o);
  const auto b = quenched_mean_experiment(spec, o);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].value == b.rows[i].value);
}
