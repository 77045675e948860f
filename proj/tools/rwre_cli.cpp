// rwre: command-line front end for the experiments.
//
//   rwre calibrate --preset gauss2
//   rwre phase-scan --log-n 12 --out runs/phase --format jsonl
//
// Every run writes <out>/manifest.json (config echo, versions, seeds,
// verdicts) and one <experiment>.csv or .jsonl table.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rwre/clusters.hpp"
#include "rwre/envspec.hpp"
#include "rwre/experiments.hpp"
#include "rwre/io.hpp"
#include "rwre/tree.hpp"
#include "rwre/walker.hpp"

namespace fs = std::filesystem;
using namespace rwre;

namespace {

struct Common {
  std::string config;
  std::string preset = "gauss2";
  std::uint64_t seed = 1;
  int replicas = 0;  // 0: experiment default
  unsigned threads = 1;
  std::string out = "rwre-out";
  std::string format = "csv";
};

EnvironmentSpec preset_spec(const std::string& name) {
  if (name == "sym2") return calibrate_two_point(true);
  if (name == "asym2") return calibrate_two_point(false);
  if (name == "gauss2") return calibrate_lognormal();
  if (name == "schroeder") {
    auto s = calibrate_lognormal(OffspringLaw::from_pairs({{1, 0.5}, {3, 0.5}}));
    s.name = "schroeder";
    return s;
  }
  if (name == "boettcher") {
    auto s = calibrate_lognormal(OffspringLaw::from_pairs({{2, 0.5}, {3, 0.5}}));
    s.name = "boettcher";
    return s;
  }
  if (name == "flat") return flat_environment(OffspringLaw::deterministic(2));
  throw DomainError("unknown preset '" + name + "' (sym2, asym2, gauss2, schroeder, boettcher, flat)");
}

EnvironmentSpec load_spec(const Common& c) {
  if (c.config.empty()) return preset_spec(c.preset);
  std::ifstream in(c.config);
  if (!in) throw ParseError("cannot open config " + c.config);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_spec(ss.str());
}

class Run {
 public:
  Run(const Common& c, std::string command, const EnvironmentSpec& spec) : c_(c) {
    fs::create_directories(c.out);
    manifest_["version"] = std::string(kVersion);
    manifest_["compiler"] = __VERSION__;
    manifest_["command"] = std::move(command);
    manifest_["seed"] = c.seed;
    manifest_["threads"] = c.threads;
    manifest_["replicas"] = c.replicas;
    manifest_["format"] = c.format;
    manifest_["environment"] = spec_json(spec);
    manifest_["reports"] = nlohmann::json::array();
    manifest_["outputs"] = nlohmann::json::array();
  }

  nlohmann::json& manifest() { return manifest_; }

  void add(const ExperimentReport& r) {
    const std::string file = r.id + (c_.format == "jsonl" ? ".jsonl" : ".csv");
    std::ofstream os(fs::path(c_.out) / file, std::ios::app);
    if (c_.format == "jsonl")
      write_jsonl(r, os);
    else
      write_csv(r, os, written_.insert(file).second);
    manifest_["reports"].push_back(report_summary(r));
    manifest_["outputs"].push_back(file);
    for (const auto& v : r.verdicts)
      std::cout << (v.pass ? "PASS " : "FAIL ") << r.id << ": " << v.rule << (v.detail.empty() ? "" : " (" + v.detail + ")")
                << '\n';
    for (const auto& n : r.notes) std::cout << "note " << r.id << ": " << n << '\n';
  }

  ~Run() {
    std::ofstream os(fs::path(c_.out) / "manifest.json");
    os << manifest_.dump(2) << '\n';
  }

 private:
  const Common& c_;
  nlohmann::json manifest_;
  std::set<std::string> written_;
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) v.push_back(parse_double(tok));
  return v;
}

template <class T>
std::vector<T> parse_ints(const std::string& s) {
  std::vector<T> out;
  for (double x : parse_list(s)) out.push_back(static_cast<T>(x));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Null-recurrent random walk in random environment on Galton-Watson trees"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may also follow the subcommand
  Common c;
  app.add_option("--config", c.config, "environment config file (key = value)");
  app.add_option("--preset", c.preset, "built-in environment when no config is given")->capture_default_str();
  app.add_option("--seed", c.seed, "master seed")->capture_default_str();
  app.add_option("--replicas", c.replicas, "replicas per grid point (0: experiment default)");
  app.add_option("--threads", c.threads, "worker threads")->capture_default_str();
  app.add_option("--out", c.out, "output directory")->capture_default_str();
  app.add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "jsonl"}))->capture_default_str();

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "print the calibrated config and its analytics");

  // grow
  int grow_depth = 8;
  std::string dump_file;
  auto* grow = app.add_subcommand("grow", "grow a tree and report generation statistics");
  grow->add_option("--depth", grow_depth, "generations to materialize")->capture_default_str();
  grow->add_option("--dump", dump_file, "write the tree dump to this file");

  // walk
  std::uint64_t walk_steps = 1'000'000;
  auto* walk = app.add_subcommand("walk", "run one walk and report M_n(m), R_n, X_n*");
  walk->add_option("--steps", walk_steps, "walk length")->capture_default_str();

  // kstar
  KstarOptions ko;
  std::string ko_logn = "6,8,10,12,14", ko_zeta = "0.5,1.5";
  auto* kstar = app.add_subcommand("kstar", "accessible points K*_Phi(l) against the bracket and mean shape");
  kstar->add_option("--log-n", ko_logn, "effective log n grid")->capture_default_str();
  kstar->add_option("--zeta", ko_zeta, "zeta grid")->capture_default_str();
  kstar->add_option("--phi-factor", ko.phi_factor, "Phi = factor * log n")->capture_default_str();
  kstar->add_option("--epsilon", ko.epsilon)->capture_default_str();
  kstar->add_option("--spine-samples", ko.spine_samples)->capture_default_str();

  // phase-scan
  PhaseOptions po;
  std::string po_zeta = "0.25,0.5,0.75,1,1.25,1.5,1.75";
  auto* phase = app.add_subcommand("phase-scan", "E[K_n(l)] across zeta at l = (log n)^{1+zeta}");
  phase->add_option("--log-n", po.log_n, "effective log n for the exact-quenched curve")->capture_default_str();
  phase->add_option("--zeta", po_zeta, "zeta grid")->capture_default_str();
  phase->add_option("--kernel-samples", po.kernel_samples)->capture_default_str();
  phase->add_option("--walk-log-n", po.walk_log_n, "log n for the walker comparison")->capture_default_str();
  phase->add_option("--walk-trees", po.walk_trees)->capture_default_str();
  phase->add_option("--step-cap", po.step_cap)->capture_default_str();

  // minvbar
  MinVbarOptions mo;
  std::string mo_n = "8,27,64", mo_b, mo_mu, mo_contrast = "boettcher";
  auto* minv = app.add_subcommand("minvbar", "min V-bar tails at a_n = n^{1/3}");
  minv->add_option("--n", mo_n, "generation grid")->capture_default_str();
  minv->add_option("--b", mo_b, "b grid (lower tail)");
  minv->add_option("--mu", mo_mu, "mu grid (upper tail)");
  minv->add_option("--contrast", mo_contrast, "preset compared on the upper tail ('' to skip)")->capture_default_str();

  // lefttail
  LeftTailOptions lo;
  std::string lo_q = "1:0.5,3:0.5";
  auto* left = app.add_subcommand("lefttail", "left tail of Z_n (Schroeder case)");
  left->add_option("--offspring", lo_q, "offspring law k:p,...")->capture_default_str();
  left->add_option("--truncation", lo.truncation)->capture_default_str();

  // spine-check
  SpineCheckOptions so;
  auto* spinec = app.add_subcommand("spine-check", "many-to-one, ballot, passage and excursion checks");
  spinec->add_option("--mto-n", so.mto_n)->capture_default_str();
  spinec->add_option("--mto-samples", so.mto_samples)->capture_default_str();

  // clusters
  WitnessOptions wo;
  std::string root_offset = "rn";
  auto* clus = app.add_subcommand("clusters", "full-cluster and spread witnesses after n steps");
  clus->add_option("--steps", wo.steps)->capture_default_str();
  clus->add_option("--zeta", wo.zeta)->capture_default_str();
  clus->add_option("--epsilon", wo.epsilon)->capture_default_str();
  clus->add_option("--root-offset", root_offset, "rn: l - R_n, gamma: l - log n / gamma~")
      ->check(CLI::IsMember({"rn", "gamma"}))
      ->capture_default_str();

  // exact-check
  ExactCheckOptions eo;
  auto* exact = app.add_subcommand("exact-check", "hitting-probability reductions against solves and Monte Carlo");
  exact->add_option("--trees", eo.trees)->capture_default_str();
  exact->add_option("--excursions", eo.excursions)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto spec = load_spec(c);
    validate(spec);
    const std::string cmd = app.get_subcommands().front()->get_name();
    if (cal->parsed()) {
      std::cout << serialize(spec) << spec_json(spec)["analytics"].dump(2) << '\n';
      return 0;
    }
    Run run(c, cmd, spec);
    auto reps = [&](int dflt) { return c.replicas > 0 ? c.replicas : dflt; };
    if (grow->parsed()) {
      TreeArena t(spec, c.seed);
      t.grow_to_depth(grow_depth, true);
      ExperimentReport r("grow", spec.name, c.seed);
      r.resamples = t.survival_resamples();
      for (int k = 1; k <= grow_depth; ++k) {
        const auto g = generation_stats(t, k);
        const GridPoint p{{"generation", static_cast<double>(k)}};
        r.exact(p, "Z", static_cast<double>(g.Z));
        r.exact(p, "W", g.W);
        r.exact(p, "min_Vbar", g.min_Vbar);
        r.exact(p, "max_Vbar", g.max_Vbar);
      }
      if (!dump_file.empty()) {
        std::ofstream os(dump_file);
        dump_tree(t, os);
        run.manifest()["tree_dump"] = dump_file;
      }
      run.add(r);
    } else if (walk->parsed()) {
      TreeArena t(spec, derive_seed(c.seed, "walk-tree"));
      Walker w(t, derive_seed(c.seed, "walk"));
      w.run_steps(walk_steps);
      std::vector<int> gens;
      for (int m = 1; m <= w.max_depth(); ++m) gens.push_back(m);
      const auto o = observables(t, w, gens);
      ExperimentReport r("walk", spec.name, c.seed);
      for (const auto& [m, v] : o.M) r.exact({{"generation", static_cast<double>(m)}}, "M_n", static_cast<double>(v));
      r.exact({}, "R_n", o.R);
      r.exact({}, "X_star", o.Xstar);
      r.exact({}, "returns", static_cast<double>(w.returns()));
      r.exact({}, "nodes_materialized", static_cast<double>(t.size()));
      run.add(r);
    } else if (kstar->parsed()) {
      ko.log_n = parse_list(ko_logn);
      ko.zeta = parse_list(ko_zeta);
      ko.replicas = reps(ko.replicas);
      ko.seed = c.seed;
      ko.threads = c.threads;
      run.add(kstar_experiment(spec, ko));
    } else if (phase->parsed()) {
      po.zeta = parse_list(po_zeta);
      po.walk_replicas = reps(po.walk_replicas);
      po.seed = c.seed;
      po.threads = c.threads;
      run.add(phase_scan(spec, po));
    } else if (minv->parsed()) {
      mo.n = parse_ints<int>(mo_n);
      if (!mo_b.empty()) mo.b = parse_list(mo_b);
      if (!mo_mu.empty()) mo.mu = parse_list(mo_mu);
      if (!mo_contrast.empty()) mo.contrast = preset_spec(mo_contrast);
      mo.replicas = reps(mo.replicas);
      mo.seed = c.seed;
      mo.threads = c.threads;
      run.add(minvbar_experiment(spec, mo));
    } else if (left->parsed()) {
      std::vector<std::pair<int, double>> pairs;
      std::stringstream ss(lo_q);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) throw ParseError("offspring entries are k:p");
        pairs.emplace_back(static_cast<int>(parse_double(tok.substr(0, colon))), parse_double(tok.substr(colon + 1)));
      }
      lo.replicas = reps(lo.replicas);
      lo.seed = c.seed;
      lo.threads = c.threads;
      run.add(lefttail_experiment(OffspringLaw::from_pairs(pairs), lo));
    } else if (spinec->parsed()) {
      so.seed = c.seed;
      so.threads = c.threads;
      run.add(spine_report(spec, so));
    } else if (clus->parsed()) {
      wo.replicas = reps(wo.replicas);
      wo.root_from_Rn = root_offset == "rn";
      wo.seed = c.seed;
      wo.threads = c.threads;
      std::vector<WitnessRecord> recs;
      auto r = witness_experiment(spec, wo, &recs);
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& x = recs[i];
        if (x.censored) continue;
        const GridPoint p{{"replica", static_cast<double>(i)}, {"root_gen", static_cast<double>(x.root_gen)},
                          {"ancestor_gen", static_cast<double>(x.ancestor_gen)}};
        r.exact(p, "Rn", x.Rn);
        r.exact(p, "best_visited_fraction", x.full.fraction);
        r.exact(p, "witness_root", x.full.z);
        r.exact(p, "spread_satisfied", static_cast<double>(x.spread.satisfied));
        r.exact(p, "visited_at_l", static_cast<double>(x.visited_at_l));
      }
      run.add(r);
    } else if (exact->parsed()) {
      eo.seed = c.seed;
      eo.threads = c.threads;
      run.add(exact_report(spec, eo));
    }
  } catch (const Error& e) {
    std::cerr << "rwre: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
