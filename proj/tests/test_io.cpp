#include <catch_amalgamated.hpp>

#include <sstream>

#include "rwre/envspec.hpp"
#include "rwre/io.hpp"

using namespace rwre;
using nlohmann::json;

namespace {

ExperimentReport sample_report() {
  ExperimentReport r{"demo", "gauss2", 3};
  r.measure({{"n", 10.0}, {"l", 2.0}}, "K", Estimate{1.5, 0.25, 40});
  r.predict({{"n", 10.0}}, "kernel", INFINITY);
  r.exact({}, "odd", NAN);
  r.verdict("rule_a", true, "fine");
  r.verdict("rule, with comma", false, "said \"no\"");
  r.notes.push_back("a note");
  return r;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_CASE("CSV quoting", "[io]") {
  CHECK(detail::csv_field("plain") == "plain");
  CHECK(detail::csv_field("a,b") == "\"a,b\"");
  CHECK(detail::csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(detail::csv_field("two\nlines") == "\"two\nlines\"");
}

TEST_CASE("CSV report layout", "[io]") {
  std::ostringstream os;
  write_csv(sample_report(), os);
  const auto ls = lines(os.str());
  REQUIRE(ls.size() == 6);
  CHECK(ls[0] == "experiment,spec,point,quantity,value,std_error,samples,predicted");
  CHECK(ls[1].rfind("demo,gauss2,n=10;l=2,K,1.5,0.25,40,0", 0) == 0);
  CHECK(ls[2].find(",1") == ls[2].size() - 2);  // predicted flag
  CHECK(ls[5].find("\"verdict:rule, with comma\"") != std::string::npos);
  std::ostringstream no_header;
  write_csv(sample_report(), no_header, false);
  CHECK(lines(no_header.str()).size() == 5);
}

TEST_CASE("JSON lines parse back", "[io]") {
  std::ostringstream os;
  write_jsonl(sample_report(), os);
  const auto ls = lines(os.str());
  REQUIRE(ls.size() == 5);
  const auto m = json::parse(ls[0]);
  CHECK(m["type"] == "measurement");
  CHECK(m["experiment"] == "demo");
  CHECK(m["point"]["n"] == 10.0);
  CHECK(m["value"] == 1.5);
  CHECK(m["samples"] == 40);
  CHECK(json::parse(ls[1])["value"] == "inf");
  CHECK(json::parse(ls[1])["predicted"] == true);
  CHECK(json::parse(ls[2])["value"] == "nan");
  const auto v = json::parse(ls[4]);
  CHECK(v["type"] == "verdict");
  CHECK(v["pass"] == false);
  CHECK(v["detail"] == "said \"no\"");
}

TEST_CASE("non-finite numbers become strings", "[io]") {
  CHECK(detail::number(1.25) == 1.25);
  CHECK(detail::number(INFINITY) == "inf");
  CHECK(detail::number(-INFINITY) == "-inf");
  CHECK(detail::number(NAN) == "nan");
}

TEST_CASE("report summary and spec block", "[io]") {
  const auto s = report_summary(sample_report());
  CHECK(s["experiment"] == "demo");
  CHECK(s["seed"] == 3);
  CHECK(s["verdicts"].size() == 2);
  CHECK(s["notes"][0] == "a note");
  for (const auto& spec : {calibrate_two_point(true), calibrate_lognormal()}) {
    const auto j = spec_json(spec);
    // the config string round-trips through the parser
    const auto back = parse_spec(j["config"].get<std::string>());
    CHECK(serialize(back) == serialize(spec));
    CHECK(j["analytics"]["psi0"].get<double>() == Catch::Approx(std::log(2.0)));
    CHECK(j["analytics"]["lattice"] == spec.lattice);
    CHECK(j.dump().find("NaN") == std::string::npos);
  }
}
