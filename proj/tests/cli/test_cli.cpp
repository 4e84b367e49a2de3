#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kExe = BSVIE_EXE;
const fs::path kConfigs = BSVIE_CONFIGS;

fs::path scratch() {
  static const fs::path dir = fs::temp_directory_path() / ("bsvie_cli_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run run(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const fs::path o = scratch() / ("stdout" + std::to_string(counter));
  const fs::path e = scratch() / ("stderr" + std::to_string(counter++));
  const std::string cmd = env + " '" + kExe.string() + "' " + args + " >'" + o.string() + "' 2>'" + e.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(o), slurp(e)};
}

std::string cfg(const std::string& name) { return "-c '" + (kConfigs / name).string() + "'"; }

std::string out_dir(const std::string& name) { return (scratch() / name).string(); }

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

fs::path write_config(const std::string& name, const json& j) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << j.dump();
  return p;
}

}  // namespace

TEST_CASE("resolvent: example-1 diagnostics") {
  const Run r = run("resolvent " + cfg("resolvent_example1.json") + " -o " + out_dir("res"));
  REQUIRE(r.code == 0);
  const json d = read_json(scratch() / "res" / "diagnostics.json");
  CHECK(std::abs(d["L_lambda"].get<double>() - 1.0 / 6.0) < 1e-10);
  CHECK(d["cross_method_max_diff"].get<double>() <= 1e-8);
  CHECK(d["closed_form_max_abs_error"].get<double>() < 1e-6);
  CHECK(d["series_terms_used"].get<int>() > 0);
  CHECK(d["residual"].get<double>() >= 0.0);
  const json& m = d["metadata"];
  CHECK(m["version"].get<std::string>() == "0.1.0");
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  CHECK(m["seed"].is_null());
  CHECK(m["grid"]["n_panels"].get<int>() == 64);
  const std::string csv = slurp(scratch() / "res" / "resolvent.csv");
  CHECK(csv.rfind("t,s,psi,phi,residual\n", 0) == 0);
}

TEST_CASE("resolvent: contraction guard exits 2") {
  const Run r = run("resolvent " + cfg("resolvent_example1.json") +
                    " --set kernel.alpha=2 --set kernel.gamma=1 --set grid.n_panels=4 -o " + out_dir("bad"));
  CHECK(r.code == 2);
  CHECK(r.err.find("contraction condition violated: L(lambda)=") != std::string::npos);
}

TEST_CASE("config errors exit 1") {
  std::ofstream(scratch() / "broken.json") << "{\"grid\": {\"t_max\": 3,";
  CHECK(run("resolvent -c '" + (scratch() / "broken.json").string() + "'").code == 1);
  CHECK(run("resolvent -c /nonexistent/config.json").code == 1);

  const Run unknown = run("resolvent " + cfg("resolvent_example1.json") + " --set grid.bogus=1");
  CHECK(unknown.code == 1);
  CHECK(unknown.err.find("grid.bogus: unknown key") != std::string::npos);

  const Run range = run("resolvent " + cfg("resolvent_example1.json") + " --set grid.n_panels=0");
  CHECK(range.code == 1);
  CHECK(range.err.find("grid.n_panels") != std::string::npos);

  CHECK(run("resolvent " + cfg("resolvent_example1.json") + " --set kernel.type=\\\"nope\\\"").code == 1);
  CHECK(run("control " + cfg("control.json") + " --set problem.kappa=0").code == 1);
  CHECK(run("frobnicate").code == 1);
  // path-dependent driver without an mc block
  CHECK(run("solve " + cfg("solve_stochastic.json") + " --set mc=null --set zk=null --set verify=null").code == 1);
}

TEST_CASE("A1 violation exits 2") {
  const json tab = {{"grid", {{"t_max", 2.0}, {"n_panels", 2}, {"pts_per_panel", 3}}},
                    {"kernel",
                     {{"type", "tabulated"},
                      {"points", {0.0, 1.0, 2.0}},
                      {"values", {{0.3, 0.2, 0.1}, {0.3, 0.3, 0.2}, {0.3, 0.3, 0.3}}},
                      {"c_phi", 0.1}}}};
  const Run r = run("resolvent -c '" + write_config("tab.json", tab).string() + "' -o " + out_dir("tab"));
  CHECK(r.code == 2);
  CHECK(r.err.find("A1") != std::string::npos);
}

TEST_CASE("solve: deterministic example 1") {
  const Run r = run("solve " + cfg("solve_example1.json") + " -o " + out_dir("det"));
  REQUIRE(r.code == 0);
  const json d = read_json(scratch() / "det" / "diagnostics.json");
  CHECK(std::abs(d["Y0"].get<double>() - 1.2) <= 1e-6);
  CHECK(d["passed"].get<bool>());
  CHECK(d["verifiers"][0]["name"] == "m_solution_max_abs_U");
}

TEST_CASE("solve: stochastic runs are byte-identical across threads") {
  const std::string args = "solve " + cfg("solve_stochastic.json") + " --set mc.paths=1000 -o ";
  const Run a = run(args + out_dir("s1"), "BSVIE_THREADS=1");
  const Run b = run(args + out_dir("s4"), "BSVIE_THREADS=4");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  for (const char* f : {"y.csv", "z.csv", "diagnostics.json"}) {
    const std::string x = slurp(scratch() / "s1" / f);
    CHECK(!x.empty());
    CHECK(x == slurp(scratch() / "s4" / f));
  }
  const json d = read_json(scratch() / "s1" / "diagnostics.json");
  CHECK(d["metadata"]["seed"].get<int>() == 7);
  CHECK(d["zk_rows"].size() == 2);
  CHECK(d["zk_rows"][1].contains("m_solution"));

  // the threads key never changes the outputs
  const Run c = run(args + out_dir("s2") + " --set threads=2");
  REQUIRE(c.code == 0);
  CHECK(slurp(scratch() / "s1" / "diagnostics.json") == slurp(scratch() / "s2" / "diagnostics.json"));
  // a different seed does
  const Run e = run(args + out_dir("s7") + " --set mc.seed=8");
  REQUIRE(e.code == 0);
  CHECK(slurp(scratch() / "s1" / "y.csv") != slurp(scratch() / "s7" / "y.csv"));
}

TEST_CASE("solve: jumps write K") {
  const Run r = run("solve " + cfg("solve_jumps.json") + " --set mc.paths=1000 -o " + out_dir("jumps"));
  REQUIRE(r.code == 0);
  CHECK(slurp(scratch() / "jumps" / "k.csv").rfind("t,s,zeta,K\n", 0) == 0);
  const json d = read_json(scratch() / "jumps" / "diagnostics.json");
  CHECK(!d["assumptions"]["novikov"].is_null());
}

TEST_CASE("solve: random xi blocks Z/K with exit 2") {
  const Run r = run("solve " + cfg("solve_stochastic.json") +
                    " --set mc.paths=200 --set measure.random_xi=true --set verify=null -o " + out_dir("rxi"));
  CHECK(r.code == 2);
  CHECK(r.err.find("deterministic coefficients required for Z/K extraction") != std::string::npos);
}

TEST_CASE("solve: verifier failure exits 4") {
  const Run r = run("solve " + cfg("solve_stochastic.json") +
                    " --set mc.paths=500 --set verify.representation_tolerance=1e-9 -o " + out_dir("vf"));
  CHECK(r.code == 4);
  const json d = read_json(scratch() / "vf" / "diagnostics.json");
  CHECK_FALSE(d["passed"].get<bool>());
}

TEST_CASE("example1 and example2 default configs pass") {
  const Run e1 = run("example1 " + cfg("example1.json") + " -o " + out_dir("e1"));
  CHECK(e1.code == 0);
  const json r1 = read_json(scratch() / "e1" / "report.json");
  CHECK(r1["report"]["passed"].get<bool>());
  CHECK(r1["report"]["checks"].size() >= 8);

  const Run e2 = run("example2 " + cfg("example2.json") + " -o " + out_dir("e2"));
  CHECK(e2.code == 0);
  const json r2 = read_json(scratch() / "e2" / "report.json");
  CHECK(std::abs(r2["report"]["values"]["Y0_formula"].get<double>() - 0.5) < 1e-6);

  // a coarse grid fails the 1e-6 checks
  CHECK(run("example1 " + cfg("example1.json") + " --set grid.n_panels=4 -o " + out_dir("e1c")).code == 4);
  CHECK(run("example1 " + cfg("example1.json") + " --set alpha=2 --set gamma=1 -o " + out_dir("e1b")).code == 2);
}

TEST_CASE("control: closed form and outputs") {
  const Run r = run("control " + cfg("control.json") +
                    " --set problem.sigma=0 --set paths=4 --set grid.n_panels=24 --set grid.t_max=12 -o " +
                    out_dir("ctl"));
  REQUIRE(r.code == 0);
  const json j = read_json(scratch() / "ctl" / "report.json");
  CHECK(j["checks"][0]["pass"].get<bool>());
  CHECK(j["checks"][0]["value"].get<double>() < 1e-8);
  CHECK(j["ranked"].size() == 3);
  CHECK(j["stationarity_probes"].size() == 4);
  CHECK(slurp(scratch() / "ctl" / "adjoint.csv").rfind("t,Y,u\n", 0) == 0);

  const Run x = run("control " + cfg("control.json") + " --set problem.a=3 --set problem.rho=10 --set problem.explosion_cap=100 "
                    "--set adjoint_driver=zero --set paths=50 -o " + out_dir("boom"));
  CHECK(x.code == 3);
  CHECK(x.err.find("instability") != std::string::npos);
}

TEST_CASE("overrides: values fall back to strings") {
  const Run r = run("resolvent " + cfg("resolvent_example1.json") + " --set resolvent.method=series --set "
                    "grid.n_panels=8 -o " + out_dir("ovr"));
  REQUIRE(r.code == 0);
  CHECK(read_json(scratch() / "ovr" / "diagnostics.json")["method"] == "series");
  CHECK(run("resolvent " + cfg("resolvent_example1.json") + " --set novalue").code == 1);
}
