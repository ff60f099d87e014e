#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "shipem/cli.hpp"
#include "shipem/harness.hpp"
#include "support.hpp"

using namespace shipem;
namespace fs = std::filesystem;

namespace {

struct Invocation {
  int code = -1;
  std::string out;
  std::string err;
};

Invocation shipem_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "shipem");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Invocation r;
  r.code = cli::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("shipem_cli_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("validate") {
  const Invocation ok = shipem_cli({"validate", "--config", test::config_path("heuristics.json")});
  CHECK(ok.code == cli::kExitOk);
  CHECK(ok.out.rfind("ok: ", 0) == 0);

  const Invocation bad = shipem_cli({"validate", "--config", test::config_path("heuristics.json"), "--set",
                              "batteries.0.soc_min=0.9"});
  CHECK(bad.code == cli::kExitUsage);
  CHECK(bad.err.find("q_min < q_max") != std::string::npos);

  CHECK(shipem_cli({"validate", "--config", "/nonexistent.json"}).code == cli::kExitUsage);
  CHECK(shipem_cli({"validate", "--config", test::config_path("heuristics.json"), "--set", "nokey=3"}).code ==
        cli::kExitUsage);
}

TEST_CASE("run on zero load writes a trace of zeros") {
  const fs::path out = scratch("zero");
  const Invocation r = shipem_cli({"run", "--config", test::config_path("zero_load.json"), "--out", out.string()});
  REQUIRE(r.code == cli::kExitOk);
  const auto trace = harness::read_trace((out / "trace.csv").string());
  REQUIRE(trace.rows.size() == 10);
  for (const auto& row : trace.rows) {
    CHECK(row.p_g[0] == 0.0);
    CHECK(row.p_b[0] == 0.0);
  }
  const auto doc = nlohmann::json::parse(slurp(out / "metrics.json"));
  CHECK(doc["aborted"] == false);
  CHECK(fs::exists(out / "figures" / "power_split.csv"));
}

TEST_CASE("sweep prints one row per value") {
  const fs::path out = scratch("sweep");
  const Invocation r = shipem_cli({"sweep", "--config", test::config_path("single_pgm_pcm.json"), "--out",
                            out.string(), "--param", "gamma_p", "--values", "0,1,10,100,1000",
                            "--workers", "2"});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 6);
  const auto doc = nlohmann::json::parse(slurp(out / "metrics.json"));
  CHECK(doc["rows"].size() == 5);
  CHECK(fs::exists(out / "figures" / "sweep.csv"));

  CHECK(shipem_cli({"sweep", "--config", test::config_path("single_pgm_pcm.json"), "--out", out.string(),
             "--param", "delta", "--values", "1"})
            .code == cli::kExitUsage);
  CHECK(shipem_cli({"sweep", "--config", test::config_path("single_pgm_pcm.json"), "--out", out.string(),
             "--param", "beta", "--values", "1,x"})
            .code == cli::kExitUsage);
}

TEST_CASE("dispatch") {
  const fs::path out = scratch("dispatch");
  const Invocation r = shipem_cli({"dispatch", "--input", test::config_path("dispatch_two_units.json"), "--out",
                            out.string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(r.out.find("unit 1: 2\n") != std::string::npos);
  CHECK(r.out.find("unit 2: 1\n") != std::string::npos);
  const auto doc = nlohmann::json::parse(slurp(out / "dispatch.json"));
  CHECK(doc["p"][0].get<double>() == doctest::Approx(2.0));
  CHECK(shipem_cli({"dispatch", "--input", test::config_path("heuristics.json")}).code == cli::kExitUsage);
}

TEST_CASE("aborted run exits with a fault and keeps the partial trace") {
  const fs::path out = scratch("abort");
  const Invocation r = shipem_cli({"run", "--config", test::config_path("four_zone.json"), "--out", out.string(),
                            "--set", "em.max_iters=2"});
  CHECK(r.code == cli::kExitFault);
  const auto doc = nlohmann::json::parse(slurp(out / "metrics.json"));
  CHECK(doc["aborted"] == true);
  CHECK(harness::read_trace((out / "trace.csv").string()).rows.size() == 1);
}

TEST_CASE("plotdata regenerates series from a trace") {
  const fs::path run = scratch("plot_run");
  REQUIRE(shipem_cli({"run", "--config", test::config_path("heuristics.json"), "--out", run.string()}).code == 0);
  const fs::path out = scratch("plot");
  const Invocation r = shipem_cli({"plotdata", "--trace", (run / "trace.csv").string(), "--config",
                            test::config_path("heuristics.json"), "--out", out.string()});
  REQUIRE(r.code == cli::kExitOk);
  CHECK(slurp(out / "soc.csv") == slurp(run / "figures" / "soc.csv"));
  CHECK(shipem_cli({"plotdata", "--trace", (run / "trace.csv").string(), "--config",
             test::config_path("four_zone.json"), "--out", out.string()})
            .code == cli::kExitUsage);
}

TEST_CASE("usage errors") {
  CHECK(shipem_cli({}).code == cli::kExitUsage);
  CHECK(shipem_cli({"launch"}).code == cli::kExitUsage);
  CHECK(shipem_cli({"run", "--config", test::config_path("heuristics.json")}).code == cli::kExitUsage);
  CHECK(shipem_cli({"validate", "--config", test::config_path("heuristics.json"), "--bogus"}).code ==
        cli::kExitUsage);
}

TEST_CASE("help lists every flag") {
  const std::vector<std::pair<std::string, std::vector<std::string>>> subs = {
      {"run", {"--config", "--out", "--set", "--plant-trace"}},
      {"sweep", {"--config", "--out", "--set", "--param", "--values", "--device", "--workers"}},
      {"dispatch", {"--input", "--out"}},
      {"validate", {"--config", "--set"}},
      {"plotdata", {"--trace", "--config", "--out"}},
  };
  for (const auto& [sub, flags] : subs) {
    const Invocation r = shipem_cli({sub, "--help"});
    CAPTURE(sub);
    CHECK(r.code == cli::kExitOk);
    for (const auto& f : flags) CHECK(r.out.find(f) != std::string::npos);
  }
}

TEST_CASE("two runs write byte-identical traces") {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  REQUIRE(shipem_cli({"run", "--config", test::config_path("four_zone.json"), "--out", a.string()}).code == 0);
  REQUIRE(shipem_cli({"run", "--config", test::config_path("four_zone.json"), "--out", b.string()}).code == 0);
  CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
}

}
