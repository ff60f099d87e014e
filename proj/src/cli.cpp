#include "shipem/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "shipem/dispatch.hpp"
#include "shipem/domain.hpp"
#include "shipem/harness.hpp"

namespace shipem::cli {

namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ScenarioConfig load_with_overrides(const std::string& path, const std::vector<std::string>& sets) {
  return load_config(apply_overrides(slurp(path), sets));
}

void write_json(const fs::path& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<double> capacities_of(const ScenarioConfig& cfg) {
  std::vector<double> c;
  for (const auto& b : cfg.fleet.batteries) c.push_back(b.capacity);
  return c;
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> values;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ConfigError("bad sweep value '" + item + "'");
    values.push_back(v);
  }
  if (values.empty()) throw ConfigError("--values is empty");
  return values;
}

void write_run_outputs(const fs::path& out_dir, const ScenarioConfig& cfg,
                       const harness::RunResult& run, bool plant_trace, bool aborted) {
  fs::create_directories(out_dir);
  harness::write_trace(run.trace, (out_dir / "trace.csv").string());
  nlohmann::json doc;
  doc["scenario"] = cfg.name;
  doc["mode"] = to_string(cfg.em.mode);
  doc["aborted"] = aborted;
  doc["metrics"] = harness::metrics_to_json(run.metrics);
  doc["events"] = harness::events_to_json(run.events);
  write_json(out_dir / "metrics.json", doc);
  harness::write_figure_series(run.trace, capacities_of(cfg), (out_dir / "figures").string());
  if (plant_trace) harness::write_plant_trace(run.plant, (out_dir / "plant_trace.csv").string());
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Shipboard microgrid energy management simulator", "shipem"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::vector<std::string> sets;
  bool plant_trace = false;

  auto* run = app.add_subcommand("run", "Simulate a scenario and write trace, metrics and figure data");
  run->add_option("--config", config_path, "Scenario config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--set", sets, "Override a config key, key.path=value (repeatable)");
  run->add_flag("--plant-trace", plant_trace, "Also write plant_trace.csv at the plant step");

  std::string param;
  std::string values;
  int device = 0;
  int workers = 1;
  auto* sweep = app.add_subcommand("sweep", "Run one simulation per weight value");
  sweep->add_option("--config", config_path, "Scenario config (JSON)")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--set", sets, "Override a config key, key.path=value (repeatable)");
  sweep->add_option("--param", param, "Weight to sweep")
      ->required()
      ->check(CLI::IsMember({"beta", "gamma_p", "gamma_q", "gamma_j"}));
  sweep->add_option("--values", values, "Comma-separated non-negative values")->required();
  sweep->add_option("--device", device, "Battery index (0-based) for gamma_j")->capture_default_str();
  sweep->add_option("--workers", workers, "Concurrent runs")->capture_default_str()->check(
      CLI::PositiveNumber);

  std::string input_path;
  auto* disp = app.add_subcommand("dispatch", "Solve an economic dispatch problem file");
  disp->add_option("--input", input_path, "Dispatch problem (JSON)")->required();
  disp->add_option("--out", out_dir, "Optional directory for dispatch.json");

  auto* val = app.add_subcommand("validate", "Load and check a config without running it");
  val->add_option("--config", config_path, "Scenario config (JSON)")->required();
  val->add_option("--set", sets, "Override a config key, key.path=value (repeatable)");

  std::string trace_path;
  auto* plot = app.add_subcommand("plotdata", "Convert a trace into per-figure series files");
  plot->add_option("--trace", trace_path, "trace.csv from a run")->required();
  plot->add_option("--config", config_path, "Config used for the run (enables capacity series)");
  plot->add_option("--out", out_dir, "Directory for the series files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*val) {
      const ScenarioConfig cfg = load_with_overrides(config_path, sets);
      out << "ok: " << (cfg.name.empty() ? config_path : cfg.name) << " (" << cfg.n_gen()
          << " generators, " << cfg.n_batt() << " batteries, " << to_string(cfg.em.mode) << ")\n";
      return kExitOk;
    }

    if (*run) {
      const ScenarioConfig cfg = load_with_overrides(config_path, sets);
      harness::RunOptions opts;
      opts.plant_trace = plant_trace;
      try {
        const harness::RunResult result = harness::run_scenario(cfg, opts);
        write_run_outputs(out_dir, cfg, result, plant_trace, false);
        out << "wrote " << (fs::path(out_dir) / "trace.csv").string() << " ("
            << result.trace.rows.size() << " ticks)\n";
        return kExitOk;
      } catch (const harness::RunAborted& e) {
        write_run_outputs(out_dir, cfg, e.partial(), plant_trace, true);
        err << "run aborted: " << e.what() << '\n';
        return kExitFault;
      }
    }

    if (*sweep) {
      const ScenarioConfig cfg = load_with_overrides(config_path, sets);
      harness::SweepSpec spec;
      spec.param = harness::parse_sweep_param(param);
      spec.values = parse_values(values);
      spec.device = device;
      spec.workers = workers;
      const auto rows = harness::sweep_weights(cfg, spec);
      fs::create_directories(out_dir);
      nlohmann::json doc;
      doc["scenario"] = cfg.name;
      doc["param"] = param;
      if (spec.param == harness::SweepParam::gamma_j) doc["device"] = device;
      doc["rows"] = nlohmann::json::array();
      for (const auto& r : rows) {
        doc["rows"].push_back({{"value", r.value}, {"metrics", harness::metrics_to_json(r.metrics)}});
      }
      write_json(fs::path(out_dir) / "metrics.json", doc);
      harness::write_sweep_series(rows, spec.param, (fs::path(out_dir) / "figures").string());

      out << param << "\tgen_mwh\tbatt_mwh\trms_w\n";
      for (const auto& r : rows) {
        double ge = 0.0;
        double be = 0.0;
        for (double v : r.metrics.gen_energy_wh) ge += v;
        for (double v : r.metrics.batt_abs_energy_wh) be += v;
        out << r.value << '\t' << ge / kWattsPerMegawatt << '\t' << be / kWattsPerMegawatt << '\t'
            << r.metrics.rms_tracking_error << '\n';
      }
      return kExitOk;
    }

    if (*disp) {
      dispatch::DispatchProblem prob;
      try {
        prob = dispatch::parse_dispatch(slurp(input_path));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      dispatch::DispatchResult res;
      try {
        res = dispatch::economic_dispatch(prob.costs, prob.bounds, prob.p_load);
      } catch (const std::domain_error& e) {
        throw ConfigError(e.what());
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      out << std::setprecision(12);
      for (std::size_t i = 0; i < res.p.size(); ++i) {
        out << "unit " << i + 1 << ": " << res.p[i] << (res.clamped[i] ? " (at limit)" : "") << '\n';
      }
      out << "lambda: " << res.lambda << "\ncost: " << res.total_cost << '\n';
      if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_json(fs::path(out_dir) / "dispatch.json",
                   {{"p", res.p}, {"lambda", res.lambda}, {"clamped", res.clamped},
                    {"cost", res.total_cost}});
      }
      return kExitOk;
    }

    if (*plot) {
      const harness::SimulationTrace trace = harness::read_trace(trace_path);
      std::vector<double> caps;
      if (!config_path.empty()) {
        const ScenarioConfig cfg = load_config_file(config_path);
        if (static_cast<int>(cfg.n_batt()) != trace.n_batt) {
          throw ConfigError("config battery count does not match the trace");
        }
        caps = capacities_of(cfg);
      }
      for (const auto& f : harness::write_figure_series(trace, caps, out_dir)) out << f << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "fault: " << e.what() << '\n';
    return kExitFault;
  }
  return kExitUsage;
}

}  // namespace shipem::cli
