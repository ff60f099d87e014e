#include "shipem/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>

#include "shipem/em_central.hpp"
#include "shipem/em_distributed.hpp"
#include "shipem/plant.hpp"

namespace shipem::harness {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw std::runtime_error("trace: bad number '" + s + "'");
  return v;
}

double trapezoid_wh(const std::vector<TraceRow>& rows, auto&& value) {
  double e = 0.0;
  for (std::size_t k = 1; k < rows.size(); ++k) {
    e += 0.5 * (rows[k].t - rows[k - 1].t) * (value(rows[k - 1]) + value(rows[k]));
  }
  return e / kSecondsPerHour;
}

}  // namespace

double pulse_load_profile(const PulseLoadSpec& spec, double t) {
  if (!(t >= 0.0 && t <= spec.total_duration)) {
    throw std::out_of_range("pulse_load_profile: t outside [0, total_duration]");
  }
  double p = spec.base;
  for (const Pulse& pulse : spec.pulses) {
    if (t >= pulse.start && t < pulse.end) p += pulse.amplitude;
  }
  return p;
}

std::string trace_header(int n_gen, int n_batt) {
  std::string h = "t,p_L,balance";
  for (int i = 1; i <= n_gen; ++i) h += ",p_g_" + std::to_string(i);
  for (int j = 1; j <= n_batt; ++j) h += ",p_b_" + std::to_string(j);
  for (int j = 1; j <= n_batt; ++j) h += ",q_" + std::to_string(j);
  for (int j = 1; j <= n_batt; ++j) h += ",QL_" + std::to_string(j);
  h += ",iters,residual";
  return h;
}

std::string trace_to_csv(const SimulationTrace& trace) {
  std::string out = trace_header(trace.n_gen, trace.n_batt);
  out += '\n';
  for (const TraceRow& r : trace.rows) {
    out += fmt(r.t);
    out += ',' + fmt(r.p_load);
    out += ',' + fmt(r.balance);
    for (double v : r.p_g) out += ',' + fmt(v);
    for (double v : r.p_b) out += ',' + fmt(v);
    for (double v : r.q) out += ',' + fmt(v);
    for (double v : r.q_loss) out += ',' + fmt(v);
    out += ',' + std::to_string(r.iters);
    out += ',' + fmt(r.residual);
    out += '\n';
  }
  return out;
}

void write_trace(const SimulationTrace& trace, const std::string& path) {
  write_text(path, trace_to_csv(trace));
}

SimulationTrace parse_trace(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("trace: missing header");
  const auto header = split(line, ',');
  SimulationTrace trace;
  for (const auto& col : header) {
    if (col.rfind("p_g_", 0) == 0) ++trace.n_gen;
    if (col.rfind("p_b_", 0) == 0) ++trace.n_batt;
  }
  if (line != trace_header(trace.n_gen, trace.n_batt)) {
    throw std::runtime_error("trace: unexpected header '" + line + "'");
  }
  const std::size_t ncol = header.size();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != ncol) throw std::runtime_error("trace: wrong column count");
    TraceRow r;
    std::size_t c = 0;
    r.t = parse_number(cells[c++]);
    r.p_load = parse_number(cells[c++]);
    r.balance = parse_number(cells[c++]);
    for (int i = 0; i < trace.n_gen; ++i) r.p_g.push_back(parse_number(cells[c++]));
    for (int j = 0; j < trace.n_batt; ++j) r.p_b.push_back(parse_number(cells[c++]));
    for (int j = 0; j < trace.n_batt; ++j) r.q.push_back(parse_number(cells[c++]));
    for (int j = 0; j < trace.n_batt; ++j) r.q_loss.push_back(parse_number(cells[c++]));
    r.iters = static_cast<int>(parse_number(cells[c++]));
    r.residual = parse_number(cells[c++]);
    trace.rows.push_back(std::move(r));
  }
  return trace;
}

SimulationTrace read_trace(const std::string& path) { return parse_trace(read_text(path)); }

Metrics compute_metrics(const SimulationTrace& trace, std::span<const double> capacities) {
  Metrics m;
  const auto& rows = trace.rows;
  m.ticks = static_cast<int>(rows.size());
  for (int i = 0; i < trace.n_gen; ++i) {
    m.gen_energy_wh.push_back(trapezoid_wh(rows, [i](const TraceRow& r) { return r.p_g[i]; }));
  }
  for (int j = 0; j < trace.n_batt; ++j) {
    m.batt_energy_wh.push_back(trapezoid_wh(rows, [j](const TraceRow& r) { return r.p_b[j]; }));
    m.batt_abs_energy_wh.push_back(
        trapezoid_wh(rows, [j](const TraceRow& r) { return std::abs(r.p_b[j]); }));
  }
  m.load_energy_wh = trapezoid_wh(rows, [](const TraceRow& r) { return r.p_load; });

  if (!rows.empty()) {
    double sq = 0.0;
    std::vector<int> iters;
    for (const TraceRow& r : rows) {
      sq += r.balance * r.balance;
      m.max_abs_balance = std::max(m.max_abs_balance, std::abs(r.balance));
      iters.push_back(r.iters);
    }
    m.rms_tracking_error = std::sqrt(sq / static_cast<double>(rows.size()));
    m.dual_iters_mean =
        std::accumulate(iters.begin(), iters.end(), 0.0) / static_cast<double>(iters.size());
    std::sort(iters.begin(), iters.end());
    const std::size_t mid = iters.size() / 2;
    m.dual_iters_median = iters.size() % 2 ? iters[mid] : 0.5 * (iters[mid - 1] + iters[mid]);
    m.dual_iters_max = iters.back();

    if (!capacities.empty()) {
      for (int j = 0; j < trace.n_batt; ++j) {
        const double q_cap = capacities[j];
        m.capacity_loss_pct.push_back((q_cap - rows.back().q_loss[j]) / q_cap * 100.0);
      }
    }
  }
  return m;
}

RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& options) {
  validate(cfg);
  const int ng = static_cast<int>(cfg.n_gen());
  const int nb = static_cast<int>(cfg.n_batt());
  const int substeps = cfg.substeps();
  const double dt = cfg.t_s / substeps;
  const int ticks = static_cast<int>(std::llround(cfg.load.total_duration / cfg.t_s));

  std::optional<em::CentralMpc> central;
  std::optional<em::DistributedMpc> distributed;
  if (cfg.em.mode == EmMode::centralized) {
    central.emplace(cfg);
  } else {
    distributed.emplace(cfg);
  }

  std::vector<plant::GenState> gens;
  for (const auto& g : cfg.fleet.generators) {
    gens.push_back(plant::steady_gen_state(g, g.p_initial, cfg.v_bus));
  }
  std::vector<plant::SocState> socs;
  std::vector<plant::DegradationState> degs;
  std::vector<double> abs_charge(nb, 0.0);  // integral of |i_b|, A*s
  for (const auto& b : cfg.fleet.batteries) {
    socs.push_back({b.q0});
    degs.push_back({0.0, 0.0, cfg.degradation});
  }

  em::Measurements meas = em::Measurements::initial(cfg, 0.0);
  std::mt19937_64 rng(cfg.measurement.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  RunResult result;
  result.trace.n_gen = ng;
  result.trace.n_batt = nb;
  std::vector<double> capacities;
  for (const auto& b : cfg.fleet.batteries) capacities.push_back(b.capacity);

  auto finish_metrics = [&] {
    result.metrics = compute_metrics(result.trace, capacities);
    result.metrics.ah_throughput.clear();
    result.metrics.q_final.clear();
    for (int j = 0; j < nb; ++j) {
      result.metrics.ah_throughput.push_back(abs_charge[j] / kAmpSecondsPerAmpHour);
      result.metrics.q_final.push_back(socs[j].q);
    }
    for (const Event& e : result.events) {
      if (e.kind == "fallback") ++result.metrics.fallback_ticks;
      if (e.kind == "nonconverged") ++result.metrics.nonconverged_ticks;
    }
  };

  int nonconverged = 0;
  for (int tick = 0; tick < ticks; ++tick) {
    const double t = tick * cfg.t_s;
    const double p_load = pulse_load_profile(cfg.load, t);

    meas.p_load = p_load;
    if (cfg.measurement.noise_std > 0.0) meas.p_load += cfg.measurement.noise_std * noise(rng);
    for (int j = 0; j < nb; ++j) meas.q[j] = socs[j].q;

    em::Allocation alloc = central ? central->solve(meas) : distributed->solve(meas);
    if (alloc.fallback) {
      result.events.push_back({tick, t, "fallback", "balance rows relaxed"});
    }
    if (!alloc.converged) {
      ++nonconverged;
      result.events.push_back({tick, t, "nonconverged",
                               "dual residual " + fmt(alloc.balance_residual) + " W after " +
                                   std::to_string(alloc.iterations) + " iterations"});
    }

    const std::vector<double> cmd_g = alloc.gen_commands();
    const std::vector<double> cmd_b = alloc.batt_commands();
    TraceRow row;
    row.t = t;
    row.p_load = p_load;
    double supplied = 0.0;
    for (double v : cmd_g) supplied += v;
    for (double v : cmd_b) supplied += v;
    row.balance = supplied - p_load;
    row.p_g = cmd_g;
    row.p_b = cmd_b;
    for (int j = 0; j < nb; ++j) {
      row.q.push_back(socs[j].q);
      row.q_loss.push_back(degs[j].q_loss);
    }
    row.iters = alloc.iterations;
    row.residual = alloc.balance_residual;
    result.trace.rows.push_back(std::move(row));

    if (nonconverged > cfg.em.max_nonconverged_ticks) {
      finish_metrics();
      throw RunAborted("EM failed to converge at tick " + std::to_string(tick) + " (t = " + fmt(t) +
                           " s)",
                       tick, result);
    }

    try {
      for (int s = 0; s < substeps; ++s) {
        PlantSample sample;
        for (int i = 0; i < ng; ++i) {
          const auto step = plant::step_pgm(cfg.fleet.generators[i], gens[i], cmd_g[i], cfg.v_bus, dt);
          gens[i] = step.state;
          if (options.plant_trace) sample.p_g.push_back(step.p_actual);
        }
        for (int j = 0; j < nb; ++j) {
          const auto step = plant::step_pcm(cfg.fleet.batteries[j], socs[j], cmd_b[j], cfg.v_bus, dt);
          if (step.clamped) {
            result.events.push_back({tick, t + s * dt, "soc_clamp",
                                     "battery '" + cfg.fleet.batteries[j].name + "'"});
          }
          socs[j] = step.soc;
          degs[j] = plant::update_degradation(degs[j], step.i_b, dt);
          abs_charge[j] += std::abs(step.i_b) * dt;
          if (options.plant_trace) {
            sample.p_b.push_back(cmd_b[j]);
            sample.q.push_back(step.soc.q);
          }
        }
        if (options.plant_trace) {
          sample.t = t + (s + 1) * dt;
          sample.p_load = p_load;
          result.plant.push_back(std::move(sample));
        }
      }
    } catch (const std::exception& e) {
      result.events.push_back({tick, t, "fault", e.what()});
      finish_metrics();
      throw RunAborted(std::string("device fault at tick ") + std::to_string(tick) + ": " + e.what(),
                       tick, result);
    }

    meas.p_g_prev = cmd_g;
    meas.p_b_prev = cmd_b;
  }

  finish_metrics();
  return result;
}

SweepParam parse_sweep_param(const std::string& name) {
  if (name == "beta") return SweepParam::beta;
  if (name == "gamma_p") return SweepParam::gamma_p;
  if (name == "gamma_q") return SweepParam::gamma_q;
  if (name == "gamma_j") return SweepParam::gamma_j;
  throw std::invalid_argument("unknown sweep parameter '" + name + "'");
}

const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::beta: return "beta";
    case SweepParam::gamma_p: return "gamma_p";
    case SweepParam::gamma_q: return "gamma_q";
    case SweepParam::gamma_j: return "gamma_j";
  }
  return "unknown";
}

ScenarioConfig apply_sweep_value(ScenarioConfig cfg, SweepParam param, int device, double value) {
  if (!std::isfinite(value) || value < 0.0) {
    throw std::invalid_argument("sweep values must be finite and non-negative");
  }
  switch (param) {
    case SweepParam::beta:
      for (auto& g : cfg.fleet.generators) g.beta = value;
      break;
    case SweepParam::gamma_p:
      for (auto& b : cfg.fleet.batteries) b.gamma_p = value;
      break;
    case SweepParam::gamma_q:
      for (auto& b : cfg.fleet.batteries) b.gamma_q = value;
      break;
    case SweepParam::gamma_j:
      if (device < 0 || device >= static_cast<int>(cfg.n_batt())) {
        throw std::invalid_argument("gamma_j sweep: battery index " + std::to_string(device) +
                                    " out of range");
      }
      cfg.fleet.batteries[device].gamma_p = value;
      break;
  }
  return cfg;
}

std::vector<SweepRow> sweep_weights(const ScenarioConfig& cfg, const SweepSpec& spec) {
  std::vector<ScenarioConfig> runs;
  for (double v : spec.values) runs.push_back(apply_sweep_value(cfg, spec.param, spec.device, v));
  for (const auto& c : runs) validate(c);

  std::vector<SweepRow> rows(spec.values.size());
  auto run_one = [&](std::size_t k) {
    rows[k].value = spec.values[k];
    rows[k].metrics = run_scenario(runs[k]).metrics;
  };
  const std::size_t workers = static_cast<std::size_t>(std::max(1, spec.workers));
  if (workers == 1) {
    for (std::size_t k = 0; k < runs.size(); ++k) run_one(k);
    return rows;
  }
  for (std::size_t start = 0; start < runs.size(); start += workers) {
    std::vector<std::future<void>> jobs;
    for (std::size_t k = start; k < std::min(runs.size(), start + workers); ++k) {
      jobs.push_back(std::async(std::launch::async, run_one, k));
    }
    for (auto& j : jobs) j.get();
  }
  return rows;
}

nlohmann::json metrics_to_json(const Metrics& m) {
  nlohmann::json j;
  j["gen_energy_wh"] = m.gen_energy_wh;
  j["batt_energy_wh"] = m.batt_energy_wh;
  j["batt_abs_energy_wh"] = m.batt_abs_energy_wh;
  j["load_energy_wh"] = m.load_energy_wh;
  j["rms_tracking_error_w"] = m.rms_tracking_error;
  j["max_abs_balance_w"] = m.max_abs_balance;
  j["capacity_loss_pct"] = m.capacity_loss_pct;
  j["ah_throughput"] = m.ah_throughput;
  j["q_final"] = m.q_final;
  j["iterations"] = {{"mean", m.dual_iters_mean},
                     {"median", m.dual_iters_median},
                     {"max", m.dual_iters_max}};
  j["ticks"] = m.ticks;
  j["fallback_ticks"] = m.fallback_ticks;
  j["nonconverged_ticks"] = m.nonconverged_ticks;
  return j;
}

nlohmann::json events_to_json(const std::vector<Event>& events) {
  nlohmann::json arr = nlohmann::json::array();
  for (const Event& e : events) {
    arr.push_back({{"tick", e.tick}, {"t", e.t}, {"kind", e.kind}, {"detail", e.detail}});
  }
  return arr;
}

void write_plant_trace(const std::vector<PlantSample>& samples, const std::string& path) {
  std::string out = "t,p_L";
  if (!samples.empty()) {
    for (std::size_t i = 1; i <= samples[0].p_g.size(); ++i) out += ",p_g_" + std::to_string(i);
    for (std::size_t j = 1; j <= samples[0].p_b.size(); ++j) out += ",p_b_" + std::to_string(j);
    for (std::size_t j = 1; j <= samples[0].q.size(); ++j) out += ",q_" + std::to_string(j);
  }
  out += '\n';
  for (const PlantSample& s : samples) {
    out += fmt(s.t) + ',' + fmt(s.p_load);
    for (double v : s.p_g) out += ',' + fmt(v);
    for (double v : s.p_b) out += ',' + fmt(v);
    for (double v : s.q) out += ',' + fmt(v);
    out += '\n';
  }
  write_text(path, out);
}

std::vector<std::string> write_figure_series(const SimulationTrace& trace,
                                             std::span<const double> capacities,
                                             const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  const auto& rows = trace.rows;

  std::string power = "t,p_L_mw";
  for (int i = 1; i <= trace.n_gen; ++i) power += ",p_g_" + std::to_string(i) + "_mw";
  for (int j = 1; j <= trace.n_batt; ++j) power += ",p_b_" + std::to_string(j) + "_mw";
  power += '\n';
  for (const auto& r : rows) {
    power += fmt(r.t) + ',' + fmt(r.p_load / kWattsPerMegawatt);
    for (double v : r.p_g) power += ',' + fmt(v / kWattsPerMegawatt);
    for (double v : r.p_b) power += ',' + fmt(v / kWattsPerMegawatt);
    power += '\n';
  }
  written.push_back((fs::path(dir) / "power_split.csv").string());
  write_text(written.back(), power);

  std::string soc = "t";
  for (int j = 1; j <= trace.n_batt; ++j) soc += ",q_" + std::to_string(j);
  soc += '\n';
  for (const auto& r : rows) {
    soc += fmt(r.t);
    for (double v : r.q) soc += ',' + fmt(v);
    soc += '\n';
  }
  written.push_back((fs::path(dir) / "soc.csv").string());
  write_text(written.back(), soc);

  if (!capacities.empty()) {
    std::string cap = "t";
    for (int j = 1; j <= trace.n_batt; ++j) cap += ",capacity_pct_" + std::to_string(j);
    cap += '\n';
    for (const auto& r : rows) {
      cap += fmt(r.t);
      for (int j = 0; j < trace.n_batt; ++j) {
        cap += ',' + fmt((capacities[j] - r.q_loss[j]) / capacities[j] * 100.0);
      }
      cap += '\n';
    }
    written.push_back((fs::path(dir) / "capacity_loss.csv").string());
    write_text(written.back(), cap);
  }

  // Cumulative trapezoidal energy per device, MWh.
  std::string energy = "t";
  for (int i = 1; i <= trace.n_gen; ++i) energy += ",e_g_" + std::to_string(i) + "_mwh";
  for (int j = 1; j <= trace.n_batt; ++j) energy += ",e_b_" + std::to_string(j) + "_mwh";
  energy += '\n';
  std::vector<double> acc(trace.n_gen + trace.n_batt, 0.0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (k > 0) {
      const double w = 0.5 * (rows[k].t - rows[k - 1].t) / kSecondsPerHour / kWattsPerMegawatt;
      for (int i = 0; i < trace.n_gen; ++i) acc[i] += w * (rows[k - 1].p_g[i] + rows[k].p_g[i]);
      for (int j = 0; j < trace.n_batt; ++j) {
        acc[trace.n_gen + j] += w * (std::abs(rows[k - 1].p_b[j]) + std::abs(rows[k].p_b[j]));
      }
    }
    energy += fmt(rows[k].t);
    for (double v : acc) energy += ',' + fmt(v);
    energy += '\n';
  }
  written.push_back((fs::path(dir) / "energy.csv").string());
  write_text(written.back(), energy);
  return written;
}

std::string write_sweep_series(const std::vector<SweepRow>& rows, SweepParam param,
                               const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::size_t ng = rows.empty() ? 0 : rows[0].metrics.gen_energy_wh.size();
  std::size_t nb = rows.empty() ? 0 : rows[0].metrics.batt_abs_energy_wh.size();
  std::string out = to_string(param);
  for (std::size_t i = 1; i <= ng; ++i) out += ",gen_energy_mwh_" + std::to_string(i);
  for (std::size_t j = 1; j <= nb; ++j) out += ",batt_energy_mwh_" + std::to_string(j);
  for (std::size_t j = 1; j <= nb; ++j) out += ",capacity_pct_" + std::to_string(j);
  out += ",rms_tracking_error_w\n";
  for (const auto& r : rows) {
    out += fmt(r.value);
    for (double v : r.metrics.gen_energy_wh) out += ',' + fmt(v / kWattsPerMegawatt);
    for (double v : r.metrics.batt_abs_energy_wh) out += ',' + fmt(v / kWattsPerMegawatt);
    for (double v : r.metrics.capacity_loss_pct) out += ',' + fmt(v);
    out += ',' + fmt(r.metrics.rms_tracking_error) + '\n';
  }
  const std::string path = (fs::path(dir) / "sweep.csv").string();
  write_text(path, out);
  return path;
}

}  // namespace shipem::harness
