#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "shipem/domain.hpp"

namespace shipem::harness {

/// base + amplitudes of the pulses with start <= t < end. Throws
/// std::out_of_range when t is outside [0, total_duration].
double pulse_load_profile(const PulseLoadSpec& spec, double t);

struct TraceRow {
  double t = 0.0;
  double p_load = 0.0;
  double balance = 0.0;  // W, sum of applied commands minus p_load
  std::vector<double> p_g;
  std::vector<double> p_b;
  std::vector<double> q;       // sampled at the tick
  std::vector<double> q_loss;  // A*s
  int iters = 0;
  double residual = 0.0;  // W

  bool operator==(const TraceRow&) const = default;
};

struct SimulationTrace {
  int n_gen = 0;
  int n_batt = 0;
  std::vector<TraceRow> rows;

  bool operator==(const SimulationTrace&) const = default;
};

/// Header: t,p_L,balance,p_g_1..,p_b_1..,q_1..,QL_1..,iters,residual.
std::string trace_header(int n_gen, int n_batt);
std::string trace_to_csv(const SimulationTrace& trace);
void write_trace(const SimulationTrace& trace, const std::string& path);
SimulationTrace parse_trace(const std::string& csv);
SimulationTrace read_trace(const std::string& path);

struct Metrics {
  std::vector<double> gen_energy_wh;        // signed, trapezoidal
  std::vector<double> batt_energy_wh;       // signed, discharge positive
  std::vector<double> batt_abs_energy_wh;   // integral of |p_b|
  double load_energy_wh = 0.0;
  double rms_tracking_error = 0.0;          // W
  double max_abs_balance = 0.0;             // W
  std::vector<double> capacity_loss_pct;    // remaining capacity, percent
  std::vector<double> ah_throughput;        // plant-side, A*h
  std::vector<double> q_final;
  double dual_iters_mean = 0.0;
  double dual_iters_median = 0.0;
  int dual_iters_max = 0;
  int ticks = 0;
  int fallback_ticks = 0;
  int nonconverged_ticks = 0;
};

/// Trace-only metrics. capacity_loss_pct is filled when capacities (A*s) are
/// given; ah_throughput and q_final are left for the run to fill.
Metrics compute_metrics(const SimulationTrace& trace, std::span<const double> capacities = {});

struct Event {
  int tick = 0;
  double t = 0.0;
  std::string kind;  // fallback, nonconverged, soc_clamp, fault
  std::string detail;
};

struct PlantSample {
  double t = 0.0;
  double p_load = 0.0;
  std::vector<double> p_g;  // actual
  std::vector<double> p_b;
  std::vector<double> q;
};

struct RunOptions {
  bool plant_trace = false;
};

struct RunResult {
  SimulationTrace trace;
  Metrics metrics;
  std::vector<Event> events;
  std::vector<PlantSample> plant;
};

/// Thrown when a device faults or too many ticks fail to converge. Carries
/// the partial run up to and including the offending tick.
class RunAborted : public SimulationFault {
 public:
  RunAborted(const std::string& what, int tick, RunResult partial)
      : SimulationFault(what), tick_(tick), partial_(std::move(partial)) {}
  int tick() const { return tick_; }
  const RunResult& partial() const { return partial_; }

 private:
  int tick_;
  RunResult partial_;
};

/// Two-rate co-simulation: the EM solves every t_s and the plant integrates
/// t_s/t_plant sub-steps holding the first-step commands.
RunResult run_scenario(const ScenarioConfig& cfg, const RunOptions& options = {});

enum class SweepParam { beta, gamma_p, gamma_q, gamma_j };

SweepParam parse_sweep_param(const std::string& name);
const char* to_string(SweepParam p);

struct SweepSpec {
  SweepParam param = SweepParam::gamma_p;
  std::vector<double> values;
  int device = 0;   // battery index for gamma_j
  int workers = 1;
};

struct SweepRow {
  double value = 0.0;
  Metrics metrics;
};

ScenarioConfig apply_sweep_value(ScenarioConfig cfg, SweepParam param, int device, double value);

/// One run per value; rows come back in input order.
std::vector<SweepRow> sweep_weights(const ScenarioConfig& cfg, const SweepSpec& spec);

nlohmann::json metrics_to_json(const Metrics& m);
nlohmann::json events_to_json(const std::vector<Event>& events);

void write_plant_trace(const std::vector<PlantSample>& samples, const std::string& path);

/// Per-figure series files: power_split.csv, soc.csv, capacity_loss.csv,
/// energy.csv. Returns the files written.
std::vector<std::string> write_figure_series(const SimulationTrace& trace,
                                             std::span<const double> capacities,
                                             const std::string& dir);

/// sweep.csv with one row per swept value.
std::string write_sweep_series(const std::vector<SweepRow>& rows, SweepParam param,
                               const std::string& dir);

}  // namespace shipem::harness
