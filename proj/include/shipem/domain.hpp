#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace shipem {

// Unit conversions applied at config load and report emission only.
inline constexpr double kWattsPerMegawatt = 1.0e6;
inline constexpr double kVoltsPerKilovolt = 1.0e3;
inline constexpr double kAmpSecondsPerAmpHour = 3600.0;
inline constexpr double kSecondsPerHour = 3600.0;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by device models when an integration step produces a non-finite
/// state or a command is outside what the device accepts.
class SimulationFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed-length sequence of per-step power setpoints (W) over an MPC horizon.
class HorizonProfile {
 public:
  HorizonProfile() = default;
  explicit HorizonProfile(std::size_t horizon, double fill = 0.0) : values_(horizon, fill) {}
  explicit HorizonProfile(std::vector<double> values) : values_(std::move(values)) {}

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }
  double front() const { return values_.front(); }
  std::span<const double> values() const { return values_; }

  bool operator==(const HorizonProfile&) const = default;

 private:
  std::vector<double> values_;
};

struct GenParams {
  std::string name;
  double r_g = 0.0;                // ohm
  double l_g = 0.0;                // H
  std::optional<double> c_g;       // F, shunt-capacitor variant only
  double p_min = 0.0;              // W
  double p_max = 0.0;              // W
  double p_rated = 0.0;            // W, desired operating point
  double ramp = 0.0;               // W per MPC step
  double beta = 1.0;
  double k_p = 1.0;                // DLC current-loop gains
  double k_i = 20.0;
  double p_initial = 0.0;          // W

  bool operator==(const GenParams&) const = default;
};

struct BattParams {
  std::string name;
  double r_b = 0.0;        // ohm
  double capacity = 0.0;   // A*s
  double c1 = 0.0;         // V, v_oc = c1*q + c2
  double c2 = 0.0;         // V
  double p_min = 0.0;      // W (charging, <= 0)
  double p_max = 0.0;      // W (discharging, >= 0)
  double ramp = 0.0;       // W per MPC step
  double q_min = 0.0;
  double q_max = 1.0;
  double q0 = 0.5;
  double gamma_p = 1.0;
  double gamma_q = 0.0;
  double p_initial = 0.0;  // W

  bool operator==(const BattParams&) const = default;
};

struct LoadParams {
  double r_l = 1.0;   // ohm
  double l_l = 1e-3;  // H
  double k_p = 1.0;
  double k_i = 20.0;

  bool operator==(const LoadParams&) const = default;
};

struct FlywheelParams {
  std::string name;
  double inertia = 0.0;    // kg*m^2
  double omega_max = 0.0;  // rad/s
  double tau_max = 0.0;    // N*m
  double omega0 = 0.0;     // rad/s

  bool operator==(const FlywheelParams&) const = default;
};

struct Pulse {
  double start = 0.0;      // s
  double end = 0.0;        // s
  double amplitude = 0.0;  // W

  bool operator==(const Pulse&) const = default;
};

struct PulseLoadSpec {
  double base = 0.0;             // W
  std::vector<Pulse> pulses;
  double total_duration = 0.0;   // s
  double rating = 0.0;           // W

  bool operator==(const PulseLoadSpec&) const = default;
};

struct DegradationParams {
  double zeta1 = 1.0;
  double zeta2 = 31700.0;       // J/mol
  double temperature = 298.15;  // K
  double gas_constant = 8.314;  // J/(mol*K)
  double c_rate = 1.0;          // 1/h
  double rho = 1.0;             // throughput exponent

  bool operator==(const DegradationParams&) const = default;
};

struct DeviceFleet {
  std::vector<GenParams> generators;
  std::vector<BattParams> batteries;
  std::vector<FlywheelParams> flywheels;
  LoadParams load;

  bool operator==(const DeviceFleet&) const = default;
};

enum class EmMode { centralized, distributed };

struct EmSettings {
  EmMode mode = EmMode::centralized;
  double alpha = 0.1;          // dual step, per-MW scaling
  double eps_tol = 1.0e3;      // W
  int max_iters = 500;
  // SoC enters the optimization in percent; the gamma_q weight applies to
  // (q - q0) expressed in this scale.
  double soc_cost_scale = 100.0;
  int workers = 1;
  int max_nonconverged_ticks = 0;

  bool operator==(const EmSettings&) const = default;
};

struct MeasurementSettings {
  double noise_std = 0.0;  // W
  unsigned long long seed = 1;

  bool operator==(const MeasurementSettings&) const = default;
};

struct ScenarioConfig {
  std::string name;
  DeviceFleet fleet;
  double v_bus = 12.0e3;  // V
  int horizon = 5;
  double t_s = 1.0;        // MPC step, s
  double t_plant = 1e-3;   // plant step, s
  PulseLoadSpec load;
  EmSettings em;
  DegradationParams degradation;
  MeasurementSettings measurement;

  bool operator==(const ScenarioConfig&) const = default;

  std::size_t n_gen() const { return fleet.generators.size(); }
  std::size_t n_batt() const { return fleet.batteries.size(); }
  int substeps() const;
};

/// Parses a JSON config document (MW / kV / AHr / s units) into SI values and
/// validates every invariant. Throws ConfigError on parse or validation failure.
ScenarioConfig load_config(std::string_view text);
ScenarioConfig load_config_file(const std::string& path);

/// Applies `key.path=value` overrides to a raw config document before parsing.
/// Keys are dot-separated; array elements are addressed by index.
std::string apply_overrides(std::string_view text, const std::vector<std::string>& overrides);

/// Emits a config document with SI-suffixed keys at full precision, so that
/// load_config(emit_config(c)) == c.
std::string emit_config(const ScenarioConfig& cfg);

/// Throws ConfigError naming the first violated invariant.
void validate(const ScenarioConfig& cfg);

const char* to_string(EmMode mode);

}  // namespace shipem
