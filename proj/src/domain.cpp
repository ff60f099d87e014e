#include "shipem/domain.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

namespace shipem {

using nlohmann::json;

namespace {

enum class Dim { power, voltage, capacity };

struct UnitSuffix {
  const char* human;
  double human_to_si;
  const char* si;
};

UnitSuffix suffixes(Dim dim) {
  switch (dim) {
    case Dim::power:
      return {"_mw", kWattsPerMegawatt, "_w"};
    case Dim::voltage:
      return {"_kv", kVoltsPerKilovolt, "_v"};
    case Dim::capacity:
      return {"_ahr", kAmpSecondsPerAmpHour, "_as"};
  }
  return {"", 1.0, ""};
}

// Reads keys from one JSON object, remembering which were consumed so that
// unknown keys can be rejected.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) {
      throw ConfigError(path_ + ": expected an object");
    }
  }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      if (fallback) return *fallback;
      throw ConfigError(path_ + ": missing required key '" + key + "'");
    }
    if (!it->is_number()) {
      throw ConfigError(path_ + "." + key + ": expected a number");
    }
    double v = it->get<double>();
    if (!std::isfinite(v)) throw ConfigError(path_ + "." + key + ": not finite");
    return v;
  }

  std::optional<double> optional_number(const std::string& key) {
    if (!obj_.contains(key)) {
      seen_.insert(key);
      return std::nullopt;
    }
    return number(key);
  }

  int integer(const std::string& key, std::optional<int> fallback = std::nullopt) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      if (fallback) return *fallback;
      throw ConfigError(path_ + ": missing required key '" + key + "'");
    }
    if (!it->is_number_integer()) {
      throw ConfigError(path_ + "." + key + ": expected an integer");
    }
    return it->get<int>();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) {
      if (fallback) return *fallback;
      throw ConfigError(path_ + ": missing required key '" + key + "'");
    }
    if (!it->is_string()) throw ConfigError(path_ + "." + key + ": expected a string");
    return it->get<std::string>();
  }

  std::optional<double> optional_quantity(const std::string& base, Dim dim) {
    const UnitSuffix s = suffixes(dim);
    const std::string human = base + s.human;
    const std::string si = base + s.si;
    seen_.insert(human);
    seen_.insert(si);
    const bool has_human = obj_.contains(human);
    const bool has_si = obj_.contains(si);
    if (has_human && has_si) {
      throw ConfigError(path_ + ": both '" + human + "' and '" + si + "' given");
    }
    if (has_human) return number(human) * s.human_to_si;
    if (has_si) return number(si);
    return std::nullopt;
  }

  double quantity(const std::string& base, Dim dim, std::optional<double> fallback = std::nullopt) {
    if (auto v = optional_quantity(base, dim)) return *v;
    if (fallback) return *fallback;
    throw ConfigError(path_ + ": missing required key '" + base + suffixes(dim).human + "'");
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
      }
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

EmMode parse_mode(const std::string& s) {
  if (s == "centralized") return EmMode::centralized;
  if (s == "distributed") return EmMode::distributed;
  throw ConfigError("em.mode: expected 'centralized' or 'distributed', got '" + s + "'");
}

GenParams parse_generator(const json& j, const std::string& path, std::size_t index) {
  Section s(j, path);
  GenParams g;
  g.name = s.string("name", "PGM-" + std::to_string(index + 1));
  g.r_g = s.number("r_ohm");
  g.l_g = s.number("l_h");
  g.c_g = s.optional_number("c_f");
  g.p_min = s.quantity("p_min", Dim::power);
  g.p_max = s.quantity("p_max", Dim::power);
  g.p_rated = s.quantity("p_rated", Dim::power);
  g.ramp = s.quantity("ramp", Dim::power);
  g.beta = s.number("beta", 1.0);
  g.k_p = s.number("kp", 1.0);
  g.k_i = s.number("ki", 20.0);
  g.p_initial = s.quantity("p_initial", Dim::power, g.p_rated);
  s.finish();
  return g;
}

BattParams parse_battery(const json& j, const std::string& path, std::size_t index,
                         double v_bus) {
  Section s(j, path);
  BattParams b;
  b.name = s.string("name", "PCM-" + std::to_string(index + 1));
  b.r_b = s.number("r_ohm");
  b.capacity = s.quantity("capacity", Dim::capacity);
  b.c1 = s.quantity("c1", Dim::voltage, 0.0);
  b.c2 = s.quantity("c2", Dim::voltage, v_bus - 50.0);
  b.p_min = s.quantity("p_min", Dim::power);
  b.p_max = s.quantity("p_max", Dim::power);
  b.ramp = s.quantity("ramp", Dim::power);
  b.q_min = s.number("soc_min");
  b.q_max = s.number("soc_max");
  b.q0 = s.number("soc0");
  b.gamma_p = s.number("gamma_p", 1.0);
  b.gamma_q = s.number("gamma_q", 0.0);
  b.p_initial = s.quantity("p_initial", Dim::power, 0.0);
  s.finish();
  return b;
}

FlywheelParams parse_flywheel(const json& j, const std::string& path, std::size_t index) {
  Section s(j, path);
  FlywheelParams f;
  f.name = s.string("name", "FW-" + std::to_string(index + 1));
  auto inertia = s.optional_number("inertia_kgm2");
  auto mass = s.optional_number("mass_kg");
  auto radius = s.optional_number("radius_m");
  if (inertia && (mass || radius)) {
    throw ConfigError(path + ": give either inertia_kgm2 or mass_kg/radius_m, not both");
  }
  if (inertia) {
    f.inertia = *inertia;
  } else if (mass && radius) {
    // solid disc
    f.inertia = 0.5 * (*mass) * (*radius) * (*radius);
  } else {
    throw ConfigError(path + ": missing required key 'inertia_kgm2' (or mass_kg and radius_m)");
  }
  f.omega_max = s.number("omega_max_rad_s");
  f.tau_max = s.number("tau_max_nm");
  f.omega0 = s.number("omega0_rad_s", 0.0);
  s.finish();
  return f;
}

double peak_load(const PulseLoadSpec& spec) {
  // Piecewise-constant profile: the maximum occurs at some pulse start.
  double peak = spec.base;
  for (const Pulse& at : spec.pulses) {
    double v = spec.base;
    for (const Pulse& p : spec.pulses) {
      if (p.start <= at.start && at.start < p.end) v += p.amplitude;
    }
    peak = std::max(peak, v);
  }
  return peak;
}

std::string fail(const std::string& what) { return "validation error: " + what; }

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(fail(what));
}

}  // namespace

int ScenarioConfig::substeps() const {
  return static_cast<int>(std::llround(t_s / t_plant));
}

const char* to_string(EmMode mode) {
  return mode == EmMode::centralized ? "centralized" : "distributed";
}

void validate(const ScenarioConfig& cfg) {
  require(cfg.v_bus > 0.0, "v_bus > 0");
  require(cfg.horizon >= 1, "horizon >= 1");
  require(cfg.t_s > 0.0 && cfg.t_plant > 0.0, "mpc_step_s > 0 and plant_step_s > 0");
  require(cfg.t_plant <= cfg.t_s, "plant_step_s <= mpc_step_s");
  {
    const double ratio = cfg.t_s / cfg.t_plant;
    require(std::abs(ratio - std::round(ratio)) <= 1e-9 * ratio,
            "mpc_step_s is an integer multiple of plant_step_s");
  }
  require(cfg.n_gen() + cfg.n_batt() >= 1, "at least one generator or battery");

  for (const GenParams& g : cfg.fleet.generators) {
    const std::string p = "generator '" + g.name + "': ";
    require(g.r_g > 0.0, p + "r_g > 0");
    require(g.l_g > 0.0, p + "l_g > 0");
    require(!g.c_g || *g.c_g > 0.0, p + "c_g > 0");
    require(g.p_min >= 0.0, p + "p_min >= 0");
    require(g.p_min < g.p_max, p + "p_min < p_max");
    require(g.ramp > 0.0, p + "ramp > 0");
    require(g.ramp <= g.p_max - g.p_min, p + "ramp <= p_max - p_min");
    require(g.p_min <= g.p_rated && g.p_rated <= g.p_max, p + "p_min <= p_rated <= p_max");
    require(g.beta >= 0.0, p + "beta >= 0");
    require(g.p_min <= g.p_initial && g.p_initial <= g.p_max, p + "p_min <= p_initial <= p_max");
  }
  for (const BattParams& b : cfg.fleet.batteries) {
    const std::string p = "battery '" + b.name + "': ";
    require(b.r_b > 0.0, p + "r_b > 0");
    require(b.capacity > 0.0, p + "capacity > 0");
    require(b.p_min < 0.0 && 0.0 < b.p_max, p + "p_min < 0 < p_max");
    require(b.ramp > 0.0, p + "ramp > 0");
    require(b.q_min < b.q_max, p + "q_min < q_max");
    require(0.0 <= b.q_min && b.q_min < b.q0 && b.q0 <= b.q_max && b.q_max <= 1.0,
            p + "0 <= q_min < q0 <= q_max <= 1");
    require(b.gamma_p >= 0.0 && b.gamma_q >= 0.0, p + "gamma_p >= 0 and gamma_q >= 0");
    require(b.p_min <= b.p_initial && b.p_initial <= b.p_max, p + "p_min <= p_initial <= p_max");
  }
  for (const FlywheelParams& f : cfg.fleet.flywheels) {
    const std::string p = "flywheel '" + f.name + "': ";
    require(f.inertia > 0.0, p + "inertia > 0");
    require(f.omega_max > 0.0, p + "omega_max > 0");
    require(f.tau_max > 0.0, p + "tau_max > 0");
    require(0.0 <= f.omega0 && f.omega0 <= f.omega_max, p + "0 <= omega0 <= omega_max");
  }
  require(cfg.fleet.load.r_l > 0.0 && cfg.fleet.load.l_l > 0.0, "load: r_L > 0 and l_L > 0");

  const PulseLoadSpec& load = cfg.load;
  require(load.total_duration > 0.0, "load: duration > 0");
  require(load.base >= 0.0, "load: base >= 0");
  for (const Pulse& pulse : load.pulses) {
    require(0.0 <= pulse.start && pulse.start < pulse.end && pulse.end <= load.total_duration,
            "load: 0 <= start < end <= duration for every pulse");
  }
  require(peak_load(load) <= load.rating * (1.0 + 1e-12), "load: peak demand <= rating");

  const EmSettings& em = cfg.em;
  require(em.max_iters >= 1, "em.max_iters >= 1");
  require(em.eps_tol > 0.0, "em.eps_tol > 0");
  require(em.alpha >= 0.0, "em.alpha >= 0");
  require(em.soc_cost_scale > 0.0, "em.soc_cost_scale > 0");
  require(em.workers >= 1, "em.workers >= 1");
  require(em.max_nonconverged_ticks >= 0, "em.max_nonconverged_ticks >= 0");
  if (em.mode == EmMode::distributed) {
    require(em.alpha > 0.0, "em.alpha > 0 in distributed mode");
    for (const GenParams& g : cfg.fleet.generators) {
      require(g.beta > 0.0, "generator '" + g.name + "': beta > 0 in distributed mode");
    }
    for (const BattParams& b : cfg.fleet.batteries) {
      require(b.gamma_p > 0.0, "battery '" + b.name + "': gamma_p > 0 in distributed mode");
    }
  }

  const DegradationParams& d = cfg.degradation;
  require(d.zeta1 >= 0.0, "degradation: zeta1 >= 0");
  require(d.temperature > 0.0, "degradation: temperature > 0");
  require(d.gas_constant > 0.0, "degradation: gas_constant > 0");
  require(d.c_rate >= 0.0, "degradation: c_rate >= 0");
  require(d.rho > 0.0, "degradation: rho > 0");
  require(cfg.measurement.noise_std >= 0.0, "measurement: noise_std >= 0");
}

ScenarioConfig load_config(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }

  ScenarioConfig cfg;
  Section root(doc, "config");
  cfg.name = root.string("name", "scenario");
  cfg.v_bus = root.quantity("v_bus", Dim::voltage);
  cfg.horizon = root.integer("horizon");
  cfg.t_s = root.number("mpc_step_s");
  cfg.t_plant = root.number("plant_step_s");

  if (const json* em = root.child("em")) {
    Section s(*em, "em");
    cfg.em.mode = parse_mode(s.string("mode", "centralized"));
    cfg.em.alpha = s.number("alpha", 0.1);
    cfg.em.eps_tol = s.quantity("eps_tol", Dim::power, 1.0e3);
    cfg.em.max_iters = s.integer("max_iters", 500);
    cfg.em.soc_cost_scale = s.number("soc_cost_scale", 100.0);
    cfg.em.workers = s.integer("workers", 1);
    cfg.em.max_nonconverged_ticks = s.integer("max_nonconverged_ticks", 0);
    s.finish();
  }

  if (const json* gens = root.child("generators")) {
    if (!gens->is_array()) throw ConfigError("generators: expected an array");
    for (std::size_t i = 0; i < gens->size(); ++i) {
      cfg.fleet.generators.push_back(
          parse_generator((*gens)[i], "generators." + std::to_string(i), i));
    }
  }
  if (const json* batts = root.child("batteries")) {
    if (!batts->is_array()) throw ConfigError("batteries: expected an array");
    for (std::size_t i = 0; i < batts->size(); ++i) {
      cfg.fleet.batteries.push_back(
          parse_battery((*batts)[i], "batteries." + std::to_string(i), i, cfg.v_bus));
    }
  }
  if (const json* fws = root.child("flywheels")) {
    if (!fws->is_array()) throw ConfigError("flywheels: expected an array");
    for (std::size_t i = 0; i < fws->size(); ++i) {
      cfg.fleet.flywheels.push_back(
          parse_flywheel((*fws)[i], "flywheels." + std::to_string(i), i));
    }
  }

  const json* load = root.child("load");
  if (!load) throw ConfigError("config: missing required key 'load'");
  {
    Section s(*load, "load");
    cfg.fleet.load.r_l = s.number("r_ohm", 1.0);
    cfg.fleet.load.l_l = s.number("l_h", 1e-3);
    cfg.fleet.load.k_p = s.number("kp", 1.0);
    cfg.fleet.load.k_i = s.number("ki", 20.0);
    cfg.load.base = s.quantity("base", Dim::power);
    cfg.load.total_duration = s.number("duration_s");
    cfg.load.rating = s.quantity("rating", Dim::power);
    if (const json* pulses = s.child("pulses")) {
      if (!pulses->is_array()) throw ConfigError("load.pulses: expected an array");
      for (std::size_t i = 0; i < pulses->size(); ++i) {
        Section ps((*pulses)[i], "load.pulses." + std::to_string(i));
        Pulse p;
        p.start = ps.number("start_s");
        p.end = ps.number("end_s");
        p.amplitude = ps.quantity("amplitude", Dim::power);
        ps.finish();
        cfg.load.pulses.push_back(p);
      }
    }
    s.finish();
  }

  if (const json* deg = root.child("degradation")) {
    Section s(*deg, "degradation");
    cfg.degradation.zeta1 = s.number("zeta1", 1.0);
    cfg.degradation.zeta2 = s.number("zeta2_j_per_mol", 31700.0);
    cfg.degradation.temperature = s.number("temperature_k", 298.15);
    cfg.degradation.gas_constant = s.number("gas_constant", 8.314);
    cfg.degradation.c_rate = s.number("c_rate_per_h", 1.0);
    cfg.degradation.rho = s.number("rho", 1.0);
    s.finish();
  }

  if (const json* meas = root.child("measurement")) {
    Section s(*meas, "measurement");
    cfg.measurement.noise_std = s.quantity("noise_std", Dim::power, 0.0);
    const int seed = s.integer("seed", 1);
    if (seed < 0) throw ConfigError(fail("measurement.seed >= 0"));
    cfg.measurement.seed = static_cast<unsigned long long>(seed);
    s.finish();
  }
  root.finish();

  validate(cfg);
  return cfg;
}

ScenarioConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return load_config(ss.str());
}

namespace {

const char* sibling_suffix(const std::string& key, std::string* stem) {
  static const std::pair<const char*, const char*> pairs[] = {
      {"_mw", "_w"}, {"_kv", "_v"}, {"_ahr", "_as"}};
  auto ends_with = [&](const char* suf) {
    const std::size_t n = std::char_traits<char>::length(suf);
    return key.size() > n && key.compare(key.size() - n, n, suf) == 0;
  };
  for (const auto& [human, si] : pairs) {
    if (ends_with(human)) {
      *stem = key.substr(0, key.size() - std::char_traits<char>::length(human));
      return si;
    }
  }
  for (const auto& [human, si] : pairs) {
    if (ends_with(si)) {
      *stem = key.substr(0, key.size() - std::char_traits<char>::length(si));
      return human;
    }
  }
  return nullptr;
}

}  // namespace

std::string apply_overrides(std::string_view text, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  for (const std::string& item : overrides) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw ConfigError("override '" + item + "': expected key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string raw = item.substr(eq + 1);

    std::vector<std::string> parts;
    std::stringstream ks(key);
    for (std::string part; std::getline(ks, part, '.');) parts.push_back(part);

    json* node = &doc;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      const std::string& part = parts[i];
      if (node->is_array()) {
        std::size_t idx = 0;
        try {
          idx = std::stoul(part);
        } catch (...) {
          throw ConfigError("override '" + key + "': '" + part + "' is not an array index");
        }
        if (idx >= node->size()) throw ConfigError("override '" + key + "': index out of range");
        node = &(*node)[idx];
      } else if (node->is_object() && node->contains(part)) {
        node = &(*node)[part];
      } else {
        throw ConfigError("override '" + key + "': no config key '" + part + "'");
      }
    }
    if (!node->is_object()) throw ConfigError("override '" + key + "': parent is not an object");

    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    const std::string& leaf = parts.back();
    std::string stem;
    if (const char* other = sibling_suffix(leaf, &stem)) {
      node->erase(stem + other);
    }
    (*node)[leaf] = value;
  }
  return doc.dump(2);
}

std::string emit_config(const ScenarioConfig& cfg) {
  // Keys carry SI suffixes; nlohmann emits doubles with round-trip precision.
  json doc;
  doc["name"] = cfg.name;
  doc["v_bus_v"] = cfg.v_bus;
  doc["horizon"] = cfg.horizon;
  doc["mpc_step_s"] = cfg.t_s;
  doc["plant_step_s"] = cfg.t_plant;
  doc["em"] = {{"mode", to_string(cfg.em.mode)},
               {"alpha", cfg.em.alpha},
               {"eps_tol_w", cfg.em.eps_tol},
               {"max_iters", cfg.em.max_iters},
               {"soc_cost_scale", cfg.em.soc_cost_scale},
               {"workers", cfg.em.workers},
               {"max_nonconverged_ticks", cfg.em.max_nonconverged_ticks}};
  doc["generators"] = json::array();
  for (const GenParams& g : cfg.fleet.generators) {
    json j = {{"name", g.name},       {"r_ohm", g.r_g},          {"l_h", g.l_g},
              {"p_min_w", g.p_min},   {"p_max_w", g.p_max},      {"p_rated_w", g.p_rated},
              {"ramp_w", g.ramp},     {"beta", g.beta},          {"kp", g.k_p},
              {"ki", g.k_i},          {"p_initial_w", g.p_initial}};
    if (g.c_g) j["c_f"] = *g.c_g;
    doc["generators"].push_back(j);
  }
  doc["batteries"] = json::array();
  for (const BattParams& b : cfg.fleet.batteries) {
    doc["batteries"].push_back({{"name", b.name},         {"r_ohm", b.r_b},
                                {"capacity_as", b.capacity}, {"c1_v", b.c1},
                                {"c2_v", b.c2},           {"p_min_w", b.p_min},
                                {"p_max_w", b.p_max},     {"ramp_w", b.ramp},
                                {"soc_min", b.q_min},     {"soc_max", b.q_max},
                                {"soc0", b.q0},           {"gamma_p", b.gamma_p},
                                {"gamma_q", b.gamma_q},   {"p_initial_w", b.p_initial}});
  }
  doc["flywheels"] = json::array();
  for (const FlywheelParams& f : cfg.fleet.flywheels) {
    doc["flywheels"].push_back({{"name", f.name},
                                {"inertia_kgm2", f.inertia},
                                {"omega_max_rad_s", f.omega_max},
                                {"tau_max_nm", f.tau_max},
                                {"omega0_rad_s", f.omega0}});
  }
  json pulses = json::array();
  for (const Pulse& p : cfg.load.pulses) {
    pulses.push_back({{"start_s", p.start}, {"end_s", p.end}, {"amplitude_w", p.amplitude}});
  }
  doc["load"] = {{"r_ohm", cfg.fleet.load.r_l}, {"l_h", cfg.fleet.load.l_l},
                 {"kp", cfg.fleet.load.k_p},    {"ki", cfg.fleet.load.k_i},
                 {"base_w", cfg.load.base},     {"duration_s", cfg.load.total_duration},
                 {"rating_w", cfg.load.rating}, {"pulses", pulses}};
  doc["degradation"] = {{"zeta1", cfg.degradation.zeta1},
                        {"zeta2_j_per_mol", cfg.degradation.zeta2},
                        {"temperature_k", cfg.degradation.temperature},
                        {"gas_constant", cfg.degradation.gas_constant},
                        {"c_rate_per_h", cfg.degradation.c_rate},
                        {"rho", cfg.degradation.rho}};
  doc["measurement"] = {{"noise_std_w", cfg.measurement.noise_std},
                        {"seed", cfg.measurement.seed}};
  return doc.dump(2);
}

}  // namespace shipem
