#include <doctest.h>

#include <fstream>
#include <sstream>

#include "shipem/domain.hpp"
#include "support.hpp"

using namespace shipem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kMinimal = R"({
  "v_bus_kv": 12, "horizon": 5, "mpc_step_s": 1, "plant_step_s": 0.001,
  "em": {},
  "generators": [ { "r_ohm": 0.05, "l_h": 0.002, "p_min_mw": 0.2, "p_max_mw": 28,
                    "p_rated_mw": 10, "ramp_mw": 2.8 } ],
  "batteries": [ { "r_ohm": 0.05, "capacity_ahr": 20, "p_min_mw": -10, "p_max_mw": 10,
                   "ramp_mw": 10, "soc_min": 0.7, "soc_max": 0.8, "soc0": 0.75 } ],
  "load": { "base_mw": 8, "duration_s": 100, "rating_mw": 16 }
})";

}  // namespace

TEST_SUITE("domain") {

TEST_CASE("table of rated values is accepted and converted to SI") {
  // 28 MW / 0.2 MW generator, +-10 MW battery, SoC in [0.7, 0.8], h = 5,
  // 20 AHr, battery ramp = its power limit, generator ramp = 10% of its limit.
  const ScenarioConfig cfg = test::load_named("heuristics.json");
  REQUIRE(cfg.n_gen() == 1);
  REQUIRE(cfg.n_batt() == 1);
  const auto& g = cfg.fleet.generators[0];
  const auto& b = cfg.fleet.batteries[0];
  CHECK(g.p_max == doctest::Approx(28e6));
  CHECK(g.p_min == doctest::Approx(0.2e6));
  CHECK(g.ramp == doctest::Approx(0.1 * g.p_max));
  CHECK(b.p_max == doctest::Approx(10e6));
  CHECK(b.p_min == doctest::Approx(-10e6));
  CHECK(b.ramp == doctest::Approx(b.p_max));
  CHECK(b.q_min == doctest::Approx(0.7));
  CHECK(b.q_max == doctest::Approx(0.8));
  CHECK(cfg.horizon == 5);
  CHECK(cfg.v_bus == doctest::Approx(12e3));
}

TEST_CASE("20 AHr is 72000 A*s") {
  const ScenarioConfig cfg = load_config(kMinimal);
  CHECK(cfg.fleet.batteries[0].capacity == doctest::Approx(20.0 * 3600.0));
}

TEST_CASE("inverted SoC bounds are rejected by name") {
  const std::string text = apply_overrides(
      kMinimal, {"batteries.0.soc_min=0.9", "batteries.0.soc_max=0.4", "batteries.0.soc0=0.5"});
  try {
    load_config(text);
    FAIL("expected a validation error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("q_min < q_max") != std::string::npos);
  }
}

TEST_CASE("defaults") {
  const ScenarioConfig cfg = load_config(kMinimal);
  CHECK(cfg.fleet.generators[0].beta == 1.0);
  CHECK(cfg.fleet.batteries[0].gamma_p == 1.0);
  CHECK(cfg.fleet.batteries[0].gamma_q == 0.0);
  CHECK(cfg.em.alpha == 0.1);
  CHECK(cfg.em.eps_tol == 1e3);
  CHECK(cfg.em.max_iters == 500);
  CHECK(cfg.em.mode == EmMode::centralized);
  CHECK(cfg.substeps() == 1000);
  // p_initial falls back to the rated point
  CHECK(cfg.fleet.generators[0].p_initial == cfg.fleet.generators[0].p_rated);
}

TEST_CASE("SI and human unit keys are interchangeable") {
  const ScenarioConfig a = load_config(kMinimal);
  const ScenarioConfig b = load_config(apply_overrides(kMinimal, {"generators.0.p_max_w=28000000"}));
  CHECK(a == b);
}

TEST_CASE("emit and reload round-trips every shipped config") {
  for (const char* name : {"heuristics.json", "four_zone.json", "single_pgm_pcm.json",
                           "zero_load.json"}) {
    CAPTURE(name);
    const ScenarioConfig cfg = test::load_named(name);
    const ScenarioConfig again = load_config(emit_config(cfg));
    CHECK(again == cfg);
    CHECK(emit_config(again) == emit_config(cfg));
  }
}

TEST_CASE("malformed and unknown input") {
  CHECK_THROWS_AS(load_config("{ not json"), ConfigError);
  CHECK_THROWS_AS(load_config(apply_overrides(kMinimal, {"generators.0.p_maxx_mw=3"})), ConfigError);
  CHECK_THROWS_AS(apply_overrides(kMinimal, {"nosuch.key=1"}), ConfigError);
  CHECK_THROWS_AS(apply_overrides(kMinimal, {"missing_equals"}), ConfigError);
}

TEST_CASE("range violations are rejected, never clamped") {
  const std::vector<std::string> bad = {
      "generators.0.p_min_mw=30",          // p_min >= p_max
      "generators.0.ramp_mw=0",            // ramp must be positive
      "generators.0.ramp_mw=100",          // ramp larger than the range
      "generators.0.beta=-1",
      "batteries.0.p_min_mw=1",            // must charge below zero
      "batteries.0.soc0=0.7",              // q0 must exceed q_min
      "batteries.0.capacity_ahr=0",
      "batteries.0.r_ohm=0",
      "horizon=0",
      "plant_step_s=0.3",                  // not a divisor of the MPC step
      "plant_step_s=2",
      "load.base_mw=20",                   // above the rating
  };
  for (const auto& o : bad) {
    CAPTURE(o);
    CHECK_THROWS_AS(load_config(apply_overrides(kMinimal, {o})), ConfigError);
  }
}

TEST_CASE("distributed mode needs a positive dual step and weights") {
  CHECK_THROWS_AS(load_config(apply_overrides(kMinimal, {"em.mode=\"distributed\"", "em.alpha=0"})),
                  ConfigError);
  CHECK_THROWS_AS(
      load_config(apply_overrides(kMinimal, {"em.mode=distributed", "batteries.0.gamma_p=0"})),
      ConfigError);
  CHECK_NOTHROW(load_config(apply_overrides(kMinimal, {"em.mode=distributed"})));
}

TEST_CASE("flywheel inertia from mass and radius") {
  const std::string text = R"({
    "v_bus_kv": 12, "horizon": 5, "mpc_step_s": 1, "plant_step_s": 0.001,
    "generators": [ { "r_ohm": 0.05, "l_h": 0.002, "p_min_mw": 0, "p_max_mw": 1,
                      "p_rated_mw": 0.5, "ramp_mw": 0.1 } ],
    "flywheels": [ { "mass_kg": 2, "radius_m": 1, "omega_max_rad_s": 100, "tau_max_nm": 10 } ],
    "load": { "base_mw": 0.5, "duration_s": 10, "rating_mw": 1 }
  })";
  const ScenarioConfig cfg = load_config(text);
  REQUIRE(cfg.fleet.flywheels.size() == 1);
  CHECK(cfg.fleet.flywheels[0].inertia == doctest::Approx(1.0));
}

TEST_CASE("horizon profile has fixed length") {
  HorizonProfile p(5, 2.0);
  CHECK(p.size() == 5);
  CHECK(p.front() == 2.0);
  p[4] = 3.0;
  CHECK(p.values()[4] == 3.0);
}

TEST_CASE("shipped configs pass validation as files") {
  CHECK_FALSE(read_file(test::config_path("four_zone.json")).empty());
  CHECK_NOTHROW(test::load_named("four_zone.json"));
  CHECK_NOTHROW(test::load_named("single_pgm_pcm.json"));
  CHECK_NOTHROW(test::load_named("zero_load.json"));
}

}
