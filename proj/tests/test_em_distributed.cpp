#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles/grid_search.hpp"
#include "oracles/kkt_enum.hpp"
#include "shipem/em_central.hpp"
#include "shipem/em_distributed.hpp"
#include "shipem/plant.hpp"
#include "support.hpp"

using namespace shipem;
using namespace shipem::em;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

GenParams pgm() {
  GenParams g;
  g.name = "PGM-1";
  g.r_g = 0.05;
  g.l_g = 0.002;
  g.p_min = 0.2e6;
  g.p_max = 28e6;
  g.p_rated = 15e6;
  g.ramp = 27.8e6;
  g.beta = 1.0;
  return g;
}

BattParams pcm() {
  BattParams b;
  b.name = "PCM-1";
  b.r_b = 0.05;
  b.capacity = 20 * 3600.0;
  b.p_min = -10e6;
  b.p_max = 10e6;
  b.ramp = 10e6;
  b.q_min = 0.0;
  b.q_max = 1.0;
  b.q0 = 0.5;
  b.gamma_p = 1.0;
  return b;
}

const double kKappa = 1.0 / (72000.0 * 12000.0);

ScenarioConfig four_zone(double eps_mw = 1e-3) {
  ScenarioConfig cfg = test::load_named("four_zone.json");
  cfg.em.eps_tol = eps_mw * 1e6;
  cfg.em.max_iters = 5000;
  return cfg;
}

}  // namespace

TEST_SUITE("em_distributed") {

TEST_CASE("generator node at zero price sits at its reference") {
  const HorizonProfile p = solve_pgm_node(pgm(), Eigen::VectorXd::Zero(5), 15e6);
  for (std::size_t k = 0; k < 5; ++k) CHECK(p[k] == doctest::Approx(15e6).epsilon(1e-9));
}

TEST_CASE("generator node under a flat price") {
  const double c = 2.5;  // per MW
  const HorizonProfile p = solve_pgm_node(pgm(), Eigen::VectorXd::Constant(5, c), 15e6);
  for (std::size_t k = 0; k < 5; ++k) CHECK(p[k] == doctest::Approx(15e6 - c * 1e6).epsilon(1e-9));
}

TEST_CASE("large price pins the generator at its lower limit") {
  const HorizonProfile p = solve_pgm_node(pgm(), Eigen::VectorXd::Constant(5, 1e3), 15e6);
  for (std::size_t k = 0; k < 5; ++k) CHECK(p[k] == doctest::Approx(0.2e6).epsilon(1e-9));
}

TEST_CASE("previous power outside the box is pulled to the nearest edge") {
  GenParams g = pgm();
  g.ramp = 1e6;
  const HorizonProfile p = solve_pgm_node(g, Eigen::VectorXd::Zero(3), 40e6);
  CHECK(p[0] == doctest::Approx(28e6).epsilon(1e-9));
  CHECK_THROWS_AS(solve_pgm_node(g, Eigen::VectorXd::Constant(3, kInf), 15e6),
                  std::invalid_argument);
}

TEST_CASE("battery node with an unreachable SoC box is a configuration error") {
  BattParams b = pcm();
  b.q_max = 0.8;
  CHECK_THROWS_AS(solve_pcm_node(b, Eigen::VectorXd::Zero(3), 0.0, 0.95, kKappa), ConfigError);
}

TEST_CASE("generator node matches active-set enumeration") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> price(-20.0, 20.0);
  std::uniform_real_distribution<double> prev(1.0, 27.0);
  GenParams g = pgm();
  g.ramp = 3e6;
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 1 + trial % 3;
    Eigen::VectorXd lambda(h);
    for (int k = 0; k < h; ++k) lambda[k] = price(rng);
    const double p_prev = prev(rng);

    // MW model: box rows, then ramp rows p_0 - p_prev and p_k - p_{k-1}
    Eigen::MatrixXd P = g.beta * Eigen::MatrixXd::Identity(h, h);
    Eigen::VectorXd q = lambda.array() - g.beta * 15.0;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * h, h);
    Eigen::VectorXd l(2 * h), u(2 * h);
    for (int k = 0; k < h; ++k) {
      A(k, k) = 1.0;
      l[k] = 0.2;
      u[k] = 28.0;
      A(h + k, k) = 1.0;
      if (k == 0) {
        l[h] = p_prev - 3.0;
        u[h] = p_prev + 3.0;
      } else {
        A(h + k, k - 1) = -1.0;
        l[h + k] = -3.0;
        u[h + k] = 3.0;
      }
    }
    const auto ref = oracle::kkt_enumerate(P, q, A, l, u);
    REQUIRE(ref);
    const HorizonProfile p = solve_pgm_node(g, lambda, p_prev * 1e6);
    CAPTURE(trial);
    for (int k = 0; k < h; ++k) {
      CHECK(std::abs(p[k] / 1e6 - ref->x[k]) <= 1e-3 * std::max(1.0, std::abs(ref->x[k])));
    }
  }
}

TEST_CASE("battery node at zero price is idle") {
  const PcmNodeResult r = solve_pcm_node(pcm(), Eigen::VectorXd::Zero(5), 0.0, 0.5, kKappa);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::abs(r.p_b[k]) <= 1.0);
    CHECK(r.soc[k] == doctest::Approx(0.5).epsilon(1e-9));
  }
}

TEST_CASE("battery node under a unit price") {
  // lambda is per MW, so gamma*p + lambda = 0 gives p = -1 MW
  const PcmNodeResult r = solve_pcm_node(pcm(), Eigen::VectorXd::Ones(5), 0.0, 0.5, kKappa);
  for (std::size_t k = 0; k < 5; ++k) CHECK(r.p_b[k] == doctest::Approx(-1e6).epsilon(1e-7));
}

TEST_CASE("full battery refuses to charge") {
  BattParams b = pcm();
  b.q_max = 0.8;
  b.q0 = 0.6;
  const Eigen::VectorXd lambda = Eigen::VectorXd::Constant(2, 4.0);
  const PcmNodeResult r = solve_pcm_node(b, lambda, 0.0, 0.8, kKappa);

  const double kappa_mw = kKappa * 1e6;
  const auto best = oracle::grid_minimize(
      {-10, -10}, {10, 10}, 1e-3,
      [&](const std::vector<double>& x) {
        return 0.5 * (x[0] * x[0] + x[1] * x[1]) + 4.0 * (x[0] + x[1]);
      },
      [&](const std::vector<double>& x) {
        const double q1 = 0.8 - kappa_mw * x[0];
        const double q2 = q1 - kappa_mw * x[1];
        return q1 <= 0.8 + 1e-12 && q2 <= 0.8 + 1e-12 && q1 >= 0.0 && q2 >= 0.0 &&
               std::abs(x[1] - x[0]) <= 10.0;
      });
  REQUIRE(best.found);
  CHECK(std::abs(best.x[0]) <= 1e-9);
  CHECK(std::abs(best.x[1]) <= 1e-9);
  CHECK(std::abs(r.p_b[0]) <= 1.0);
  CHECK(std::abs(r.p_b[1]) <= 1.0);
  CHECK(r.soc[1] <= 0.8 + 1e-9);
}

TEST_CASE("battery node needs a positive sensitivity") {
  CHECK_THROWS_AS(solve_pcm_node(pcm(), Eigen::VectorXd::Zero(2), 0.0, 0.5, 0.0),
                  std::invalid_argument);
}

TEST_CASE("dual update") {
  DualState s;
  s.lambda = Eigen::VectorXd::Constant(5, 0.7);
  const DualState fixed = dual_update(s, Eigen::VectorXd::Constant(5, 15e6), 15e6, 0.1);
  CHECK(fixed.lambda == s.lambda);
  CHECK(fixed.residual == 0.0);
  CHECK(fixed.iteration == 1);

  DualState z;
  z.lambda = Eigen::VectorXd::Zero(5);
  const DualState up = dual_update(z, Eigen::VectorXd::Constant(5, 16e6), 15e6, 0.1);
  for (int k = 0; k < 5; ++k) CHECK(up.lambda[k] == doctest::Approx(0.1));
  CHECK(up.residual == doctest::Approx(1e6));

  CHECK_THROWS_AS(dual_update(z, Eigen::VectorXd::Zero(5), 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(dual_update(z, Eigen::VectorXd::Zero(4), 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("four-zone instance converges and the residual falls") {
  const ScenarioConfig cfg = four_zone();
  const Allocation a = coordinate(cfg, Measurements::initial(cfg, 4e6));
  CHECK(a.converged);
  CHECK(a.balance_residual <= cfg.em.eps_tol);
  MESSAGE("cold-start dual iterations: " << a.iterations);
  const auto& h = a.residual_history;
  REQUIRE(h.size() >= 2);
  for (std::size_t i = 1; i < h.size(); ++i) CHECK(h[i] < h[i - 1]);
}

TEST_CASE("single generator: price and power in closed form") {
  ScenarioConfig cfg = four_zone(1e-6);
  cfg.fleet.batteries.clear();
  cfg.fleet.generators.resize(1);
  cfg.fleet.generators[0].p_initial = 10e6;
  cfg.em.alpha = 0.5;
  const Allocation a = coordinate(cfg, Measurements::initial(cfg, 10e6));
  REQUIRE(a.converged);
  DistributedMpc mpc(cfg);
  mpc.solve(Measurements::initial(cfg, 10e6));
  for (int k = 0; k < cfg.horizon; ++k) {
    CHECK(a.p_g[0][k] == doctest::Approx(10e6).epsilon(1e-6));
    CHECK(mpc.lambda()[k] == doctest::Approx(1.0 * (15.0 - 10.0)).epsilon(1e-5));
  }
}

TEST_CASE("distributed and centralized agree") {
  ScenarioConfig cfg = four_zone(1e-6);
  for (double load : {4e6, 12e6, 16e6}) {
    Measurements meas = Measurements::initial(cfg, load);
    meas.p_g_prev = {15e6, 15e6};
    const Allocation d = coordinate(cfg, meas);
    const Allocation c = solve_central_mpc(cfg, meas);
    REQUIRE(d.converged);
    REQUIRE_FALSE(c.fallback);
    CAPTURE(load);
    for (int k = 0; k < cfg.horizon; ++k) {
      for (int i = 0; i < 2; ++i) {
        CHECK(std::abs(d.p_g[i][k] - c.p_g[i][k]) <= 1e-2 * 1e6);
        CHECK(std::abs(d.p_b[i][k] - c.p_b[i][k]) <= 1e-2 * 1e6);
      }
    }
  }
}

TEST_CASE("node order does not change the allocation") {
  ScenarioConfig cfg = four_zone();
  cfg.fleet.generators[1].p_rated = 12e6;
  cfg.fleet.generators[1].p_initial = 12e6;
  cfg.fleet.batteries[1].gamma_p = 3.0;
  cfg.fleet.batteries[1].q0 = 0.6;
  ScenarioConfig swapped = cfg;
  std::swap(swapped.fleet.generators[0], swapped.fleet.generators[1]);
  std::swap(swapped.fleet.batteries[0], swapped.fleet.batteries[1]);

  Measurements m = Measurements::initial(cfg, 14e6);
  Measurements ms = Measurements::initial(swapped, 14e6);
  const Allocation a = coordinate(cfg, m);
  const Allocation b = coordinate(swapped, ms);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(a.iterations == b.iterations);
  for (int k = 0; k < cfg.horizon; ++k) {
    CHECK(std::abs(a.p_g[0][k] - b.p_g[1][k]) <= 1e-9 * 1e6);
    CHECK(std::abs(a.p_g[1][k] - b.p_g[0][k]) <= 1e-9 * 1e6);
    CHECK(std::abs(a.p_b[0][k] - b.p_b[1][k]) <= 1e-9 * 1e6);
    CHECK(std::abs(a.p_b[1][k] - b.p_b[0][k]) <= 1e-9 * 1e6);
  }
}

TEST_CASE("oversized dual step is caught instead of looping") {
  ScenarioConfig cfg = four_zone();
  cfg.em.alpha = 50.0;
  cfg.em.max_iters = 100000;
  const Allocation a = coordinate(cfg, Measurements::initial(cfg, 14e6));
  CHECK_FALSE(a.converged);
  CHECK(a.iterations < cfg.em.max_iters);
  CHECK(a.status == qp::QpStatus::max_iters);
  CHECK(std::isfinite(a.balance_residual));
}

TEST_CASE("warm price start") {
  const ScenarioConfig cfg = four_zone();
  DistributedMpc mpc(cfg);
  Measurements m = Measurements::initial(cfg, 12e6);
  const Allocation first = mpc.solve(m);
  REQUIRE(first.converged);
  m.p_g_prev = first.gen_commands();
  m.p_b_prev = first.batt_commands();
  for (std::size_t j = 0; j < m.q.size(); ++j) m.q[j] = first.soc[j][0];
  const Allocation warm = mpc.solve(m);
  CHECK(warm.converged);
  CHECK(warm.iterations < first.iterations);

  mpc.reset_price();
  const Allocation cold = mpc.solve(m);
  CHECK(cold.converged);
  CHECK(cold.iterations > warm.iterations);
}

TEST_CASE("parallel node solves give the same answer") {
  ScenarioConfig cfg = four_zone();
  const Measurements m = Measurements::initial(cfg, 9e6);
  const Allocation serial = coordinate(cfg, m);
  cfg.em.workers = 4;
  const Allocation parallel = coordinate(cfg, m);
  CHECK(serial.iterations == parallel.iterations);
  CHECK(serial.p_g == parallel.p_g);
  CHECK(serial.p_b == parallel.p_b);
}

}
