#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles/integrators.hpp"
#include "shipem/dlc.hpp"
#include "shipem/plant.hpp"

using namespace shipem;
using namespace shipem::dlc;

TEST_SUITE("dlc") {

TEST_CASE("pi step") {
  const PiOutput zero = pi_step(PiState{1.0, 1.0, 0.0, std::nullopt}, 0.0, 1e-3);
  CHECK(zero.u == 0.0);
  CHECK(zero.state.integral == 0.0);

  const PiOutput one = pi_step(PiState{2.0, 1.0, 0.0, std::nullopt}, 1.0, 1.0);
  CHECK(one.u == doctest::Approx(3.0));

  PiState s{0.5, 2.0, 0.0, std::nullopt};
  for (int k = 0; k < 250; ++k) s = pi_step(s, 0.4, 0.01).state;
  CHECK(s.integral == doctest::Approx(250 * 0.4 * 0.01));
}

TEST_CASE("anti-windup bound holds") {
  PiState s{1.0, 1.0, 0.0, 0.3};
  std::mt19937_64 rng(5);
  std::normal_distribution<double> e(0.5, 2.0);
  for (int k = 0; k < 5000; ++k) {
    s = pi_step(s, e(rng), 0.01).state;
    REQUIRE(std::abs(s.integral) <= 0.3);
  }
}

TEST_CASE("adaptive law at equilibrium") {
  AdaptiveState st;
  st.theta_hat = Eigen::Vector2d(0.3, 0.02);
  const AdaptiveMeasurement m{100.0, 100.0, 1000.0, 1000.0};
  const AdaptiveOutput out = adaptive_dcgen_step(st, m, 0.05, 1e-5);
  CHECK(out.state.eta == 0.0);
  CHECK(out.state.theta_hat == st.theta_hat);
  const double expected = m.v_c - adaptive_regressor(m, st.alpha).dot(st.theta_hat);
  CHECK(out.v_g == doctest::Approx(expected));
}

TEST_CASE("adaptive voltage loop converges on the shunt-capacitor generator") {
  GenParams g;
  g.name = "DCG";
  g.r_g = 0.2;
  g.l_g = 0.05;
  g.c_g = 0.05;
  const double v_ref = 1000.0;
  const double i_load = 100.0;
  const double dt = 1e-5;

  plant::GenState x;
  x.i_g = i_load;
  x.v_c = 950.0;
  AdaptiveState a;

  oracle::AdaptiveLoop loop{g.r_g, g.l_g, *g.c_g, v_ref, i_load, a.k, a.alpha};
  oracle::State<4> ref{i_load, 950.0, 0.0, 0.0};

  double e2_sum = 0.0;
  double e2_sum_at_30 = 0.0;
  double theta_max = 0.0;
  const long steps = static_cast<long>(60.0 / dt);
  for (long k = 1; k <= steps; ++k) {
    const AdaptiveMeasurement m{x.i_g, i_load, x.v_c, v_ref};
    const AdaptiveOutput u = adaptive_dcgen_step(a, m, *g.c_g, dt);
    a = u.state;
    x = plant::step_dcgen(g, x, u.v_g, i_load, dt);
    if (k <= 500000) ref = oracle::rk4_step<4>(loop, ref, dt);

    const double e = x.v_c - v_ref;
    e2_sum += e * e * dt;
    theta_max = std::max(theta_max, a.theta_hat.cwiseAbs().maxCoeff());
    if (k == 500000) {
      // 5 s
      CHECK(std::abs(e) < 0.01 * v_ref);
      CHECK(std::abs(ref[1] - v_ref) < 0.01 * v_ref);
      CHECK(x.v_c == doctest::Approx(ref[1]).epsilon(1e-3));
    }
    if (k == 3000000) e2_sum_at_30 = e2_sum;
  }
  CHECK(std::abs(x.v_c - v_ref) < 1e-3 * v_ref);
  CHECK(std::isfinite(theta_max));
  CHECK(theta_max < 1e3);
  // square-integrable error: the tail adds almost nothing
  CHECK(e2_sum - e2_sum_at_30 <= 1e-6 * e2_sum);
}

TEST_CASE("dq reference current") {
  auto check = [](double p, double q, Eigen::Vector2d v, Eigen::Vector2d want) {
    const Eigen::Vector2d i = dq_current_reference(p, q, v);
    CHECK(i.x() == doctest::Approx(want.x()));
    CHECK(i.y() == doctest::Approx(want.y()));
  };
  check(1, 0, {1, 0}, {1, 0});
  check(0, 1, {1, 0}, {0, 1});
  check(1, 0, {0, 1}, {0, 1});
  CHECK_THROWS_AS(dq_current_reference(1, 1, Eigen::Vector2d::Zero()), std::invalid_argument);
}

TEST_CASE("dq reference round-trips active and reactive power") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> pq(-1e7, 1e7);
  std::uniform_real_distribution<double> vv(-2e4, 2e4);
  for (int k = 0; k < 1000; ++k) {
    const double p = pq(rng);
    const double q = pq(rng);
    const Eigen::Vector2d v(vv(rng), vv(rng));
    const Eigen::Vector2d i = dq_current_reference(p, q, v);
    const double p2 = v.x() * i.x() + v.y() * i.y();
    const double q2 = v.x() * i.y() - v.y() * i.x();
    REQUIRE(std::abs(p2 - p) <= 1e-12 * 1e7 * 4);
    REQUIRE(std::abs(q2 - q) <= 1e-12 * 1e7 * 4);
  }
}

}
