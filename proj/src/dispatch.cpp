#include "shipem/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace shipem::dispatch {

double incremental_cost(const QuadCost& c, double p) { return 2.0 * c.a * p + c.b; }

namespace {

double unit_output(const QuadCost& c, const Bounds& b, double lambda) {
  return std::clamp((lambda - c.b) / (2.0 * c.a), b.p_min, b.p_max);
}

double total_output(const std::vector<QuadCost>& costs, const std::vector<Bounds>& bounds,
                    double lambda) {
  double sum = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) sum += unit_output(costs[i], bounds[i], lambda);
  return sum;
}

}  // namespace

DispatchResult economic_dispatch(const std::vector<QuadCost>& costs,
                                 const std::vector<Bounds>& bounds, double p_load) {
  if (costs.empty() || costs.size() != bounds.size()) {
    throw std::invalid_argument("economic_dispatch: need one bound pair per cost");
  }
  double lo_total = 0.0;
  double hi_total = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!(costs[i].a > 0.0)) throw std::invalid_argument("economic_dispatch: a must be positive");
    if (!(bounds[i].p_min <= bounds[i].p_max)) {
      throw std::invalid_argument("economic_dispatch: p_min exceeds p_max");
    }
    lo_total += bounds[i].p_min;
    hi_total += bounds[i].p_max;
  }
  const double slack = 1e-12 * std::max(1.0, std::abs(hi_total));
  if (p_load < lo_total - slack || p_load > hi_total + slack) {
    throw std::domain_error("economic_dispatch: demand is outside the aggregate unit limits");
  }

  double lam_lo = incremental_cost(costs[0], bounds[0].p_min);
  double lam_hi = incremental_cost(costs[0], bounds[0].p_max);
  for (std::size_t i = 1; i < costs.size(); ++i) {
    lam_lo = std::min(lam_lo, incremental_cost(costs[i], bounds[i].p_min));
    lam_hi = std::max(lam_hi, incremental_cost(costs[i], bounds[i].p_max));
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lam_lo + lam_hi);
    if (total_output(costs, bounds, mid) < p_load) {
      lam_lo = mid;
    } else {
      lam_hi = mid;
    }
    if (lam_hi - lam_lo <= 1e-15 * std::max(1.0, std::abs(lam_hi))) break;
  }

  // Fix the clamped set from the bisected price, then solve the interior units
  // exactly so the allocation sums to the demand.
  DispatchResult r;
  const double lam = 0.5 * (lam_lo + lam_hi);
  r.p.resize(costs.size());
  r.clamped.assign(costs.size(), false);
  double fixed = 0.0;
  double inv_sum = 0.0;
  double b_sum = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    const double free_p = (lam - costs[i].b) / (2.0 * costs[i].a);
    if (free_p <= bounds[i].p_min || free_p >= bounds[i].p_max) {
      r.p[i] = std::clamp(free_p, bounds[i].p_min, bounds[i].p_max);
      r.clamped[i] = true;
      fixed += r.p[i];
    } else {
      inv_sum += 1.0 / (2.0 * costs[i].a);
      b_sum += costs[i].b / (2.0 * costs[i].a);
    }
  }
  r.lambda = lam;
  if (inv_sum > 0.0) {
    const double exact = (p_load - fixed + b_sum) / inv_sum;
    bool consistent = true;
    for (std::size_t i = 0; i < costs.size(); ++i) {
      if (r.clamped[i]) continue;
      const double p = (exact - costs[i].b) / (2.0 * costs[i].a);
      if (p < bounds[i].p_min || p > bounds[i].p_max) consistent = false;
    }
    if (consistent) {
      r.lambda = exact;
      for (std::size_t i = 0; i < costs.size(); ++i) {
        if (!r.clamped[i]) r.p[i] = (exact - costs[i].b) / (2.0 * costs[i].a);
      }
    } else {
      for (std::size_t i = 0; i < costs.size(); ++i) {
        if (!r.clamped[i]) r.p[i] = unit_output(costs[i], bounds[i], lam);
      }
    }
  }
  for (std::size_t i = 0; i < costs.size(); ++i) {
    r.total_cost += costs[i].a * r.p[i] * r.p[i] + costs[i].b * r.p[i] + costs[i].c;
  }
  return r;
}

DispatchProblem parse_dispatch(const std::string& text) {
  DispatchProblem prob;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    prob.p_load = doc.at("load").get<double>();
    for (const auto& u : doc.at("units")) {
      prob.costs.push_back({u.at("a").get<double>(), u.value("b", 0.0), u.value("c", 0.0)});
      prob.bounds.push_back({u.at("p_min").get<double>(), u.at("p_max").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("dispatch file: ") + e.what());
  }
  if (prob.costs.empty()) throw std::invalid_argument("dispatch file: no units");
  return prob;
}

}  // namespace shipem::dispatch
