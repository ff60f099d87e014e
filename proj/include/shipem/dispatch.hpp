#pragma once

#include <string>
#include <utility>
#include <vector>

namespace shipem::dispatch {

/// C(p) = a p^2 + b p + c, with a > 0.
struct QuadCost {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
};

struct Bounds {
  double p_min = 0.0;
  double p_max = 0.0;
};

struct DispatchResult {
  std::vector<double> p;
  double lambda = 0.0;  // common incremental cost of the unclamped units
  std::vector<bool> clamped;
  double total_cost = 0.0;
};

double incremental_cost(const QuadCost& c, double p);

/// Equal-incremental-cost allocation of p_load. Throws std::invalid_argument
/// on malformed input and std::domain_error when p_load lies outside
/// [sum p_min, sum p_max].
DispatchResult economic_dispatch(const std::vector<QuadCost>& costs,
                                 const std::vector<Bounds>& bounds, double p_load);

struct DispatchProblem {
  std::vector<QuadCost> costs;
  std::vector<Bounds> bounds;
  double p_load = 0.0;
};

/// {"load": x, "units": [{"a":..,"b":..,"c":..,"p_min":..,"p_max":..}, ...]}.
/// All powers share one unit of the caller's choosing.
DispatchProblem parse_dispatch(const std::string& text);

}  // namespace shipem::dispatch
