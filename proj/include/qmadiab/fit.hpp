#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qmadiab/defaults.hpp"
#include "qmadiab/errors.hpp"

namespace qmadiab {

struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double max_residual = 0.0;  // max |log v - (intercept + slope log N)|
  int points_used = 0;
  std::vector<int> excluded;  // N values dropped by the floor rule
};

// Least squares on (log N, log value). Values within a decade of value_floor
// carry no slope information and are excluded; an empty remainder means the
// quantity is exact for this family.
inline FitResult fit_order(const std::vector<std::pair<int, double>>& points,
                           double value_floor = defaults::value_floor) {
  if (points.size() < 4)
    throw InsufficientPoints("fit_order: need at least 4 points, got " +
                             std::to_string(points.size()));
  std::vector<std::pair<double, double>> kept;
  FitResult out;
  for (const auto& [n, v] : points) {
    if (n < 1) throw ConfigError("fit_order: N must be positive");
    if (!(v >= 0.0) || !std::isfinite(v))
      throw NonFinite("fit_order: bad value at N=" + std::to_string(n));
    if (v <= 10.0 * value_floor) {
      out.excluded.push_back(n);
      continue;
    }
    kept.emplace_back(std::log(static_cast<double>(n)), std::log(v));
  }
  if (kept.empty())
    throw AtFloor("fit_order: every value is at the floor " +
                  std::to_string(value_floor));
  if (kept.size() < 4)
    throw InsufficientPoints("fit_order: only " + std::to_string(kept.size()) +
                             " points above the floor");
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : kept) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(kept.size());
  my /= static_cast<double>(kept.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : kept) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
  }
  out.slope = sxy / sxx;
  out.intercept = my - out.slope * mx;
  out.points_used = static_cast<int>(kept.size());
  for (const auto& [x, y] : kept)
    out.max_residual =
        std::max(out.max_residual, std::abs(y - (out.intercept + out.slope * x)));
  return out;
}

}  // namespace qmadiab
