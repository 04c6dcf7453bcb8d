#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vibspk/encoder.hpp"

namespace vibspk {

struct GradCheckReport {
  struct BlockResult {
    std::string name;
    double max_rel_err = 0.0;
  };
  std::vector<BlockResult> blocks;
  double step = 0.0;

  double max_rel_err() const;
  bool passes(double tolerance) const { return max_rel_err() < tolerance; }
};

// Central finite differences against an analytic gradient, reported per
// parameter block. The closure must be deterministic (noise frozen as an
// input, never drawn inside). Relative error per component:
//   |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(
    const std::function<double(const Vector&)>& loss, const Vector& params,
    const Vector& analytic_grad,
    const std::vector<std::pair<std::string, Eigen::Index>>& layout,
    double step = 1e-5);

}  // namespace vibspk
