#include "vibspk/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace vibspk {

double GradCheckReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& b : blocks) m = std::max(m, b.max_rel_err);
  return m;
}

GradCheckReport grad_check(
    const std::function<double(const Vector&)>& loss, const Vector& params,
    const Vector& analytic_grad,
    const std::vector<std::pair<std::string, Eigen::Index>>& layout,
    double step) {
  if (analytic_grad.size() != params.size())
    throw std::invalid_argument("grad_check: gradient size mismatch");
  Eigen::Index total = 0;
  for (const auto& [name, size] : layout) total += size;
  if (total != params.size())
    throw std::invalid_argument("grad_check: layout does not cover params");

  GradCheckReport report;
  report.step = step;
  Vector p = params;
  Eigen::Index pos = 0;
  for (const auto& [name, size] : layout) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < size; ++i) {
      const Eigen::Index idx = pos + i;
      const double saved = p(idx);
      p(idx) = saved + step;
      const double up = loss(p);
      p(idx) = saved - step;
      const double down = loss(p);
      p(idx) = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw std::runtime_error("grad_check: non-finite loss in block " + name);
      const double numeric = (up - down) / (2.0 * step);
      const double rel = std::abs(analytic_grad(idx) - numeric) /
                         std::max(1.0, std::abs(numeric));
      worst = std::max(worst, rel);
    }
    report.blocks.push_back({name, worst});
    pos += size;
  }
  return report;
}

}  // namespace vibspk
