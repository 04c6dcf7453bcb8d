#include "vibspk/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vibspk {

namespace {

void check_nonempty(const ScoreSet& s) {
  if (s.target_scores.empty() || s.nontarget_scores.empty())
    throw std::invalid_argument("metrics: both score classes must be non-empty");
  for (double v : s.target_scores)
    if (!std::isfinite(v)) throw std::invalid_argument("metrics: non-finite score");
  for (double v : s.nontarget_scores)
    if (!std::isfinite(v)) throw std::invalid_argument("metrics: non-finite score");
}

}  // namespace

std::vector<std::pair<double, double>> det_points(const ScoreSet& scores) {
  check_nonempty(scores);
  std::vector<double> tgt = scores.target_scores;
  std::vector<double> non = scores.nontarget_scores;
  std::sort(tgt.begin(), tgt.end());
  std::sort(non.begin(), non.end());

  std::vector<double> thresholds;
  thresholds.reserve(tgt.size() + non.size() + 1);
  thresholds.push_back(-std::numeric_limits<double>::infinity());
  std::merge(tgt.begin(), tgt.end(), non.begin(), non.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  thresholds.push_back(std::numeric_limits<double>::infinity());

  std::vector<std::pair<double, double>> points;
  points.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto miss =
        std::lower_bound(tgt.begin(), tgt.end(), t) - tgt.begin();
    const auto fa = non.end() - std::lower_bound(non.begin(), non.end(), t);
    points.emplace_back(double(miss) / double(tgt.size()),
                        double(fa) / double(non.size()));
  }
  points.erase(std::unique(points.begin(), points.end()), points.end());
  return points;
}

double eer(const ScoreSet& scores) {
  const auto points = det_points(scores);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const auto [m0, f0] = points[i];
    const auto [m1, f1] = points[i + 1];
    const double d0 = m0 - f0;
    const double d1 = m1 - f1;
    if (d0 > 0.0) continue;  // crossing not reached yet: miss <= fa here
    if (d1 < 0.0) continue;
    // interpolate along the segment to miss == fa
    const double denom = d1 - d0;
    const double lambda = (denom == 0.0) ? 0.0 : -d0 / denom;
    return m0 + lambda * (m1 - m0);
  }
  // miss > fa everywhere or vice versa cannot happen: endpoints bracket 0
  throw std::logic_error("eer: no crossing found");
}

double min_dcf(const ScoreSet& scores, const DcfParams& params) {
  const double wm = params.c_miss * params.p_target;
  const double wf = params.c_fa * (1.0 - params.p_target);
  const double denom = std::min(wm, wf);
  if (denom <= 0.0)
    throw std::invalid_argument("min_dcf: degenerate cost parameters");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [miss, fa] : det_points(scores))
    best = std::min(best, (wm * miss + wf * fa) / denom);
  return best;
}

double min_dcf_preset(const ScoreSet& scores, const std::string& preset) {
  if (preset == "voxceleb") return min_dcf(scores, {0.01, 1.0, 1.0});
  if (preset == "sre")
    return 0.5 * (min_dcf(scores, {0.01, 1.0, 1.0}) +
                  min_dcf(scores, {0.005, 1.0, 1.0}));
  throw std::invalid_argument("min_dcf_preset: unknown preset " + preset);
}

}  // namespace vibspk
