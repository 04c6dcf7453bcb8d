#pragma once

#include <string>
#include <utility>
#include <vector>

namespace vibspk {

struct ScoreSet {
  std::vector<double> target_scores;
  std::vector<double> nontarget_scores;
};

struct DcfParams {
  double p_target = 0.01;
  double c_miss = 1.0;
  double c_fa = 1.0;
};

// Accept when score >= threshold. Miss rate = fraction of target scores
// below t, false-alarm rate = fraction of nontarget scores at or above t.

// Monotone staircase of (P_miss, P_fa) operating points over all
// thresholds: P_miss nondecreasing, P_fa nonincreasing.
std::vector<std::pair<double, double>> det_points(const ScoreSet& scores);

// Crossing point of the miss and false-alarm rates, with linear
// interpolation between adjacent operating points.
double eer(const ScoreSet& scores);

// min over thresholds of the normalized detection cost
//   [c_miss p P_miss + c_fa (1-p) P_fa] / min(c_miss p, c_fa (1-p)).
double min_dcf(const ScoreSet& scores, const DcfParams& params);

// Presets: "voxceleb" = minDCF at p=0.01; "sre" = mean of the normalized
// min costs at p=0.01 and p=0.005 (unit costs in both).
double min_dcf_preset(const ScoreSet& scores, const std::string& preset);

}  // namespace vibspk
