#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace vrd {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Mean binary cross-entropy; probabilities clamped away from {0,1}.
inline double log_loss(const Eigen::VectorXd& probabilities, const Eigen::VectorXd& labels) {
  constexpr double eps = 1e-15;
  double total = 0.0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], eps, 1.0 - eps);
    total += labels[i] > 0.5 ? -std::log(p) : -std::log(1.0 - p);
  }
  return total / static_cast<double>(probabilities.size());
}

/// Rank-based ROC AUC with midrank tie handling. NaN when a class is absent.
inline double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  const Eigen::Index n = scores.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(),
            [&scores](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  double positives = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + j - 1) + 1.0;  // ranks are 1-based
    for (Eigen::Index k = i; k < j; ++k) {
      if (labels[order[k]] > 0.5) {
        positive_rank_sum += midrank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

}  // namespace vrd
