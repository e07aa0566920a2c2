#include <doctest.h>

#include <cmath>
#include <vector>

#include "vrd/metrics.hpp"
#include "vrd/rng.hpp"

using namespace vrd;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> values) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double v : values) out[i++] = v;
  return out;
}

// O(n^2) pairwise AUC: P(score_pos > score_neg) + 0.5 P(tie).
double pairwise_auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
  double wins = 0.0, pairs = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (labels[i] < 0.5) continue;
    for (Eigen::Index j = 0; j < scores.size(); ++j) {
      if (labels[j] > 0.5) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST_CASE("sigmoid hits the standard anchor points") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(2.0) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
  CHECK(sigmoid(-2.0) == doctest::Approx(1.0 - sigmoid(2.0)).epsilon(1e-12));
  CHECK(sigmoid(40.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sigmoid(-40.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("log loss matches hand-computed cross entropy") {
  // -(log 0.8 + log 0.7) / 2 for a hit on each class.
  const double expected = -(std::log(0.8) + std::log(0.7)) / 2.0;
  CHECK(log_loss(vec({0.8, 0.3}), vec({1, 0})) == doctest::Approx(expected).epsilon(1e-12));
  // Perfect confident predictions clamp instead of producing infinities.
  CHECK(std::isfinite(log_loss(vec({1.0, 0.0}), vec({1, 0}))));
  CHECK(log_loss(vec({1.0, 0.0}), vec({1, 0})) < 1e-12);
  CHECK(std::isfinite(log_loss(vec({0.0, 1.0}), vec({1, 0}))));
  CHECK(log_loss(vec({0.0, 1.0}), vec({1, 0})) > 30.0);
  // Uninformative prediction: exactly log 2.
  CHECK(log_loss(vec({0.5, 0.5}), vec({1, 0})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("auc anchors: perfect, inverted, random, tied") {
  CHECK(auc(vec({0.9, 0.8, 0.2, 0.1}), vec({1, 1, 0, 0})) == 1.0);
  CHECK(auc(vec({0.1, 0.2, 0.8, 0.9}), vec({1, 1, 0, 0})) == 0.0);
  CHECK(auc(vec({0.5, 0.5, 0.5, 0.5}), vec({1, 1, 0, 0})) == 0.5);
  // One misranked pair out of four: 0.75.
  CHECK(auc(vec({0.9, 0.3, 0.4, 0.1}), vec({1, 1, 0, 0})) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(std::isnan(auc(vec({0.9, 0.8}), vec({1, 1}))));
  CHECK(std::isnan(auc(vec({0.9, 0.8}), vec({0, 0}))));
}

TEST_CASE("rank auc equals the pairwise definition on random data") {
  Rng rng(21);
  for (int iter = 0; iter < 100; ++iter) {
    const int n = 5 + static_cast<int>(rng.uniform_index(40));
    Eigen::VectorXd scores(n), labels(n);
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < n; ++i) {
      // Quantized scores force ties through the midrank path.
      scores[i] = static_cast<double>(rng.uniform_index(8)) / 8.0;
      labels[i] = rng.uniform_index(2) ? 1.0 : 0.0;
      has_pos |= labels[i] > 0.5;
      has_neg |= labels[i] < 0.5;
    }
    if (!has_pos) labels[0] = 1.0;
    if (!has_neg) labels[n > 1 ? 1 : 0] = 0.0;
    if (n == 1) continue;
    CHECK(auc(scores, labels) == doctest::Approx(pairwise_auc(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("auc is invariant under strictly increasing score transforms") {
  Rng rng(22);
  Eigen::VectorXd scores(30), labels(30);
  for (int i = 0; i < 30; ++i) {
    scores[i] = rng.uniform() * 4.0 - 2.0;
    labels[i] = i % 3 == 0 ? 1.0 : 0.0;
  }
  const double base = auc(scores, labels);
  Eigen::VectorXd transformed(30);
  for (int i = 0; i < 30; ++i) transformed[i] = sigmoid(scores[i]);
  CHECK(auc(transformed, labels) == doctest::Approx(base).epsilon(1e-12));
  for (int i = 0; i < 30; ++i) transformed[i] = 3.0 * scores[i] + 11.0;
  CHECK(auc(transformed, labels) == doctest::Approx(base).epsilon(1e-12));
}
