#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "vrd/types.hpp"

namespace vrd {

enum class Booster { gbtree, dart };

struct GbmConfig {
  Booster booster = Booster::gbtree;
  int max_depth = 6;
  int rounds = 100;
  double learning_rate = 0.1;
  double subsample = 1.0;
  double colsample_bytree = 1.0;
  double gamma = 0.0;    // minimum split gain
  double lambda = 1.0;   // L2 leaf regularizer
  int early_stopping_interval = 50;  // used when a validation split is given
  double dart_drop_rate = 0.1;
  std::uint64_t seed = 0;
  /// Permit degenerate label sets (all 0 or all 1); the model collapses to
  /// its base score. Off by default: single-class training is usually a
  /// data bug and surfaces as SingleClassTraining.
  bool allow_single_class = false;
};

/// Array-encoded binary regression tree. Internal nodes test
/// x[feature] < threshold (as f32) and branch left on true; feature == -1
/// marks a leaf carrying `value`.
struct TreeNode {
  int feature = -1;
  float threshold = 0.0f;
  int left = -1;
  int right = -1;
  float value = 0.0f;
};

struct RegressionTree {
  std::vector<TreeNode> nodes;

  double predict(const Eigen::VectorXd& x) const;
  int leaf_count() const;
  int split_count() const;
  float max_abs_leaf() const;
};

/// Additive model: margin(x) = base_score + sum_i scale_i * tree_i(x),
/// probability = sigmoid(margin). Leaf values are raw Newton weights; the
/// per-tree scales carry learning rate and dropout normalization.
struct GbmModel {
  Booster booster = Booster::gbtree;
  double base_score = 0.0;
  std::vector<RegressionTree> trees;
  std::vector<double> tree_scales;
  int num_features = 0;
  std::uint64_t fingerprint = 0;

  double predict_margin(const Eigen::VectorXd& x) const;
  double predict(const Eigen::VectorXd& x) const;  // throws FeatureLengthMismatch
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

struct TrainResult {
  GbmModel model;
  std::vector<double> train_loss;  // one entry per completed round
  std::vector<double> valid_loss;  // one entry per early-stopping check
  int best_round = 0;              // rounds kept in the returned model
};

/// FNV-1a over the newline-joined slot names; models refuse feature vectors
/// from a different layout.
std::uint64_t layout_fingerprint(const std::vector<std::string>& slot_names);

/// Newton-step gradient boosting with logistic loss. Rows of X are samples;
/// labels are 0/1. A validation set with nonzero rows enables early
/// stopping: every `early_stopping_interval` rounds the validation log-loss
/// is checked and training halts (restoring the best checkpoint) when it
/// stops improving. Deterministic given (data, config).
TrainResult train(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::MatrixXd& X_valid, const Eigen::VectorXd& y_valid,
                  const GbmConfig& config,
                  const std::vector<std::string>& slot_names = {});

// Model file: magic `GBM1`, u32 little-endian header length, JSON header
// (version, booster, base score, scales, per-tree node counts, feature
// count, fingerprint), then 20-byte little-endian node records
// (i32 feature, f32 threshold, i32 left, i32 right, f32 value) per tree.
void save_model(const GbmModel& model, const std::string& path);
GbmModel load_model(const std::string& path);

}  // namespace vrd
