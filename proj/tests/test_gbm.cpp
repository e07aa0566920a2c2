#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vrd/gbm.hpp"
#include "vrd/metrics.hpp"
#include "vrd/rng.hpp"

using namespace vrd;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "vrd_gbm_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

// n samples, d features, labels 1{x0 > 0.5} with no noise.
struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
};

Dataset threshold_rule(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.X(i, j) = rng.uniform();
    data.y[i] = data.X(i, 0) > 0.5 ? 1.0 : 0.0;
  }
  return data;
}

GbmConfig small_config() {
  GbmConfig config;
  config.max_depth = 3;
  config.rounds = 30;
  config.learning_rate = 0.3;
  return config;
}

std::string file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("boosting learns a one-feature threshold rule") {
  const auto train_data = threshold_rule(2000, 5, 51);
  const auto held_out = threshold_rule(1000, 5, 52);
  const auto result = train(train_data.X, train_data.y, {}, {}, small_config());
  const auto p = result.model.predict(held_out.X);
  CHECK(auc(p, held_out.y) >= 0.99);
  // Anchor predictions on both sides of the boundary.
  Eigen::VectorXd x = Eigen::VectorXd::Constant(5, 0.25);
  x[0] = 0.9;
  CHECK(result.model.predict(x) >= 0.9);
  x[0] = 0.1;
  CHECK(result.model.predict(x) <= 0.1);
}

TEST_CASE("training loss is monotone without row or column sampling") {
  const auto data = threshold_rule(500, 4, 53);
  auto config = small_config();
  config.rounds = 40;
  const auto result = train(data.X, data.y, {}, {}, config);
  REQUIRE(result.train_loss.size() == 40);
  for (std::size_t i = 1; i < result.train_loss.size(); ++i)
    CHECK(result.train_loss[i] <= result.train_loss[i - 1] + 1e-12);
}

TEST_CASE("first-round statistics follow the logistic Newton step") {
  // Single feature, two samples, one round, depth 1, lr 1, lambda 0:
  // base margin 0 -> p = 0.5, g = p - y, h = 0.25. The root splits between
  // the samples; each leaf holds one sample with weight -g/h = 4(y - 0.5).
  Eigen::MatrixXd X(2, 1);
  X << 0.0, 1.0;
  Eigen::VectorXd y(2);
  y << 0.0, 1.0;
  GbmConfig config;
  config.max_depth = 1;
  config.rounds = 1;
  config.learning_rate = 1.0;
  config.lambda = 0.0;
  const auto result = train(X, y, {}, {}, config);
  REQUIRE(result.model.trees.size() == 1);
  const auto& tree = result.model.trees[0];
  CHECK(tree.split_count() == 1);
  Eigen::VectorXd lo(1), hi(1);
  lo << 0.0;
  hi << 1.0;
  CHECK(result.model.predict_margin(lo) == doctest::Approx(-2.0).epsilon(1e-12));
  CHECK(result.model.predict_margin(hi) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(result.model.predict(hi) == doctest::Approx(sigmoid(2.0)).epsilon(1e-12));
}

TEST_CASE("gradients and hessians match the loss numerically") {
  // Gradient check on the training objective: for logistic loss at margin m,
  // dL/dm must equal p - y and d2L/dm2 must equal p(1 - p). Verified by
  // second-order Taylor agreement at shrinking step sizes.
  Rng rng(54);
  auto loss_at = [](const Eigen::VectorXd& margins, const Eigen::VectorXd& labels) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
      const double p = sigmoid(margins[i]);
      total += labels[i] > 0.5 ? -std::log(p) : -std::log(1.0 - p);
    }
    return total;
  };
  Eigen::VectorXd margins(20), labels(20), direction(20);
  for (int i = 0; i < 20; ++i) {
    margins[i] = rng.uniform() * 4.0 - 2.0;
    labels[i] = rng.uniform_index(2) ? 1.0 : 0.0;
    direction[i] = rng.uniform() * 2.0 - 1.0;
  }
  double gradient_dot = 0.0, hessian_quad = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double p = sigmoid(margins[i]);
    gradient_dot += (p - labels[i]) * direction[i];
    hessian_quad += p * (1.0 - p) * direction[i] * direction[i];
  }
  const double base = loss_at(margins, labels);
  double prev_error = 1e100;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const double actual = loss_at(margins + eps * direction, labels) - base;
    const double predicted = eps * gradient_dot + 0.5 * eps * eps * hessian_quad;
    const double error = std::abs(actual - predicted);
    // Third-order remainder: error shrinks like eps^3.
    CHECK(error <= std::abs(actual) * 0.05 + 1e-12);
    CHECK(error < prev_error);
    prev_error = error;
  }
}

TEST_CASE("single-class labels are rejected unless explicitly allowed") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(20, 3);
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(20);
  auto config = small_config();
  try {
    train(X, zeros, {}, {}, config);
    FAIL("expected SingleClassTraining");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingleClassTraining);
  }
  config.allow_single_class = true;
  const auto result = train(X, zeros, {}, {}, config);
  for (int i = 0; i < 5; ++i)
    CHECK(result.model.predict(Eigen::VectorXd(X.row(i).transpose())) <= 0.01);

  try {
    train(Eigen::MatrixXd{}, Eigen::VectorXd{}, {}, {}, config);
    FAIL("expected EmptyInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyInput);
  }
}

TEST_CASE("huge l2 regularization collapses every leaf") {
  const auto data = threshold_rule(400, 3, 55);
  auto config = small_config();
  config.lambda = 1e12;
  const auto result = train(data.X, data.y, {}, {}, config);
  for (const auto& tree : result.model.trees) CHECK(tree.max_abs_leaf() < 1e-6);
  // Predictions stay at the base rate.
  Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 0.9);
  CHECK(result.model.predict(x) ==
        doctest::Approx(sigmoid(result.model.base_score)).epsilon(1e-6));
}

TEST_CASE("gamma prunes splits monotonically") {
  const auto data = threshold_rule(600, 4, 56);
  auto config = small_config();
  int prev_splits = 1 << 30;
  for (double gamma : {0.0, 1.0, 5.0, 1e6}) {
    config.gamma = gamma;
    const auto result = train(data.X, data.y, {}, {}, config);
    int splits = 0;
    for (const auto& tree : result.model.trees) splits += tree.split_count();
    CHECK(splits <= prev_splits);
    prev_splits = splits;
    if (gamma >= 1e6) CHECK(splits == 0);
  }
}

TEST_CASE("an empty model predicts its base score") {
  GbmModel model;
  model.base_score = 0.0;
  model.num_features = 2;
  const Eigen::VectorXd zero2 = Eigen::VectorXd::Zero(2);
  CHECK(model.predict(zero2) == 0.5);
  model.base_score = 1.5;
  CHECK(model.predict(zero2) == doctest::Approx(sigmoid(1.5)).epsilon(1e-15));

  // One single-leaf tree with weight w at scale s shifts the margin by s*w.
  RegressionTree leaf;
  leaf.nodes.push_back(TreeNode{-1, 0.0f, -1, -1, 2.0f});
  model.base_score = 0.0;
  model.trees.push_back(leaf);
  model.tree_scales.push_back(0.25);
  CHECK(model.predict(zero2) == doctest::Approx(sigmoid(0.5)).epsilon(1e-12));

  try {
    const Eigen::VectorXd zero3 = Eigen::VectorXd::Zero(3);
    model.predict(zero3);
    FAIL("expected FeatureLengthMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FeatureLengthMismatch);
  }
}

TEST_CASE("models round trip through the binary format") {
  const auto data = threshold_rule(800, 4, 57);
  auto config = small_config();
  config.seed = 99;
  const auto result = train(data.X, data.y, {}, {}, config, {"a", "b", "c", "d"});
  const auto path = temp_path("model.gbm1");
  save_model(result.model, path);
  const auto loaded = load_model(path);

  CHECK(loaded.booster == result.model.booster);
  CHECK(loaded.base_score == result.model.base_score);
  CHECK(loaded.num_features == result.model.num_features);
  CHECK(loaded.fingerprint == result.model.fingerprint);
  CHECK(loaded.fingerprint == layout_fingerprint({"a", "b", "c", "d"}));
  CHECK(loaded.tree_scales == result.model.tree_scales);
  REQUIRE(loaded.trees.size() == result.model.trees.size());

  Rng rng(58);
  for (int i = 0; i < 1000; ++i) {
    Eigen::VectorXd x(4);
    for (int j = 0; j < 4; ++j) x[j] = rng.uniform() * 2.0 - 0.5;
    CHECK(loaded.predict(x) == result.model.predict(x));
  }

  // Saving twice yields identical bytes.
  const auto path2 = temp_path("model2.gbm1");
  save_model(result.model, path2);
  CHECK(file_bytes(path) == file_bytes(path2));
}

TEST_CASE("corrupt model files are rejected") {
  const auto path = temp_path("corrupt.gbm1");
  {
    std::ofstream out(path, std::ios::binary);
    out << "GARBAGE";
  }
  try {
    load_model(path);
    FAIL("expected CorruptModel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorruptModel);
  }

  const auto data = threshold_rule(200, 3, 59);
  const auto result = train(data.X, data.y, {}, {}, small_config());
  const auto good = temp_path("good.gbm1");
  save_model(result.model, good);
  auto bytes = file_bytes(good);
  {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  try {
    load_model(path);
    FAIL("expected CorruptModel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CorruptModel);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto data = threshold_rule(700, 4, 60);
  const auto valid = threshold_rule(200, 4, 61);
  GbmConfig config = small_config();
  config.booster = Booster::dart;
  config.subsample = 0.7;
  config.colsample_bytree = 0.75;
  config.dart_drop_rate = 0.2;
  config.seed = 4242;
  const auto a = train(data.X, data.y, valid.X, valid.y, config);
  const auto b = train(data.X, data.y, valid.X, valid.y, config);
  const auto pa = temp_path("det_a.gbm1"), pb = temp_path("det_b.gbm1");
  save_model(a.model, pa);
  save_model(b.model, pb);
  CHECK(file_bytes(pa) == file_bytes(pb));
  CHECK(a.train_loss == b.train_loss);
  CHECK(a.valid_loss == b.valid_loss);
  CHECK(a.best_round == b.best_round);

  config.seed = 4243;
  const auto c = train(data.X, data.y, valid.X, valid.y, config);
  const auto pc = temp_path("det_c.gbm1");
  save_model(c.model, pc);
  CHECK(file_bytes(pa) != file_bytes(pc));
}

TEST_CASE("stochastic variants still learn the rule") {
  const auto data = threshold_rule(1500, 5, 62);
  const auto held_out = threshold_rule(600, 5, 63);
  GbmConfig config = small_config();
  config.rounds = 60;
  config.subsample = 0.6;
  config.colsample_bytree = 0.6;
  config.seed = 7;
  const auto subsampled = train(data.X, data.y, {}, {}, config);
  CHECK(auc(subsampled.model.predict(held_out.X), held_out.y) >= 0.98);

  GbmConfig dart = small_config();
  dart.booster = Booster::dart;
  dart.rounds = 60;
  dart.dart_drop_rate = 0.15;
  dart.seed = 8;
  const auto dropped = train(data.X, data.y, {}, {}, dart);
  CHECK(auc(dropped.model.predict(held_out.X), held_out.y) >= 0.98);
  // Dropout normalization keeps scales in (0, lr].
  for (double s : dropped.model.tree_scales) {
    CHECK(s > 0.0);
    CHECK(s <= dart.learning_rate + 1e-12);
  }
}

TEST_CASE("early stopping restores the best validation checkpoint") {
  // Noisy labels overfit quickly; the returned model must not be worse on
  // validation than the final round.
  Rng rng(64);
  const int n = 400;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) X(i, j) = rng.uniform();
    const bool flip = rng.uniform() < 0.35;
    const bool truth = X(i, 0) > 0.5;
    y[i] = (truth != flip) ? 1.0 : 0.0;
  }
  const auto valid = threshold_rule(300, 3, 65);
  GbmConfig config;
  config.max_depth = 6;
  config.rounds = 200;
  config.learning_rate = 0.5;
  config.early_stopping_interval = 10;
  const auto result = train(X, y, valid.X, valid.y, config);
  CHECK(result.best_round <= static_cast<int>(result.train_loss.size()));
  CHECK(static_cast<int>(result.model.trees.size()) == result.best_round);
  REQUIRE(!result.valid_loss.empty());
  // The kept checkpoint scores the best recorded validation loss.
  const double kept = log_loss(result.model.predict(valid.X), valid.y);
  double best_seen = 1e100;
  for (double v : result.valid_loss) best_seen = std::min(best_seen, v);
  CHECK(kept == doctest::Approx(best_seen).epsilon(1e-9));
}

TEST_CASE("layout fingerprints separate layouts") {
  const auto a = layout_fingerprint({"x", "y"});
  const auto b = layout_fingerprint({"x", "z"});
  const auto c = layout_fingerprint({"xy"});
  CHECK(a != b);
  CHECK(a != c);
  CHECK(layout_fingerprint({"x", "y"}) == a);
  CHECK(layout_fingerprint({}) != 0);  // empty layout still fingerprints
}
