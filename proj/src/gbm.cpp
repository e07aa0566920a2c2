#include "vrd/gbm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "vrd/metrics.hpp"
#include "vrd/rng.hpp"

namespace vrd {
namespace {

using ordered_json = nlohmann::ordered_json;

void validate_config(const GbmConfig& c) {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::MalformedRow, what); };
  if (c.max_depth < 1) fail("max_depth must be >= 1");
  if (c.rounds < 1) fail("rounds must be >= 1");
  if (!(c.learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(c.subsample > 0.0 && c.subsample <= 1.0)) fail("subsample must lie in (0,1]");
  if (!(c.colsample_bytree > 0.0 && c.colsample_bytree <= 1.0)) {
    fail("colsample_bytree must lie in (0,1]");
  }
  if (c.gamma < 0.0) fail("gamma must be >= 0");
  if (c.lambda < 0.0) fail("lambda must be >= 0");
  if (c.early_stopping_interval < 1) fail("early_stopping_interval must be >= 1");
  if (!(c.dart_drop_rate >= 0.0 && c.dart_drop_rate < 1.0)) {
    fail("dart_drop_rate must lie in [0,1)");
  }
}

double leaf_weight(double G, double H, double lambda) {
  const double denom = H + lambda;
  if (denom <= 0.0) return 0.0;
  return -G / denom;
}

// Smallest f32 t with a < t <= b, placed near the midpoint, so that the
// split test x < t sends every x <= a left and every x >= b right.
float split_threshold(float a, float b) {
  float t = a + (b - a) * 0.5f;
  if (!(t > a)) t = b;
  return t;
}

struct SplitChoice {
  int feature = -1;
  float threshold = 0.0f;
  double gain = 0.0;
  double left_G = 0.0, left_H = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXf& X, const Eigen::VectorXd& g, const Eigen::VectorXd& h,
              const GbmConfig& config, const std::vector<int>& columns)
      : X_(X), g_(g), h_(h), config_(config), columns_(columns) {}

  RegressionTree build(std::vector<int> rows) {
    double G = 0.0, H = 0.0;
    for (int r : rows) {
      G += g_[r];
      H += h_[r];
    }
    RegressionTree tree;
    nodes_ = &tree.nodes;
    grow(std::move(rows), 0, G, H);
    return tree;
  }

 private:
  int grow(std::vector<int> rows, int depth, double G, double H) {
    const int index = static_cast<int>(nodes_->size());
    nodes_->push_back(TreeNode{});

    SplitChoice best;
    if (depth < config_.max_depth && rows.size() >= 2) best = find_split(rows, G, H);
    if (best.feature < 0) {
      (*nodes_)[index].value = static_cast<float>(leaf_weight(G, H, config_.lambda));
      return index;
    }

    std::vector<int> left_rows, right_rows;
    left_rows.reserve(rows.size());
    right_rows.reserve(rows.size());
    for (int r : rows) {
      if (X_(r, best.feature) < best.threshold) {
        left_rows.push_back(r);
      } else {
        right_rows.push_back(r);
      }
    }
    rows.clear();
    rows.shrink_to_fit();

    (*nodes_)[index].feature = best.feature;
    (*nodes_)[index].threshold = best.threshold;
    const int left = grow(std::move(left_rows), depth + 1, best.left_G, best.left_H);
    const int right =
        grow(std::move(right_rows), depth + 1, G - best.left_G, H - best.left_H);
    (*nodes_)[index].left = left;
    (*nodes_)[index].right = right;
    return index;
  }

  SplitChoice find_split(const std::vector<int>& rows, double G, double H) {
    SplitChoice best;
    const double parent_score = G * G / (H + config_.lambda);
    std::vector<std::pair<float, int>> sorted;
    sorted.reserve(rows.size());
    for (int feature : columns_) {
      sorted.clear();
      for (int r : rows) sorted.emplace_back(X_(r, feature), r);
      std::sort(sorted.begin(), sorted.end());

      double GL = 0.0, HL = 0.0;
      for (std::size_t k = 0; k + 1 < sorted.size(); ++k) {
        GL += g_[sorted[k].second];
        HL += h_[sorted[k].second];
        if (sorted[k].first == sorted[k + 1].first) continue;
        const double GR = G - GL;
        const double HR = H - HL;
        const double gain = 0.5 * (GL * GL / (HL + config_.lambda) +
                                   GR * GR / (HR + config_.lambda) - parent_score) -
                            config_.gamma;
        if (gain > 0.0 && gain > best.gain) {
          best.feature = feature;
          best.threshold = split_threshold(sorted[k].first, sorted[k + 1].first);
          best.gain = gain;
          best.left_G = GL;
          best.left_H = HL;
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXf& X_;
  const Eigen::VectorXd& g_;
  const Eigen::VectorXd& h_;
  const GbmConfig& config_;
  const std::vector<int>& columns_;
  std::vector<TreeNode>* nodes_ = nullptr;
};

double predict_tree_f32(const RegressionTree& tree, const Eigen::MatrixXf& X, int row) {
  int node = 0;
  while (tree.nodes[node].feature >= 0) {
    node = X(row, tree.nodes[node].feature) < tree.nodes[node].threshold
               ? tree.nodes[node].left
               : tree.nodes[node].right;
  }
  return tree.nodes[node].value;
}

// First m entries of a seeded partial Fisher-Yates shuffle of 0..n-1,
// returned sorted ascending. m >= n short-circuits without touching the rng.
std::vector<int> sample_without_replacement(int n, int m, Rng& rng) {
  std::vector<int> indices(n);
  for (int i = 0; i < n; ++i) indices[i] = i;
  if (m >= n) return indices;
  for (int i = 0; i < m; ++i) {
    const auto j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n - i)));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(m);
  std::sort(indices.begin(), indices.end());
  return indices;
}

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

}  // namespace

double RegressionTree::predict(const Eigen::VectorXd& x) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = static_cast<float>(x[nodes[node].feature]) < nodes[node].threshold
               ? nodes[node].left
               : nodes[node].right;
  }
  return nodes[node].value;
}

int RegressionTree::leaf_count() const {
  int count = 0;
  for (const auto& n : nodes) count += n.feature < 0 ? 1 : 0;
  return count;
}

int RegressionTree::split_count() const {
  return static_cast<int>(nodes.size()) - leaf_count();
}

float RegressionTree::max_abs_leaf() const {
  float worst = 0.0f;
  for (const auto& n : nodes) {
    if (n.feature < 0) worst = std::max(worst, std::abs(n.value));
  }
  return worst;
}

double GbmModel::predict_margin(const Eigen::VectorXd& x) const {
  double margin = base_score;
  for (std::size_t i = 0; i < trees.size(); ++i) {
    margin += tree_scales[i] * trees[i].predict(x);
  }
  return margin;
}

double GbmModel::predict(const Eigen::VectorXd& x) const {
  if (x.size() != num_features) {
    throw Error(ErrorCode::FeatureLengthMismatch,
                "feature vector length " + std::to_string(x.size()) + ", model expects " +
                    std::to_string(num_features));
  }
  return sigmoid(predict_margin(x));
}

Eigen::VectorXd GbmModel::predict(const Eigen::MatrixXd& X) const {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    out[i] = predict(Eigen::VectorXd(X.row(i).transpose()));
  }
  return out;
}

std::uint64_t layout_fingerprint(const std::vector<std::string>& slot_names) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const char* data, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) {
      h ^= static_cast<unsigned char>(data[i]);
      h *= 1099511628211ull;
    }
  };
  for (const auto& name : slot_names) {
    mix(name.data(), name.size());
    mix("\n", 1);
  }
  return h;
}

TrainResult train(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                  const Eigen::MatrixXd& X_valid, const Eigen::VectorXd& y_valid,
                  const GbmConfig& config, const std::vector<std::string>& slot_names) {
  validate_config(config);
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n == 0) throw Error(ErrorCode::EmptyInput, "no training rows");
  if (d == 0) throw Error(ErrorCode::EmptyFeatures, "no feature columns");
  if (y.size() != n) throw Error(ErrorCode::ShapeMismatch, "labels do not match rows");
  if (X_valid.rows() > 0 && X_valid.cols() != d) {
    throw Error(ErrorCode::ShapeMismatch, "validation feature width differs from training");
  }
  if (y_valid.size() != X_valid.rows()) {
    throw Error(ErrorCode::ShapeMismatch, "validation labels do not match rows");
  }
  if (!X.allFinite() || (X_valid.rows() > 0 && !X_valid.allFinite())) {
    throw Error(ErrorCode::MalformedRow, "features must be finite");
  }
  bool has_positive = false, has_negative = false;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) {
      has_negative = true;
    } else if (y[i] == 1.0) {
      has_positive = true;
    } else {
      throw Error(ErrorCode::MalformedRow, "labels must be exactly 0 or 1");
    }
  }
  if (!(has_positive && has_negative) && !config.allow_single_class) {
    throw Error(ErrorCode::SingleClassTraining,
                has_positive ? "every label is 1" : "every label is 0");
  }
  std::vector<std::string> names = slot_names;
  if (names.empty()) {
    for (int i = 0; i < d; ++i) names.push_back("dim:" + std::to_string(i));
  } else if (static_cast<int>(names.size()) != d) {
    throw Error(ErrorCode::FeatureLengthMismatch, "slot names do not match feature count");
  }

  const Eigen::MatrixXf Xf = X.cast<float>();
  const Eigen::MatrixXf Xvf = X_valid.cast<float>();
  const bool has_valid = X_valid.rows() > 0;
  const bool dart = config.booster == Booster::dart;

  TrainResult result;
  GbmModel& model = result.model;
  model.booster = config.booster;
  model.num_features = d;
  model.fingerprint = layout_fingerprint(names);
  const double prior = std::clamp(y.mean(), 1e-6, 1.0 - 1e-6);
  model.base_score = std::log(prior / (1.0 - prior));

  Eigen::VectorXd margin = Eigen::VectorXd::Constant(n, model.base_score);
  Eigen::VectorXd margin_valid = Eigen::VectorXd::Constant(X_valid.rows(), model.base_score);
  std::vector<Eigen::VectorXf> cached_train;  // per-tree raw outputs (dart only)
  std::vector<Eigen::VectorXf> cached_valid;

  const int subsample_rows = std::max(1, static_cast<int>(config.subsample * n));
  const int subsample_cols =
      std::max(1, static_cast<int>(std::llround(config.colsample_bytree * d)));

  Rng rng(config.seed);
  double best_valid_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_scales;
  std::size_t best_trees = 0;
  bool halted = false;

  auto valid_probs = [&]() {
    Eigen::VectorXd p(margin_valid.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(margin_valid[i]);
    return p;
  };

  for (int round = 0; round < config.rounds && !halted; ++round) {
    // RNG draw order per round is pinned: dropout picks, then row
    // subsample, then column subsample.
    std::vector<std::size_t> dropped;
    Eigen::VectorXd round_margin = margin;
    if (dart) {
      for (std::size_t i = 0; i < model.trees.size(); ++i) {
        if (rng.bernoulli(config.dart_drop_rate)) dropped.push_back(i);
      }
      for (std::size_t i : dropped) {
        round_margin -= model.tree_scales[i] * cached_train[i].cast<double>();
      }
    }

    Eigen::VectorXd g(n), h(n);
    for (int i = 0; i < n; ++i) {
      const double p = sigmoid(round_margin[i]);
      g[i] = p - y[i];
      h[i] = p * (1.0 - p);
    }

    std::vector<int> rows = sample_without_replacement(n, subsample_rows, rng);
    std::vector<int> cols = sample_without_replacement(d, subsample_cols, rng);

    TreeBuilder builder(Xf, g, h, config, cols);
    RegressionTree tree = builder.build(std::move(rows));

    Eigen::VectorXf tree_train(n);
    for (int i = 0; i < n; ++i) {
      tree_train[i] = static_cast<float>(predict_tree_f32(tree, Xf, i));
    }
    Eigen::VectorXf tree_valid(X_valid.rows());
    for (Eigen::Index i = 0; i < X_valid.rows(); ++i) {
      tree_valid[i] = static_cast<float>(predict_tree_f32(tree, Xvf, static_cast<int>(i)));
    }

    double new_scale = config.learning_rate;
    if (dart && !dropped.empty()) {
      // Normalized dropout: the new tree stands in for the dropped ones, so
      // it is shrunk to 1/(k+1) and the dropped trees to k/(k+1) of their
      // previous contribution.
      const double k = static_cast<double>(dropped.size());
      new_scale = config.learning_rate / (k + 1.0);
      for (std::size_t i : dropped) {
        const double old_scale = model.tree_scales[i];
        const double rescaled = old_scale * (k / (k + 1.0));
        model.tree_scales[i] = rescaled;
        margin += (rescaled - old_scale) * cached_train[i].cast<double>();
        if (has_valid) margin_valid += (rescaled - old_scale) * cached_valid[i].cast<double>();
      }
    }

    model.trees.push_back(std::move(tree));
    model.tree_scales.push_back(new_scale);
    margin += new_scale * tree_train.cast<double>();
    if (has_valid) margin_valid += new_scale * tree_valid.cast<double>();
    if (dart) {
      cached_train.push_back(std::move(tree_train));
      cached_valid.push_back(std::move(tree_valid));
    }

    Eigen::VectorXd p_train(n);
    for (int i = 0; i < n; ++i) p_train[i] = sigmoid(margin[i]);
    result.train_loss.push_back(log_loss(p_train, y));

    if (has_valid && (round + 1) % config.early_stopping_interval == 0) {
      const double loss = log_loss(valid_probs(), y_valid);
      result.valid_loss.push_back(loss);
      if (loss < best_valid_loss) {
        best_valid_loss = loss;
        best_scales = model.tree_scales;
        best_trees = model.trees.size();
      } else {
        halted = true;
      }
    }
  }

  if (has_valid && best_trees > 0) {
    model.trees.resize(best_trees);
    model.tree_scales = best_scales;
  }
  result.best_round = static_cast<int>(model.trees.size());
  return result;
}

void save_model(const GbmModel& model, const std::string& path) {
  ordered_json header;
  header["version"] = 1;
  header["booster"] = model.booster == Booster::dart ? "dart" : "gbtree";
  header["base_score"] = model.base_score;
  header["num_features"] = model.num_features;
  header["fingerprint"] = fingerprint_hex(model.fingerprint);
  header["tree_scales"] = model.tree_scales;
  std::vector<std::size_t> node_counts;
  for (const auto& tree : model.trees) node_counts.push_back(tree.nodes.size());
  header["tree_nodes"] = node_counts;
  const std::string header_text = header.dump();

  std::string payload;
  payload.append("GBM1", 4);
  put_u32_le(payload, static_cast<std::uint32_t>(header_text.size()));
  payload += header_text;
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      put_u32_le(payload, std::bit_cast<std::uint32_t>(node.feature));
      put_u32_le(payload, std::bit_cast<std::uint32_t>(node.threshold));
      put_u32_le(payload, std::bit_cast<std::uint32_t>(node.left));
      put_u32_le(payload, std::bit_cast<std::uint32_t>(node.right));
      put_u32_le(payload, std::bit_cast<std::uint32_t>(node.value));
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path);
}

GbmModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 8 || std::memcmp(bytes.data(), "GBM1", 4) != 0) {
    throw Error(ErrorCode::CorruptModel, path + ": not a GBM1 file");
  }
  const std::uint32_t header_len = get_u32_le(p + 4);
  if (8ull + header_len > bytes.size()) {
    throw Error(ErrorCode::CorruptModel, path + ": header extends past end of file");
  }
  ordered_json header;
  try {
    header = ordered_json::parse(bytes.substr(8, header_len));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::CorruptModel, path + ": bad header JSON: " + e.what());
  }
  if (header.value("version", -1) != 1) {
    throw Error(ErrorCode::VersionMismatch,
                path + ": unsupported model version " + header.value("version", ordered_json()).dump());
  }

  GbmModel model;
  const std::string booster = header.at("booster").get<std::string>();
  if (booster == "dart") {
    model.booster = Booster::dart;
  } else if (booster == "gbtree") {
    model.booster = Booster::gbtree;
  } else {
    throw Error(ErrorCode::CorruptModel, path + ": unknown booster '" + booster + "'");
  }
  model.base_score = header.at("base_score").get<double>();
  model.num_features = header.at("num_features").get<int>();
  model.fingerprint =
      std::stoull(header.at("fingerprint").get<std::string>(), nullptr, 16);
  model.tree_scales = header.at("tree_scales").get<std::vector<double>>();
  const auto node_counts = header.at("tree_nodes").get<std::vector<std::size_t>>();
  if (node_counts.size() != model.tree_scales.size()) {
    throw Error(ErrorCode::CorruptModel, path + ": scale/tree count mismatch");
  }

  std::size_t offset = 8 + header_len;
  for (std::size_t count : node_counts) {
    if (offset + count * 20 > bytes.size()) {
      throw Error(ErrorCode::CorruptModel, path + ": tree payload extends past end of file");
    }
    RegressionTree tree;
    tree.nodes.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned char* rec = p + offset + i * 20;
      tree.nodes[i].feature = std::bit_cast<int>(get_u32_le(rec));
      tree.nodes[i].threshold = std::bit_cast<float>(get_u32_le(rec + 4));
      tree.nodes[i].left = std::bit_cast<int>(get_u32_le(rec + 8));
      tree.nodes[i].right = std::bit_cast<int>(get_u32_le(rec + 12));
      tree.nodes[i].value = std::bit_cast<float>(get_u32_le(rec + 16));
    }
    offset += count * 20;
    model.trees.push_back(std::move(tree));
  }
  if (offset != bytes.size()) {
    throw Error(ErrorCode::CorruptModel, path + ": trailing bytes after tree payload");
  }
  return model;
}

}  // namespace vrd
