#include "vrd/features.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "vrd/geometry.hpp"

namespace vrd {
namespace {

constexpr double kEps = 1e-9;

Eigen::VectorXd smoothed_distribution(const Eigen::VectorXd& counts) {
  const double denom = counts.sum() + static_cast<double>(counts.size());
  return (counts.array() + 1.0).matrix() / denom;
}

}  // namespace

double SemanticStats::triplet_count(int subject_class, int predicate, int object_class) const {
  auto it = pair_predicate_counts.find({subject_class, object_class});
  if (it == pair_predicate_counts.end()) return 0.0;
  return it->second[predicate];
}

double SemanticStats::smoothed_cooccurrence(int class_a, int class_b) const {
  return cooccurrence(class_a, class_b) + 1.0;
}

Eigen::VectorXd SemanticStats::subject_histogram(int class_id) const {
  return smoothed_distribution(subject_predicate_counts.row(class_id).transpose());
}

Eigen::VectorXd SemanticStats::object_histogram(int class_id) const {
  return smoothed_distribution(object_predicate_counts.row(class_id).transpose());
}

Eigen::VectorXd SemanticStats::triplet_prior(int subject_class, int object_class) const {
  auto it = pair_predicate_counts.find({subject_class, object_class});
  if (it == pair_predicate_counts.end()) {
    return Eigen::VectorXd::Constant(num_predicates, 1.0 / num_predicates);
  }
  return smoothed_distribution(it->second);
}

SemanticStats fit_semantic_stats(const AnnotationSet& train, int num_predicates) {
  if (train.boxes.empty() && train.relations.empty()) {
    throw Error(ErrorCode::EmptyAnnotations, "cannot fit statistics on an empty corpus");
  }
  SemanticStats stats;
  stats.num_classes = static_cast<int>(train.images_per_class.size());
  stats.num_predicates = num_predicates;
  stats.images_per_class = train.images_per_class;
  stats.subject_predicate_counts = Eigen::MatrixXd::Zero(stats.num_classes, num_predicates);
  stats.object_predicate_counts = Eigen::MatrixXd::Zero(stats.num_classes, num_predicates);
  stats.cooccurrence = Eigen::MatrixXd::Zero(stats.num_classes, stats.num_classes);

  for (const auto& [image_id, detections] : train.boxes) {
    std::map<int, int> class_counts;
    for (const auto& d : detections) ++class_counts[d.class_id];
    for (auto a = class_counts.begin(); a != class_counts.end(); ++a) {
      if (a->second >= 2) stats.cooccurrence(a->first, a->first) += 1.0;
      for (auto b = std::next(a); b != class_counts.end(); ++b) {
        stats.cooccurrence(a->first, b->first) += 1.0;
        stats.cooccurrence(b->first, a->first) += 1.0;
      }
    }
  }

  for (const auto& [image_id, relations] : train.relations) {
    for (const auto& rel : relations) {
      stats.subject_predicate_counts(rel.subject.class_id, rel.predicate_id) += 1.0;
      stats.object_predicate_counts(rel.object.class_id, rel.predicate_id) += 1.0;
      auto key = std::make_pair(rel.subject.class_id, rel.object.class_id);
      auto [it, inserted] =
          stats.pair_predicate_counts.try_emplace(key, Eigen::VectorXd::Zero(num_predicates));
      it->second[rel.predicate_id] += 1.0;
    }
  }
  return stats;
}

void write_semantic_stats(const SemanticStats& stats, const std::string& path) {
  nlohmann::ordered_json doc;
  doc["num_classes"] = stats.num_classes;
  doc["num_predicates"] = stats.num_predicates;
  doc["images_per_class"] =
      std::vector<double>(stats.images_per_class.data(),
                          stats.images_per_class.data() + stats.images_per_class.size());
  auto matrix_rows = [](const Eigen::MatrixXd& m) {
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      auto row = nlohmann::ordered_json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  doc["subject_predicate_counts"] = matrix_rows(stats.subject_predicate_counts);
  doc["object_predicate_counts"] = matrix_rows(stats.object_predicate_counts);
  doc["cooccurrence"] = matrix_rows(stats.cooccurrence);
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& [key, counts] : stats.pair_predicate_counts) {
    nlohmann::ordered_json entry;
    entry["subject_class"] = key.first;
    entry["object_class"] = key.second;
    entry["counts"] = std::vector<double>(counts.data(), counts.data() + counts.size());
    pairs.push_back(std::move(entry));
  }
  doc["pair_predicate_counts"] = pairs;

  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
}

SemanticStats read_semantic_stats(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for reading");
  nlohmann::ordered_json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MalformedRow, path + ": bad stats JSON: " + e.what());
  }
  SemanticStats stats;
  stats.num_classes = doc.at("num_classes").get<int>();
  stats.num_predicates = doc.at("num_predicates").get<int>();
  const auto ipc = doc.at("images_per_class").get<std::vector<double>>();
  stats.images_per_class =
      Eigen::Map<const Eigen::ArrayXd>(ipc.data(), static_cast<Eigen::Index>(ipc.size()));
  auto read_matrix = [&path](const nlohmann::ordered_json& rows, int expect_rows,
                             int expect_cols) {
    Eigen::MatrixXd m(expect_rows, expect_cols);
    if (static_cast<int>(rows.size()) != expect_rows) {
      throw Error(ErrorCode::ShapeMismatch, path + ": stats matrix row count mismatch");
    }
    for (int r = 0; r < expect_rows; ++r) {
      if (static_cast<int>(rows[r].size()) != expect_cols) {
        throw Error(ErrorCode::ShapeMismatch, path + ": stats matrix column count mismatch");
      }
      for (int c = 0; c < expect_cols; ++c) m(r, c) = rows[r][c].get<double>();
    }
    return m;
  };
  stats.subject_predicate_counts = read_matrix(doc.at("subject_predicate_counts"),
                                               stats.num_classes, stats.num_predicates);
  stats.object_predicate_counts =
      read_matrix(doc.at("object_predicate_counts"), stats.num_classes, stats.num_predicates);
  stats.cooccurrence = read_matrix(doc.at("cooccurrence"), stats.num_classes, stats.num_classes);
  for (const auto& entry : doc.at("pair_predicate_counts")) {
    const auto counts = entry.at("counts").get<std::vector<double>>();
    stats.pair_predicate_counts[{entry.at("subject_class").get<int>(),
                                 entry.at("object_class").get<int>()}] =
        Eigen::Map<const Eigen::VectorXd>(counts.data(), static_cast<Eigen::Index>(counts.size()));
  }
  return stats;
}

std::vector<std::string> FeatureLayout::slot_names() const {
  std::vector<std::string> names = {
      "subj_cx",     "subj_cy",  "subj_w",     "subj_h",    "subj_area", "subj_aspect",
      "obj_cx",      "obj_cy",   "obj_w",      "obj_h",     "obj_area",  "obj_aspect",
      "dx",          "dy",       "iou",        "center_dist", "area_ratio", "union_area",
      "cooc_log"};
  auto predicate = [this](int p) {
    return p < static_cast<int>(predicate_names.size()) ? predicate_names[p]
                                                        : "p" + std::to_string(p);
  };
  for (int p = 0; p < num_predicates; ++p) names.push_back("prior_" + predicate(p));
  for (int p = 0; p < num_predicates; ++p) names.push_back("subj_hist_" + predicate(p));
  for (int p = 0; p < num_predicates; ++p) names.push_back("obj_hist_" + predicate(p));
  return names;
}

PairFeatureVector extract_features(const Detection& subject, const Detection& object,
                                   const SemanticStats& stats) {
  const int P = stats.num_predicates;
  Eigen::VectorXd v(19 + 3 * P);
  const BoundingBox& s = subject.box;
  const BoundingBox& o = object.box;
  const double s_area = area(s);
  const double o_area = area(o);

  v[0] = s.center_x();
  v[1] = s.center_y();
  v[2] = s.width();
  v[3] = s.height();
  v[4] = s_area;
  v[5] = (s.width() + kEps) / (s.height() + kEps);
  v[6] = o.center_x();
  v[7] = o.center_y();
  v[8] = o.width();
  v[9] = o.height();
  v[10] = o_area;
  v[11] = (o.width() + kEps) / (o.height() + kEps);
  v[12] = o.center_x() - s.center_x();
  v[13] = o.center_y() - s.center_y();
  v[14] = iou(s, o);
  v[15] = center_distance(s, o);
  v[16] = (s_area + kEps) / (o_area + kEps);
  v[17] = area(union_box(s, o));
  v[18] = std::log(stats.smoothed_cooccurrence(subject.class_id, object.class_id));
  v.segment(19, P) = stats.triplet_prior(subject.class_id, object.class_id);
  v.segment(19 + P, P) = stats.subject_histogram(subject.class_id);
  v.segment(19 + 2 * P, P) = stats.object_histogram(object.class_id);
  return v;
}

std::vector<std::pair<std::size_t, std::size_t>> generate_candidates(
    const std::vector<Detection>& detections, int predicate_id, const TripletVocabulary& vocab) {
  for (const auto& d : detections) {
    if (d.image_id != detections.front().image_id) {
      throw Error(ErrorCode::MalformedRow, "candidate generation needs a single image");
    }
  }
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t j = 0; j < detections.size(); ++j) {
      if (i == j) continue;
      Triplet t{detections[i].class_id, predicate_id, detections[j].class_id};
      if (vocab.contains(t)) pairs.emplace_back(i, j);
    }
  }
  return pairs;
}

std::vector<int> label_candidates(
    const std::vector<Detection>& detections,
    const std::vector<std::pair<std::size_t, std::size_t>>& candidates,
    const std::vector<RelationInstance>& ground_truth, int predicate_id,
    const LabelMatch& match) {
  auto boxes_match = [&match](const BoundingBox& a, const BoundingBox& b) {
    if (match.exact) return a == b;
    return iou(a, b) >= match.iou_threshold;
  };
  std::vector<int> labels;
  labels.reserve(candidates.size());
  for (const auto& [si, oi] : candidates) {
    const Detection& s = detections[si];
    const Detection& o = detections[oi];
    int label = 0;
    for (const auto& gt : ground_truth) {
      if (gt.predicate_id != predicate_id) continue;
      if (gt.subject.class_id != s.class_id || gt.object.class_id != o.class_id) continue;
      if (boxes_match(gt.subject.box, s.box) && boxes_match(gt.object.box, o.box)) {
        label = 1;
        break;
      }
    }
    labels.push_back(label);
  }
  return labels;
}

CropSpec visual_crop(const BoundingBox& subject_box, const BoundingBox& object_box) {
  CropSpec spec;
  spec.crop = union_box(subject_box, object_box);
  const double w = spec.crop.width();
  const double h = spec.crop.height();
  if (area(spec.crop) <= 0.0) {
    throw Error(ErrorCode::ZeroAreaCrop, "union of the boxes has zero area");
  }
  auto to_local = [&](const BoundingBox& b) {
    return BoundingBox{(b.x_min - spec.crop.x_min) / w, (b.y_min - spec.crop.y_min) / h,
                       (b.x_max - spec.crop.x_min) / w, (b.y_max - spec.crop.y_min) / h};
  };
  spec.keep_regions.push_back(to_local(subject_box));
  if (!(object_box == subject_box)) spec.keep_regions.push_back(to_local(object_box));
  return spec;
}

void write_feature_csv(const std::vector<FeatureRow>& rows, const FeatureLayout& layout,
                       const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out << "ImageID,SubjKey,ObjKey";
  for (const auto& name : layout.slot_names()) out << ',' << name;
  const bool with_labels = !rows.empty() && rows.front().label.has_value();
  if (with_labels) out << ",Label";
  out << '\n';
  for (const auto& row : rows) {
    if (row.values.size() != layout.size()) {
      throw Error(ErrorCode::FeatureLengthMismatch,
                  "feature row length " + std::to_string(row.values.size()) +
                      " does not match layout " + std::to_string(layout.size()));
    }
    out << row.image_id << ',' << row.subject_key << ',' << row.object_key;
    for (Eigen::Index i = 0; i < row.values.size(); ++i) {
      out << ',' << format_double(row.values[i]);
    }
    if (with_labels) out << ',' << row.label.value_or(0);
    out << '\n';
  }
}

void write_crops_jsonl(const std::vector<CropRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  for (const auto& rec : records) {
    nlohmann::ordered_json line;
    line["image_id"] = rec.image_id;
    line["subject_key"] = rec.subject_key;
    line["object_key"] = rec.object_key;
    line["crop"] = {rec.crop.crop.x_min, rec.crop.crop.y_min, rec.crop.crop.x_max,
                    rec.crop.crop.y_max};
    auto regions = nlohmann::ordered_json::array();
    for (const auto& keep : rec.crop.keep_regions) {
      regions.push_back({keep.x_min, keep.y_min, keep.x_max, keep.y_max});
    }
    line["keep"] = regions;
    out << line.dump() << '\n';
  }
}

}  // namespace vrd
