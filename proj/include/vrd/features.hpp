#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vrd/io.hpp"
#include "vrd/types.hpp"

namespace vrd {

/// Count statistics of a training corpus: how often each class shows up,
/// which predicates it takes in subject/object role, which classes share an
/// image, and how often each (subject, predicate, object) triplet occurs.
/// Raw counts are stored; accessors apply Laplace +1 smoothing.
struct SemanticStats {
  int num_classes = 0;
  int num_predicates = 0;
  Eigen::ArrayXd images_per_class;                                      // K
  Eigen::MatrixXd subject_predicate_counts;                             // K x P
  Eigen::MatrixXd object_predicate_counts;                              // K x P
  Eigen::MatrixXd cooccurrence;                                         // K x K, symmetric
  std::map<std::pair<int, int>, Eigen::VectorXd> pair_predicate_counts; // (s,o) -> P

  double triplet_count(int subject_class, int predicate, int object_class) const;
  /// Raw count + 1; never-co-occurring classes floor at 1.
  double smoothed_cooccurrence(int class_a, int class_b) const;
  /// Distribution over predicates the class takes as subject: (c+1)/(sum+P).
  Eigen::VectorXd subject_histogram(int class_id) const;
  Eigen::VectorXd object_histogram(int class_id) const;
  /// Per-predicate prior for the class pair: (c(s,p,o)+1)/(sum_q c(s,q,o)+P).
  Eigen::VectorXd triplet_prior(int subject_class, int object_class) const;
};

SemanticStats fit_semantic_stats(const AnnotationSet& train, int num_predicates);

// JSON round trip; counts are small integers so the round trip is exact.
void write_semantic_stats(const SemanticStats& stats, const std::string& path);
SemanticStats read_semantic_stats(const std::string& path);

/// Pair feature vector layout: 19 geometry slots followed by three blocks of
/// num_predicates semantic slots. The slot order is frozen; models built on
/// one layout refuse vectors from another via the fingerprint.
struct FeatureLayout {
  int num_predicates = 0;
  std::vector<std::string> predicate_names;  // optional; defaults to p<i>

  int size() const { return 19 + 3 * num_predicates; }
  std::vector<std::string> slot_names() const;
};

using PairFeatureVector = Eigen::VectorXd;

PairFeatureVector extract_features(const Detection& subject, const Detection& object,
                                   const SemanticStats& stats);

/// All ordered pairs (s, o) of distinct detections whose class pair can form
/// the predicate according to the triplet vocabulary. Returned as indices
/// into `detections`.
std::vector<std::pair<std::size_t, std::size_t>> generate_candidates(
    const std::vector<Detection>& detections, int predicate_id, const TripletVocabulary& vocab);

/// Box-match rule for labeling candidates against ground truth. Training on
/// ground-truth boxes uses exact coordinate identity; predicted boxes match
/// by IoU on both ends.
struct LabelMatch {
  bool exact = true;
  double iou_threshold = 0.5;

  static LabelMatch exact_boxes() { return {true, 0.5}; }
  static LabelMatch by_iou(double threshold) { return {false, threshold}; }
};

/// 0/1 labels aligned with `candidates`: 1 iff some ground-truth instance of
/// this predicate matches classes and both boxes under the rule.
std::vector<int> label_candidates(const std::vector<Detection>& detections,
                                  const std::vector<std::pair<std::size_t, std::size_t>>& candidates,
                                  const std::vector<RelationInstance>& ground_truth,
                                  int predicate_id, const LabelMatch& match);

/// Union-box crop with the two boxes mapped into crop-local [0,1]^2; the
/// complement of the keep-regions is what gets blacked out downstream.
struct CropSpec {
  BoundingBox crop;
  std::vector<BoundingBox> keep_regions;  // 1 entry when the boxes coincide
};

CropSpec visual_crop(const BoundingBox& subject_box, const BoundingBox& object_box);

// ---------------------------------------------------------------------------
// Exports: columnar feature CSV (header names every slot) and crop JSONL.
// ---------------------------------------------------------------------------
struct FeatureRow {
  std::string image_id;
  std::string subject_key;
  std::string object_key;
  Eigen::VectorXd values;
  std::optional<int> label;
};

void write_feature_csv(const std::vector<FeatureRow>& rows, const FeatureLayout& layout,
                       const std::string& path);

struct CropRecord {
  std::string image_id;
  std::string subject_key;
  std::string object_key;
  CropSpec crop;
};

void write_crops_jsonl(const std::vector<CropRecord>& records, const std::string& path);

}  // namespace vrd
