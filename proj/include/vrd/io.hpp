#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vrd/types.hpp"

namespace vrd {

/// Ground-truth boxes and relations for a corpus, plus the per-class image
/// counts n_k (each image counted once per class it contains).
struct AnnotationSet {
  std::map<std::string, std::vector<Detection>> boxes;
  std::map<std::string, std::vector<RelationInstance>> relations;
  Eigen::ArrayXd images_per_class;  // n_k, indexed by class id
  int duplicate_relations_dropped = 0;

  std::vector<std::string> image_ids() const;
};

/// Carrier for externally produced per-pair visual-model scores, keyed by
/// (image id, subject box key, object box key, predicate id).
class ScoreTable {
 public:
  struct Key {
    std::string image_id;
    std::string subject_key;
    std::string object_key;
    int predicate_id = 0;

    friend auto operator<=>(const Key&, const Key&) = default;
  };

  void insert(const Key& key, double score);
  std::optional<double> find(const Key& key) const;
  size_t size() const { return scores_.size(); }
  const std::map<Key, double>& entries() const { return scores_; }

 private:
  std::map<Key, double> scores_;
};

/// Canonical string key for a box: the four coordinates quantized to six
/// decimal places, joined as XMin:XMax:YMin:YMax (the detection CSV column
/// order). Quantization makes keys stable across float round trips.
std::string box_key(const BoundingBox& box);

// ---------------------------------------------------------------------------
// Vocabulary file (JSON): {"classes":[{"name":..,"attribute":bool?}...],
//                          "predicates":[..], "triplets":[[s,p,o]...]}
// ---------------------------------------------------------------------------
Vocabulary read_vocabulary(const std::string& path);
void write_vocabulary(const Vocabulary& vocab, const std::string& path);

// ---------------------------------------------------------------------------
// Detection CSV: header `ImageID,LabelName,XMin,XMax,YMin,YMax,Score`.
// Ground-truth files omit the Score column (confidence implied 1.0).
// ---------------------------------------------------------------------------
std::vector<Detection> read_detections(const std::string& path, const Vocabulary& vocab);
void write_detections(const std::vector<Detection>& detections, const Vocabulary& vocab,
                      const std::string& path);

// ---------------------------------------------------------------------------
// Relation CSV: header `ImageID,LabelName1,XMin1,XMax1,YMin1,YMax1,
// LabelName2,XMin2,XMax2,YMin2,YMax2,RelationshipLabel`. Rows of the "is"
// relationship carry an attribute name in LabelName2 and an all-zero box.
// ---------------------------------------------------------------------------

/// Builds an AnnotationSet from a relation file alone; the box annotations
/// are the deduplicated (class, box) mentions of the relation rows and n_k
/// is recomputed from them. Exact duplicate relation rows are dropped and
/// counted.
AnnotationSet read_relations(const std::string& path, const Vocabulary& vocab);

/// Builds an AnnotationSet from a ground-truth box file plus a relation
/// file; n_k comes from the box file.
AnnotationSet read_annotations(const std::string& boxes_path,
                               const std::string& relations_path,
                               const Vocabulary& vocab);

AnnotationSet annotation_set_from_boxes(const std::vector<Detection>& boxes, int num_classes);

/// Copy of `all` restricted to `images`, with per-class image counts rebuilt.
AnnotationSet subset_annotations(const AnnotationSet& all, const std::set<std::string>& images);

void write_relations(const std::map<std::string, std::vector<RelationInstance>>& relations,
                     const Vocabulary& vocab, const std::string& path);

// ---------------------------------------------------------------------------
// Relation prediction CSV: the relation schema with per-detection and
// per-instance scores, `ImageID,LabelName1,XMin1,XMax1,YMin1,YMax1,Score1,
// LabelName2,XMin2,XMax2,YMin2,YMax2,Score2,RelationshipLabel,Score`.
// Floats are written as shortest exact decimals, so read(write(x)) == x.
// ---------------------------------------------------------------------------
void write_relation_predictions(const std::vector<RelationInstance>& instances,
                                const Vocabulary& vocab, const std::string& path);
std::vector<RelationInstance> read_relation_predictions(const std::string& path,
                                                        const Vocabulary& vocab);

// ---------------------------------------------------------------------------
// Score table CSV: header `ImageID,SubjKey,ObjKey,Predicate,Score`.
// ---------------------------------------------------------------------------
ScoreTable read_score_table(const std::string& path, const Vocabulary& vocab);
void write_score_table(const ScoreTable& table, const Vocabulary& vocab,
                       const std::string& path);

// Formats a double as the shortest decimal that parses back to the same bits.
std::string format_double(double value);

}  // namespace vrd
