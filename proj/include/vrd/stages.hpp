#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "vrd/features.hpp"
#include "vrd/gbm.hpp"
#include "vrd/io.hpp"
#include "vrd/types.hpp"

namespace vrd {

/// Image-level partition of a training corpus: one part trains the
/// per-relationship models, a second trains the aggregator, the remainder
/// validates. Image-disjoint by construction.
struct SplitPlan {
  std::set<std::string> stage2_images;
  std::set<std::string> stage3_images;
  std::set<std::string> validation_images;
};

/// Seeded shuffle of the ids, then cuts at the given fractions (remainder
/// validates). Default fractions echo a ~96/3/1 split.
SplitPlan make_split(const std::vector<std::string>& image_ids, double stage2_fraction,
                     double stage3_fraction, std::uint64_t seed);
void write_split(const SplitPlan& split, const std::string& path);
SplitPlan read_split(const std::string& path);

/// One spatio-semantic model per predicate, all sharing a feature layout.
struct RelationshipModelBank {
  std::map<int, GbmModel> models;
  std::uint64_t fingerprint = 0;
  std::vector<std::string> slot_names;
  std::vector<int> skipped;  // predicates with no trainable data
};

struct Stage2Config {
  GbmConfig gbm;  // see stage2_reference_config()
  LabelMatch match = LabelMatch::exact_boxes();
};

/// The relationship-model training configuration used at full scale: dart
/// booster, depth 10, subsample and colsample 0.2, gamma 2, lambda 1000,
/// 5000 rounds with an early-stopping check every 50.
GbmConfig stage2_reference_config();
/// Aggregator configuration: gbtree booster, depth 8.
GbmConfig aggregator_reference_config();

RelationshipModelBank train_stage2(const AnnotationSet& annotations, const SemanticStats& stats,
                                   const SplitPlan& split, const Vocabulary& vocab,
                                   const Stage2Config& config);

struct ScoreConfig {
  double floor = 0.001;  // drop candidates scoring below this
  int top_m = 200;       // per-image candidate budget
};

/// A candidate pair carried through the pipeline with everything later
/// stages need: the instance (score = stage-2 probability), its feature
/// vector, and the separately tracked stage-2 / visual scores.
struct ScoredCandidate {
  RelationInstance instance;
  Eigen::VectorXd features;
  double stage2_score = 0.0;
  double visual_score = 0.5;
};

std::vector<ScoredCandidate> score_candidates(
    const RelationshipModelBank& bank, const std::map<std::string, std::vector<Detection>>& boxes,
    const SemanticStats& stats, const TripletVocabulary& triplets, const ScoreConfig& config);

/// Thin wrapper returning only the relation instances.
std::vector<RelationInstance> score_pairs(const RelationshipModelBank& bank,
                                          const std::map<std::string, std::vector<Detection>>& boxes,
                                          const SemanticStats& stats,
                                          const TripletVocabulary& triplets,
                                          const ScoreConfig& config);

enum class JoinPolicy { Neutral, Strict };

struct JoinResult {
  std::vector<ScoredCandidate> joined;
  std::vector<ScoreTable::Key> missing;  // keys with no table entry
};

/// Attaches visual scores by (image, subject key, object key, predicate).
/// Neutral policy fills misses with 0.5; strict drops them and records the
/// keys.
JoinResult join_visual_scores(std::vector<ScoredCandidate> candidates, const ScoreTable& table,
                              JoinPolicy policy);

inline double average_baseline(double stage2_score, double visual_score) {
  return 0.5 * (stage2_score + visual_score);
}

/// Per-predicate aggregation models over [stage-2 score, visual score, pair
/// features].
struct AggregatorModel {
  std::map<int, GbmModel> models;
  std::uint64_t fingerprint = 0;
  std::vector<std::string> slot_names;
};

struct AggregatorTrainingSet {
  Eigen::MatrixXd features;
  Eigen::VectorXd labels;
  Eigen::MatrixXd valid_features;  // 0 rows disables early stopping
  Eigen::VectorXd valid_labels;
};

/// Builds per-predicate aggregator training matrices from the stage-3 split:
/// candidates scored by the bank, joined with visual scores, labeled against
/// ground truth. Validation rows come from the validation split. Predicates
/// with no stage-3 rows are omitted.
std::map<int, AggregatorTrainingSet> build_aggregator_training(
    const RelationshipModelBank& bank, const AnnotationSet& annotations,
    const SemanticStats& stats, const SplitPlan& split, const Vocabulary& vocab,
    const ScoreTable& visual, JoinPolicy policy);

/// Trains the per-predicate aggregators. The config must use the gbtree
/// booster with depth <= 8; label degeneracies propagate as errors.
AggregatorModel train_aggregator(const std::map<int, AggregatorTrainingSet>& data,
                                 const std::vector<std::string>& pair_slot_names,
                                 const GbmConfig& config);

/// Rescores candidates with the aggregator; predicates without an aggregator
/// model keep their stage-2 score.
std::vector<RelationInstance> apply_aggregator(const AggregatorModel& aggregator,
                                               const std::vector<ScoredCandidate>& candidates);

// ---------------------------------------------------------------------------
// Bank directory: manifest.json + stats.json + model_p<id>.gbm1 per
// predicate.
// ---------------------------------------------------------------------------
void write_bank(const RelationshipModelBank& bank, const SemanticStats& stats,
                const Vocabulary& vocab, const std::string& config_echo_json,
                const std::string& dir);

struct LoadedBank {
  RelationshipModelBank bank;
  SemanticStats stats;
};

LoadedBank read_bank(const std::string& dir, const Vocabulary& vocab);

}  // namespace vrd
