#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "vrd/types.hpp"

namespace vrd {

struct MatchConfig {
  double iou_threshold = 0.5;
  bool predicate_scoped = true;  // matched instances must share the predicate
};

/// Precision-recall bookkeeping for one predicate. `defined` is false when
/// the predicate appears in neither predictions nor ground truth, in which
/// case it is excluded from the mean.
struct PrCurve {
  std::vector<std::pair<double, double>> points;  // (recall, precision) per rank
  double ap = 0.0;
  bool defined = false;
};

struct EvalResult {
  double map_rel = 0.0;
  std::map<int, PrCurve> per_predicate;
};

/// Hit/miss flags aligned with `predictions`. Matching runs in score order
/// (ties broken by the serialized instance) and a prediction counts as a hit
/// when a ground-truth instance with equal classes and predicate overlaps
/// both boxes at iou >= threshold and can be assigned to it — assignments
/// may be rearranged among earlier hits, so every score prefix attains the
/// maximum possible number of matches and the resulting AP is the best over
/// all valid assignment orders.
std::vector<char> match_instances(const std::vector<RelationInstance>& predictions,
                                  const std::vector<RelationInstance>& ground_truth,
                                  const MatchConfig& config);

/// All-point average precision for one predicate (precision envelope over
/// recall). Empty ground truth with predictions scores 0; empty both ways is
/// undefined.
PrCurve ap_rel(const std::vector<RelationInstance>& predictions,
               const std::vector<RelationInstance>& ground_truth, int predicate_id,
               const MatchConfig& config);

/// Unweighted mean of defined per-predicate APs over every predicate present
/// in predictions or ground truth. Throws NoDefinedPredicates when that set
/// is empty.
EvalResult map_rel(const std::vector<RelationInstance>& predictions,
                   const std::vector<RelationInstance>& ground_truth,
                   const MatchConfig& config);

std::string format_eval_table(const EvalResult& result, const PredicateVocabulary& predicates);
std::string eval_report_json(const EvalResult& result, const PredicateVocabulary& predicates,
                             const MatchConfig& config);

}  // namespace vrd
