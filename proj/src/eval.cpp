#include "vrd/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

#include "vrd/geometry.hpp"

namespace vrd {
namespace {

// Score-descending order with a full-identity tie break so matching never
// depends on input order.
bool rank_before(const RelationInstance& a, const RelationInstance& b) {
  auto key = [](const RelationInstance& r) {
    return std::tuple<double, const std::string&, int, int, int, double, double, double, double,
                      double, double, double, double>(
        -r.score, r.image_id, r.predicate_id, r.subject.class_id, r.object.class_id,
        r.subject.box.x_min, r.subject.box.y_min, r.subject.box.x_max, r.subject.box.y_max,
        r.object.box.x_min, r.object.box.y_min, r.object.box.x_max, r.object.box.y_max);
  };
  return key(a) < key(b);
}

struct MatchBucket {
  std::vector<const RelationInstance*> ground_truth;
  std::vector<int> gt_owner;                  // owning prediction slot or -1
  std::vector<std::vector<int>> owner_edges;  // eligible gt lists, one per slot
};

bool eligible(const RelationInstance& pred, const RelationInstance& gt, double threshold) {
  return iou(pred.subject.box, gt.subject.box) >= threshold &&
         iou(pred.object.box, gt.object.box) >= threshold;
}

// Kuhn's augmenting search: give `slot` some eligible ground-truth instance,
// displacing earlier owners onto their alternatives when possible. Mutates
// ownership only on success.
bool try_assign(MatchBucket& bucket, int slot, std::vector<char>& visited) {
  for (int g : bucket.owner_edges[slot]) {
    if (visited[g]) continue;
    visited[g] = 1;
    if (bucket.gt_owner[g] < 0 || try_assign(bucket, bucket.gt_owner[g], visited)) {
      bucket.gt_owner[g] = slot;
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<char> match_instances(const std::vector<RelationInstance>& predictions,
                                  const std::vector<RelationInstance>& ground_truth,
                                  const MatchConfig& config) {
  using BucketKey = std::tuple<std::string, int, int, int>;
  auto key_of = [&config](const RelationInstance& r) {
    return BucketKey(r.image_id, config.predicate_scoped ? r.predicate_id : 0,
                     r.subject.class_id, r.object.class_id);
  };

  std::map<BucketKey, MatchBucket> buckets;
  for (const auto& gt : ground_truth) {
    auto& bucket = buckets[key_of(gt)];
    bucket.ground_truth.push_back(&gt);
    bucket.gt_owner.push_back(-1);
  }

  std::vector<std::size_t> order(predictions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&predictions](std::size_t a, std::size_t b) {
    return rank_before(predictions[a], predictions[b]);
  });

  std::vector<char> hits(predictions.size(), 0);
  for (std::size_t idx : order) {
    const RelationInstance& pred = predictions[idx];
    auto it = buckets.find(key_of(pred));
    if (it == buckets.end()) continue;
    MatchBucket& bucket = it->second;

    std::vector<int> edges;
    for (std::size_t g = 0; g < bucket.ground_truth.size(); ++g) {
      if (eligible(pred, *bucket.ground_truth[g], config.iou_threshold)) {
        edges.push_back(static_cast<int>(g));
      }
    }

    const int slot = static_cast<int>(bucket.owner_edges.size());
    bucket.owner_edges.push_back(std::move(edges));
    std::vector<char> visited(bucket.ground_truth.size(), 0);
    if (try_assign(bucket, slot, visited)) {
      hits[idx] = 1;
    } else {
      bucket.owner_edges.pop_back();
    }
  }
  return hits;
}

PrCurve ap_rel(const std::vector<RelationInstance>& predictions,
               const std::vector<RelationInstance>& ground_truth, int predicate_id,
               const MatchConfig& config) {
  std::vector<RelationInstance> preds;
  for (const auto& p : predictions) {
    if (p.predicate_id == predicate_id) preds.push_back(p);
  }
  std::vector<RelationInstance> gt;
  for (const auto& g : ground_truth) {
    if (g.predicate_id == predicate_id) gt.push_back(g);
  }

  PrCurve curve;
  if (preds.empty() && gt.empty()) return curve;  // undefined
  curve.defined = true;
  if (preds.empty()) return curve;  // AP 0 against nonempty ground truth

  std::sort(preds.begin(), preds.end(), rank_before);
  const std::vector<char> hits = match_instances(preds, gt, config);

  const double total_gt = static_cast<double>(gt.size());
  double tp = 0.0;
  curve.points.reserve(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    tp += hits[i];
    const double recall = total_gt > 0.0 ? tp / total_gt : 0.0;
    const double precision = tp / static_cast<double>(i + 1);
    curve.points.emplace_back(recall, precision);
  }

  // Precision envelope, then area over the recall increments.
  std::vector<double> envelope(curve.points.size());
  double max_precision = 0.0;
  for (std::size_t i = curve.points.size(); i-- > 0;) {
    max_precision = std::max(max_precision, curve.points[i].second);
    envelope[i] = max_precision;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < curve.points.size(); ++i) {
    const double recall = curve.points[i].first;
    if (recall > prev_recall) {
      ap += (recall - prev_recall) * envelope[i];
      prev_recall = recall;
    }
  }
  curve.ap = ap;
  return curve;
}

EvalResult map_rel(const std::vector<RelationInstance>& predictions,
                   const std::vector<RelationInstance>& ground_truth,
                   const MatchConfig& config) {
  std::set<int> predicate_ids;
  for (const auto& p : predictions) predicate_ids.insert(p.predicate_id);
  for (const auto& g : ground_truth) predicate_ids.insert(g.predicate_id);

  EvalResult result;
  double total = 0.0;
  int defined = 0;
  for (int p : predicate_ids) {
    PrCurve curve = ap_rel(predictions, ground_truth, p, config);
    if (curve.defined) {
      total += curve.ap;
      ++defined;
    }
    result.per_predicate.emplace(p, std::move(curve));
  }
  if (defined == 0) {
    throw Error(ErrorCode::NoDefinedPredicates, "no predicate has a defined AP");
  }
  result.map_rel = total / defined;
  return result;
}

std::string format_eval_table(const EvalResult& result, const PredicateVocabulary& predicates) {
  std::string out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-16s %8s\n", "predicate", "AP_rel");
  out += line;
  out += std::string(25, '-') + "\n";
  for (const auto& [id, curve] : result.per_predicate) {
    const std::string name = id < predicates.size() ? predicates.name(id) : std::to_string(id);
    if (curve.defined) {
      std::snprintf(line, sizeof(line), "%-16s %8.4f\n", name.c_str(), curve.ap);
    } else {
      std::snprintf(line, sizeof(line), "%-16s %8s\n", name.c_str(), "n/a");
    }
    out += line;
  }
  out += std::string(25, '-') + "\n";
  std::snprintf(line, sizeof(line), "%-16s %8.4f\n", "mAP_rel", result.map_rel);
  out += line;
  return out;
}

std::string eval_report_json(const EvalResult& result, const PredicateVocabulary& predicates,
                             const MatchConfig& config) {
  nlohmann::ordered_json doc;
  doc["iou_threshold"] = config.iou_threshold;
  doc["predicates"] = nlohmann::ordered_json::object();
  for (const auto& [id, curve] : result.per_predicate) {
    const std::string name = id < predicates.size() ? predicates.name(id) : std::to_string(id);
    doc["predicates"][name] =
        curve.defined ? nlohmann::ordered_json(curve.ap) : nlohmann::ordered_json(nullptr);
  }
  doc["map_rel"] = result.map_rel;
  return doc.dump(2);
}

}  // namespace vrd
