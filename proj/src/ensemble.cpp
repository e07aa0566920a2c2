#include "vrd/ensemble.hpp"

#include <algorithm>
#include <map>
#include <tuple>

#include "vrd/geometry.hpp"

namespace vrd {
namespace {

struct Entry {
  const Detection* detection;
  const std::string* model_id;
  double weight;
};

// Total order used for seed selection, cluster-member accumulation order,
// and final output order. Confidence descending, then stable identity.
bool canonical_less(const Entry& a, const Entry& b) {
  auto key = [](const Entry& e) {
    return std::tuple<double, const std::string&, const std::string&, int, double, double, double,
                      double, double>(-e.detection->confidence, *e.model_id,
                                      e.detection->image_id, e.detection->class_id,
                                      e.detection->box.x_min, e.detection->box.y_min,
                                      e.detection->box.x_max, e.detection->box.y_max, e.weight);
  };
  return key(a) < key(b);
}

// Members must arrive in canonical order so the float sums are reproducible
// across implementations.
Detection combine(const std::vector<Entry>& members) {
  double weight_sum = 0.0;
  double weighted_conf = 0.0;
  double coord_weight_sum = 0.0;
  double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;
  for (const Entry& e : members) {
    const double w = e.weight;
    const double u = w * e.detection->confidence;
    weight_sum += w;
    weighted_conf += w * e.detection->confidence;
    coord_weight_sum += u;
    x_min += u * e.detection->box.x_min;
    y_min += u * e.detection->box.y_min;
    x_max += u * e.detection->box.x_max;
    y_max += u * e.detection->box.y_max;
  }
  Detection out;
  out.image_id = members.front().detection->image_id;
  out.class_id = members.front().detection->class_id;
  if (coord_weight_sum > 0.0) {
    out.box = {x_min / coord_weight_sum, y_min / coord_weight_sum, x_max / coord_weight_sum,
               y_max / coord_weight_sum};
  } else {
    // Every member has zero confidence: fall back to the plain mean.
    double sx = 0.0, sy = 0.0, ex = 0.0, ey = 0.0;
    for (const Entry& e : members) {
      sx += e.detection->box.x_min;
      sy += e.detection->box.y_min;
      ex += e.detection->box.x_max;
      ey += e.detection->box.y_max;
    }
    const double n = static_cast<double>(members.size());
    out.box = {sx / n, sy / n, ex / n, ey / n};
  }
  out.confidence = std::clamp(weighted_conf / weight_sum, 0.0, 1.0);
  return out;
}

std::vector<Entry> pool_entries(const std::vector<ModelOutput>& outputs,
                                const NmsConfig& config) {
  if (outputs.empty()) {
    throw Error(ErrorCode::EmptyInput, "weighted_nms needs at least one model output");
  }
  if (!(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0)) {
    throw Error(ErrorCode::MalformedRow, "iou_threshold must lie in (0, 1]");
  }
  std::vector<Entry> entries;
  for (const ModelOutput& model : outputs) {
    if (!(model.weight > 0.0)) {
      throw Error(ErrorCode::MalformedRow, "model '" + model.model_id + "' weight must be > 0");
    }
    for (const Detection& d : model.detections) {
      if (!d.box.valid()) {
        throw Error(ErrorCode::BoxInvariantViolation,
                    "invalid box in model '" + model.model_id + "'");
      }
      entries.push_back({&d, &model.model_id, model.weight});
    }
  }
  return entries;
}

void sort_output(std::vector<Detection>& out) {
  std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    auto key = [](const Detection& d) {
      return std::tuple<double, const std::string&, int, double, double, double, double>(
          -d.confidence, d.image_id, d.class_id, d.box.x_min, d.box.y_min, d.box.x_max,
          d.box.y_max);
    };
    return key(a) < key(b);
  });
}

}  // namespace

std::vector<Detection> weighted_nms(const std::vector<ModelOutput>& outputs,
                                    const NmsConfig& config) {
  std::vector<Entry> entries = pool_entries(outputs, config);

  std::map<std::pair<std::string, int>, std::vector<Entry>> buckets;
  for (const Entry& e : entries) {
    buckets[{e.detection->image_id, e.detection->class_id}].push_back(e);
  }

  std::vector<Detection> out;
  for (auto& [key, bucket] : buckets) {
    std::sort(bucket.begin(), bucket.end(), canonical_less);
    std::vector<bool> consumed(bucket.size(), false);
    for (std::size_t i = 0; i < bucket.size(); ++i) {
      if (consumed[i]) continue;
      std::vector<Entry> cluster = {bucket[i]};
      consumed[i] = true;
      for (std::size_t j = i + 1; j < bucket.size(); ++j) {
        if (consumed[j]) continue;
        if (iou(bucket[i].detection->box, bucket[j].detection->box) >= config.iou_threshold) {
          cluster.push_back(bucket[j]);
          consumed[j] = true;
        }
      }
      Detection merged = combine(cluster);
      if (merged.confidence >= config.score_floor) out.push_back(std::move(merged));
    }
  }
  sort_output(out);
  return out;
}

std::vector<Detection> brute_force_nms_oracle(const std::vector<ModelOutput>& outputs,
                                              const NmsConfig& config) {
  std::vector<Entry> entries = pool_entries(outputs, config);
  std::vector<bool> consumed(entries.size(), false);
  std::size_t remaining = entries.size();

  std::vector<Detection> out;
  while (remaining > 0) {
    // Global scan for the best unconsumed entry.
    std::size_t seed = entries.size();
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (consumed[i]) continue;
      if (seed == entries.size() || canonical_less(entries[i], entries[seed])) seed = i;
    }
    std::vector<Entry> cluster = {entries[seed]};
    consumed[seed] = true;
    --remaining;
    for (std::size_t j = 0; j < entries.size(); ++j) {
      if (consumed[j]) continue;
      const bool same_bucket =
          entries[j].detection->image_id == entries[seed].detection->image_id &&
          entries[j].detection->class_id == entries[seed].detection->class_id;
      if (same_bucket &&
          iou(entries[seed].detection->box, entries[j].detection->box) >= config.iou_threshold) {
        cluster.push_back(entries[j]);
        consumed[j] = true;
        --remaining;
      }
    }
    std::sort(cluster.begin(), cluster.end(), canonical_less);
    Detection merged = combine(cluster);
    if (merged.confidence >= config.score_floor) out.push_back(std::move(merged));
  }
  sort_output(out);
  return out;
}

}  // namespace vrd
