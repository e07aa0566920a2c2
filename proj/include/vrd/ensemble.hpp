#pragma once

#include <string>
#include <vector>

#include "vrd/types.hpp"

namespace vrd {

/// One detector's output with its ensemble weight (relative; any positive
/// scale).
struct ModelOutput {
  std::string model_id;
  double weight = 1.0;
  std::vector<Detection> detections;
};

struct NmsConfig {
  double iou_threshold = 0.5;
  double score_floor = 0.001;
};

/// Weighted non-maximum suppression. Per (image, class): the highest-
/// confidence unconsumed box seeds a cluster that absorbs every unconsumed
/// box with iou >= threshold against it; the cluster melts into one box
/// whose coordinates average members weighted by model_weight x confidence
/// and whose confidence is the model-weight-weighted mean, clamped to [0,1].
/// Ties break by (confidence desc, model_id, image, class, box coords), so
/// the result is independent of input order. Output sorted by confidence
/// descending (same tie-break).
std::vector<Detection> weighted_nms(const std::vector<ModelOutput>& outputs,
                                    const NmsConfig& config);

/// Same contract, implemented as a global O(n^2) scan with no per-bucket
/// indexing. Exists to cross-check weighted_nms; results match bit for bit.
std::vector<Detection> brute_force_nms_oracle(const std::vector<ModelOutput>& outputs,
                                              const NmsConfig& config);

}  // namespace vrd
