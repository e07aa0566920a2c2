#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vrd/types.hpp"

namespace vrd {

/// A named f32 tensor, row-major.
struct Tensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;

  std::uint64_t elements() const;
};

/// Ordered collection of uniquely named tensors. Immutable once built, in
/// the sense that surgery functions return new stores.
class TensorStore {
 public:
  void add(Tensor tensor);
  bool has(const std::string& name) const;
  const Tensor& at(const std::string& name) const;  // throws MissingTensor
  std::size_t size() const { return tensors_.size(); }
  const std::vector<Tensor>& tensors() const { return tensors_; }

 private:
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// Partial, many-to-one mapping task class id -> source class id. Absent
/// keys mean "no source counterpart".
struct ClassMap {
  std::map<int, int> task_to_source;
};

/// Identifies the head tensors inside a store and how classes index them.
/// `class_axis` is the weight axis indexed by class blocks (0 or 1);
/// `rows_per_class` is the number of consecutive rows per class along that
/// axis (1 for classification, 4 for box-regression heads). The bias is 1-D
/// with rows_per_class entries per class.
struct HeadSpec {
  std::string weight_name;
  std::string bias_name;
  int class_axis = 0;
  int rows_per_class = 1;
};

/// Random-init parameters for classes with no source counterpart. Weights
/// are drawn normal(mean, stddev); biases are set to zero.
struct InitSpec {
  double mean = 0.0;
  double stddev = 0.01;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Codec. File layout: magic `PWT1`, u32 little-endian manifest byte length,
// UTF-8 JSON manifest [{"name":..,"shape":[..]}...], then the tensors'
// little-endian f32 payloads concatenated in manifest order.
// ---------------------------------------------------------------------------
void write_store(const TensorStore& store, const std::string& path);
TensorStore read_store(const std::string& path);

/// Rebuilds the head tensors for a task vocabulary: class rows with a source
/// counterpart are copied bit-for-bit, the rest are drawn from `init`
/// (weights) and zeroed (bias). Every other tensor passes through verbatim.
TensorStore partial_weight_transfer(const TensorStore& src, const HeadSpec& head,
                                    const ClassMap& map, int task_class_count,
                                    const InitSpec& init);

/// Builds a head with one class row per (object class, attribute) pair, each
/// copied from the object's source row — the expanded vocabulary used to
/// score attribute relations as ordinary classes. Equivalent to
/// partial_weight_transfer with the induced total map pair_i -> object_i.
TensorStore expand_attribute_head(const TensorStore& src, const HeadSpec& head,
                                  const std::vector<std::pair<int, int>>& pairs);

/// Copies the head blocks of the listed class ids from `donor` into a copy
/// of `base` (head shapes must match). Lets callers fill classes that have
/// no source counterpart from a second, task-trained checkpoint instead of
/// random init.
TensorStore merge_head_rows(const TensorStore& base, const TensorStore& donor,
                            const HeadSpec& head, const std::vector<int>& class_ids);

/// FNV-1a over name, shape, and payload bytes — for cheap "unchanged" checks.
std::uint64_t tensor_hash(const Tensor& tensor);
bool bitwise_equal(const Tensor& a, const Tensor& b);
bool bitwise_equal(const TensorStore& a, const TensorStore& b);

/// Class-map file: {"source_classes": [names...], "map": {"task": "source"}}.
/// Task names resolve against `task_classes`; source names against the
/// file's own source list. Returns the resolved id map.
ClassMap read_class_map(const std::string& path, const std::vector<std::string>& task_classes);

}  // namespace vrd
