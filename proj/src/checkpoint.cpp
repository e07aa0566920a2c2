#include "vrd/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "vrd/rng.hpp"

namespace vrd {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMagic[4] = {'P', 'W', 'T', '1'};

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32_le(std::string& out, float v) {
  put_u32_le(out, std::bit_cast<std::uint32_t>(v));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

struct HeadLayout {
  std::uint64_t source_classes = 0;  // class blocks along class_axis
  std::uint64_t block = 0;           // rows_per_class along class_axis
  std::uint64_t other_dim = 0;       // extent of the non-class axis
};

HeadLayout head_layout(const Tensor& weight, const HeadSpec& head) {
  if (weight.shape.size() != 2) {
    throw Error(ErrorCode::ShapeMismatch,
                "head weight '" + weight.name + "' must be 2-D, got rank " +
                    std::to_string(weight.shape.size()));
  }
  if (head.class_axis != 0 && head.class_axis != 1) {
    throw Error(ErrorCode::ShapeMismatch, "class_axis must be 0 or 1");
  }
  if (head.rows_per_class < 1) {
    throw Error(ErrorCode::ShapeMismatch, "rows_per_class must be >= 1");
  }
  HeadLayout layout;
  layout.block = static_cast<std::uint64_t>(head.rows_per_class);
  const std::uint64_t class_extent = weight.shape[head.class_axis];
  if (class_extent % layout.block != 0) {
    throw Error(ErrorCode::ShapeMismatch,
                "class axis extent " + std::to_string(class_extent) +
                    " is not a multiple of rows_per_class " + std::to_string(layout.block));
  }
  layout.source_classes = class_extent / layout.block;
  layout.other_dim = weight.shape[1 - head.class_axis];
  return layout;
}

void check_bias(const Tensor& bias, const HeadLayout& layout, std::uint64_t classes) {
  if (bias.shape.size() != 1 || bias.shape[0] != classes * layout.block) {
    throw Error(ErrorCode::ShapeMismatch,
                "head bias '" + bias.name + "' must be 1-D with " +
                    std::to_string(classes * layout.block) + " entries");
  }
}

// Copies the weight block of one class between same-layout tensors.
void copy_weight_block(const Tensor& src, Tensor& dst, const HeadSpec& head,
                       const HeadLayout& layout, std::uint64_t src_class,
                       std::uint64_t dst_class) {
  const std::uint64_t rpc = layout.block;
  if (head.class_axis == 0) {
    const std::uint64_t row_len = layout.other_dim;
    std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(src_class * rpc * row_len),
                rpc * row_len,
                dst.data.begin() + static_cast<std::ptrdiff_t>(dst_class * rpc * row_len));
  } else {
    const std::uint64_t src_cols = src.shape[1];
    const std::uint64_t dst_cols = dst.shape[1];
    for (std::uint64_t r = 0; r < layout.other_dim; ++r) {
      std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>(r * src_cols + src_class * rpc),
                  rpc,
                  dst.data.begin() + static_cast<std::ptrdiff_t>(r * dst_cols + dst_class * rpc));
    }
  }
}

// Fills one class block with draws from rng, visiting the block's positions
// in the output tensor's row-major order.
void fill_weight_block(Tensor& dst, const HeadSpec& head, const HeadLayout& layout,
                       std::uint64_t dst_class, Rng& rng, const InitSpec& init) {
  const std::uint64_t rpc = layout.block;
  if (head.class_axis == 0) {
    const std::uint64_t row_len = layout.other_dim;
    float* p = dst.data.data() + dst_class * rpc * row_len;
    for (std::uint64_t i = 0; i < rpc * row_len; ++i) {
      p[i] = static_cast<float>(rng.normal(init.mean, init.stddev));
    }
  } else {
    const std::uint64_t dst_cols = dst.shape[1];
    for (std::uint64_t r = 0; r < layout.other_dim; ++r) {
      float* p = dst.data.data() + r * dst_cols + dst_class * rpc;
      for (std::uint64_t i = 0; i < rpc; ++i) {
        p[i] = static_cast<float>(rng.normal(init.mean, init.stddev));
      }
    }
  }
}

TensorStore rebuild_head(const TensorStore& src, const HeadSpec& head,
                         const std::map<int, int>& task_to_source, int task_class_count,
                         const InitSpec* init) {
  if (!src.has(head.weight_name)) {
    throw Error(ErrorCode::MissingTensor, "head weight '" + head.weight_name + "' not in store");
  }
  if (!src.has(head.bias_name)) {
    throw Error(ErrorCode::MissingTensor, "head bias '" + head.bias_name + "' not in store");
  }
  if (task_class_count < 0) {
    throw Error(ErrorCode::MapOutOfRange, "negative task class count");
  }
  const Tensor& src_weight = src.at(head.weight_name);
  const Tensor& src_bias = src.at(head.bias_name);
  const HeadLayout layout = head_layout(src_weight, head);
  check_bias(src_bias, layout, layout.source_classes);

  for (const auto& [task, source] : task_to_source) {
    if (task < 0 || task >= task_class_count) {
      throw Error(ErrorCode::MapOutOfRange, "task class " + std::to_string(task) +
                                                " outside [0, " +
                                                std::to_string(task_class_count) + ")");
    }
    if (source < 0 || static_cast<std::uint64_t>(source) >= layout.source_classes) {
      throw Error(ErrorCode::MapOutOfRange, "source class " + std::to_string(source) +
                                                " outside [0, " +
                                                std::to_string(layout.source_classes) + ")");
    }
  }

  const std::uint64_t task_classes = static_cast<std::uint64_t>(task_class_count);
  Tensor weight;
  weight.name = head.weight_name;
  weight.shape = src_weight.shape;
  weight.shape[head.class_axis] = task_classes * layout.block;
  weight.data.assign(weight.elements(), 0.0f);

  Tensor bias;
  bias.name = head.bias_name;
  bias.shape = {task_classes * layout.block};
  bias.data.assign(bias.elements(), 0.0f);

  Rng rng(init ? init->seed : 0);
  for (std::uint64_t k = 0; k < task_classes; ++k) {
    auto it = task_to_source.find(static_cast<int>(k));
    if (it != task_to_source.end()) {
      const std::uint64_t g = static_cast<std::uint64_t>(it->second);
      copy_weight_block(src_weight, weight, head, layout, g, k);
      std::copy_n(src_bias.data.begin() + static_cast<std::ptrdiff_t>(g * layout.block),
                  layout.block,
                  bias.data.begin() + static_cast<std::ptrdiff_t>(k * layout.block));
    } else {
      if (!init) {
        throw Error(ErrorCode::MapOutOfRange,
                    "pair vocabulary references class " + std::to_string(k) + " with no mapping");
      }
      fill_weight_block(weight, head, layout, k, rng, *init);
      // bias entries stay zero
    }
  }

  TensorStore out;
  for (const Tensor& t : src.tensors()) {
    if (t.name == head.weight_name) {
      out.add(weight);
    } else if (t.name == head.bias_name) {
      out.add(bias);
    } else {
      out.add(t);
    }
  }
  return out;
}

}  // namespace

std::uint64_t Tensor::elements() const {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void TensorStore::add(Tensor tensor) {
  if (tensor.name.empty()) {
    throw Error(ErrorCode::MalformedRow, "tensor name must be nonempty");
  }
  if (index_.count(tensor.name)) {
    throw Error(ErrorCode::DuplicateKey, "duplicate tensor '" + tensor.name + "'");
  }
  if (tensor.data.size() != tensor.elements()) {
    throw Error(ErrorCode::ShapeMismatch,
                "tensor '" + tensor.name + "' has " + std::to_string(tensor.data.size()) +
                    " values but shape implies " + std::to_string(tensor.elements()));
  }
  index_[tensor.name] = tensors_.size();
  tensors_.push_back(std::move(tensor));
}

bool TensorStore::has(const std::string& name) const { return index_.count(name) != 0; }

const Tensor& TensorStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw Error(ErrorCode::MissingTensor, "tensor '" + name + "' not in store");
  }
  return tensors_[it->second];
}

void write_store(const TensorStore& store, const std::string& path) {
  ordered_json manifest = ordered_json::array();
  for (const Tensor& t : store.tensors()) {
    ordered_json entry;
    entry["name"] = t.name;
    entry["shape"] = t.shape;
    manifest.push_back(entry);
  }
  const std::string manifest_text = manifest.dump();

  std::string payload;
  payload.append(kMagic, 4);
  put_u32_le(payload, static_cast<std::uint32_t>(manifest_text.size()));
  payload += manifest_text;
  for (const Tensor& t : store.tensors()) {
    payload.reserve(payload.size() + t.data.size() * 4);
    for (float v : t.data) put_f32_le(payload, v);
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "short write to " + path);
}

TensorStore read_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();

  if (size < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::BadMagic, path + ": not a PWT1 file");
  }
  const std::uint32_t manifest_len = get_u32_le(p + 4);
  if (8ull + manifest_len > size) {
    throw Error(ErrorCode::TruncatedFile, path + ": manifest extends past end of file");
  }
  ordered_json manifest;
  try {
    manifest = ordered_json::parse(bytes.substr(8, manifest_len));
  } catch (const std::exception& e) {
    throw Error(ErrorCode::TruncatedFile, path + ": bad manifest JSON: " + e.what());
  }
  if (!manifest.is_array()) {
    throw Error(ErrorCode::TruncatedFile, path + ": manifest must be an array");
  }

  TensorStore store;
  std::size_t offset = 8 + manifest_len;
  for (const auto& entry : manifest) {
    Tensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
    const std::uint64_t count = t.elements();
    if (offset + count * 4 > size) {
      throw Error(ErrorCode::TruncatedFile,
                  path + ": tensor '" + t.name + "' payload extends past end of file");
    }
    t.data.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      t.data[i] = std::bit_cast<float>(get_u32_le(p + offset + i * 4));
    }
    offset += count * 4;
    store.add(std::move(t));
  }
  if (offset != size) {
    throw Error(ErrorCode::TruncatedFile,
                path + ": " + std::to_string(size - offset) + " trailing bytes after payload");
  }
  return store;
}

TensorStore partial_weight_transfer(const TensorStore& src, const HeadSpec& head,
                                    const ClassMap& map, int task_class_count,
                                    const InitSpec& init) {
  if (init.stddev <= 0.0) {
    throw Error(ErrorCode::MapOutOfRange, "init stddev must be positive");
  }
  return rebuild_head(src, head, map.task_to_source, task_class_count, &init);
}

TensorStore expand_attribute_head(const TensorStore& src, const HeadSpec& head,
                                  const std::vector<std::pair<int, int>>& pairs) {
  // The induced map is total: pair i draws from its object class, so no
  // random init is ever consulted.
  std::map<int, int> induced;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    induced[static_cast<int>(i)] = pairs[i].first;
  }
  return rebuild_head(src, head, induced, static_cast<int>(pairs.size()), nullptr);
}

TensorStore merge_head_rows(const TensorStore& base, const TensorStore& donor,
                            const HeadSpec& head, const std::vector<int>& class_ids) {
  const Tensor& base_weight = base.at(head.weight_name);
  const Tensor& donor_weight = donor.at(head.weight_name);
  if (base_weight.shape != donor_weight.shape) {
    throw Error(ErrorCode::ShapeMismatch, "merge requires identical head weight shapes");
  }
  const HeadLayout layout = head_layout(base_weight, head);
  check_bias(base.at(head.bias_name), layout, layout.source_classes);
  check_bias(donor.at(head.bias_name), layout, layout.source_classes);

  Tensor weight = base_weight;
  Tensor bias = base.at(head.bias_name);
  const Tensor& donor_bias = donor.at(head.bias_name);
  for (int k : class_ids) {
    if (k < 0 || static_cast<std::uint64_t>(k) >= layout.source_classes) {
      throw Error(ErrorCode::MapOutOfRange, "class " + std::to_string(k) + " outside head");
    }
    copy_weight_block(donor_weight, weight, head, layout, static_cast<std::uint64_t>(k),
                      static_cast<std::uint64_t>(k));
    std::copy_n(
        donor_bias.data.begin() + static_cast<std::ptrdiff_t>(k * head.rows_per_class),
        head.rows_per_class,
        bias.data.begin() + static_cast<std::ptrdiff_t>(k * head.rows_per_class));
  }

  TensorStore out;
  for (const Tensor& t : base.tensors()) {
    if (t.name == head.weight_name) {
      out.add(weight);
    } else if (t.name == head.bias_name) {
      out.add(bias);
    } else {
      out.add(t);
    }
  }
  return out;
}

std::uint64_t tensor_hash(const Tensor& tensor) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  mix(tensor.name.data(), tensor.name.size());
  mix(tensor.shape.data(), tensor.shape.size() * sizeof(std::uint64_t));
  mix(tensor.data.data(), tensor.data.size() * sizeof(float));
  return h;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.name == b.name && a.shape == b.shape && a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

bool bitwise_equal(const TensorStore& a, const TensorStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bitwise_equal(a.tensors()[i], b.tensors()[i])) return false;
  }
  return true;
}

ClassMap read_class_map(const std::string& path, const std::vector<std::string>& task_classes) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for reading");
  ordered_json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MalformedRow, path + ": bad class map JSON: " + e.what());
  }

  std::map<std::string, int> source_ids;
  for (const auto& name : doc.at("source_classes")) {
    const auto s = name.get<std::string>();
    if (!source_ids.emplace(s, static_cast<int>(source_ids.size())).second) {
      throw Error(ErrorCode::DuplicateKey, path + ": duplicate source class '" + s + "'");
    }
  }
  std::map<std::string, int> task_ids;
  for (const auto& name : task_classes) {
    if (!task_ids.emplace(name, static_cast<int>(task_ids.size())).second) {
      throw Error(ErrorCode::DuplicateKey, "duplicate task class '" + name + "'");
    }
  }

  ClassMap map;
  for (const auto& [task_name, source_name] : doc.at("map").items()) {
    auto t = task_ids.find(task_name);
    if (t == task_ids.end()) {
      throw Error(ErrorCode::UnknownClassName, path + ": task class '" + task_name + "' not in task vocabulary");
    }
    auto s = source_ids.find(source_name.get<std::string>());
    if (s == source_ids.end()) {
      throw Error(ErrorCode::UnknownClassName,
                  path + ": source class '" + source_name.get<std::string>() + "' not in source list");
    }
    map.task_to_source[t->second] = s->second;
  }
  return map;
}

}  // namespace vrd
