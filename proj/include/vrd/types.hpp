#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace vrd {

enum class ErrorCode {
  MalformedRow,
  UnknownClassName,
  BoxInvariantViolation,
  UnknownTriplet,
  DuplicateKey,
  BadMagic,
  ShapeMismatch,
  TruncatedFile,
  MissingTensor,
  MapOutOfRange,
  EmptyInput,
  AllClassesEmpty,
  SingleClassTraining,
  EmptyFeatures,
  FeatureLengthMismatch,
  VersionMismatch,
  CorruptModel,
  FingerprintMismatch,
  NoDefinedPredicates,
  ZeroAreaCrop,
  EmptyAnnotations,
  IoFailure,
};

inline const char* error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::UnknownClassName: return "UnknownClassName";
    case ErrorCode::BoxInvariantViolation: return "BoxInvariantViolation";
    case ErrorCode::UnknownTriplet: return "UnknownTriplet";
    case ErrorCode::DuplicateKey: return "DuplicateKey";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::MissingTensor: return "MissingTensor";
    case ErrorCode::MapOutOfRange: return "MapOutOfRange";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::AllClassesEmpty: return "AllClassesEmpty";
    case ErrorCode::SingleClassTraining: return "SingleClassTraining";
    case ErrorCode::EmptyFeatures: return "EmptyFeatures";
    case ErrorCode::FeatureLengthMismatch: return "FeatureLengthMismatch";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::NoDefinedPredicates: return "NoDefinedPredicates";
    case ErrorCode::ZeroAreaCrop: return "ZeroAreaCrop";
    case ErrorCode::EmptyAnnotations: return "EmptyAnnotations";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

/// Exception carrying a stable machine-readable code alongside the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}
  ErrorCode code() const { return code_; }
  const char* name() const { return error_name(code_); }

 private:
  ErrorCode code_;
};

/// Axis-aligned rectangle with coordinates stored as fractions of image
/// width/height in [0,1]. Zero-area boxes are legal.
struct BoundingBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  bool valid() const {
    return 0.0 <= x_min && x_min <= x_max && x_max <= 1.0 &&
           0.0 <= y_min && y_min <= y_max && y_max <= 1.0;
  }

  friend auto operator<=>(const BoundingBox&, const BoundingBox&) = default;
};

/// One detector output row.
struct Detection {
  std::string image_id;
  int class_id = 0;
  BoundingBox box;
  double confidence = 1.0;

  friend auto operator<=>(const Detection&, const Detection&) = default;
};

/// A (subject, predicate, object) triplet grounded in one image.
struct RelationInstance {
  std::string image_id;
  Detection subject;
  Detection object;
  int predicate_id = 0;
  double score = 1.0;

  friend auto operator<=>(const RelationInstance&, const RelationInstance&) = default;
};

/// Dense id <-> name table for object classes; attribute classes (targets of
/// the "is" relationship) carry a flag.
class ClassVocabulary {
 public:
  int add(const std::string& name, bool attribute = false) {
    if (name.empty()) throw Error(ErrorCode::UnknownClassName, "empty class name");
    auto [it, inserted] = index_.emplace(name, static_cast<int>(names_.size()));
    if (!inserted) throw Error(ErrorCode::DuplicateKey, "duplicate class name: " + name);
    names_.push_back(name);
    attribute_.push_back(attribute ? 1 : 0);
    return it->second;
  }

  std::optional<int> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int id(const std::string& name) const {
    auto found = find(name);
    if (!found) throw Error(ErrorCode::UnknownClassName, "unknown class name: " + name);
    return *found;
  }

  const std::string& name(int id) const { return names_.at(static_cast<size_t>(id)); }
  bool is_attribute(int id) const { return attribute_.at(static_cast<size_t>(id)) != 0; }
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::vector<char> attribute_;
  std::map<std::string, int> index_;
};

class PredicateVocabulary {
 public:
  int add(const std::string& name) {
    if (name.empty()) throw Error(ErrorCode::MalformedRow, "empty predicate name");
    auto [it, inserted] = index_.emplace(name, static_cast<int>(names_.size()));
    if (!inserted) throw Error(ErrorCode::DuplicateKey, "duplicate predicate name: " + name);
    names_.push_back(name);
    return it->second;
  }

  std::optional<int> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int id(const std::string& name) const {
    auto found = find(name);
    if (!found) throw Error(ErrorCode::UnknownTriplet, "unknown predicate name: " + name);
    return *found;
  }

  const std::string& name(int id) const { return names_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(names_.size()); }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
};

struct Triplet {
  int subject_class = 0;
  int predicate = 0;
  int object_class = 0;

  friend auto operator<=>(const Triplet&, const Triplet&) = default;
};

/// Deduplicated set of licensed (subject class, predicate, object class)
/// combinations; candidate generation only pairs classes found here.
class TripletVocabulary {
 public:
  void add(const Triplet& t) { triplets_.insert(t); }
  bool contains(const Triplet& t) const { return triplets_.count(t) != 0; }
  bool contains(int subject_class, int predicate, int object_class) const {
    return contains(Triplet{subject_class, predicate, object_class});
  }
  size_t size() const { return triplets_.size(); }
  const std::set<Triplet>& all() const { return triplets_; }

 private:
  std::set<Triplet> triplets_;
};

/// Classes + predicates + licensed triplets loaded from one vocabulary file.
struct Vocabulary {
  ClassVocabulary classes;
  PredicateVocabulary predicates;
  TripletVocabulary triplets;
};

}  // namespace vrd
