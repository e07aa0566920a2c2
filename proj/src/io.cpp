#include "vrd/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vrd {
namespace {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  fields.push_back(field);
  return fields;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

double parse_double(const std::string& text, const std::string& path, int line_no) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(ErrorCode::MalformedRow,
                path + ":" + std::to_string(line_no) + ": bad number '" + text + "'");
  }
  return value;
}

void check_box(const BoundingBox& box, const std::string& path, int line_no) {
  if (!box.valid()) {
    throw Error(ErrorCode::BoxInvariantViolation,
                path + ":" + std::to_string(line_no) + ": box violates x_min<=x_max, y_min<=y_max");
  }
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  return out;
}

// Reads CSV rows, skipping an optional header whose first field matches
// `header_first`. Returns (fields, line number) pairs.
std::vector<std::pair<std::vector<std::string>, int>> read_csv_rows(
    const std::string& path, const std::string& header_first) {
  auto in = open_input(path);
  std::vector<std::pair<std::vector<std::string>, int>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (line_no == 1 && !fields.empty() && fields[0] == header_first) continue;
    rows.emplace_back(std::move(fields), line_no);
  }
  return rows;
}

BoundingBox parse_box(const std::vector<std::string>& f, size_t at, const std::string& path,
                      int line_no) {
  // CSV column order is XMin,XMax,YMin,YMax.
  BoundingBox box;
  box.x_min = parse_double(f[at + 0], path, line_no);
  box.x_max = parse_double(f[at + 1], path, line_no);
  box.y_min = parse_double(f[at + 2], path, line_no);
  box.y_max = parse_double(f[at + 3], path, line_no);
  check_box(box, path, line_no);
  return box;
}

void append_box_fields(std::string& out, const BoundingBox& box) {
  out += format_double(box.x_min);
  out += ',';
  out += format_double(box.x_max);
  out += ',';
  out += format_double(box.y_min);
  out += ',';
  out += format_double(box.y_max);
}

int class_id_or_throw(const Vocabulary& vocab, const std::string& name, const std::string& path,
                      int line_no) {
  auto id = vocab.classes.find(name);
  if (!id) {
    throw Error(ErrorCode::UnknownClassName,
                path + ":" + std::to_string(line_no) + ": unknown class '" + name + "'");
  }
  return *id;
}

}  // namespace

std::vector<std::string> AnnotationSet::image_ids() const {
  std::vector<std::string> ids;
  ids.reserve(boxes.size());
  for (const auto& [id, _] : boxes) ids.push_back(id);
  for (const auto& [id, _] : relations) {
    if (!boxes.count(id)) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void ScoreTable::insert(const Key& key, double score) { scores_[key] = score; }

std::optional<double> ScoreTable::find(const Key& key) const {
  auto it = scores_.find(key);
  if (it == scores_.end()) return std::nullopt;
  return it->second;
}

std::string box_key(const BoundingBox& box) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%.6f:%.6f:%.6f:%.6f", box.x_min, box.x_max, box.y_min,
                box.y_max);
  return buf;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary read_vocabulary(const std::string& path) {
  auto in = open_input(path);
  ordered_json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MalformedRow, path + ": bad vocabulary JSON: " + e.what());
  }
  Vocabulary vocab;
  if (!doc.contains("classes") || !doc["classes"].is_array()) {
    throw Error(ErrorCode::MalformedRow, path + ": vocabulary needs a 'classes' array");
  }
  for (const auto& entry : doc["classes"]) {
    if (entry.is_string()) {
      vocab.classes.add(entry.get<std::string>());
    } else {
      vocab.classes.add(entry.at("name").get<std::string>(), entry.value("attribute", false));
    }
  }
  for (const auto& entry : doc.value("predicates", ordered_json::array())) {
    vocab.predicates.add(entry.get<std::string>());
  }
  for (const auto& entry : doc.value("triplets", ordered_json::array())) {
    Triplet t;
    t.subject_class = class_id_or_throw(vocab, entry.at(0).get<std::string>(), path, 0);
    auto pred = vocab.predicates.find(entry.at(1).get<std::string>());
    if (!pred) {
      throw Error(ErrorCode::UnknownTriplet,
                  path + ": triplet uses unknown predicate '" + entry.at(1).get<std::string>() + "'");
    }
    t.predicate = *pred;
    t.object_class = class_id_or_throw(vocab, entry.at(2).get<std::string>(), path, 0);
    vocab.triplets.add(t);
  }
  return vocab;
}

void write_vocabulary(const Vocabulary& vocab, const std::string& path) {
  ordered_json doc;
  doc["classes"] = ordered_json::array();
  for (int k = 0; k < vocab.classes.size(); ++k) {
    ordered_json entry;
    entry["name"] = vocab.classes.name(k);
    if (vocab.classes.is_attribute(k)) entry["attribute"] = true;
    doc["classes"].push_back(entry);
  }
  doc["predicates"] = ordered_json::array();
  for (int p = 0; p < vocab.predicates.size(); ++p) doc["predicates"].push_back(vocab.predicates.name(p));
  doc["triplets"] = ordered_json::array();
  for (const auto& t : vocab.triplets.all()) {
    doc["triplets"].push_back({vocab.classes.name(t.subject_class),
                               vocab.predicates.name(t.predicate),
                               vocab.classes.name(t.object_class)});
  }
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Detections
// ---------------------------------------------------------------------------

std::vector<Detection> read_detections(const std::string& path, const Vocabulary& vocab) {
  std::vector<Detection> detections;
  for (const auto& [f, line_no] : read_csv_rows(path, "ImageID")) {
    if (f.size() != 6 && f.size() != 7) {
      throw Error(ErrorCode::MalformedRow, path + ":" + std::to_string(line_no) +
                                               ": expected 6 or 7 fields, got " +
                                               std::to_string(f.size()));
    }
    Detection d;
    d.image_id = f[0];
    d.class_id = class_id_or_throw(vocab, f[1], path, line_no);
    d.box = parse_box(f, 2, path, line_no);
    d.confidence = f.size() == 7 ? parse_double(f[6], path, line_no) : 1.0;
    detections.push_back(std::move(d));
  }
  return detections;
}

void write_detections(const std::vector<Detection>& detections, const Vocabulary& vocab,
                      const std::string& path) {
  auto out = open_output(path);
  out << "ImageID,LabelName,XMin,XMax,YMin,YMax,Score\n";
  for (const auto& d : detections) {
    std::string line = d.image_id;
    line += ',';
    line += vocab.classes.name(d.class_id);
    line += ',';
    append_box_fields(line, d.box);
    line += ',';
    line += format_double(d.confidence);
    out << line << '\n';
  }
}

AnnotationSet annotation_set_from_boxes(const std::vector<Detection>& boxes, int num_classes) {
  AnnotationSet set;
  set.images_per_class = Eigen::ArrayXd::Zero(num_classes);
  std::set<std::pair<std::string, int>> seen;
  for (const auto& d : boxes) {
    set.boxes[d.image_id].push_back(d);
    if (seen.insert({d.image_id, d.class_id}).second) {
      set.images_per_class[d.class_id] += 1.0;
    }
  }
  return set;
}

AnnotationSet subset_annotations(const AnnotationSet& all, const std::set<std::string>& images) {
  AnnotationSet subset;
  subset.images_per_class = Eigen::ArrayXd::Zero(all.images_per_class.size());
  for (const auto& [image_id, detections] : all.boxes) {
    if (!images.count(image_id)) continue;
    subset.boxes.emplace(image_id, detections);
    std::set<int> classes;
    for (const auto& d : detections) classes.insert(d.class_id);
    for (int c : classes) subset.images_per_class[c] += 1.0;
  }
  for (const auto& [image_id, relations] : all.relations) {
    if (images.count(image_id)) subset.relations.emplace(image_id, relations);
  }
  return subset;
}

// ---------------------------------------------------------------------------
// Relations
// ---------------------------------------------------------------------------

namespace {

RelationInstance parse_relation_row(const std::vector<std::string>& f, int line_no,
                                    const std::string& path, const Vocabulary& vocab,
                                    bool with_scores) {
  // Without scores: ImageID,L1,4 box,L2,4 box,Relationship         (12 fields)
  // With scores:    ImageID,L1,4 box,S1,L2,4 box,S2,Relationship,S (15 fields)
  const size_t expected = with_scores ? 15 : 12;
  if (f.size() != expected) {
    throw Error(ErrorCode::MalformedRow, path + ":" + std::to_string(line_no) + ": expected " +
                                             std::to_string(expected) + " fields, got " +
                                             std::to_string(f.size()));
  }
  RelationInstance rel;
  rel.image_id = f[0];
  size_t at = 1;
  rel.subject.image_id = rel.image_id;
  rel.subject.class_id = class_id_or_throw(vocab, f[at], path, line_no);
  rel.subject.box = parse_box(f, at + 1, path, line_no);
  at += 5;
  if (with_scores) rel.subject.confidence = parse_double(f[at++], path, line_no);
  rel.object.image_id = rel.image_id;
  rel.object.class_id = class_id_or_throw(vocab, f[at], path, line_no);
  rel.object.box = parse_box(f, at + 1, path, line_no);
  at += 5;
  if (with_scores) rel.object.confidence = parse_double(f[at++], path, line_no);
  auto pred = vocab.predicates.find(f[at]);
  if (!pred) {
    throw Error(ErrorCode::UnknownTriplet,
                path + ":" + std::to_string(line_no) + ": unknown predicate '" + f[at] + "'");
  }
  rel.predicate_id = *pred;
  ++at;
  if (with_scores) rel.score = parse_double(f[at], path, line_no);
  return rel;
}

}  // namespace

AnnotationSet read_relations(const std::string& path, const Vocabulary& vocab) {
  AnnotationSet set;
  set.images_per_class = Eigen::ArrayXd::Zero(vocab.classes.size());
  std::set<std::tuple<std::string, int, std::string>> seen_boxes;  // image, class, key
  std::set<std::pair<std::string, int>> seen_class_in_image;
  std::map<std::string, std::set<RelationInstance>> unique;

  for (const auto& [f, line_no] : read_csv_rows(path, "ImageID")) {
    auto rel = parse_relation_row(f, line_no, path, vocab, /*with_scores=*/false);
    if (vocab.classes.is_attribute(rel.subject.class_id)) {
      throw Error(ErrorCode::MalformedRow, path + ":" + std::to_string(line_no) +
                                               ": attribute class as relation subject");
    }
    // An empty triplet list means "no licensing restriction".
    if (vocab.triplets.size() != 0 &&
        !vocab.triplets.contains(rel.subject.class_id, rel.predicate_id, rel.object.class_id)) {
      throw Error(ErrorCode::UnknownTriplet,
                  path + ":" + std::to_string(line_no) + ": triplet not in vocabulary");
    }
    if (!unique[rel.image_id].insert(rel).second) {
      ++set.duplicate_relations_dropped;
      continue;
    }
    set.relations[rel.image_id].push_back(rel);
    for (const Detection* d : {&rel.subject, &rel.object}) {
      if (vocab.classes.is_attribute(d->class_id)) continue;  // attribute pseudo-boxes
      if (seen_boxes.insert({d->image_id, d->class_id, box_key(d->box)}).second) {
        set.boxes[d->image_id].push_back(*d);
      }
      if (seen_class_in_image.insert({d->image_id, d->class_id}).second) {
        set.images_per_class[d->class_id] += 1.0;
      }
    }
  }
  return set;
}

AnnotationSet read_annotations(const std::string& boxes_path, const std::string& relations_path,
                               const Vocabulary& vocab) {
  auto detections = read_detections(boxes_path, vocab);
  AnnotationSet set = annotation_set_from_boxes(detections, vocab.classes.size());
  AnnotationSet rel_set = read_relations(relations_path, vocab);
  set.relations = std::move(rel_set.relations);
  set.duplicate_relations_dropped = rel_set.duplicate_relations_dropped;
  return set;
}

void write_relations(const std::map<std::string, std::vector<RelationInstance>>& relations,
                     const Vocabulary& vocab, const std::string& path) {
  auto out = open_output(path);
  out << "ImageID,LabelName1,XMin1,XMax1,YMin1,YMax1,"
         "LabelName2,XMin2,XMax2,YMin2,YMax2,RelationshipLabel\n";
  for (const auto& [image_id, rels] : relations) {
    for (const auto& rel : rels) {
      std::string line = image_id;
      line += ',';
      line += vocab.classes.name(rel.subject.class_id);
      line += ',';
      append_box_fields(line, rel.subject.box);
      line += ',';
      line += vocab.classes.name(rel.object.class_id);
      line += ',';
      append_box_fields(line, rel.object.box);
      line += ',';
      line += vocab.predicates.name(rel.predicate_id);
      out << line << '\n';
    }
  }
}

void write_relation_predictions(const std::vector<RelationInstance>& instances,
                                const Vocabulary& vocab, const std::string& path) {
  auto out = open_output(path);
  out << "ImageID,LabelName1,XMin1,XMax1,YMin1,YMax1,Score1,"
         "LabelName2,XMin2,XMax2,YMin2,YMax2,Score2,RelationshipLabel,Score\n";
  for (const auto& rel : instances) {
    std::string line = rel.image_id;
    line += ',';
    line += vocab.classes.name(rel.subject.class_id);
    line += ',';
    append_box_fields(line, rel.subject.box);
    line += ',';
    line += format_double(rel.subject.confidence);
    line += ',';
    line += vocab.classes.name(rel.object.class_id);
    line += ',';
    append_box_fields(line, rel.object.box);
    line += ',';
    line += format_double(rel.object.confidence);
    line += ',';
    line += vocab.predicates.name(rel.predicate_id);
    line += ',';
    line += format_double(rel.score);
    out << line << '\n';
  }
}

std::vector<RelationInstance> read_relation_predictions(const std::string& path,
                                                        const Vocabulary& vocab) {
  std::vector<RelationInstance> instances;
  for (const auto& [f, line_no] : read_csv_rows(path, "ImageID")) {
    instances.push_back(parse_relation_row(f, line_no, path, vocab, /*with_scores=*/true));
  }
  return instances;
}

// ---------------------------------------------------------------------------
// Score tables
// ---------------------------------------------------------------------------

ScoreTable read_score_table(const std::string& path, const Vocabulary& vocab) {
  ScoreTable table;
  for (const auto& [f, line_no] : read_csv_rows(path, "ImageID")) {
    if (f.size() != 5) {
      throw Error(ErrorCode::MalformedRow, path + ":" + std::to_string(line_no) +
                                               ": expected 5 fields, got " +
                                               std::to_string(f.size()));
    }
    ScoreTable::Key key;
    key.image_id = f[0];
    key.subject_key = f[1];
    key.object_key = f[2];
    auto pred = vocab.predicates.find(f[3]);
    if (!pred) {
      throw Error(ErrorCode::UnknownTriplet,
                  path + ":" + std::to_string(line_no) + ": unknown predicate '" + f[3] + "'");
    }
    key.predicate_id = *pred;
    if (table.find(key)) {
      throw Error(ErrorCode::DuplicateKey,
                  path + ":" + std::to_string(line_no) + ": repeated score key");
    }
    table.insert(key, parse_double(f[4], path, line_no));
  }
  return table;
}

void write_score_table(const ScoreTable& table, const Vocabulary& vocab,
                       const std::string& path) {
  auto out = open_output(path);
  out << "ImageID,SubjKey,ObjKey,Predicate,Score\n";
  for (const auto& [key, score] : table.entries()) {
    out << key.image_id << ',' << key.subject_key << ',' << key.object_key << ','
        << vocab.predicates.name(key.predicate_id) << ',' << format_double(score) << '\n';
  }
}

}  // namespace vrd
