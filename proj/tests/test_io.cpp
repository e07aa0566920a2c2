#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "vrd/io.hpp"
#include "vrd/rng.hpp"

using namespace vrd;

namespace {

std::string temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "vrd_io_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

Vocabulary make_vocab() {
  Vocabulary vocab;
  vocab.classes.add("Man");
  vocab.classes.add("Camera");
  vocab.classes.add("Table");
  vocab.classes.add("Wooden", /*attribute=*/true);
  vocab.predicates.add("holds");
  vocab.predicates.add("on");
  vocab.predicates.add("is");
  return vocab;
}

BoundingBox box(double x_min, double y_min, double x_max, double y_max) {
  return BoundingBox{x_min, y_min, x_max, y_max};
}

}  // namespace

TEST_CASE("detection rows map fields directly") {
  const auto path = temp_path("dets.csv");
  write_file(path,
             "ImageID,LabelName,XMin,XMax,YMin,YMax,Score\n"
             "img1,Camera,0.1,0.9,0.2,0.8,0.97\n"
             "img1,Man,0,0.5,0,0.5\n");
  const auto vocab = make_vocab();
  const auto dets = read_detections(path, vocab);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].image_id == "img1");
  CHECK(dets[0].class_id == vocab.classes.id("Camera"));
  CHECK(dets[0].box == box(0.1, 0.2, 0.9, 0.8));
  CHECK(dets[0].confidence == 0.97);
  CHECK(dets[1].confidence == 1.0);  // score column optional
}

TEST_CASE("header-only detection file parses to an empty list") {
  const auto path = temp_path("empty.csv");
  write_file(path, "ImageID,LabelName,XMin,XMax,YMin,YMax,Score\n");
  CHECK(read_detections(path, make_vocab()).empty());
}

TEST_CASE("detection parse errors carry codes and line numbers") {
  const auto vocab = make_vocab();
  const auto path = temp_path("bad.csv");

  write_file(path, "img1,Man,0.9,0.1,0.2,0.8,0.5\n");
  CHECK_THROWS_WITH_AS(read_detections(path, vocab), doctest::Contains(":1:"), Error);
  try {
    read_detections(path, vocab);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BoxInvariantViolation);
  }

  write_file(path, "img1,Spaceship,0.1,0.9,0.2,0.8,0.5\n");
  try {
    read_detections(path, vocab);
    FAIL("expected UnknownClassName");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownClassName);
  }

  write_file(path, "img1,Man,zero,0.9,0.2,0.8,0.5\n");
  try {
    read_detections(path, vocab);
    FAIL("expected MalformedRow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedRow);
  }

  write_file(path, "img1,Man,0.1,0.9,0.2\n");
  try {
    read_detections(path, vocab);
    FAIL("expected MalformedRow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedRow);
  }
}

TEST_CASE("detections round trip exactly") {
  const auto vocab = make_vocab();
  Rng rng(41);
  std::vector<Detection> dets;
  for (int i = 0; i < 100; ++i) {
    Detection d;
    d.image_id = "img" + std::to_string(i % 7);
    d.class_id = static_cast<int>(rng.uniform_index(3));
    double x1 = rng.uniform(), x2 = rng.uniform(), y1 = rng.uniform(), y2 = rng.uniform();
    d.box = box(std::min(x1, x2), std::min(y1, y2), std::max(x1, x2), std::max(y1, y2));
    d.confidence = rng.uniform();
    dets.push_back(std::move(d));
  }
  const auto path = temp_path("roundtrip.csv");
  write_detections(dets, vocab, path);
  const auto back = read_detections(path, vocab);
  CHECK(back == dets);  // shortest-round-trip serialization is exact
}

TEST_CASE("relation ingest counts images per class once per image") {
  const auto vocab = make_vocab();
  const auto path = temp_path("rels.csv");
  // Image a: two distinct Man boxes; image b: one Man. n_Man must be 2.
  write_file(path,
             "ImageID,LabelName1,XMin1,XMax1,YMin1,YMax1,LabelName2,XMin2,XMax2,YMin2,YMax2,"
             "RelationshipLabel\n"
             "a,Man,0,0.2,0,0.2,Camera,0.3,0.5,0.3,0.5,holds\n"
             "a,Man,0.5,0.7,0.5,0.7,Camera,0.3,0.5,0.3,0.5,holds\n"
             "b,Man,0,0.2,0,0.2,Table,0.3,0.5,0.3,0.5,on\n");
  const auto set = read_relations(path, vocab);
  CHECK(set.images_per_class[vocab.classes.id("Man")] == 2.0);
  CHECK(set.images_per_class[vocab.classes.id("Camera")] == 1.0);
  CHECK(set.images_per_class[vocab.classes.id("Table")] == 1.0);
  CHECK(set.boxes.at("a").size() == 3);  // two men + one deduplicated camera
  CHECK(set.relations.at("a").size() == 2);
  CHECK(set.duplicate_relations_dropped == 0);
}

TEST_CASE("exact duplicate relations are dropped and counted") {
  const auto vocab = make_vocab();
  const auto path = temp_path("dups.csv");
  const std::string row = "a,Man,0,0.2,0,0.2,Camera,0.3,0.5,0.3,0.5,holds\n";
  write_file(path, row + row + row);
  const auto set = read_relations(path, vocab);
  CHECK(set.relations.at("a").size() == 1);
  CHECK(set.duplicate_relations_dropped == 2);
}

TEST_CASE("relation rows are validated against the vocabulary") {
  auto vocab = make_vocab();
  const auto path = temp_path("badrel.csv");

  write_file(path, "a,Man,0,0.2,0,0.2,Camera,0.3,0.5,0.3,0.5,orbits\n");
  try {
    read_relations(path, vocab);
    FAIL("expected UnknownTriplet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownTriplet);
  }

  // Attribute classes cannot be relation subjects.
  write_file(path, "a,Wooden,0,0,0,0,Camera,0.3,0.5,0.3,0.5,holds\n");
  try {
    read_relations(path, vocab);
    FAIL("expected MalformedRow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedRow);
  }

  // A nonempty triplet vocabulary licenses combinations.
  vocab.triplets.add({vocab.classes.id("Man"), vocab.predicates.id("holds"),
                      vocab.classes.id("Camera")});
  write_file(path, "a,Man,0,0.2,0,0.2,Table,0.3,0.5,0.3,0.5,holds\n");
  try {
    read_relations(path, vocab);
    FAIL("expected UnknownTriplet");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownTriplet);
  }
  write_file(path, "a,Man,0,0.2,0,0.2,Camera,0.3,0.5,0.3,0.5,holds\n");
  CHECK(read_relations(path, vocab).relations.at("a").size() == 1);
}

TEST_CASE("attribute objects keep zero boxes out of the box set") {
  const auto vocab = make_vocab();
  const auto path = temp_path("attr.csv");
  write_file(path,
             "a,Table,0.1,0.4,0.1,0.4,Wooden,0,0,0,0,is\n"
             "a,Man,0,0.2,0,0.2,Table,0.1,0.4,0.1,0.4,on\n");
  const auto set = read_relations(path, vocab);
  CHECK(set.relations.at("a").size() == 2);
  CHECK(set.boxes.at("a").size() == 2);  // Table + Man, no Wooden pseudo-box
  CHECK(set.images_per_class[vocab.classes.id("Wooden")] == 0.0);
}

TEST_CASE("relations round trip through write_relations") {
  const auto vocab = make_vocab();
  const auto path = temp_path("relrt.csv");
  const auto src = temp_path("relsrc.csv");
  write_file(src,
             "a,Man,0,0.25,0,0.25,Camera,0.3,0.5,0.3,0.5,holds\n"
             "b,Man,0.125,0.5,0,1,Table,0.3,0.5,0.3,0.5,on\n");
  const auto set = read_relations(src, vocab);
  write_relations(set.relations, vocab, path);
  const auto back = read_relations(path, vocab);
  CHECK(back.relations == set.relations);
  CHECK(back.duplicate_relations_dropped == 0);
}

TEST_CASE("relation predictions round trip with exact scores") {
  const auto vocab = make_vocab();
  Rng rng(42);
  std::vector<RelationInstance> instances;
  for (int i = 0; i < 100; ++i) {
    RelationInstance rel;
    rel.image_id = "img" + std::to_string(i % 5);
    rel.subject.image_id = rel.image_id;
    rel.subject.class_id = static_cast<int>(rng.uniform_index(3));
    rel.subject.box = box(0.1, 0.1, 0.5, 0.5);
    rel.subject.confidence = rng.uniform();
    rel.object = rel.subject;
    rel.object.class_id = static_cast<int>(rng.uniform_index(3));
    rel.object.box = box(0.4, 0.2, 0.9, 0.8);
    rel.object.confidence = rng.uniform();
    rel.predicate_id = static_cast<int>(rng.uniform_index(2));
    rel.score = rng.uniform();
    instances.push_back(std::move(rel));
  }
  const auto path = temp_path("preds.csv");
  write_relation_predictions(instances, vocab, path);
  const auto back = read_relation_predictions(path, vocab);
  REQUIRE(back.size() == instances.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i] == instances[i]);
    CHECK(back[i].score == doctest::Approx(instances[i].score).epsilon(1e-9));
  }

  write_relation_predictions({}, vocab, path);
  CHECK(read_relation_predictions(path, vocab).empty());
}

TEST_CASE("score tables round trip and reject duplicate keys") {
  const auto vocab = make_vocab();
  ScoreTable table;
  Rng rng(43);
  for (int i = 0; i < 50; ++i) {
    ScoreTable::Key key{"img" + std::to_string(i % 5), box_key(box(0, 0, 0.1 + 0.01 * i, 0.5)),
                        box_key(box(0.2, 0.2, 0.7, 0.9)), static_cast<int>(rng.uniform_index(2))};
    table.insert(key, rng.uniform());
  }
  const auto path = temp_path("scores.csv");
  write_score_table(table, vocab, path);
  const auto back = read_score_table(path, vocab);
  CHECK(back.entries() == table.entries());

  write_file(path,
             "ImageID,SubjKey,ObjKey,Predicate,Score\n"
             "a,k1,k2,holds,0.5\n"
             "a,k1,k2,holds,0.6\n");
  try {
    read_score_table(path, vocab);
    FAIL("expected DuplicateKey");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateKey);
  }
}

TEST_CASE("vocabulary round trips with attributes and triplets") {
  auto vocab = make_vocab();
  vocab.triplets.add({0, 0, 1});
  vocab.triplets.add({2, 2, 3});
  const auto path = temp_path("vocab.json");
  write_vocabulary(vocab, path);
  const auto back = read_vocabulary(path);
  CHECK(back.classes.size() == vocab.classes.size());
  for (int k = 0; k < vocab.classes.size(); ++k) {
    CHECK(back.classes.name(k) == vocab.classes.name(k));
    CHECK(back.classes.is_attribute(k) == vocab.classes.is_attribute(k));
  }
  CHECK(back.predicates.size() == vocab.predicates.size());
  CHECK(back.triplets.all() == vocab.triplets.all());
}

TEST_CASE("box keys quantize to six decimals") {
  CHECK(box_key(box(0.1, 0.2, 0.3, 0.4)) == "0.100000:0.300000:0.200000:0.400000");
  // Differences beyond 1e-6 stay distinct; ties within rounding collapse.
  CHECK(box_key(box(0.1000004, 0.2, 0.3, 0.4)) == box_key(box(0.1, 0.2, 0.3, 0.4)));
  CHECK(box_key(box(0.100001, 0.2, 0.3, 0.4)) != box_key(box(0.1, 0.2, 0.3, 0.4)));
}

TEST_CASE("subset keeps only requested images and recounts classes") {
  const auto vocab = make_vocab();
  const auto path = temp_path("subset.csv");
  write_file(path,
             "a,Man,0,0.2,0,0.2,Camera,0.3,0.5,0.3,0.5,holds\n"
             "b,Man,0,0.2,0,0.2,Table,0.3,0.5,0.3,0.5,on\n"
             "c,Table,0.1,0.4,0.1,0.4,Table,0.5,0.6,0.5,0.6,on\n");
  const auto all = read_relations(path, vocab);
  const auto sub = subset_annotations(all, {"a", "c"});
  CHECK(sub.boxes.size() == 2);
  CHECK(sub.relations.size() == 2);
  CHECK(sub.images_per_class[vocab.classes.id("Man")] == 1.0);
  CHECK(sub.images_per_class[vocab.classes.id("Table")] == 1.0);
  CHECK(sub.images_per_class[vocab.classes.id("Camera")] == 1.0);
  CHECK(all.image_ids() == std::vector<std::string>{"a", "b", "c"});
}
