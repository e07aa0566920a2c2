#include "vrd/demo.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "vrd/features.hpp"
#include "vrd/geometry.hpp"
#include "vrd/rng.hpp"
#include "vrd/sampler.hpp"

namespace vrd {
namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kNearDistance = 0.25;
constexpr int kNearCoinPercent = 85;   // P(hidden coin) for "near" pairs
constexpr int kMisleadPercent = 50;    // share of pairs with an inverted visual score

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

bool hash_coin(const std::string& salt, const std::string& image_id, const std::string& subject_key,
               const std::string& object_key, int percent) {
  return fnv1a(salt + '|' + image_id + '|' + subject_key + '|' + object_key) % 100 <
         static_cast<std::uint64_t>(percent);
}

BoundingBox random_box(Rng& rng) {
  const double cx = rng.uniform(0.08, 0.92);
  const double cy = rng.uniform(0.08, 0.92);
  const double w = rng.uniform(0.05, 0.3);
  const double h = rng.uniform(0.05, 0.3);
  BoundingBox box;
  box.x_min = std::max(0.0, cx - 0.5 * w);
  box.x_max = std::min(1.0, cx + 0.5 * w);
  box.y_min = std::max(0.0, cy - 0.5 * h);
  box.y_max = std::min(1.0, cy + 0.5 * h);
  return box;
}

std::string format_cell(double value, bool defined) {
  char buf[16];
  if (defined) {
    std::snprintf(buf, sizeof(buf), "%9.4f", value);
  } else {
    std::snprintf(buf, sizeof(buf), "%9s", "--");
  }
  return buf;
}

}  // namespace

GbmConfig demo_stage2_config() {
  GbmConfig config;
  config.booster = Booster::gbtree;
  config.max_depth = 4;
  config.rounds = 40;
  config.learning_rate = 0.3;
  config.early_stopping_interval = 10;
  return config;
}

GbmConfig demo_aggregator_config() {
  GbmConfig config;
  config.booster = Booster::gbtree;
  config.max_depth = 4;
  config.rounds = 40;
  config.learning_rate = 0.3;
  config.early_stopping_interval = 10;
  return config;
}

DemoCorpus generate_demo_corpus(const DemoConfig& config) {
  if (config.images <= 0) {
    throw Error(ErrorCode::EmptyInput, "demo needs at least one image");
  }
  DemoCorpus corpus;
  for (const char* name : {"person", "car", "dog", "tree"}) corpus.vocab.classes.add(name);
  for (const char* name : {"above", "left_of", "near"}) corpus.vocab.predicates.add(name);
  const int num_classes = corpus.vocab.classes.size();
  const int num_predicates = corpus.vocab.predicates.size();
  for (int s = 0; s < num_classes; ++s) {
    for (int o = 0; o < num_classes; ++o) {
      for (int p = 0; p < num_predicates; ++p) corpus.vocab.triplets.add({s, p, o});
    }
  }
  const int above = 0, left_of = 1, near = 2;

  corpus.annotations.images_per_class = Eigen::ArrayXd::Zero(num_classes);
  Rng rng(config.seed);
  for (int i = 0; i < config.images; ++i) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "synth_%04d", i);
    const std::string image_id = id_buf;

    const std::size_t count = 5 + rng.uniform_index(3);
    std::vector<Detection> detections;
    for (std::size_t b = 0; b < count; ++b) {
      Detection d;
      d.image_id = image_id;
      d.class_id = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(num_classes)));
      d.box = random_box(rng);
      detections.push_back(std::move(d));
    }

    std::vector<RelationInstance> relations;
    for (std::size_t s = 0; s < detections.size(); ++s) {
      for (std::size_t o = 0; o < detections.size(); ++o) {
        if (s == o) continue;
        const Detection& subject = detections[s];
        const Detection& object = detections[o];
        const std::string subject_key = box_key(subject.box);
        const std::string object_key = box_key(object.box);
        const double dx = object.box.center_x() - subject.box.center_x();
        const double dy = object.box.center_y() - subject.box.center_y();
        const bool close = center_distance(subject.box, object.box) < kNearDistance;
        const bool coin = hash_coin("coin", image_id, subject_key, object_key, kNearCoinPercent);

        const bool truth[3] = {dy > 0.0, dx > 0.0, close && coin};
        for (int p = 0; p < num_predicates; ++p) {
          if (truth[p]) {
            RelationInstance rel;
            rel.image_id = image_id;
            rel.subject = subject;
            rel.object = object;
            rel.predicate_id = p;
            relations.push_back(std::move(rel));
          }
        }

        // Synthetic visual model: reveals the hidden coin for "near", actively
        // contradicts the geometry on a hash-chosen half of the pairs for the
        // two geometric predicates, and sits on the fence otherwise.
        for (int p = 0; p < num_predicates; ++p) {
          ScoreTable::Key key{image_id, subject_key, object_key, p};
          double visual;
          if (p == near) {
            visual = coin ? 0.9 : 0.1;
          } else {
            const bool mislead = hash_coin(p == above ? "flip_a" : "flip_l", image_id, subject_key,
                                           object_key, kMisleadPercent);
            visual = mislead ? (truth[p] ? 0.0 : 1.0) : 0.5;
          }
          corpus.visual.insert(key, visual);
        }
      }
    }

    std::set<int> classes;
    for (const auto& d : detections) classes.insert(d.class_id);
    for (int c : classes) corpus.annotations.images_per_class[c] += 1.0;
    corpus.annotations.boxes.emplace(image_id, std::move(detections));
    if (!relations.empty()) corpus.annotations.relations.emplace(image_id, std::move(relations));
  }
  return corpus;
}

double DemoReport::variant_map(const std::string& name) const {
  for (const auto& variant : variants) {
    if (variant.name == name) return variant.result.map_rel;
  }
  throw Error(ErrorCode::MalformedRow, "unknown demo variant: " + name);
}

DemoReport run_demo(const DemoConfig& config) {
  if (config.out_dir.empty()) {
    throw Error(ErrorCode::IoFailure, "demo needs an output directory");
  }
  std::filesystem::create_directories(config.out_dir);
  const std::string dir = config.out_dir;

  // Generate, persist, and re-ingest the corpus so the file formats are on the
  // execution path and not just test fixtures.
  DemoCorpus generated = generate_demo_corpus(config);
  write_vocabulary(generated.vocab, dir + "/vocabulary.json");
  std::vector<Detection> all_boxes;
  for (const auto& [image_id, detections] : generated.annotations.boxes) {
    all_boxes.insert(all_boxes.end(), detections.begin(), detections.end());
  }
  write_detections(all_boxes, generated.vocab, dir + "/boxes.csv");
  write_relations(generated.annotations.relations, generated.vocab, dir + "/relations.csv");
  write_score_table(generated.visual, generated.vocab, dir + "/visual_scores.csv");

  const Vocabulary vocab = read_vocabulary(dir + "/vocabulary.json");
  const AnnotationSet annotations =
      read_annotations(dir + "/boxes.csv", dir + "/relations.csv", vocab);
  const ScoreTable visual = read_score_table(dir + "/visual_scores.csv", vocab);

  SplitPlan split = make_split(annotations.image_ids(), config.stage2_fraction,
                               config.stage3_fraction, config.seed + 1);
  write_split(split, dir + "/split.json");

  // Class-balanced sampling picks the stage-2 training images from its pool.
  AnnotationSet stage2_pool = subset_annotations(annotations, split.stage2_images);
  SamplerConfig sampler_config;
  sampler_config.seed = config.seed + 2;
  ImageSampler sampler(stage2_pool, sampler_config);
  std::set<std::string> train_images;
  for (const auto& image_id : sampler.sample_images(2 * stage2_pool.boxes.size())) {
    train_images.insert(image_id);
  }

  std::set<std::string> fit_images = split.stage2_images;
  fit_images.insert(split.stage3_images.begin(), split.stage3_images.end());
  const SemanticStats stats =
      fit_semantic_stats(subset_annotations(annotations, fit_images), vocab.predicates.size());

  SplitPlan train_plan;
  train_plan.stage2_images = train_images;
  train_plan.stage3_images = split.stage3_images;
  train_plan.validation_images = split.validation_images;

  Stage2Config stage2_config;
  stage2_config.gbm = config.stage2_gbm;
  stage2_config.gbm.seed = config.seed + 1000;
  stage2_config.match = LabelMatch::exact_boxes();
  const RelationshipModelBank bank = train_stage2(annotations, stats, train_plan, vocab, stage2_config);

  ordered_json echo;
  echo["seed"] = config.seed;
  echo["images"] = config.images;
  echo["stage2_rounds"] = config.stage2_gbm.rounds;
  echo["aggregator_rounds"] = config.aggregator_gbm.rounds;
  write_bank(bank, stats, vocab, echo.dump(), dir + "/bank");

  GbmConfig aggregator_config = config.aggregator_gbm;
  aggregator_config.seed = config.seed + 2000;
  const auto aggregator_data =
      build_aggregator_training(bank, annotations, stats, split, vocab, visual, JoinPolicy::Neutral);
  const AggregatorModel aggregator =
      train_aggregator(aggregator_data, bank.slot_names, aggregator_config);

  // Score the held-out images and line up the four report variants.
  std::map<std::string, std::vector<Detection>> validation_boxes;
  for (const auto& [image_id, detections] : annotations.boxes) {
    if (split.validation_images.count(image_id)) validation_boxes.emplace(image_id, detections);
  }
  auto scored = score_candidates(bank, validation_boxes, stats, vocab.triplets, config.score);
  auto joined = join_visual_scores(std::move(scored), visual, JoinPolicy::Neutral).joined;

  std::vector<RelationInstance> stage2_preds, visual_preds, average_preds;
  for (const auto& candidate : joined) {
    stage2_preds.push_back(candidate.instance);
    RelationInstance v = candidate.instance;
    v.score = candidate.visual_score;
    visual_preds.push_back(std::move(v));
    RelationInstance a = candidate.instance;
    a.score = average_baseline(candidate.stage2_score, candidate.visual_score);
    average_preds.push_back(std::move(a));
  }
  std::vector<RelationInstance> stage3_preds = apply_aggregator(aggregator, joined);
  write_relation_predictions(stage3_preds, vocab, dir + "/predictions.csv");

  std::vector<RelationInstance> ground_truth;
  for (const auto& image_id : split.validation_images) {
    auto it = annotations.relations.find(image_id);
    if (it == annotations.relations.end()) continue;
    ground_truth.insert(ground_truth.end(), it->second.begin(), it->second.end());
  }

  const MatchConfig match;
  DemoReport report;
  report.variants.push_back({"stage2", map_rel(stage2_preds, ground_truth, match)});
  report.variants.push_back({"visual", map_rel(visual_preds, ground_truth, match)});
  report.variants.push_back({"average", map_rel(average_preds, ground_truth, match)});
  report.variants.push_back({"stage3", map_rel(stage3_preds, ground_truth, match)});
  for (int p = 0; p < vocab.predicates.size(); ++p) {
    report.predicate_names.push_back(vocab.predicates.name(p));
  }
  report.images = config.images;
  report.sampled_training_images = static_cast<int>(train_images.size());
  report.scored_candidates = static_cast<int>(joined.size());
  for (int p : bank.skipped) report.skipped_predicates.push_back(vocab.predicates.name(p));

  // Fixed-width table: one row per predicate, one column per variant.
  std::string table = "predicate    ";
  for (const auto& variant : report.variants) {
    char head[16];
    std::snprintf(head, sizeof(head), "%9s", variant.name.c_str());
    table += head;
  }
  table += '\n';
  for (int p = 0; p < vocab.predicates.size(); ++p) {
    char row[16];
    std::snprintf(row, sizeof(row), "%-13s", vocab.predicates.name(p).c_str());
    table += row;
    for (const auto& variant : report.variants) {
      auto it = variant.result.per_predicate.find(p);
      const bool defined = it != variant.result.per_predicate.end() && it->second.defined;
      table += format_cell(defined ? it->second.ap : 0.0, defined);
    }
    table += '\n';
  }
  table += "mAP          ";
  for (const auto& variant : report.variants) table += format_cell(variant.result.map_rel, true);
  table += '\n';
  report.table = std::move(table);

  ordered_json doc;
  doc["images"] = report.images;
  doc["seed"] = config.seed;
  doc["sampled_training_images"] = report.sampled_training_images;
  doc["scored_candidates"] = report.scored_candidates;
  doc["skipped_predicates"] = report.skipped_predicates;
  doc["variants"] = ordered_json::object();
  for (const auto& variant : report.variants) {
    ordered_json entry;
    entry["map_rel"] = variant.result.map_rel;
    entry["per_predicate"] = ordered_json::object();
    for (const auto& [p, curve] : variant.result.per_predicate) {
      entry["per_predicate"][vocab.predicates.name(p)] =
          curve.defined ? ordered_json(curve.ap) : ordered_json(nullptr);
    }
    doc["variants"][variant.name] = std::move(entry);
  }
  report.json = doc.dump(2) + "\n";

  std::ofstream out(dir + "/report.json");
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + dir + "/report.json for writing");
  out << report.json;
  return report;
}

}  // namespace vrd
