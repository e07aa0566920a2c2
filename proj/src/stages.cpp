#include "vrd/stages.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "vrd/rng.hpp"

namespace vrd {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string fingerprint_hex(std::uint64_t fp) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(fp));
  return buf;
}

std::vector<std::string> id_list(const std::set<std::string>& ids) {
  return {ids.begin(), ids.end()};
}

bool instance_in_ground_truth(const RelationInstance& candidate,
                              const std::vector<RelationInstance>& relations) {
  for (const auto& rel : relations) {
    if (rel.predicate_id == candidate.predicate_id &&
        rel.subject.class_id == candidate.subject.class_id &&
        rel.object.class_id == candidate.object.class_id &&
        rel.subject.box == candidate.subject.box && rel.object.box == candidate.object.box) {
      return true;
    }
  }
  return false;
}

// Candidate features and labels for one predicate over a set of images.
struct PredicateData {
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> labels;
};

PredicateData collect_predicate_data(const AnnotationSet& annotations,
                                     const std::set<std::string>& images,
                                     const SemanticStats& stats, const Vocabulary& vocab,
                                     int predicate, const LabelMatch& match) {
  PredicateData data;
  for (const auto& [image_id, detections] : annotations.boxes) {
    if (!images.count(image_id)) continue;
    auto candidates = generate_candidates(detections, predicate, vocab.triplets);
    if (candidates.empty()) continue;
    static const std::vector<RelationInstance> kNoRelations;
    auto rel_it = annotations.relations.find(image_id);
    const auto& relations = rel_it == annotations.relations.end() ? kNoRelations : rel_it->second;
    auto labels = label_candidates(detections, candidates, relations, predicate, match);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      data.rows.push_back(
          extract_features(detections[candidates[i].first], detections[candidates[i].second], stats));
      data.labels.push_back(labels[i]);
    }
  }
  return data;
}

Eigen::MatrixXd to_matrix(const std::vector<Eigen::VectorXd>& rows, int width) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rows[i];
  return m;
}

Eigen::VectorXd to_vector(const std::vector<double>& values) {
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

SplitPlan make_split(const std::vector<std::string>& image_ids, double stage2_fraction,
                     double stage3_fraction, std::uint64_t seed) {
  if (stage2_fraction < 0.0 || stage3_fraction < 0.0 ||
      stage2_fraction + stage3_fraction > 1.0) {
    throw Error(ErrorCode::MalformedRow, "split fractions must be nonnegative and sum to <= 1");
  }
  std::vector<std::string> ids = image_ids;
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::swap(ids[i - 1], ids[rng.uniform_index(i)]);
  }

  const auto n = ids.size();
  auto count2 = static_cast<std::size_t>(std::llround(stage2_fraction * static_cast<double>(n)));
  auto count3 = static_cast<std::size_t>(std::llround(stage3_fraction * static_cast<double>(n)));
  count2 = std::min(count2, n);
  count3 = std::min(count3, n - count2);

  SplitPlan plan;
  plan.stage2_images.insert(ids.begin(), ids.begin() + count2);
  plan.stage3_images.insert(ids.begin() + count2, ids.begin() + count2 + count3);
  plan.validation_images.insert(ids.begin() + count2 + count3, ids.end());
  return plan;
}

void write_split(const SplitPlan& split, const std::string& path) {
  ordered_json doc;
  doc["stage2"] = id_list(split.stage2_images);
  doc["stage3"] = id_list(split.stage3_images);
  doc["validation"] = id_list(split.validation_images);
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out << doc.dump(2) << '\n';
}

SplitPlan read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path + " for reading");
  ordered_json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MalformedRow, path + ": bad split JSON: " + e.what());
  }
  SplitPlan plan;
  for (const auto& id : doc.at("stage2")) plan.stage2_images.insert(id.get<std::string>());
  for (const auto& id : doc.at("stage3")) plan.stage3_images.insert(id.get<std::string>());
  for (const auto& id : doc.at("validation")) plan.validation_images.insert(id.get<std::string>());
  for (const auto& id : plan.stage2_images) {
    if (plan.stage3_images.count(id) || plan.validation_images.count(id)) {
      throw Error(ErrorCode::DuplicateKey, path + ": image '" + id + "' in multiple parts");
    }
  }
  for (const auto& id : plan.stage3_images) {
    if (plan.validation_images.count(id)) {
      throw Error(ErrorCode::DuplicateKey, path + ": image '" + id + "' in multiple parts");
    }
  }
  return plan;
}

GbmConfig stage2_reference_config() {
  GbmConfig config;
  config.booster = Booster::dart;
  config.max_depth = 10;
  config.rounds = 5000;
  config.learning_rate = 0.1;
  config.subsample = 0.2;
  config.colsample_bytree = 0.2;
  config.gamma = 2.0;
  config.lambda = 1000.0;
  config.early_stopping_interval = 50;
  return config;
}

GbmConfig aggregator_reference_config() {
  GbmConfig config;
  config.booster = Booster::gbtree;
  config.max_depth = 8;
  config.rounds = 200;
  config.learning_rate = 0.1;
  config.early_stopping_interval = 50;
  return config;
}

RelationshipModelBank train_stage2(const AnnotationSet& annotations, const SemanticStats& stats,
                                   const SplitPlan& split, const Vocabulary& vocab,
                                   const Stage2Config& config) {
  FeatureLayout layout;
  layout.num_predicates = vocab.predicates.size();
  for (int p = 0; p < vocab.predicates.size(); ++p) {
    layout.predicate_names.push_back(vocab.predicates.name(p));
  }
  const auto slot_names = layout.slot_names();

  RelationshipModelBank bank;
  bank.slot_names = slot_names;
  bank.fingerprint = layout_fingerprint(slot_names);

  for (int predicate = 0; predicate < vocab.predicates.size(); ++predicate) {
    PredicateData train_data = collect_predicate_data(annotations, split.stage2_images, stats,
                                                      vocab, predicate, config.match);
    const auto positives = std::count(train_data.labels.begin(), train_data.labels.end(), 1.0);
    const auto negatives = static_cast<long>(train_data.labels.size()) - positives;
    if (train_data.rows.empty() || positives == 0 || negatives == 0) {
      bank.skipped.push_back(predicate);
      continue;
    }
    PredicateData valid_data = collect_predicate_data(annotations, split.validation_images, stats,
                                                      vocab, predicate, config.match);

    GbmConfig gbm_config = config.gbm;
    gbm_config.seed = config.gbm.seed + static_cast<std::uint64_t>(predicate);
    TrainResult result =
        train(to_matrix(train_data.rows, layout.size()), to_vector(train_data.labels),
              to_matrix(valid_data.rows, layout.size()), to_vector(valid_data.labels),
              gbm_config, slot_names);
    bank.models.emplace(predicate, std::move(result.model));
  }
  return bank;
}

std::vector<ScoredCandidate> score_candidates(
    const RelationshipModelBank& bank, const std::map<std::string, std::vector<Detection>>& boxes,
    const SemanticStats& stats, const TripletVocabulary& triplets, const ScoreConfig& config) {
  if (layout_fingerprint(bank.slot_names) != bank.fingerprint ||
      static_cast<int>(bank.slot_names.size()) != 19 + 3 * stats.num_predicates) {
    throw Error(ErrorCode::FingerprintMismatch,
                "model bank layout does not match the feature extractor");
  }
  for (const auto& [predicate, model] : bank.models) {
    if (model.fingerprint != bank.fingerprint) {
      throw Error(ErrorCode::FingerprintMismatch,
                  "model for predicate " + std::to_string(predicate) + " has a foreign layout");
    }
  }

  std::vector<ScoredCandidate> all;
  for (const auto& [image_id, detections] : boxes) {
    std::vector<ScoredCandidate> image_candidates;
    for (const auto& [predicate, model] : bank.models) {
      for (const auto& [si, oi] : generate_candidates(detections, predicate, triplets)) {
        ScoredCandidate candidate;
        candidate.features = extract_features(detections[si], detections[oi], stats);
        candidate.stage2_score = model.predict(candidate.features);
        if (candidate.stage2_score < config.floor) continue;
        candidate.instance.image_id = image_id;
        candidate.instance.subject = detections[si];
        candidate.instance.object = detections[oi];
        candidate.instance.predicate_id = predicate;
        candidate.instance.score = candidate.stage2_score;
        image_candidates.push_back(std::move(candidate));
      }
    }
    std::sort(image_candidates.begin(), image_candidates.end(),
              [](const ScoredCandidate& a, const ScoredCandidate& b) {
                if (a.stage2_score != b.stage2_score) return a.stage2_score > b.stage2_score;
                return a.instance < b.instance;
              });
    if (static_cast<int>(image_candidates.size()) > config.top_m) {
      image_candidates.resize(config.top_m);
    }
    for (auto& c : image_candidates) all.push_back(std::move(c));
  }
  return all;
}

std::vector<RelationInstance> score_pairs(const RelationshipModelBank& bank,
                                          const std::map<std::string, std::vector<Detection>>& boxes,
                                          const SemanticStats& stats,
                                          const TripletVocabulary& triplets,
                                          const ScoreConfig& config) {
  std::vector<RelationInstance> instances;
  for (auto& candidate : score_candidates(bank, boxes, stats, triplets, config)) {
    instances.push_back(std::move(candidate.instance));
  }
  return instances;
}

JoinResult join_visual_scores(std::vector<ScoredCandidate> candidates, const ScoreTable& table,
                              JoinPolicy policy) {
  JoinResult result;
  for (auto& candidate : candidates) {
    ScoreTable::Key key;
    key.image_id = candidate.instance.image_id;
    key.subject_key = box_key(candidate.instance.subject.box);
    key.object_key = box_key(candidate.instance.object.box);
    key.predicate_id = candidate.instance.predicate_id;
    if (auto score = table.find(key)) {
      candidate.visual_score = *score;
      result.joined.push_back(std::move(candidate));
    } else {
      result.missing.push_back(std::move(key));
      if (policy == JoinPolicy::Neutral) {
        candidate.visual_score = 0.5;
        result.joined.push_back(std::move(candidate));
      }
    }
  }
  return result;
}

std::map<int, AggregatorTrainingSet> build_aggregator_training(
    const RelationshipModelBank& bank, const AnnotationSet& annotations,
    const SemanticStats& stats, const SplitPlan& split, const Vocabulary& vocab,
    const ScoreTable& visual, JoinPolicy policy) {
  const ScoreConfig keep_everything{0.0, std::numeric_limits<int>::max()};

  auto collect = [&](const std::set<std::string>& images) {
    std::map<std::string, std::vector<Detection>> boxes;
    for (const auto& [image_id, detections] : annotations.boxes) {
      if (images.count(image_id)) boxes.emplace(image_id, detections);
    }
    auto scored = score_candidates(bank, boxes, stats, vocab.triplets, keep_everything);
    return join_visual_scores(std::move(scored), visual, policy).joined;
  };

  static const std::vector<RelationInstance> kNoRelations;
  auto label_of = [&](const ScoredCandidate& candidate) {
    auto it = annotations.relations.find(candidate.instance.image_id);
    const auto& relations = it == annotations.relations.end() ? kNoRelations : it->second;
    return instance_in_ground_truth(candidate.instance, relations) ? 1.0 : 0.0;
  };

  struct Rows {
    std::vector<Eigen::VectorXd> features;
    std::vector<double> labels;
  };
  std::map<int, Rows> train_rows, valid_rows;
  auto fill = [&](const std::set<std::string>& images, std::map<int, Rows>& sink) {
    for (const auto& candidate : collect(images)) {
      Eigen::VectorXd row(candidate.features.size() + 2);
      row[0] = candidate.stage2_score;
      row[1] = candidate.visual_score;
      row.tail(candidate.features.size()) = candidate.features;
      auto& rows = sink[candidate.instance.predicate_id];
      rows.features.push_back(std::move(row));
      rows.labels.push_back(label_of(candidate));
    }
  };
  fill(split.stage3_images, train_rows);
  fill(split.validation_images, valid_rows);

  std::map<int, AggregatorTrainingSet> data;
  for (auto& [predicate, rows] : train_rows) {
    if (rows.features.empty()) continue;
    const int width = static_cast<int>(rows.features.front().size());
    AggregatorTrainingSet set;
    set.features = to_matrix(rows.features, width);
    set.labels = to_vector(rows.labels);
    auto it = valid_rows.find(predicate);
    if (it != valid_rows.end() && !it->second.features.empty()) {
      set.valid_features = to_matrix(it->second.features, width);
      set.valid_labels = to_vector(it->second.labels);
    } else {
      set.valid_features = Eigen::MatrixXd(0, width);
      set.valid_labels = Eigen::VectorXd(0);
    }
    data.emplace(predicate, std::move(set));
  }
  return data;
}

AggregatorModel train_aggregator(const std::map<int, AggregatorTrainingSet>& data,
                                 const std::vector<std::string>& pair_slot_names,
                                 const GbmConfig& config) {
  if (config.booster != Booster::gbtree) {
    throw Error(ErrorCode::MalformedRow, "the aggregator uses the gbtree booster");
  }
  if (config.max_depth > 8) {
    throw Error(ErrorCode::MalformedRow, "aggregator depth must be <= 8");
  }
  AggregatorModel aggregator;
  aggregator.slot_names = {"stage2_score", "visual_score"};
  aggregator.slot_names.insert(aggregator.slot_names.end(), pair_slot_names.begin(),
                               pair_slot_names.end());
  aggregator.fingerprint = layout_fingerprint(aggregator.slot_names);

  for (const auto& [predicate, set] : data) {
    GbmConfig gbm_config = config;
    gbm_config.seed = config.seed + static_cast<std::uint64_t>(predicate);
    TrainResult result = train(set.features, set.labels, set.valid_features, set.valid_labels,
                               gbm_config, aggregator.slot_names);
    aggregator.models.emplace(predicate, std::move(result.model));
  }
  return aggregator;
}

std::vector<RelationInstance> apply_aggregator(const AggregatorModel& aggregator,
                                               const std::vector<ScoredCandidate>& candidates) {
  std::vector<RelationInstance> out;
  out.reserve(candidates.size());
  for (const auto& candidate : candidates) {
    RelationInstance instance = candidate.instance;
    auto it = aggregator.models.find(candidate.instance.predicate_id);
    if (it != aggregator.models.end()) {
      Eigen::VectorXd row(candidate.features.size() + 2);
      row[0] = candidate.stage2_score;
      row[1] = candidate.visual_score;
      row.tail(candidate.features.size()) = candidate.features;
      instance.score = it->second.predict(row);
    } else {
      instance.score = candidate.stage2_score;
    }
    out.push_back(std::move(instance));
  }
  return out;
}

void write_bank(const RelationshipModelBank& bank, const SemanticStats& stats,
                const Vocabulary& vocab, const std::string& config_echo_json,
                const std::string& dir) {
  std::filesystem::create_directories(dir);
  ordered_json manifest;
  manifest["fingerprint"] = fingerprint_hex(bank.fingerprint);
  manifest["slot_names"] = bank.slot_names;
  manifest["predicates"] = ordered_json::array();
  for (const auto& [predicate, model] : bank.models) {
    const std::string file = "model_p" + std::to_string(predicate) + ".gbm1";
    ordered_json entry;
    entry["name"] = vocab.predicates.name(predicate);
    entry["file"] = file;
    manifest["predicates"].push_back(std::move(entry));
    save_model(model, dir + "/" + file);
  }
  manifest["skipped"] = ordered_json::array();
  for (int predicate : bank.skipped) {
    manifest["skipped"].push_back(vocab.predicates.name(predicate));
  }
  manifest["config"] =
      config_echo_json.empty() ? ordered_json(nullptr) : ordered_json::parse(config_echo_json);

  std::ofstream out(dir + "/manifest.json");
  if (!out) throw Error(ErrorCode::IoFailure, "cannot open " + dir + "/manifest.json for writing");
  out << manifest.dump(2) << '\n';
  write_semantic_stats(stats, dir + "/stats.json");
}

LoadedBank read_bank(const std::string& dir, const Vocabulary& vocab) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + dir + "/manifest.json for reading");
  ordered_json manifest;
  try {
    in >> manifest;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::MalformedRow, dir + ": bad manifest JSON: " + e.what());
  }

  LoadedBank loaded;
  loaded.bank.fingerprint = std::stoull(manifest.at("fingerprint").get<std::string>(), nullptr, 16);
  loaded.bank.slot_names = manifest.at("slot_names").get<std::vector<std::string>>();
  for (const auto& entry : manifest.at("predicates")) {
    const auto name = entry.at("name").get<std::string>();
    auto predicate = vocab.predicates.find(name);
    if (!predicate) {
      throw Error(ErrorCode::UnknownTriplet, dir + ": predicate '" + name + "' not in vocabulary");
    }
    GbmModel model = load_model(dir + "/" + entry.at("file").get<std::string>());
    if (model.fingerprint != loaded.bank.fingerprint) {
      throw Error(ErrorCode::FingerprintMismatch,
                  dir + ": model '" + name + "' does not match the bank layout");
    }
    loaded.bank.models.emplace(*predicate, std::move(model));
  }
  for (const auto& name : manifest.at("skipped")) {
    auto predicate = vocab.predicates.find(name.get<std::string>());
    if (predicate) loaded.bank.skipped.push_back(*predicate);
  }
  loaded.stats = read_semantic_stats(dir + "/stats.json");
  return loaded;
}

}  // namespace vrd
