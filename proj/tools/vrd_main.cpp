// Single entry point: every pipeline stage as a subcommand. Exit codes:
// 0 success, 1 data error (JSON on stderr), 2 usage error.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vrd/checkpoint.hpp"
#include "vrd/demo.hpp"
#include "vrd/ensemble.hpp"
#include "vrd/eval.hpp"
#include "vrd/features.hpp"
#include "vrd/gbm.hpp"
#include "vrd/io.hpp"
#include "vrd/sampler.hpp"
#include "vrd/stages.hpp"
#include "vrd/types.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw vrd::Error(vrd::ErrorCode::IoFailure, "cannot open " + path + " for writing");
  out << text;
}

// Every subcommand drops its exact configuration beside its main output.
void write_echo(const ordered_json& doc, const std::string& path) {
  write_text(doc.dump(2) + "\n", path);
}

std::map<std::string, std::vector<vrd::Detection>> group_by_image(
    const std::vector<vrd::Detection>& detections) {
  std::map<std::string, std::vector<vrd::Detection>> grouped;
  for (const auto& d : detections) grouped[d.image_id].push_back(d);
  return grouped;
}

std::vector<std::string> read_class_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw vrd::Error(vrd::ErrorCode::IoFailure, "cannot open " + path + " for reading");
  ordered_json doc;
  try {
    in >> doc;
  } catch (const std::exception& e) {
    throw vrd::Error(vrd::ErrorCode::MalformedRow, path + ": bad JSON: " + e.what());
  }
  const ordered_json* list = nullptr;
  if (doc.is_array()) {
    list = &doc;
  } else if (doc.is_object() && doc.contains("classes")) {
    list = &doc["classes"];
  } else {
    throw vrd::Error(vrd::ErrorCode::MalformedRow,
                     path + ": expected a class-name array or a vocabulary object");
  }
  std::vector<std::string> names;
  for (const auto& entry : *list) {
    if (entry.is_string()) {
      names.push_back(entry.get<std::string>());
    } else if (entry.is_object() && entry.contains("name")) {
      names.push_back(entry["name"].get<std::string>());
    } else {
      throw vrd::Error(vrd::ErrorCode::MalformedRow, path + ": class entries need a name");
    }
  }
  return names;
}

vrd::HeadSpec parse_head(const std::string& spec) {
  std::vector<std::string> parts;
  std::string::size_type start = 0;
  while (true) {
    auto colon = spec.find(':', start);
    if (colon == std::string::npos) {
      parts.push_back(spec.substr(start));
      break;
    }
    parts.push_back(spec.substr(start, colon - start));
    start = colon + 1;
  }
  if (parts.size() < 2 || parts.size() > 4 || parts[0].empty() || parts[1].empty()) {
    throw vrd::Error(vrd::ErrorCode::MalformedRow,
                     "--head expects weight:bias[:class_axis[:rows_per_class]], got '" + spec + "'");
  }
  vrd::HeadSpec head;
  head.weight_name = parts[0];
  head.bias_name = parts[1];
  try {
    if (parts.size() > 2) head.class_axis = std::stoi(parts[2]);
    if (parts.size() > 3) head.rows_per_class = std::stoi(parts[3]);
  } catch (const std::exception&) {
    throw vrd::Error(vrd::ErrorCode::MalformedRow, "--head has non-numeric axis fields: " + spec);
  }
  if (head.class_axis != 0 && head.class_axis != 1) {
    throw vrd::Error(vrd::ErrorCode::MalformedRow, "--head class_axis must be 0 or 1");
  }
  if (head.rows_per_class < 1) {
    throw vrd::Error(vrd::ErrorCode::MalformedRow, "--head rows_per_class must be >= 1");
  }
  return head;
}

// --- sample ----------------------------------------------------------------

struct SampleOpts {
  std::string relations, vocab, out;
  std::uint64_t cap = 3000;
  bool no_cap = false;
  std::size_t count = 0;
  std::uint64_t seed = 0;
};

void run_sample(const SampleOpts& o) {
  const vrd::Vocabulary vocab = vrd::read_vocabulary(o.vocab);
  const vrd::AnnotationSet annotations = vrd::read_relations(o.relations, vocab);
  vrd::SamplerConfig config;
  config.cap = o.no_cap ? std::nullopt : std::optional<std::uint64_t>(o.cap);
  config.seed = o.seed;
  vrd::ImageSampler sampler(annotations, config);
  std::string lines;
  for (const auto& image_id : sampler.sample_images(o.count)) {
    lines += image_id;
    lines += '\n';
  }
  write_text(lines, o.out);

  ordered_json echo{{"command", "sample"},
                    {"annotations", o.relations},
                    {"vocab", o.vocab},
                    {"cap_n", o.no_cap ? ordered_json(nullptr) : ordered_json(o.cap)},
                    {"count", o.count},
                    {"seed", o.seed},
                    {"out", o.out}};
  write_echo(echo, o.out + ".run.json");
  std::printf("sampled %zu images\n", o.count);
}

// --- pwt ---------------------------------------------------------------------

struct PwtOpts {
  std::string src, map, head, task_classes, attribute_pairs, out;
  double init_std = 0.01;
  std::uint64_t seed = 0;
};

void run_pwt(const PwtOpts& o) {
  const vrd::TensorStore source = vrd::read_store(o.src);
  const vrd::HeadSpec head = parse_head(o.head);

  ordered_json echo{{"command", "pwt"}, {"src", o.src}, {"head", o.head}, {"out", o.out}};
  vrd::TensorStore result;
  if (!o.attribute_pairs.empty()) {
    std::ifstream in(o.attribute_pairs);
    if (!in) {
      throw vrd::Error(vrd::ErrorCode::IoFailure, "cannot open " + o.attribute_pairs);
    }
    ordered_json doc;
    try {
      in >> doc;
    } catch (const std::exception& e) {
      throw vrd::Error(vrd::ErrorCode::MalformedRow, o.attribute_pairs + ": bad JSON: " + e.what());
    }
    std::vector<std::pair<int, int>> pairs;
    for (const auto& entry : doc) {
      if (!entry.is_array() || entry.size() != 2) {
        throw vrd::Error(vrd::ErrorCode::MalformedRow,
                         o.attribute_pairs + ": entries must be [object_class, attribute] pairs");
      }
      pairs.emplace_back(entry[0].get<int>(), entry[1].get<int>());
    }
    result = vrd::expand_attribute_head(source, head, pairs);
    echo["attribute_pairs"] = o.attribute_pairs;
    std::printf("expanded head to %zu pair classes\n", pairs.size());
  } else {
    const auto task_names = read_class_names(o.task_classes);
    const vrd::ClassMap map = vrd::read_class_map(o.map, task_names);
    vrd::InitSpec init;
    init.stddev = o.init_std;
    init.seed = o.seed;
    result = vrd::partial_weight_transfer(source, head, map,
                                          static_cast<int>(task_names.size()), init);
    echo["map"] = o.map;
    echo["task_classes"] = o.task_classes;
    echo["init_std"] = o.init_std;
    echo["seed"] = o.seed;
    const std::size_t transferred = map.task_to_source.size();
    std::printf("transferred %zu, initialized %zu\n", transferred,
                task_names.size() - transferred);
  }
  vrd::write_store(result, o.out);
  write_echo(echo, o.out + ".run.json");
}

// --- nms ---------------------------------------------------------------------

struct NmsOpts {
  std::vector<std::string> models;
  std::string vocab, out;
  double iou = 0.5;
  double score_floor = 0.001;
};

void run_nms(const NmsOpts& o) {
  const vrd::Vocabulary vocab = vrd::read_vocabulary(o.vocab);
  std::vector<vrd::ModelOutput> outputs;
  for (const auto& spec : o.models) {
    const auto colon = spec.rfind(':');
    vrd::ModelOutput output;
    if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
      output.model_id = spec;
    } else {
      output.model_id = spec.substr(0, colon);
      try {
        output.weight = std::stod(spec.substr(colon + 1));
      } catch (const std::exception&) {
        // No numeric suffix: the whole spec is a path with default weight.
        output.model_id = spec;
        output.weight = 1.0;
      }
    }
    output.detections = vrd::read_detections(output.model_id, vocab);
    outputs.push_back(std::move(output));
  }
  vrd::NmsConfig config;
  config.iou_threshold = o.iou;
  config.score_floor = o.score_floor;
  const auto fused = vrd::weighted_nms(outputs, config);
  vrd::write_detections(fused, vocab, o.out);

  ordered_json echo{{"command", "nms"},
                    {"models", o.models},
                    {"vocab", o.vocab},
                    {"iou", o.iou},
                    {"score_floor", o.score_floor},
                    {"out", o.out}};
  write_echo(echo, o.out + ".run.json");
  std::printf("fused %zu detections from %zu models\n", fused.size(), outputs.size());
}

// --- train / score / aggregate ----------------------------------------------

struct GbmFlags {
  std::string booster;
  int rounds = -1;
  int depth = -1;
  double learning_rate = -1.0;
  double subsample = -1.0;
  double colsample = -1.0;
  double gamma = -1.0;
  double lambda = -1.0;
  double dart_drop = -1.0;
  int early_stop = -1;

  void apply(vrd::GbmConfig& config) const {
    if (!booster.empty()) {
      config.booster = booster == "dart" ? vrd::Booster::dart : vrd::Booster::gbtree;
    }
    if (rounds >= 0) config.rounds = rounds;
    if (depth >= 0) config.max_depth = depth;
    if (learning_rate >= 0) config.learning_rate = learning_rate;
    if (subsample >= 0) config.subsample = subsample;
    if (colsample >= 0) config.colsample_bytree = colsample;
    if (gamma >= 0) config.gamma = gamma;
    if (lambda >= 0) config.lambda = lambda;
    if (dart_drop >= 0) config.dart_drop_rate = dart_drop;
    if (early_stop >= 0) config.early_stopping_interval = early_stop;
  }

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--booster", booster, "gbtree or dart")
        ->check(CLI::IsMember({"gbtree", "dart"}));
    cmd->add_option("--rounds", rounds, "boosting rounds");
    cmd->add_option("--depth", depth, "maximum tree depth");
    cmd->add_option("--lr", learning_rate, "learning rate");
    cmd->add_option("--subsample", subsample, "row subsample fraction");
    cmd->add_option("--colsample", colsample, "per-tree column subsample fraction");
    cmd->add_option("--gamma", gamma, "minimum split gain");
    cmd->add_option("--lambda", lambda, "L2 leaf regularizer");
    cmd->add_option("--dart-drop", dart_drop, "dart tree drop rate");
    cmd->add_option("--early-stop-interval", early_stop, "validation check interval");
  }

  ordered_json echo(const vrd::GbmConfig& config) const {
    return ordered_json{{"booster", config.booster == vrd::Booster::dart ? "dart" : "gbtree"},
                        {"rounds", config.rounds},
                        {"depth", config.max_depth},
                        {"lr", config.learning_rate},
                        {"subsample", config.subsample},
                        {"colsample", config.colsample_bytree},
                        {"gamma", config.gamma},
                        {"lambda", config.lambda},
                        {"dart_drop", config.dart_drop_rate},
                        {"early_stop_interval", config.early_stopping_interval},
                        {"seed", config.seed}};
  }
};

std::set<int> resolve_predicates(const std::string& csv, const vrd::Vocabulary& vocab) {
  std::set<int> ids;
  std::string::size_type start = 0;
  while (start <= csv.size()) {
    auto comma = csv.find(',', start);
    if (comma == std::string::npos) comma = csv.size();
    const std::string name = csv.substr(start, comma - start);
    if (!name.empty()) ids.insert(vocab.predicates.id(name));
    start = comma + 1;
  }
  if (ids.empty()) {
    throw vrd::Error(vrd::ErrorCode::MalformedRow, "--predicates lists no names");
  }
  return ids;
}

struct TrainOpts {
  std::string boxes, relations, vocab, split, out, predicates;
  GbmFlags gbm;
  std::uint64_t seed = 0;
};

void run_train(const TrainOpts& o) {
  const vrd::Vocabulary vocab = vrd::read_vocabulary(o.vocab);
  const vrd::AnnotationSet annotations = vrd::read_annotations(o.boxes, o.relations, vocab);
  const vrd::SplitPlan split = vrd::read_split(o.split);

  std::set<std::string> fit_images = split.stage2_images;
  fit_images.insert(split.stage3_images.begin(), split.stage3_images.end());
  const vrd::SemanticStats stats = vrd::fit_semantic_stats(
      vrd::subset_annotations(annotations, fit_images), vocab.predicates.size());

  vrd::Stage2Config config;
  config.gbm = vrd::stage2_reference_config();
  o.gbm.apply(config.gbm);
  config.gbm.seed = o.seed;

  vrd::RelationshipModelBank bank = vrd::train_stage2(annotations, stats, split, vocab, config);
  if (!o.predicates.empty()) {
    const auto keep = resolve_predicates(o.predicates, vocab);
    for (auto it = bank.models.begin(); it != bank.models.end();) {
      it = keep.count(it->first) ? std::next(it) : bank.models.erase(it);
    }
  }

  ordered_json echo{{"command", "train"}, {"boxes", o.boxes},   {"relations", o.relations},
                    {"vocab", o.vocab},   {"split", o.split},   {"out", o.out},
                    {"gbm", o.gbm.echo(config.gbm)}};
  if (!o.predicates.empty()) echo["predicates"] = o.predicates;
  vrd::write_bank(bank, stats, vocab, echo.dump(), o.out);
  write_echo(echo, o.out + "/run.json");
  std::printf("trained %zu models (%zu skipped)\n", bank.models.size(), bank.skipped.size());
}

struct ScoreOpts {
  std::string bank, vocab, boxes, out, predicates;
  double floor = 0.001;
  int top_m = 200;
};

void run_score(const ScoreOpts& o) {
  const vrd::Vocabulary vocab = vrd::read_vocabulary(o.vocab);
  vrd::LoadedBank loaded = vrd::read_bank(o.bank, vocab);
  if (!o.predicates.empty()) {
    const auto keep = resolve_predicates(o.predicates, vocab);
    for (auto it = loaded.bank.models.begin(); it != loaded.bank.models.end();) {
      it = keep.count(it->first) ? std::next(it) : loaded.bank.models.erase(it);
    }
  }
  const auto boxes = group_by_image(vrd::read_detections(o.boxes, vocab));
  vrd::ScoreConfig config{o.floor, o.top_m};
  const auto instances =
      vrd::score_pairs(loaded.bank, boxes, loaded.stats, vocab.triplets, config);
  vrd::write_relation_predictions(instances, vocab, o.out);

  ordered_json echo{{"command", "score"}, {"bank", o.bank},   {"vocab", o.vocab},
                    {"boxes", o.boxes},   {"floor", o.floor}, {"top_m", o.top_m},
                    {"out", o.out}};
  if (!o.predicates.empty()) echo["predicates"] = o.predicates;
  write_echo(echo, o.out + ".run.json");
  std::printf("scored %zu candidate pairs\n", instances.size());
}

struct AggregateOpts {
  std::string bank, vocab, boxes, relations, split, visual, out;
  std::string policy = "neutral";
  std::string apply_to = "validation";
  double floor = 0.001;
  int top_m = 200;
  GbmFlags gbm;
  std::uint64_t seed = 0;
};

void run_aggregate(const AggregateOpts& o) {
  const vrd::Vocabulary vocab = vrd::read_vocabulary(o.vocab);
  vrd::LoadedBank loaded = vrd::read_bank(o.bank, vocab);
  const vrd::AnnotationSet annotations = vrd::read_annotations(o.boxes, o.relations, vocab);
  const vrd::SplitPlan split = vrd::read_split(o.split);
  const vrd::ScoreTable visual = vrd::read_score_table(o.visual, vocab);
  const vrd::JoinPolicy policy =
      o.policy == "strict" ? vrd::JoinPolicy::Strict : vrd::JoinPolicy::Neutral;

  vrd::GbmConfig config = vrd::aggregator_reference_config();
  o.gbm.apply(config);
  config.seed = o.seed;

  const auto data = vrd::build_aggregator_training(loaded.bank, annotations, loaded.stats, split,
                                                   vocab, visual, policy);
  const vrd::AggregatorModel aggregator =
      vrd::train_aggregator(data, loaded.bank.slot_names, config);

  std::set<std::string> targets;
  if (o.apply_to == "validation") {
    targets = split.validation_images;
  } else if (o.apply_to == "stage3") {
    targets = split.stage3_images;
  } else {
    for (const auto& [image_id, detections] : annotations.boxes) targets.insert(image_id);
  }
  std::map<std::string, std::vector<vrd::Detection>> boxes;
  for (const auto& [image_id, detections] : annotations.boxes) {
    if (targets.count(image_id)) boxes.emplace(image_id, detections);
  }
  auto scored = vrd::score_candidates(loaded.bank, boxes, loaded.stats, vocab.triplets,
                                      vrd::ScoreConfig{o.floor, o.top_m});
  auto join = vrd::join_visual_scores(std::move(scored), visual, policy);
  const auto predictions = vrd::apply_aggregator(aggregator, join.joined);
  vrd::write_relation_predictions(predictions, vocab, o.out);

  ordered_json echo{{"command", "aggregate"},
                    {"bank", o.bank},
                    {"vocab", o.vocab},
                    {"boxes", o.boxes},
                    {"relations", o.relations},
                    {"split", o.split},
                    {"visual_scores", o.visual},
                    {"policy", o.policy},
                    {"apply_to", o.apply_to},
                    {"floor", o.floor},
                    {"top_m", o.top_m},
                    {"gbm", o.gbm.echo(config)},
                    {"out", o.out}};
  write_echo(echo, o.out + ".run.json");
  std::printf("aggregated %zu predictions (%zu visual misses)\n", predictions.size(),
              join.missing.size());
}

// --- eval ---------------------------------------------------------------------

struct EvalOpts {
  std::string pred, gt, vocab, json_out;
  double iou = 0.5;
};

void run_eval(const EvalOpts& o) {
  const vrd::Vocabulary vocab = vrd::read_vocabulary(o.vocab);
  const auto predictions = vrd::read_relation_predictions(o.pred, vocab);
  const vrd::AnnotationSet gt = vrd::read_relations(o.gt, vocab);
  std::vector<vrd::RelationInstance> ground_truth;
  for (const auto& [image_id, relations] : gt.relations) {
    ground_truth.insert(ground_truth.end(), relations.begin(), relations.end());
  }
  vrd::MatchConfig match;
  match.iou_threshold = o.iou;
  const vrd::EvalResult result = vrd::map_rel(predictions, ground_truth, match);
  std::fputs(vrd::format_eval_table(result, vocab.predicates).c_str(), stdout);
  if (!o.json_out.empty()) {
    write_text(vrd::eval_report_json(result, vocab.predicates, match), o.json_out);
    ordered_json echo{{"command", "eval"},
                      {"pred", o.pred},
                      {"gt", o.gt},
                      {"vocab", o.vocab},
                      {"iou", o.iou},
                      {"json_out", o.json_out}};
    write_echo(echo, o.json_out + ".run.json");
  }
}

// --- features / crops ----------------------------------------------------------

struct FeaturesOpts {
  std::string boxes, relations, vocab, out, stats_out, predicate;
};

void run_features(const FeaturesOpts& o) {
  const vrd::Vocabulary vocab = vrd::read_vocabulary(o.vocab);
  const vrd::AnnotationSet annotations = vrd::read_annotations(o.boxes, o.relations, vocab);
  const vrd::SemanticStats stats = vrd::fit_semantic_stats(annotations, vocab.predicates.size());

  vrd::FeatureLayout layout;
  layout.num_predicates = vocab.predicates.size();
  for (int p = 0; p < vocab.predicates.size(); ++p) {
    layout.predicate_names.push_back(vocab.predicates.name(p));
  }

  std::vector<vrd::FeatureRow> rows;
  static const std::vector<vrd::RelationInstance> kNoRelations;
  for (const auto& [image_id, detections] : annotations.boxes) {
    auto rel_it = annotations.relations.find(image_id);
    const auto& relations =
        rel_it == annotations.relations.end() ? kNoRelations : rel_it->second;
    if (!o.predicate.empty()) {
      const int predicate = vocab.predicates.id(o.predicate);
      const auto candidates = vrd::generate_candidates(detections, predicate, vocab.triplets);
      const auto labels = vrd::label_candidates(detections, candidates, relations, predicate,
                                                vrd::LabelMatch::exact_boxes());
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto& [si, oi] = candidates[i];
        rows.push_back({image_id, vrd::box_key(detections[si].box),
                        vrd::box_key(detections[oi].box),
                        vrd::extract_features(detections[si], detections[oi], stats), labels[i]});
      }
    } else {
      std::set<std::pair<std::size_t, std::size_t>> pairs;
      for (int p = 0; p < vocab.predicates.size(); ++p) {
        for (const auto& pair : vrd::generate_candidates(detections, p, vocab.triplets)) {
          pairs.insert(pair);
        }
      }
      for (const auto& [si, oi] : pairs) {
        rows.push_back({image_id, vrd::box_key(detections[si].box),
                        vrd::box_key(detections[oi].box),
                        vrd::extract_features(detections[si], detections[oi], stats),
                        std::nullopt});
      }
    }
  }
  vrd::write_feature_csv(rows, layout, o.out);
  if (!o.stats_out.empty()) vrd::write_semantic_stats(stats, o.stats_out);

  ordered_json echo{{"command", "features"}, {"boxes", o.boxes},   {"relations", o.relations},
                    {"vocab", o.vocab},      {"out", o.out}};
  if (!o.predicate.empty()) echo["predicate"] = o.predicate;
  if (!o.stats_out.empty()) echo["stats_out"] = o.stats_out;
  write_echo(echo, o.out + ".run.json");
  std::printf("wrote %zu feature rows\n", rows.size());
}

struct CropsOpts {
  std::string relations, vocab, out;
};

void run_crops(const CropsOpts& o) {
  const vrd::Vocabulary vocab = vrd::read_vocabulary(o.vocab);
  const vrd::AnnotationSet annotations = vrd::read_relations(o.relations, vocab);
  std::vector<vrd::CropRecord> records;
  for (const auto& [image_id, relations] : annotations.relations) {
    for (const auto& rel : relations) {
      records.push_back({image_id, vrd::box_key(rel.subject.box), vrd::box_key(rel.object.box),
                         vrd::visual_crop(rel.subject.box, rel.object.box)});
    }
  }
  vrd::write_crops_jsonl(records, o.out);

  ordered_json echo{
      {"command", "crops"}, {"relations", o.relations}, {"vocab", o.vocab}, {"out", o.out}};
  write_echo(echo, o.out + ".run.json");
  std::printf("wrote %zu crops\n", records.size());
}

// --- demo ------------------------------------------------------------------------

struct DemoOpts {
  std::string out;
  int images = 500;
  int stage2_rounds = 40;
  int aggregator_rounds = 40;
  std::uint64_t seed = 7;
};

void run_demo_cmd(const DemoOpts& o) {
  vrd::DemoConfig config;
  config.images = o.images;
  config.seed = o.seed;
  config.out_dir = o.out;
  config.stage2_gbm.rounds = o.stage2_rounds;
  config.aggregator_gbm.rounds = o.aggregator_rounds;
  const vrd::DemoReport report = vrd::run_demo(config);
  std::fputs(report.table.c_str(), stdout);

  ordered_json echo{{"command", "demo"},
                    {"out", o.out},
                    {"images", o.images},
                    {"seed", o.seed},
                    {"stage2_rounds", o.stage2_rounds},
                    {"aggregator_rounds", o.aggregator_rounds}};
  write_echo(echo, o.out + "/demo.run.json");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"visual relationship detection pipeline"};
  app.require_subcommand(1);

  SampleOpts sample;
  auto* cmd_sample = app.add_subcommand("sample", "draw images class-balanced");
  cmd_sample->add_option("--annotations", sample.relations, "relations CSV")->required();
  cmd_sample->add_option("--vocab", sample.vocab, "vocabulary JSON")->required();
  cmd_sample->add_option("--cap-n", sample.cap, "per-class image cap N");
  cmd_sample->add_flag("--no-cap", sample.no_cap, "disable the cap");
  cmd_sample->add_option("--count", sample.count, "number of draws")->required();
  cmd_sample->add_option("--seed", sample.seed, "rng seed");
  cmd_sample->add_option("--out", sample.out, "output image-id list")->required();
  cmd_sample->callback([&] { run_sample(sample); });

  PwtOpts pwt;
  auto* cmd_pwt = app.add_subcommand("pwt", "partial weight transfer between checkpoints");
  cmd_pwt->add_option("--src", pwt.src, "source checkpoint")->required();
  cmd_pwt->add_option("--map", pwt.map, "class-map JSON");
  cmd_pwt->add_option("--head", pwt.head, "weight:bias[:class_axis[:rows_per_class]]")->required();
  cmd_pwt->add_option("--task-classes", pwt.task_classes, "task class-name JSON");
  cmd_pwt->add_option("--init-std", pwt.init_std, "stddev for unmapped rows");
  cmd_pwt->add_option("--attribute-pairs", pwt.attribute_pairs,
                      "JSON [[object_class, attribute], ...] for head expansion");
  cmd_pwt->add_option("--seed", pwt.seed, "rng seed");
  cmd_pwt->add_option("--out", pwt.out, "output checkpoint")->required();
  cmd_pwt->callback([&] {
    if (pwt.attribute_pairs.empty() && (pwt.map.empty() || pwt.task_classes.empty())) {
      throw CLI::RequiredError("--map and --task-classes (or --attribute-pairs)");
    }
    run_pwt(pwt);
  });

  NmsOpts nms;
  auto* cmd_nms = app.add_subcommand("nms", "weighted non-maximum suppression over model outputs");
  cmd_nms->add_option("--model", nms.models, "detection CSV as path[:weight], repeatable")
      ->required();
  cmd_nms->add_option("--vocab", nms.vocab, "vocabulary JSON")->required();
  cmd_nms->add_option("--iou", nms.iou, "clustering IoU threshold");
  cmd_nms->add_option("--score-floor", nms.score_floor, "drop fused boxes below this confidence");
  cmd_nms->add_option("--out", nms.out, "output detection CSV")->required();
  cmd_nms->callback([&] { run_nms(nms); });

  TrainOpts train;
  auto* cmd_train = app.add_subcommand("train", "train per-predicate pair models");
  cmd_train->add_option("--boxes", train.boxes, "box CSV")->required();
  cmd_train->add_option("--relations", train.relations, "relations CSV")->required();
  cmd_train->add_option("--vocab", train.vocab, "vocabulary JSON")->required();
  cmd_train->add_option("--split", train.split, "split JSON")->required();
  cmd_train->add_option("--predicates", train.predicates, "comma-separated predicate filter");
  cmd_train->add_option("--seed", train.seed, "rng seed");
  cmd_train->add_option("--out", train.out, "output model-bank directory")->required();
  train.gbm.add_flags(cmd_train);
  cmd_train->callback([&] { run_train(train); });

  ScoreOpts score;
  auto* cmd_score = app.add_subcommand("score", "score candidate pairs with a model bank");
  cmd_score->add_option("--bank", score.bank, "model-bank directory")->required();
  cmd_score->add_option("--vocab", score.vocab, "vocabulary JSON")->required();
  cmd_score->add_option("--boxes", score.boxes, "box CSV to score")->required();
  cmd_score->add_option("--predicates", score.predicates, "comma-separated predicate filter");
  cmd_score->add_option("--floor", score.floor, "prune scores below this");
  cmd_score->add_option("--top-m", score.top_m, "keep at most this many pairs per image");
  cmd_score->add_option("--out", score.out, "output predictions CSV")->required();
  cmd_score->callback([&] { run_score(score); });

  AggregateOpts aggregate;
  auto* cmd_aggregate =
      app.add_subcommand("aggregate", "train the final-stage model and rescore predictions");
  cmd_aggregate->add_option("--bank", aggregate.bank, "model-bank directory")->required();
  cmd_aggregate->add_option("--vocab", aggregate.vocab, "vocabulary JSON")->required();
  cmd_aggregate->add_option("--boxes", aggregate.boxes, "box CSV")->required();
  cmd_aggregate->add_option("--relations", aggregate.relations, "relations CSV")->required();
  cmd_aggregate->add_option("--split", aggregate.split, "split JSON")->required();
  cmd_aggregate->add_option("--visual-scores", aggregate.visual, "visual score CSV")->required();
  cmd_aggregate->add_option("--policy", aggregate.policy, "visual-join policy")
      ->check(CLI::IsMember({"neutral", "strict"}));
  cmd_aggregate->add_option("--apply-to", aggregate.apply_to, "image set to rescore")
      ->check(CLI::IsMember({"validation", "stage3", "all"}));
  cmd_aggregate->add_option("--floor", aggregate.floor, "prune scores below this");
  cmd_aggregate->add_option("--top-m", aggregate.top_m, "keep at most this many pairs per image");
  cmd_aggregate->add_option("--seed", aggregate.seed, "rng seed");
  cmd_aggregate->add_option("--out", aggregate.out, "output predictions CSV")->required();
  aggregate.gbm.add_flags(cmd_aggregate);
  cmd_aggregate->callback([&] { run_aggregate(aggregate); });

  EvalOpts evalopts;
  auto* cmd_eval = app.add_subcommand("eval", "triplet average precision against ground truth");
  cmd_eval->add_option("--pred", evalopts.pred, "predictions CSV")->required();
  cmd_eval->add_option("--gt", evalopts.gt, "ground-truth relations CSV")->required();
  cmd_eval->add_option("--vocab", evalopts.vocab, "vocabulary JSON")->required();
  cmd_eval->add_option("--iou", evalopts.iou, "box match IoU threshold");
  cmd_eval->add_option("--json-out", evalopts.json_out, "machine-readable report path");
  cmd_eval->callback([&] { run_eval(evalopts); });

  FeaturesOpts features;
  auto* cmd_features = app.add_subcommand("features", "export pair features as CSV");
  cmd_features->add_option("--boxes", features.boxes, "box CSV")->required();
  cmd_features->add_option("--relations", features.relations, "relations CSV")->required();
  cmd_features->add_option("--vocab", features.vocab, "vocabulary JSON")->required();
  cmd_features->add_option("--predicate", features.predicate,
                           "emit labels for this predicate's candidates");
  cmd_features->add_option("--stats-out", features.stats_out, "write fitted statistics JSON");
  cmd_features->add_option("--out", features.out, "output CSV")->required();
  cmd_features->callback([&] { run_features(features); });

  CropsOpts crops;
  auto* cmd_crops = app.add_subcommand("crops", "export union-box crops for annotated pairs");
  cmd_crops->add_option("--relations", crops.relations, "relations CSV")->required();
  cmd_crops->add_option("--vocab", crops.vocab, "vocabulary JSON")->required();
  cmd_crops->add_option("--out", crops.out, "output JSONL")->required();
  cmd_crops->callback([&] { run_crops(crops); });

  DemoOpts demo;
  auto* cmd_demo = app.add_subcommand("demo", "synthetic end-to-end pipeline run");
  cmd_demo->add_option("--out", demo.out, "output directory")->required();
  cmd_demo->add_option("--images", demo.images, "corpus size");
  cmd_demo->add_option("--stage2-rounds", demo.stage2_rounds, "pair-model boosting rounds");
  cmd_demo->add_option("--aggregator-rounds", demo.aggregator_rounds,
                       "final-stage boosting rounds");
  cmd_demo->add_option("--seed", demo.seed, "rng seed");
  cmd_demo->callback([&] { run_demo_cmd(demo); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const vrd::Error& e) {
    ordered_json err{{"error", e.name()}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    ordered_json err{{"error", "Internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
