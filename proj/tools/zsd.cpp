// zsd: command-line driver for split creation, synthetic data generation,
// training (baseline / sb / lab / dses), prediction dumps and evaluation.

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "zsd/data_io.hpp"
#include "zsd/embedding.hpp"
#include "zsd/evaluation.hpp"
#include "zsd/model.hpp"
#include "zsd/trainers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_out_root() {
  if (const char* env = std::getenv("ZSD_OUT")) return env;
  return "runs";
}

fs::path make_run_dir(const std::string& out_root, const std::string& run_name) {
  const fs::path dir = fs::path(out_root) / run_name;
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::vector<std::string> read_token_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open token list: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) tokens.push_back(line);
  }
  return tokens;
}

std::string format_double(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("number formatting failed");
  return std::string(buf, end);
}

std::string detections_tsv(const zsd::DatasetManifest& manifest,
                           const std::vector<std::vector<zsd::Detection>>& dets) {
  std::string out;
  for (std::size_t i = 0; i < manifest.images.size(); ++i) {
    auto sorted = dets[i];
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const zsd::Detection& a, const zsd::Detection& b) {
                       return a.score > b.score;
                     });
    for (const auto& d : sorted) {
      out += manifest.images[i].image_id;
      out += "\t" + d.label;
      out += "\t" + format_double(d.score);
      out += "\t" + format_double(d.box.x1);
      out += "\t" + format_double(d.box.y1);
      out += "\t" + format_double(d.box.x2);
      out += "\t" + format_double(d.box.y2);
      out += "\n";
    }
  }
  return out;
}

struct CommonArgs {
  std::string out_root = default_out_root();
  std::string run_name;

  void attach(CLI::App* cmd) {
    cmd->add_option("--out", out_root, "Output root directory (default $ZSD_OUT or ./runs)");
    cmd->add_option("--run-name", run_name, "Run directory name under the output root")
        ->required();
  }
};

// ---------------------------------------------------------------------------

struct SplitArgs {
  CommonArgs common;
  std::string classes_file;
  std::string embeddings_file;
  std::size_t dim = 300;
  int k = 10;
  double unseen_frac = 0.2;
  std::uint64_t seed = 0;
  int restarts = 20;
};

int run_split(const SplitArgs& a) {
  const auto dir = make_run_dir(a.common.out_root, a.common.run_name);
  const auto tokens = read_token_list(a.classes_file);
  const auto store = zsd::EmbeddingStore::load(a.embeddings_file, a.dim);
  const auto split = zsd::make_split(tokens, store, a.k, a.unseen_frac, a.seed, a.restarts);

  json config{{"command", "split"},
              {"classes", a.classes_file},
              {"embeddings", a.embeddings_file},
              {"dim", a.dim},
              {"k", a.k},
              {"unseen_frac", a.unseen_frac},
              {"seed", a.seed},
              {"restarts", a.restarts}};
  write_json(dir / "config.json", config);
  split.save((dir / "split.json").string());

  std::map<int, std::vector<std::string>> clusters;
  for (const auto& [token, c] : split.cluster_assignments) clusters[c].push_back(token);
  const std::set<std::string> unseen(split.unseen.begin(), split.unseen.end());
  for (const auto& [c, members] : clusters) {
    std::cout << "cluster " << c << " (" << members.size() << "):";
    for (const auto& t : members) {
      std::cout << " " << t << (unseen.count(t) ? "*" : "");
    }
    std::cout << "\n";
  }
  std::cout << "seen " << split.seen.size() << " / unseen " << split.unseen.size()
            << " (* marks unseen)\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  CommonArgs common;
  zsd::SyntheticParams params;
};

int run_synth(const SynthArgs& a) {
  const auto dir = make_run_dir(a.common.out_root, a.common.run_name);
  const auto& p = a.params;
  const auto task = zsd::generate_synthetic(p);

  json config{{"command", "synth"},
              {"seen", p.seen},
              {"unseen", p.unseen},
              {"open", p.open_gen},
              {"d1", p.d1},
              {"d2", p.d2},
              {"train_images", p.train_images},
              {"test_images", p.test_images},
              {"objects_per_image", p.objects_per_image},
              {"jitter_per_object", p.jitter_per_object},
              {"background_per_image", p.background_per_image},
              {"distractors_per_image", p.distractors_per_image},
              {"noise_sigma", p.noise_sigma},
              {"max_pairwise_cos", p.max_pairwise_cos},
              {"test_seen_fraction", p.test_seen_fraction},
              {"seed", p.seed}};
  write_json(dir / "config.json", config);

  // embeddings, full round-trip precision
  std::string embeddings;
  std::string eligible;
  for (const auto& t : task.store.tokens()) {
    embeddings += t;
    for (const double v : task.store.vector(t)) embeddings += " " + format_double(v);
    embeddings += "\n";
    eligible += t + "\n";
  }
  write_text(dir / "embeddings.txt", embeddings);
  write_text(dir / "eligible.txt", eligible);

  zsd::SplitSpec split;
  split.seed = p.seed;
  split.k_clusters = 0;  // fixed by construction, not clustered
  split.seen = task.seen;
  split.unseen = task.unseen;
  split.save((dir / "split.json").string());

  task.features.save((dir / "features.zsdf").string());
  task.train_manifest.save((dir / "train_manifest.json").string());
  task.test_manifest.save((dir / "test_manifest.json").string());
  write_json(dir / "truth.json", json{{"row_truth", task.row_truth}});

  std::cout << "synthetic task: " << task.features.rows() << " feature rows, "
            << task.train_manifest.images.size() << " train images, "
            << task.test_manifest.images.size() << " test images\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  CommonArgs common;
  std::string strategy = "baseline";
  std::string manifest_file;
  std::string features_file;
  std::string embeddings_file;
  std::string split_file;
  std::string eligible_file;  // open vocabulary source (lab)
  std::string aux_manifest_file;
  std::string aux_features_file;
  std::size_t dim = 300;
  int epochs = 10;
  int batch = 64;
  double lr = 1e-3;
  double margin = 1.0;
  double lambda = 1e-3;
  int negatives_per_image = 3;
  bool drop_unseen_images = false;
  std::uint64_t seed = 0;
  int niters = 5;
  double lab_fraction = 0.0;  // 0 -> 1/niters
  int lab_epochs = 1;
  int decay_every = 2;
  double decay_factor = 10.0;
};

int run_train(const TrainArgs& a) {
  const auto dir = make_run_dir(a.common.out_root, a.common.run_name);

  json config{{"command", "train"},
              {"strategy", a.strategy},
              {"manifest", a.manifest_file},
              {"features", a.features_file},
              {"embeddings", a.embeddings_file},
              {"split", a.split_file},
              {"eligible", a.eligible_file},
              {"aux_manifest", a.aux_manifest_file},
              {"aux_features", a.aux_features_file},
              {"dim", a.dim},
              {"epochs", a.epochs},
              {"batch", a.batch},
              {"lr", a.lr},
              {"margin", a.margin},
              {"lambda", a.lambda},
              {"negatives_per_image", a.negatives_per_image},
              {"drop_unseen_images", a.drop_unseen_images},
              {"seed", a.seed},
              {"niters", a.niters},
              {"lab_fraction", a.lab_fraction},
              {"lab_epochs", a.lab_epochs},
              {"decay_every", a.decay_every},
              {"decay_factor", a.decay_factor}};
  write_json(dir / "config.json", config);

  const auto store = zsd::EmbeddingStore::load(a.embeddings_file, a.dim);
  const auto split = zsd::SplitSpec::load(a.split_file);
  auto manifest = zsd::DatasetManifest::load(a.manifest_file);
  auto features = zsd::FeatureMatrix::load(a.features_file);
  manifest.validate(features.rows());
  if (a.drop_unseen_images) manifest = zsd::remove_images_containing(manifest, split.unseen);

  auto set = zsd::build_training_set(manifest, features, split.seen, a.negatives_per_image,
                                     a.seed);

  zsd::TrainConfig cfg;
  cfg.classes = split.seen;
  cfg.unseen_guard = split.unseen;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.learning_rate = a.lr;
  cfg.seed = a.seed;

  auto model = zsd::init_model(features.dim(), store.dim(), a.margin, a.lambda, a.seed);
  zsd::TrainReport report;

  if (a.strategy == "baseline") {
    report = zsd::train_baseline(model, features, set.samples, store, cfg);
  } else if (a.strategy == "sb") {
    auto samples = set.samples;
    for (const auto row : set.background_rows) {
      samples.push_back(zsd::TrainingSample{row, std::string(zsd::kBackgroundToken)});
    }
    report = zsd::train_sb(model, features, samples, store, cfg);
  } else if (a.strategy == "lab") {
    if (a.eligible_file.empty()) {
      throw std::runtime_error("--eligible is required for the lab strategy");
    }
    const auto vocab = zsd::build_open_vocabulary(store, split.seen, split.unseen,
                                                  read_token_list(a.eligible_file));
    const auto pretrain = zsd::train_baseline(model, features, set.samples, store, cfg);
    zsd::LabConfig lab;
    lab.niters = a.niters;
    if (a.lab_fraction > 0.0) lab.sample_fraction = a.lab_fraction;
    lab.epochs_per_iteration = a.lab_epochs;
    lab.decay_every = a.decay_every;
    lab.lr_decay_factor = a.decay_factor;
    report = zsd::train_lab(model, features, set.samples, set.background_rows, store,
                            vocab.open, cfg, lab);
    report.epoch_mean_loss.insert(report.epoch_mean_loss.begin(),
                                  pretrain.epoch_mean_loss.begin(),
                                  pretrain.epoch_mean_loss.end());
  } else if (a.strategy == "dses") {
    if (a.aux_manifest_file.empty() || a.aux_features_file.empty()) {
      throw std::runtime_error("--aux-manifest and --aux-features are required for dses");
    }
    auto aux_manifest = zsd::DatasetManifest::load(a.aux_manifest_file);
    const auto aux_features = zsd::FeatureMatrix::load(a.aux_features_file);
    aux_manifest.validate(aux_features.rows());

    // auxiliary classes: whatever the aux source annotates, minus unseen
    std::set<std::string> aux_class_set;
    for (const auto& img : aux_manifest.images) {
      for (const auto& g : img.ground_truth) aux_class_set.insert(g.label);
    }
    for (const auto& u : split.unseen) aux_class_set.erase(u);
    const std::vector<std::string> aux_classes(aux_class_set.begin(), aux_class_set.end());

    const auto aux_set = zsd::build_training_set(aux_manifest, aux_features, aux_classes,
                                                 a.negatives_per_image, a.seed + 1);
    const auto offset = static_cast<std::uint32_t>(features.rows());
    features.append(aux_features);
    const auto merged = zsd::augment_dses(split.seen, set.samples, aux_classes, aux_set.samples,
                                          split.unseen, offset);
    cfg.classes = merged.classes;
    report = zsd::train_baseline(model, features, merged.samples, store, cfg);
    report.strategy = "dses";
  } else {
    throw std::runtime_error("unknown strategy: " + a.strategy);
  }

  zsd::save_checkpoint(model, (dir / "model.zsdm").string());
  json jr = report.to_json();
  jr["counts"] = {{"positives", set.positives},
                  {"band_background", set.band_background},
                  {"zero_iou_background", set.zero_iou_background},
                  {"discarded", set.discarded},
                  {"excluded_not_seen", set.excluded_not_seen}};
  write_json(dir / "report.json", jr);
  write_text(dir / "report.txt", report.to_text());

  std::cout << "trained " << report.strategy << " on " << report.sample_count << " samples ("
            << report.background_count << " background), " << report.class_count << " classes\n";
  if (!report.epoch_mean_loss.empty()) {
    std::cout << "final mean loss " << report.epoch_mean_loss.back() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  CommonArgs common;
  std::string model_file;
  std::string manifest_file;
  std::string features_file;
  std::string embeddings_file;
  std::string split_file;
  std::string candidates = "unseen";  // unseen | seen | both
  std::size_t dim = 300;
  double score_min = 0.07;
  double nms_iou = 0.4;
  bool gzsd = false;
  double nt = 0.2;
  int workers = 1;
  bool dump_detections = false;
};

std::vector<std::string> candidate_classes(const std::string& which, const zsd::SplitSpec& split) {
  if (which == "unseen") return split.unseen;
  if (which == "seen") return split.seen;
  if (which == "both") {
    std::vector<std::string> all = split.seen;
    all.insert(all.end(), split.unseen.begin(), split.unseen.end());
    std::sort(all.begin(), all.end());
    return all;
  }
  throw std::runtime_error("unknown candidate set: " + which);
}

int run_eval(const EvalArgs& a) {
  const auto dir = make_run_dir(a.common.out_root, a.common.run_name);
  json config{{"command", "eval"},
              {"model", a.model_file},
              {"manifest", a.manifest_file},
              {"features", a.features_file},
              {"embeddings", a.embeddings_file},
              {"split", a.split_file},
              {"candidates", a.candidates},
              {"dim", a.dim},
              {"proposal_score_min", a.score_min},
              {"nms_iou", a.nms_iou},
              {"gzsd", a.gzsd},
              {"nt", a.nt},
              {"workers", a.workers},
              {"dump_detections", a.dump_detections}};
  write_json(dir / "config.json", config);

  const auto store = zsd::EmbeddingStore::load(a.embeddings_file, a.dim);
  const auto split = zsd::SplitSpec::load(a.split_file);
  const auto manifest = zsd::DatasetManifest::load(a.manifest_file);
  const auto features = zsd::FeatureMatrix::load(a.features_file);
  manifest.validate(features.rows());

  const auto model = zsd::load_checkpoint(a.model_file);
  if (model.d2() != store.dim()) {
    throw std::runtime_error("checkpoint embedding dimension " + std::to_string(model.d2()) +
                             " does not match the embedding file (" +
                             std::to_string(store.dim()) + ")");
  }
  if (model.d1() != features.dim()) {
    throw std::runtime_error("checkpoint feature dimension does not match the feature file");
  }

  zsd::EvalConfig cfg;
  cfg.proposal_score_min = a.score_min;
  cfg.nms_iou = a.nms_iou;
  cfg.workers = a.workers;

  const auto tokens = candidate_classes(a.candidates, split);
  const zsd::ClassEmbeddingSet candidates(store, tokens);

  // ground truth restricted to the classes under evaluation
  const auto images_for = [&](const std::vector<std::string>& labels) {
    const std::set<std::string> keep(labels.begin(), labels.end());
    std::vector<zsd::EvalImage> images;
    for (const auto& img : manifest.images) {
      zsd::EvalImage e;
      e.proposals = img.proposals;
      for (const auto& g : img.ground_truth) {
        if (keep.count(g.label)) e.ground_truth.push_back(g);
      }
      images.push_back(std::move(e));
    }
    return images;
  };

  const auto images = images_for(tokens);
  zsd::EvalResult result = zsd::evaluate_dataset(model, images, features, candidates, cfg);

  if (a.gzsd) {
    const zsd::ClassEmbeddingSet seen(store, split.seen);
    const zsd::ClassEmbeddingSet unseen(store, split.unseen);
    const auto gzsd_images = images_for(candidate_classes("both", split));
    const auto g = zsd::evaluate_gzsd(model, gzsd_images, features, seen, unseen, a.nt, cfg);
    result.has_gzsd = true;
    result.gzsd_threshold = g.gzsd_threshold;
    result.gzsd_seen_recall = g.gzsd_seen_recall;
    result.gzsd_unseen_recall = g.gzsd_unseen_recall;
    result.gzsd_harmonic_mean = g.gzsd_harmonic_mean;
  }

  const std::string table = zsd::format_table(result);
  write_text(dir / "metrics.txt", table);
  write_json(dir / "metrics.json", zsd::to_json(result));
  std::cout << table;

  if (a.dump_detections) {
    std::vector<std::vector<zsd::Detection>> dets(images.size());
    zsd::detail::parallel_for(images.size(), cfg.workers, [&](std::size_t i) {
      dets[i] = zsd::detect_image(model, images[i].proposals, features, candidates, cfg);
    });
    write_text(dir / "detections.tsv", detections_tsv(manifest, dets));
  }
  return 0;
}

// ---------------------------------------------------------------------------

int run_predict(const EvalArgs& a) {
  const auto dir = make_run_dir(a.common.out_root, a.common.run_name);
  json config{{"command", "predict"},
              {"model", a.model_file},
              {"manifest", a.manifest_file},
              {"features", a.features_file},
              {"embeddings", a.embeddings_file},
              {"split", a.split_file},
              {"candidates", a.candidates},
              {"dim", a.dim},
              {"proposal_score_min", a.score_min},
              {"nms_iou", a.nms_iou},
              {"workers", a.workers}};
  write_json(dir / "config.json", config);

  const auto store = zsd::EmbeddingStore::load(a.embeddings_file, a.dim);
  const auto split = zsd::SplitSpec::load(a.split_file);
  const auto manifest = zsd::DatasetManifest::load(a.manifest_file);
  const auto features = zsd::FeatureMatrix::load(a.features_file);
  manifest.validate(features.rows());
  const auto model = zsd::load_checkpoint(a.model_file);
  if (model.d2() != store.dim()) {
    throw std::runtime_error("checkpoint embedding dimension does not match the embedding file");
  }

  zsd::EvalConfig cfg;
  cfg.proposal_score_min = a.score_min;
  cfg.nms_iou = a.nms_iou;
  cfg.workers = a.workers;
  const zsd::ClassEmbeddingSet candidates(store, candidate_classes(a.candidates, split));

  std::vector<std::vector<zsd::Detection>> dets(manifest.images.size());
  zsd::detail::parallel_for(manifest.images.size(), cfg.workers, [&](std::size_t i) {
    dets[i] = zsd::detect_image(model, manifest.images[i].proposals, features, candidates, cfg);
  });
  write_text(dir / "detections.tsv", detections_tsv(manifest, dets));
  std::size_t total = 0;
  for (const auto& d : dets) total += d.size();
  std::cout << "wrote " << total << " detections for " << manifest.images.size() << " images\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-shot object detection toolkit"};
  app.require_subcommand(1);

  SplitArgs split_args;
  auto* split_cmd = app.add_subcommand("split", "Cluster class embeddings into a seen/unseen split");
  split_args.common.attach(split_cmd);
  split_cmd->add_option("--classes", split_args.classes_file, "Class list, one token per line")
      ->required();
  split_cmd->add_option("--embeddings", split_args.embeddings_file, "Embedding file")->required();
  split_cmd->add_option("--dim", split_args.dim, "Embedding dimension (default 300)");
  split_cmd->add_option("--k", split_args.k, "Number of clusters")->required();
  split_cmd->add_option("--unseen-frac", split_args.unseen_frac, "Unseen fraction per cluster");
  split_cmd->add_option("--seed", split_args.seed, "Random seed");
  split_cmd->add_option("--restarts", split_args.restarts, "Clustering restarts");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset with known truth");
  synth_args.common.attach(synth_cmd);
  synth_cmd->add_option("--seen", synth_args.params.seen, "Seen class count");
  synth_cmd->add_option("--unseen", synth_args.params.unseen, "Unseen class count");
  synth_cmd->add_option("--open", synth_args.params.open_gen, "Hidden background class count");
  synth_cmd->add_option("--d1", synth_args.params.d1, "Feature dimension");
  synth_cmd->add_option("--d2", synth_args.params.d2, "Embedding dimension");
  synth_cmd->add_option("--train-images", synth_args.params.train_images, "Training images");
  synth_cmd->add_option("--test-images", synth_args.params.test_images, "Test images");
  synth_cmd->add_option("--objects", synth_args.params.objects_per_image, "Objects per image");
  synth_cmd->add_option("--jitter", synth_args.params.jitter_per_object,
                        "Jittered duplicates per object");
  synth_cmd->add_option("--background", synth_args.params.background_per_image,
                        "Background boxes per training image");
  synth_cmd->add_option("--distractors", synth_args.params.distractors_per_image,
                        "Background boxes per test image");
  synth_cmd->add_option("--sigma", synth_args.params.noise_sigma, "Feature noise scale");
  synth_cmd->add_option("--max-cos", synth_args.params.max_pairwise_cos,
                        "Maximum pairwise class cosine");
  synth_cmd->add_option("--test-seen-frac", synth_args.params.test_seen_fraction,
                        "Share of seen-class objects in test images");
  synth_cmd->add_option("--seed", synth_args.params.seed, "Random seed");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a projection model");
  train_args.common.attach(train_cmd);
  train_cmd->add_option("--strategy", train_args.strategy, "baseline | sb | lab | dses")
      ->required();
  train_cmd->add_option("--manifest", train_args.manifest_file, "Training manifest")->required();
  train_cmd->add_option("--features", train_args.features_file, "Feature file")->required();
  train_cmd->add_option("--embeddings", train_args.embeddings_file, "Embedding file")->required();
  train_cmd->add_option("--split", train_args.split_file, "Split file")->required();
  train_cmd->add_option("--eligible", train_args.eligible_file,
                        "Eligible token list (open vocabulary for lab)");
  train_cmd->add_option("--aux-manifest", train_args.aux_manifest_file, "Auxiliary manifest (dses)");
  train_cmd->add_option("--aux-features", train_args.aux_features_file, "Auxiliary features (dses)");
  train_cmd->add_option("--dim", train_args.dim, "Embedding dimension (default 300)");
  train_cmd->add_option("--epochs", train_args.epochs, "Training epochs");
  train_cmd->add_option("--batch", train_args.batch, "Mini-batch size");
  train_cmd->add_option("--lr", train_args.lr, "Adam learning rate");
  train_cmd->add_option("--margin", train_args.margin, "Ranking-loss margin");
  train_cmd->add_option("--lambda", train_args.lambda, "Reconstruction weight");
  train_cmd->add_option("--negatives-per-image", train_args.negatives_per_image,
                        "Zero-IoU negatives sampled per image");
  train_cmd->add_flag("--drop-unseen-images", train_args.drop_unseen_images,
                      "Drop training images containing unseen objects");
  train_cmd->add_option("--seed", train_args.seed, "Random seed");
  train_cmd->add_option("--niters", train_args.niters, "LAB iterations");
  train_cmd->add_option("--lab-fraction", train_args.lab_fraction,
                        "Background fraction labeled per LAB iteration (default 1/niters)");
  train_cmd->add_option("--lab-epochs", train_args.lab_epochs, "Epochs per LAB iteration");
  train_cmd->add_option("--decay-every", train_args.decay_every,
                        "LAB iterations between learning-rate decays");
  train_cmd->add_option("--decay-factor", train_args.decay_factor, "LAB learning-rate decay");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with the detection protocol");
  eval_args.common.attach(eval_cmd);
  eval_cmd->add_option("--model", eval_args.model_file, "Checkpoint")->required();
  eval_cmd->add_option("--manifest", eval_args.manifest_file, "Test manifest")->required();
  eval_cmd->add_option("--features", eval_args.features_file, "Feature file")->required();
  eval_cmd->add_option("--embeddings", eval_args.embeddings_file, "Embedding file")->required();
  eval_cmd->add_option("--split", eval_args.split_file, "Split file")->required();
  eval_cmd->add_option("--candidates", eval_args.candidates, "unseen | seen | both");
  eval_cmd->add_option("--dim", eval_args.dim, "Embedding dimension (default 300)");
  eval_cmd->add_option("--score-min", eval_args.score_min, "Proposal score gate");
  eval_cmd->add_option("--nms-iou", eval_args.nms_iou, "NMS IoU threshold");
  eval_cmd->add_flag("--gzsd", eval_args.gzsd, "Also run the generalized protocol");
  eval_cmd->add_option("--nt", eval_args.nt, "GZSD novelty threshold");
  eval_cmd->add_option("--workers", eval_args.workers, "Evaluation worker threads");
  eval_cmd->add_flag("--dump-detections", eval_args.dump_detections, "Write detections.tsv");

  EvalArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Dump detections for a manifest");
  predict_args.common.attach(predict_cmd);
  predict_cmd->add_option("--model", predict_args.model_file, "Checkpoint")->required();
  predict_cmd->add_option("--manifest", predict_args.manifest_file, "Manifest")->required();
  predict_cmd->add_option("--features", predict_args.features_file, "Feature file")->required();
  predict_cmd->add_option("--embeddings", predict_args.embeddings_file, "Embedding file")
      ->required();
  predict_cmd->add_option("--split", predict_args.split_file, "Split file")->required();
  predict_cmd->add_option("--candidates", predict_args.candidates, "unseen | seen | both");
  predict_cmd->add_option("--dim", predict_args.dim, "Embedding dimension (default 300)");
  predict_cmd->add_option("--score-min", predict_args.score_min, "Proposal score gate");
  predict_cmd->add_option("--nms-iou", predict_args.nms_iou, "NMS IoU threshold");
  predict_cmd->add_option("--workers", predict_args.workers, "Worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (split_cmd->parsed()) return run_split(split_args);
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (predict_cmd->parsed()) return run_predict(predict_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
