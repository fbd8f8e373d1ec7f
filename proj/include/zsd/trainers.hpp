#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsd/features.hpp"
#include "zsd/model.hpp"
#include "zsd/rng.hpp"

namespace zsd {

// One labeled training region: a row in the feature matrix plus its class
// token (or the reserved background token).
struct TrainingSample {
  std::uint32_t feature_row = 0;
  std::string label;
};

struct TrainConfig {
  std::vector<std::string> classes;       // ordered training class tokens (no background)
  std::vector<std::string> unseen_guard;  // labels that must never be trained on
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct LabConfig {
  int niters = 5;
  // Fraction of the initial background pool labeled per iteration; unset
  // means 1/niters so the pool is consumed across the run.
  std::optional<double> sample_fraction;
  int epochs_per_iteration = 1;
  double lr_decay_factor = 10.0;
  int decay_every = 2;

  double resolved_fraction() const {
    const double f = sample_fraction.value_or(1.0 / static_cast<double>(niters));
    if (f <= 0.0 || f > 1.0) throw std::invalid_argument("LabConfig: fraction must be in (0, 1]");
    return f;
  }
};

struct LabIterationReport {
  int iteration = 0;  // 1-based
  double learning_rate = 0.0;
  std::size_t newly_labeled = 0;
  std::size_t accumulated = 0;
  std::map<std::string, std::size_t> label_counts;
  std::vector<std::pair<std::uint32_t, std::string>> assignments;  // (feature row, label)
};

struct TrainReport {
  std::string strategy;
  std::vector<double> epoch_mean_loss;
  std::size_t sample_count = 0;
  std::size_t background_count = 0;
  std::size_t class_count = 0;
  std::vector<LabIterationReport> lab_iterations;
  bool lab_pool_shortfall = false;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["strategy"] = strategy;
    j["epoch_mean_loss"] = epoch_mean_loss;
    j["sample_count"] = sample_count;
    j["background_count"] = background_count;
    j["class_count"] = class_count;
    if (!lab_iterations.empty() || strategy == "lab") {
      nlohmann::json iters = nlohmann::json::array();
      for (const auto& it : lab_iterations) {
        nlohmann::json ji;
        ji["iteration"] = it.iteration;
        ji["learning_rate"] = it.learning_rate;
        ji["newly_labeled"] = it.newly_labeled;
        ji["accumulated"] = it.accumulated;
        ji["label_counts"] = it.label_counts;
        nlohmann::json assigned = nlohmann::json::array();
        for (const auto& [row, label] : it.assignments) {
          assigned.push_back({{"feature_row", row}, {"label", label}});
        }
        ji["assignments"] = assigned;
        iters.push_back(ji);
      }
      j["lab_iterations"] = iters;
      j["lab_pool_shortfall"] = lab_pool_shortfall;
    }
    return j;
  }

  std::string to_text() const {
    std::ostringstream out;
    out << "strategy = " << strategy << "\n";
    out << "classes = " << class_count << "\n";
    out << "samples = " << sample_count << "\n";
    out << "background_samples = " << background_count << "\n";
    for (std::size_t e = 0; e < epoch_mean_loss.size(); ++e) {
      out << "epoch_" << e + 1 << "_mean_loss = " << epoch_mean_loss[e] << "\n";
    }
    for (const auto& it : lab_iterations) {
      out << "lab_iter_" << it.iteration << "_lr = " << it.learning_rate << "\n";
      out << "lab_iter_" << it.iteration << "_newly_labeled = " << it.newly_labeled << "\n";
      out << "lab_iter_" << it.iteration << "_accumulated = " << it.accumulated << "\n";
    }
    if (!lab_iterations.empty()) {
      out << "lab_pool_shortfall = " << (lab_pool_shortfall ? "true" : "false") << "\n";
    }
    return out.str();
  }
};

namespace detail {

// Leakage guard: runs before the first optimizer step of every strategy.
inline void verify_labels(std::span<const TrainingSample> samples,
                          const std::vector<std::string>& allowed,
                          const std::vector<std::string>& unseen_guard,
                          bool background_allowed) {
  const std::set<std::string> allowed_set(allowed.begin(), allowed.end());
  const std::set<std::string> guard_set(unseen_guard.begin(), unseen_guard.end());
  for (const auto& s : samples) {
    if (guard_set.count(s.label)) {
      throw std::invalid_argument("leakage: training sample labeled with unseen class '" +
                                  s.label + "'");
    }
    if (s.label == kBackgroundToken) {
      if (!background_allowed) {
        throw std::invalid_argument("background sample not allowed by this strategy");
      }
      continue;
    }
    if (!allowed_set.count(s.label)) {
      throw std::invalid_argument("training sample labeled outside the class set: '" + s.label +
                                  "'");
    }
  }
}

// Shuffled mini-batch Adam loop. Batch gradient is the mean of per-sample
// gradients, accumulated in sample order; single-threaded and deterministic.
inline std::vector<double> run_epochs(ProjectionModel& model, const FeatureMatrix& features,
                                      std::span<const TrainingSample> samples,
                                      const ClassEmbeddingSet& classes, int epochs,
                                      int batch_size, double learning_rate, Rng& rng) {
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  std::vector<double> epoch_losses;
  if (samples.empty() || epochs <= 0) return epoch_losses;

  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  AdamState adam(model.d2(), model.d1(), learning_rate);
  Matrix batch_grad(model.d2(), model.d1());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      batch_grad.fill(0.0);
      for (std::size_t i = start; i < stop; ++i) {
        const TrainingSample& s = samples[order[i]];
        const std::vector<double> phi = features.row_vector(s.feature_row);
        const LossGrad lg = loss(model, phi, s.label, classes);
        loss_sum += lg.total;
        batch_grad.add_scaled(lg.grad, 1.0);
      }
      batch_grad.scale(1.0 / static_cast<double>(stop - start));
      adam_step(adam, model.w_p, batch_grad);
    }
    epoch_losses.push_back(loss_sum / static_cast<double>(samples.size()));
  }
  return epoch_losses;
}

}  // namespace detail

// Baseline: seen-class boxes only. Rejects background or out-of-set labels
// before any optimizer step.
inline TrainReport train_baseline(ProjectionModel& model, const FeatureMatrix& features,
                                  std::span<const TrainingSample> samples,
                                  const EmbeddingStore& store, const TrainConfig& config) {
  detail::verify_labels(samples, config.classes, config.unseen_guard, false);
  TrainReport report;
  report.strategy = "baseline";
  report.sample_count = samples.size();
  report.class_count = config.classes.size();
  const ClassEmbeddingSet classes(store, config.classes);
  Rng rng(config.seed);
  report.epoch_mean_loss = detail::run_epochs(model, features, samples, classes, config.epochs,
                                              config.batch_size, config.learning_rate, rng);
  return report;
}

// Statically-assigned background: background samples train against the fixed
// unit vector (1, 0, ..., 0). The background class joins the competitor set
// only when background samples exist, so a run without them reproduces the
// baseline trajectory exactly.
inline TrainReport train_sb(ProjectionModel& model, const FeatureMatrix& features,
                            std::span<const TrainingSample> samples, const EmbeddingStore& store,
                            const TrainConfig& config) {
  if (store.contains(kBackgroundToken)) {
    throw std::invalid_argument("embedding store already contains the reserved background token");
  }
  detail::verify_labels(samples, config.classes, config.unseen_guard, true);
  std::size_t background = 0;
  for (const auto& s : samples) {
    if (s.label == kBackgroundToken) ++background;
  }
  std::vector<std::string> tokens = config.classes;
  if (background > 0) tokens.push_back(std::string(kBackgroundToken));

  TrainReport report;
  report.strategy = "sb";
  report.sample_count = samples.size();
  report.background_count = background;
  report.class_count = tokens.size();
  const ClassEmbeddingSet classes(store, tokens);
  Rng rng(config.seed);
  report.epoch_mean_loss = detail::run_epochs(model, features, samples, classes, config.epochs,
                                              config.batch_size, config.learning_rate, rng);
  return report;
}

// Latent assignment over the open vocabulary. Expects a model already trained
// on the annotated data (the algorithm's init step). Each iteration labels a
// slice of the background pool with its argmax class restricted to O, then
// fine-tunes on the accumulated union. Boxes keep their first assignment.
inline TrainReport train_lab(ProjectionModel& model, const FeatureMatrix& features,
                             std::span<const TrainingSample> annotated,
                             std::span<const std::uint32_t> background_rows,
                             const EmbeddingStore& store,
                             const std::vector<std::string>& open_vocabulary,
                             const TrainConfig& config, const LabConfig& lab) {
  if (open_vocabulary.empty()) throw std::invalid_argument("train_lab: open vocabulary is empty");
  if (lab.niters < 0) throw std::invalid_argument("train_lab: negative niters");
  detail::verify_labels(annotated, config.classes, config.unseen_guard, false);
  for (const auto& t : open_vocabulary) {
    if (!store.contains(t)) {
      throw std::invalid_argument("open-vocabulary token without embedding: " + t);
    }
  }

  TrainReport report;
  report.strategy = "lab";
  report.sample_count = annotated.size();
  report.background_count = background_rows.size();
  report.class_count = config.classes.size();
  if (lab.niters == 0) return report;

  const double fraction = lab.resolved_fraction();
  const ClassEmbeddingSet open_set(store, open_vocabulary);
  const std::size_t pool_size = background_rows.size();
  const std::size_t per_iteration = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(pool_size)));

  Rng rng(config.seed);
  std::vector<std::uint32_t> pool(background_rows.begin(), background_rows.end());
  std::size_t pool_used = 0;

  std::vector<TrainingSample> accumulated(annotated.begin(), annotated.end());
  std::set<std::string> active_labels;

  for (int iter = 1; iter <= lab.niters; ++iter) {
    const int decay_steps = (iter - 1) / lab.decay_every;
    const double lr = config.learning_rate / std::pow(lab.lr_decay_factor, decay_steps);

    LabIterationReport ir;
    ir.iteration = iter;
    ir.learning_rate = lr;

    const std::size_t remaining = pool.size() - pool_used;
    const std::size_t take = std::min(per_iteration, remaining);
    if (take < per_iteration) report.lab_pool_shortfall = true;
    for (std::size_t i = 0; i < take; ++i) {
      // draw without replacement from the untouched tail of the pool
      const std::size_t j = pool_used + static_cast<std::size_t>(rng.below(pool.size() - pool_used));
      std::swap(pool[pool_used], pool[j]);
      const std::uint32_t row = pool[pool_used];
      ++pool_used;

      const std::vector<double> phi = features.row_vector(row);
      const Prediction p = predict(model, phi, open_set);
      accumulated.push_back(TrainingSample{row, p.label});
      active_labels.insert(p.label);
      ++ir.label_counts[p.label];
      ir.assignments.emplace_back(row, p.label);
    }
    ir.newly_labeled = take;
    ir.accumulated = accumulated.size() - annotated.size();

    std::vector<std::string> tokens = config.classes;
    tokens.insert(tokens.end(), active_labels.begin(), active_labels.end());
    const ClassEmbeddingSet classes(store, tokens);
    const auto losses = detail::run_epochs(model, features, accumulated, classes,
                                           lab.epochs_per_iteration, config.batch_size, lr, rng);
    report.epoch_mean_loss.insert(report.epoch_mean_loss.end(), losses.begin(), losses.end());
    report.lab_iterations.push_back(std::move(ir));
  }
  return report;
}

struct DsesMerge {
  std::vector<std::string> classes;
  std::vector<TrainingSample> samples;
  std::size_t dropped_unseen = 0;
};

// Dense label-space sampling: merge auxiliary classes and samples into the
// training set, excluding anything unseen. aux_row_offset shifts auxiliary
// feature rows after the two feature matrices have been concatenated.
inline DsesMerge augment_dses(const std::vector<std::string>& train_classes,
                              std::span<const TrainingSample> train_samples,
                              const std::vector<std::string>& aux_classes,
                              std::span<const TrainingSample> aux_samples,
                              const std::vector<std::string>& unseen,
                              std::uint32_t aux_row_offset = 0) {
  const std::set<std::string> unseen_set(unseen.begin(), unseen.end());
  std::set<std::string> merged(train_classes.begin(), train_classes.end());
  for (const auto& c : aux_classes) {
    if (!unseen_set.count(c)) merged.insert(c);
  }
  DsesMerge out;
  out.classes.assign(merged.begin(), merged.end());
  out.samples.assign(train_samples.begin(), train_samples.end());
  for (const auto& s : aux_samples) {
    if (unseen_set.count(s.label)) {
      ++out.dropped_unseen;
      continue;
    }
    out.samples.push_back(TrainingSample{s.feature_row + aux_row_offset, s.label});
  }
  return out;
}

}  // namespace zsd
