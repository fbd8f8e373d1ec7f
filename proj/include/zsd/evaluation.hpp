#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "zsd/features.hpp"
#include "zsd/geometry.hpp"
#include "zsd/model.hpp"

namespace zsd {

// Sentinel for "keep all detections" in the Recall@K table.
inline constexpr int kKeepAll = std::numeric_limits<int>::max();

struct EvalConfig {
  double proposal_score_min = 0.07;            // drop proposals at or below this
  double nms_iou = 0.4;                        // suppress above this overlap
  std::vector<double> tp_ious{0.4, 0.5, 0.6};  // TP match thresholds
  std::vector<int> ks{kKeepAll, 100, 80, 50};  // top-K cutoffs per image
  int workers = 1;
};

// Score every gated proposal against every candidate class, then run greedy
// NMS for each class independently. Detection score is the cosine similarity.
inline std::vector<Detection> detect_image(const ProjectionModel& model,
                                           std::span<const Proposal> proposals,
                                           const FeatureMatrix& features,
                                           const ClassEmbeddingSet& candidates,
                                           const EvalConfig& config) {
  std::vector<std::vector<Detection>> per_class(candidates.size());
  for (const Proposal& p : proposals) {
    if (!(p.score > config.proposal_score_min)) continue;
    const std::vector<double> phi = features.row_vector(p.feature_row);
    const std::vector<double> scores = score_classes(model, phi, candidates);
    for (std::size_t j = 0; j < candidates.size(); ++j) {
      per_class[j].push_back(Detection{p.box, candidates.token(j), scores[j]});
    }
  }
  std::vector<Detection> out;
  for (auto& dets : per_class) {
    auto kept = greedy_nms(std::move(dets), config.nms_iou);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

namespace detail {

// Top-K detections of one image by descending score; ties keep input order.
inline std::vector<Detection> top_k(std::vector<Detection> dets, int k) {
  if (k <= 0) throw std::invalid_argument("top-K: K must be positive");
  std::stable_sort(dets.begin(), dets.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (k != kKeepAll && dets.size() > static_cast<std::size_t>(k)) dets.resize(k);
  return dets;
}

// Greedy TP matching for one image over score-sorted detections: a detection
// is TP iff some unmatched same-class ground truth overlaps at >= tp_iou; the
// highest-IoU unmatched ground truth is consumed.
struct MatchCounts {
  std::size_t matched_gt = 0;
  std::map<std::string, std::size_t> matched_per_class;
};

inline MatchCounts match_image(std::span<const Detection> sorted_dets,
                               std::span<const GroundTruth> gts, double tp_iou) {
  MatchCounts out;
  std::vector<bool> used(gts.size(), false);
  for (const Detection& d : sorted_dets) {
    std::size_t best = gts.size();
    double best_iou = 0.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g].label != d.label) continue;
      const double v = iou(d.box, gts[g].box);
      if (v >= tp_iou && v > best_iou) {
        best_iou = v;
        best = g;
      }
    }
    if (best != gts.size()) {
      used[best] = true;
      ++out.matched_gt;
      ++out.matched_per_class[d.label];
    }
  }
  return out;
}

}  // namespace detail

// Recall@K pooled over all ground-truth instances (micro-average).
inline double recall_at_k(std::span<const std::vector<Detection>> detections_per_image,
                          std::span<const std::vector<GroundTruth>> gts_per_image, int k,
                          double tp_iou) {
  if (k <= 0) throw std::invalid_argument("recall_at_k: K must be positive");
  if (detections_per_image.size() != gts_per_image.size()) {
    throw std::invalid_argument("recall_at_k: image count mismatch");
  }
  std::size_t total_gt = 0;
  std::size_t matched = 0;
  for (std::size_t i = 0; i < gts_per_image.size(); ++i) {
    total_gt += gts_per_image[i].size();
    const auto kept = detail::top_k(detections_per_image[i], k);
    matched += detail::match_image(kept, gts_per_image[i], tp_iou).matched_gt;
  }
  if (total_gt == 0) return 0.0;
  return static_cast<double>(matched) / static_cast<double>(total_gt);
}

// Per-class recall at top-K (classes keyed by their ground-truth label).
inline std::map<std::string, double> per_class_recall(
    std::span<const std::vector<Detection>> detections_per_image,
    std::span<const std::vector<GroundTruth>> gts_per_image, int k, double tp_iou) {
  std::map<std::string, std::size_t> gt_counts;
  std::map<std::string, std::size_t> matched;
  for (std::size_t i = 0; i < gts_per_image.size(); ++i) {
    for (const auto& g : gts_per_image[i]) ++gt_counts[g.label];
    const auto kept = detail::top_k(detections_per_image[i], k);
    const auto counts = detail::match_image(kept, gts_per_image[i], tp_iou);
    for (const auto& [label, n] : counts.matched_per_class) matched[label] += n;
  }
  std::map<std::string, double> out;
  for (const auto& [label, total] : gt_counts) {
    out[label] = static_cast<double>(matched[label]) / static_cast<double>(total);
  }
  return out;
}

// Mean average precision: per class, detections sorted by score across all
// images, the same greedy TP rule, and all-points interpolation of the PR
// curve. Classes without ground truth are skipped.
inline double mean_average_precision(std::span<const std::vector<Detection>> detections_per_image,
                                     std::span<const std::vector<GroundTruth>> gts_per_image,
                                     double tp_iou) {
  if (detections_per_image.size() != gts_per_image.size()) {
    throw std::invalid_argument("mean_average_precision: image count mismatch");
  }
  std::map<std::string, std::size_t> gt_counts;
  for (const auto& gts : gts_per_image) {
    for (const auto& g : gts) ++gt_counts[g.label];
  }
  if (gt_counts.empty()) {
    throw std::invalid_argument("mean_average_precision: no ground truth in any class");
  }

  double ap_sum = 0.0;
  for (const auto& [label, n_gt] : gt_counts) {
    struct Entry {
      std::size_t image = 0;
      const Detection* det = nullptr;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < detections_per_image.size(); ++i) {
      for (const auto& d : detections_per_image[i]) {
        if (d.label == label) entries.push_back(Entry{i, &d});
      }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.det->score > b.det->score; });

    std::vector<std::vector<bool>> used(gts_per_image.size());
    for (std::size_t i = 0; i < gts_per_image.size(); ++i) {
      used[i].assign(gts_per_image[i].size(), false);
    }

    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t tp = 0;
    for (std::size_t rank = 0; rank < entries.size(); ++rank) {
      const auto& e = entries[rank];
      const auto& gts = gts_per_image[e.image];
      std::size_t best = gts.size();
      double best_iou = 0.0;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[e.image][g] || gts[g].label != label) continue;
        const double v = iou(e.det->box, gts[g].box);
        if (v >= tp_iou && v > best_iou) {
          best_iou = v;
          best = g;
        }
      }
      if (best != gts.size()) {
        used[e.image][best] = true;
        ++tp;
      }
      precision.push_back(static_cast<double>(tp) / static_cast<double>(rank + 1));
      recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
    }

    double ap = 0.0;
    if (!precision.empty()) {
      for (std::size_t i = precision.size() - 1; i-- > 0;) {
        precision[i] = std::max(precision[i], precision[i + 1]);
      }
      double prev_recall = 0.0;
      for (std::size_t i = 0; i < precision.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
      }
    }
    ap_sum += ap;
  }
  return ap_sum / static_cast<double>(gt_counts.size());
}

inline double harmonic_mean(double a, double b) {
  if (a < 0.0 || b < 0.0) throw std::invalid_argument("harmonic_mean: negative input");
  if (a == 0.0 && b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

struct GzsdDecision {
  std::string label;
  double score = 0.0;
  bool unseen_branch = false;
};

// Novelty decision: take the best unseen class when its similarity clears the
// threshold n_t, otherwise the best seen class.
inline GzsdDecision gzsd_decide(const ProjectionModel& model, std::span<const double> phi,
                                const ClassEmbeddingSet& seen, const ClassEmbeddingSet& unseen,
                                double novelty_threshold) {
  const Prediction ps = predict(model, phi, seen);
  const Prediction pu = predict(model, phi, unseen);
  if (pu.score >= novelty_threshold) return GzsdDecision{pu.label, pu.score, true};
  return GzsdDecision{ps.label, ps.score, false};
}

// GZSD detection: each gated proposal yields exactly one detection, labeled
// by the novelty decision; class-wise NMS as usual.
inline std::vector<Detection> detect_image_gzsd(const ProjectionModel& model,
                                                std::span<const Proposal> proposals,
                                                const FeatureMatrix& features,
                                                const ClassEmbeddingSet& seen,
                                                const ClassEmbeddingSet& unseen,
                                                double novelty_threshold,
                                                const EvalConfig& config) {
  std::map<std::string, std::vector<Detection>> per_class;
  for (const Proposal& p : proposals) {
    if (!(p.score > config.proposal_score_min)) continue;
    const std::vector<double> phi = features.row_vector(p.feature_row);
    const GzsdDecision d = gzsd_decide(model, phi, seen, unseen, novelty_threshold);
    per_class[d.label].push_back(Detection{p.box, d.label, d.score});
  }
  std::vector<Detection> out;
  for (auto& [label, dets] : per_class) {
    auto kept = greedy_nms(std::move(dets), config.nms_iou);
    out.insert(out.end(), kept.begin(), kept.end());
  }
  return out;
}

// One evaluated image: proposals plus ground truth restricted to the classes
// under evaluation.
struct EvalImage {
  std::vector<Proposal> proposals;
  std::vector<GroundTruth> ground_truth;
};

struct EvalResult {
  // recall[tp_iou][k] -> fraction in [0, 1]
  std::map<double, std::map<int, double>> recall;
  std::map<double, std::map<int, double>> macro_recall;
  std::map<double, std::map<std::string, double>> class_recall;  // at K = 100
  std::map<double, double> map;
  bool has_gzsd = false;
  double gzsd_threshold = 0.0;
  double gzsd_seen_recall = 0.0;
  double gzsd_unseen_recall = 0.0;
  double gzsd_harmonic_mean = 0.0;
};

namespace detail {

// Runs fn(i) over [0, n) with the configured worker count; results land in
// caller-owned slots so the reduction order is fixed.
template <typename Fn>
inline void parallel_for(std::size_t n, int workers, Fn&& fn) {
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t nthreads = std::min<std::size_t>(workers, n);
  std::vector<std::thread> threads;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (std::size_t t = 0; t < nthreads; ++t) {
    threads.emplace_back([&, t]() {
      try {
        for (std::size_t i = t; i < n; i += nthreads) fn(i);
      } catch (...) {
        const std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (error) std::rethrow_exception(error);
}

inline double macro_average(const std::map<std::string, double>& per_class) {
  if (per_class.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [label, v] : per_class) sum += v;
  return sum / static_cast<double>(per_class.size());
}

}  // namespace detail

// The full protocol over a frozen model: per-image detection, then the
// Recall@K / mAP tables for every configured threshold.
inline EvalResult evaluate_dataset(const ProjectionModel& model,
                                   std::span<const EvalImage> images,
                                   const FeatureMatrix& features,
                                   const ClassEmbeddingSet& candidates,
                                   const EvalConfig& config) {
  std::vector<std::vector<Detection>> dets(images.size());
  std::vector<std::vector<GroundTruth>> gts(images.size());
  detail::parallel_for(images.size(), config.workers, [&](std::size_t i) {
    dets[i] = detect_image(model, images[i].proposals, features, candidates, config);
    gts[i] = images[i].ground_truth;
  });

  EvalResult out;
  for (double t : config.tp_ious) {
    for (int k : config.ks) {
      out.recall[t][k] = recall_at_k(dets, gts, k, t);
      out.macro_recall[t][k] = detail::macro_average(per_class_recall(dets, gts, k, t));
    }
    out.class_recall[t] = per_class_recall(dets, gts, 100, t);
    out.map[t] = mean_average_precision(dets, gts, t);
  }
  return out;
}

// GZSD protocol: Recall@100 at IoU 0.5 for seen and unseen ground truth
// separately, summarized by the harmonic mean.
inline EvalResult evaluate_gzsd(const ProjectionModel& model, std::span<const EvalImage> images,
                                const FeatureMatrix& features, const ClassEmbeddingSet& seen,
                                const ClassEmbeddingSet& unseen, double novelty_threshold,
                                const EvalConfig& config) {
  std::vector<std::vector<Detection>> dets(images.size());
  detail::parallel_for(images.size(), config.workers, [&](std::size_t i) {
    dets[i] = detect_image_gzsd(model, images[i].proposals, features, seen, unseen,
                                novelty_threshold, config);
  });

  const auto split_by = [&](const std::vector<std::string>& tokens) {
    const std::set<std::string> set(tokens.begin(), tokens.end());
    std::vector<std::vector<Detection>> d(images.size());
    std::vector<std::vector<GroundTruth>> g(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
      for (const auto& det : dets[i]) {
        if (set.count(det.label)) d[i].push_back(det);
      }
      for (const auto& gt : images[i].ground_truth) {
        if (set.count(gt.label)) g[i].push_back(gt);
      }
    }
    return std::pair(std::move(d), std::move(g));
  };

  EvalResult out;
  out.has_gzsd = true;
  out.gzsd_threshold = novelty_threshold;
  const auto [sd, sg] = split_by(seen.tokens());
  const auto [ud, ug] = split_by(unseen.tokens());
  out.gzsd_seen_recall = recall_at_k(sd, sg, 100, 0.5);
  out.gzsd_unseen_recall = recall_at_k(ud, ug, 100, 0.5);
  out.gzsd_harmonic_mean = harmonic_mean(out.gzsd_seen_recall, out.gzsd_unseen_recall);
  return out;
}

inline std::string format_k(int k) {
  return k == kKeepAll ? std::string("All") : std::to_string(k);
}

inline std::string format_iou(double t) {
  std::ostringstream s;
  s.precision(2);
  s << std::fixed << t;
  return s.str();
}

// Text table in the K-rows-by-IoU-columns layout, values in percent.
inline std::string format_table(const EvalResult& r) {
  std::ostringstream out;
  out << std::fixed;
  out.precision(2);
  if (!r.recall.empty()) {
    out << "Recall@K (%)\n";
    out << "K \\ IoU";
    for (const auto& [t, row] : r.recall) out << "\t" << format_iou(t);
    out << "\n";
    // K rows descending, the All row first
    std::vector<int> ks;
    for (const auto& [k, unused] : r.recall.begin()->second) {
      (void)unused;
      ks.push_back(k);
    }
    std::sort(ks.begin(), ks.end(), std::greater<int>());
    for (int k : ks) {
      out << format_k(k);
      for (const auto& [t, row] : r.recall) out << "\t" << 100.0 * row.at(k);
      out << "\n";
    }
    out << "mAP";
    for (const auto& [t, v] : r.map) out << "\t" << 100.0 * v;
    out << "\n";
  }
  if (r.has_gzsd) {
    out << "GZSD (nt = " << r.gzsd_threshold << ", Recall@100, IoU 0.50, %)\n";
    out << "seen\t" << 100.0 * r.gzsd_seen_recall << "\n";
    out << "unseen\t" << 100.0 * r.gzsd_unseen_recall << "\n";
    out << "harmonic_mean\t" << 100.0 * r.gzsd_harmonic_mean << "\n";
  }
  return out.str();
}

// One JSON document; recall values are fractions in [0, 1].
inline nlohmann::json to_json(const EvalResult& r) {
  nlohmann::json j;
  for (const auto& [t, row] : r.recall) {
    for (const auto& [k, v] : row) j["recall"][format_iou(t)][format_k(k)] = v;
  }
  for (const auto& [t, row] : r.macro_recall) {
    for (const auto& [k, v] : row) j["macro_recall"][format_iou(t)][format_k(k)] = v;
  }
  for (const auto& [t, row] : r.class_recall) {
    for (const auto& [label, v] : row) j["per_class_recall"][format_iou(t)][label] = v;
  }
  for (const auto& [t, v] : r.map) j["map"][format_iou(t)] = v;
  if (r.has_gzsd) {
    j["gzsd"]["novelty_threshold"] = r.gzsd_threshold;
    j["gzsd"]["seen_recall"] = r.gzsd_seen_recall;
    j["gzsd"]["unseen_recall"] = r.gzsd_unseen_recall;
    j["gzsd"]["harmonic_mean"] = r.gzsd_harmonic_mean;
  }
  return j;
}

}  // namespace zsd
