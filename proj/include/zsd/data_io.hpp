#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "zsd/embedding.hpp"
#include "zsd/evaluation.hpp"
#include "zsd/features.hpp"
#include "zsd/geometry.hpp"
#include "zsd/matrix.hpp"
#include "zsd/rng.hpp"
#include "zsd/trainers.hpp"

namespace zsd {

struct ManifestImage {
  std::string image_id;
  std::vector<GroundTruth> ground_truth;
  std::vector<Proposal> proposals;
};

// Dataset manifest: boxes, labels and proposal metadata; features live in a
// separate ZSDF file referenced by row index.
struct DatasetManifest {
  std::vector<ManifestImage> images;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["images"] = nlohmann::json::array();
    for (const auto& img : images) {
      nlohmann::json ji;
      ji["image_id"] = img.image_id;
      ji["ground_truth"] = nlohmann::json::array();
      for (const auto& g : img.ground_truth) {
        ji["ground_truth"].push_back(
            {{"box", {g.box.x1, g.box.y1, g.box.x2, g.box.y2}}, {"label", g.label}});
      }
      ji["proposals"] = nlohmann::json::array();
      for (const auto& p : img.proposals) {
        ji["proposals"].push_back({{"box", {p.box.x1, p.box.y1, p.box.x2, p.box.y2}},
                                   {"proposal_score", p.score},
                                   {"feature_row", p.feature_row}});
      }
      j["images"].push_back(ji);
    }
    return j;
  }

  static DatasetManifest from_json(const nlohmann::json& j) {
    const auto parse_box = [](const nlohmann::json& jb) {
      if (!jb.is_array() || jb.size() != 4) {
        throw std::runtime_error("manifest: box must be [x1, y1, x2, y2]");
      }
      Box b{jb[0].get<double>(), jb[1].get<double>(), jb[2].get<double>(), jb[3].get<double>()};
      validate_box(b, "manifest");
      return b;
    };
    DatasetManifest m;
    for (const auto& ji : j.at("images")) {
      ManifestImage img;
      img.image_id = ji.at("image_id").get<std::string>();
      for (const auto& jg : ji.value("ground_truth", nlohmann::json::array())) {
        img.ground_truth.push_back(GroundTruth{parse_box(jg.at("box")),
                                               jg.at("label").get<std::string>()});
      }
      for (const auto& jp : ji.value("proposals", nlohmann::json::array())) {
        img.proposals.push_back(Proposal{parse_box(jp.at("box")),
                                         jp.at("proposal_score").get<double>(),
                                         jp.at("feature_row").get<std::uint32_t>()});
      }
      m.images.push_back(std::move(img));
    }
    return m;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << to_json().dump(2) << "\n";
  }

  static DatasetManifest load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }

  // feature_row range check, plus optional label whitelist.
  void validate(std::size_t feature_rows, const std::vector<std::string>* allowed = nullptr) const {
    const std::set<std::string> allowed_set =
        allowed ? std::set<std::string>(allowed->begin(), allowed->end()) : std::set<std::string>();
    for (const auto& img : images) {
      for (const auto& p : img.proposals) {
        if (p.feature_row >= feature_rows) {
          throw std::runtime_error("manifest: feature_row " + std::to_string(p.feature_row) +
                                   " out of range in image " + img.image_id);
        }
      }
      if (allowed) {
        for (const auto& g : img.ground_truth) {
          if (!allowed_set.count(g.label)) {
            throw std::runtime_error("manifest: label '" + g.label +
                                     "' not in the declared class list");
          }
        }
      }
    }
  }
};

// The MSCOCO-regime filter: drop every image containing any of the given
// labels (off by default; VG keeps such images).
inline DatasetManifest remove_images_containing(const DatasetManifest& manifest,
                                                const std::vector<std::string>& labels) {
  const std::set<std::string> drop(labels.begin(), labels.end());
  DatasetManifest out;
  for (const auto& img : manifest.images) {
    const bool contaminated = std::any_of(img.ground_truth.begin(), img.ground_truth.end(),
                                          [&](const GroundTruth& g) { return drop.count(g.label); });
    if (!contaminated) out.images.push_back(img);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Seen/unseen split generation via spherical k-means over class embeddings.
// ---------------------------------------------------------------------------

struct SplitSpec {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
  std::map<std::string, int> cluster_assignments;
  std::uint64_t seed = 0;
  int k_clusters = 0;

  nlohmann::json to_json() const {
    return nlohmann::json{
        {"seed", seed}, {"K_clusters", k_clusters}, {"seen", seen}, {"unseen", unseen}};
  }

  static SplitSpec from_json(const nlohmann::json& j) {
    SplitSpec s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.k_clusters = j.at("K_clusters").get<int>();
    s.seen = j.at("seen").get<std::vector<std::string>>();
    s.unseen = j.at("unseen").get<std::vector<std::string>>();
    return s;
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write split: " + path);
    out << to_json().dump(2) << "\n";
  }

  static SplitSpec load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open split: " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
  }
};

namespace detail {

struct KMeansRun {
  std::vector<std::size_t> assignment;
  double inertia = 0.0;
  bool all_nonempty = false;
};

// One spherical k-means run: k-means++ style seeding (weights proportional to
// the squared chord distance, i.e. 1 - cos for unit vectors) followed by
// Lloyd iterations under the cosine metric.
inline KMeansRun spherical_kmeans_once(const std::vector<std::vector<double>>& points,
                                       std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);

  centroids.push_back(points[rng.below(n)]);
  std::vector<double> weight(n, 0.0);
  while (centroids.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = -1.0;
      for (const auto& c : centroids) best = std::max(best, dot(points[i], c));
      weight[i] = std::max(0.0, 1.0 - best);
      total += weight[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (weight[i] <= 0.0) continue;  // never re-pick a chosen centroid
        acc += weight[i];
        pick = i;
        if (acc >= target) break;
      }
    }
    if (pick == n) pick = rng.below(n);
    centroids.push_back(points[pick]);
  }

  std::vector<std::size_t> assignment(n, 0);
  for (int round = 0; round < 100; ++round) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_cos = dot(points[i], centroids[0]);
      for (std::size_t c = 1; c < k; ++c) {
        const double v = dot(points[i], centroids[c]);
        if (v > best_cos) {
          best_cos = v;
          best = c;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    if (!changed && round > 0) break;

    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> mean(dim, 0.0);
      std::size_t members = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (assignment[i] != c) continue;
        ++members;
        for (std::size_t d = 0; d < dim; ++d) mean[d] += points[i][d];
      }
      if (members == 0) {
        // re-seed an empty cluster with the point farthest from its centroid
        std::size_t farthest = 0;
        double worst = 2.0;
        for (std::size_t i = 0; i < n; ++i) {
          const double v = dot(points[i], centroids[assignment[i]]);
          if (v < worst) {
            worst = v;
            farthest = i;
          }
        }
        centroids[c] = points[farthest];
        continue;
      }
      const double m_norm = norm(mean);
      if (m_norm > 0.0) {
        for (double& v : mean) v /= m_norm;
        centroids[c] = std::move(mean);
      }
    }
  }

  KMeansRun run;
  run.assignment = std::move(assignment);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    run.inertia += 1.0 - dot(points[i], centroids[run.assignment[i]]);
    ++counts[run.assignment[i]];
  }
  run.all_nonempty = std::all_of(counts.begin(), counts.end(),
                                 [](std::size_t c) { return c > 0; });
  return run;
}

inline std::size_t ceil_fraction(double fraction, std::size_t count) {
  // epsilon guards against 0.2 * 10 = 2.0000000000000004 style round-up
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(count) - 1e-9));
}

}  // namespace detail

// Cluster the class embeddings into K clusters (cosine metric, k-means++
// seeding, best of `restarts` runs without empty clusters), then move
// ceil(unseen_fraction * |cluster|) random tokens of each cluster to the
// unseen set. Deterministic given the seed.
inline SplitSpec make_split(std::vector<std::string> tokens, const EmbeddingStore& store,
                            int k_clusters, double unseen_fraction, std::uint64_t seed,
                            int restarts = 20) {
  tokens = detail::sorted_unique(std::move(tokens));
  if (tokens.empty()) throw std::invalid_argument("make_split: no class tokens");
  if (k_clusters <= 0 || static_cast<std::size_t>(k_clusters) > tokens.size()) {
    throw std::invalid_argument("make_split: K must be in [1, #tokens]");
  }
  if (unseen_fraction < 0.0 || unseen_fraction > 1.0) {
    throw std::invalid_argument("make_split: unseen fraction must be in [0, 1]");
  }

  std::vector<std::vector<double>> points;
  points.reserve(tokens.size());
  for (const auto& t : tokens) {
    const auto v = store.vector(t);  // throws when unembedded
    points.emplace_back(v.begin(), v.end());
  }

  Rng rng(seed);
  detail::KMeansRun best;
  bool have_best = false;
  for (int attempt = 0; attempt < restarts; ++attempt) {
    auto run = detail::spherical_kmeans_once(points, static_cast<std::size_t>(k_clusters), rng);
    if (!run.all_nonempty) continue;
    if (!have_best || run.inertia < best.inertia) {
      best = std::move(run);
      have_best = true;
    }
  }
  if (!have_best) {
    throw std::runtime_error("make_split: clustering produced an empty cluster in every restart");
  }

  SplitSpec spec;
  spec.seed = seed;
  spec.k_clusters = k_clusters;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    spec.cluster_assignments[tokens[i]] = static_cast<int>(best.assignment[i]);
  }

  Rng select_rng(seed ^ 0x9E3779B97F4A7C15ULL);
  for (int c = 0; c < k_clusters; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (best.assignment[i] == static_cast<std::size_t>(c)) members.push_back(i);
    }
    if (members.empty()) continue;
    std::size_t n_unseen = 0;
    if (unseen_fraction > 0.0) {
      n_unseen = std::min(members.size(), detail::ceil_fraction(unseen_fraction, members.size()));
    }
    const auto picks = select_rng.sample_without_replacement(members.size(), n_unseen);
    std::set<std::size_t> unseen_idx;
    for (std::size_t p : picks) unseen_idx.insert(members[p]);
    for (std::size_t i : members) {
      if (unseen_idx.count(i)) {
        spec.unseen.push_back(tokens[i]);
      } else {
        spec.seen.push_back(tokens[i]);
      }
    }
  }
  std::sort(spec.seen.begin(), spec.seen.end());
  std::sort(spec.unseen.begin(), spec.unseen.end());
  return spec;
}

// ---------------------------------------------------------------------------
// Training-set construction from a manifest.
// ---------------------------------------------------------------------------

struct TrainingSet {
  std::vector<TrainingSample> samples;         // positive, seen-class samples
  std::vector<std::uint32_t> background_rows;  // IoU band plus sampled zero-IoU negatives
  std::size_t positives = 0;
  std::size_t band_background = 0;
  std::size_t zero_iou_background = 0;
  std::size_t discarded = 0;
  std::size_t excluded_not_seen = 0;  // positives whose argmax label is outside the seen set
};

// Applies the IoU assignment bands to every proposal; zero-IoU proposals are
// promoted to background by seeded sampling of up to negatives_per_image each.
inline TrainingSet build_training_set(const DatasetManifest& manifest,
                                      const FeatureMatrix& features,
                                      const std::vector<std::string>& seen_classes,
                                      int negatives_per_image, std::uint64_t seed) {
  manifest.validate(features.rows());
  const std::set<std::string> seen(seen_classes.begin(), seen_classes.end());
  TrainingSet out;
  Rng rng(seed);
  for (const auto& img : manifest.images) {
    std::vector<std::uint32_t> zero_iou;
    for (const auto& p : img.proposals) {
      const Assignment a = assign_training_label(p.box, img.ground_truth);
      switch (a.kind) {
        case AssignKind::kPositive:
          if (seen.count(a.label)) {
            out.samples.push_back(TrainingSample{p.feature_row, a.label});
            ++out.positives;
          } else {
            ++out.excluded_not_seen;
          }
          break;
        case AssignKind::kBackground:
          out.background_rows.push_back(p.feature_row);
          ++out.band_background;
          break;
        case AssignKind::kDiscard:
          if (a.max_iou == 0.0) {
            zero_iou.push_back(p.feature_row);
          } else {
            ++out.discarded;
          }
          break;
      }
    }
    const std::size_t take = std::min<std::size_t>(zero_iou.size(),
                                                   negatives_per_image > 0 ? negatives_per_image : 0);
    const auto picks = rng.sample_without_replacement(zero_iou.size(), take);
    std::vector<std::size_t> ordered(picks.begin(), picks.end());
    std::sort(ordered.begin(), ordered.end());
    for (std::size_t p : ordered) {
      out.background_rows.push_back(zero_iou[p]);
      ++out.zero_iou_background;
    }
    out.discarded += zero_iou.size() - take;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic task generation: a desk-scale dataset with known ground truth.
// ---------------------------------------------------------------------------

struct SyntheticParams {
  int seen = 40;
  int unseen = 10;
  int open_gen = 10;  // hidden classes generating background appearance
  int d1 = 32;
  int d2 = 16;
  int train_images = 500;
  int test_images = 50;
  int objects_per_image = 6;
  int jitter_per_object = 1;      // overlapping duplicates of each train box
  int background_per_image = 3;   // pure-background boxes per train image
  int distractors_per_image = 60; // pure-background boxes per test image
  double noise_sigma = 0.05;
  double max_pairwise_cos = 0.5;  // separation guarantee for class embeddings
  double test_seen_fraction = 0.0;  // share of seen-class objects in test images
  std::uint64_t seed = 1;
};

struct SyntheticTask {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
  std::vector<std::string> open_gen;
  EmbeddingStore store;            // embeddings for S ∪ U ∪ O_gen
  Matrix alignment;                // A (D1 x D2), orthonormal columns
  FeatureMatrix features;          // shared by both manifests
  DatasetManifest train_manifest;  // ground truth labeled with seen classes
  DatasetManifest test_manifest;   // ground truth labeled with unseen classes
  std::vector<std::string> row_truth;  // generating token per feature row
};

namespace detail {

inline std::vector<std::string> synth_tokens(const char* prefix, int count) {
  std::vector<std::string> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::ostringstream s;
    s << prefix;
    s.width(3);
    s.fill('0');
    s << i;
    out.push_back(s.str());
  }
  return out;
}

// Unit vectors with every pairwise cosine at most max_cos.
inline std::vector<std::vector<double>> separated_unit_vectors(int count, int dim, double max_cos,
                                                               Rng& rng) {
  std::vector<std::vector<double>> vecs;
  vecs.reserve(count);
  for (int i = 0; i < count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 20000 && !placed; ++attempt) {
      std::vector<double> v(dim);
      for (double& x : v) x = rng.normal();
      const double n = norm(v);
      if (n == 0.0) continue;
      for (double& x : v) x /= n;
      placed = std::all_of(vecs.begin(), vecs.end(),
                           [&](const std::vector<double>& u) { return dot(u, v) <= max_cos; });
      if (placed) vecs.push_back(std::move(v));
    }
    if (!placed) {
      throw std::runtime_error("generate_synthetic: cannot separate class embeddings; "
                               "raise d2 or max_pairwise_cos");
    }
  }
  return vecs;
}

// Gaussian matrix with Gram-Schmidt-orthonormalized columns (needs d1 >= d2).
inline Matrix orthonormal_columns(int d1, int d2, Rng& rng) {
  if (d1 < d2) throw std::invalid_argument("generate_synthetic: requires d1 >= d2");
  Matrix a(d1, d2);
  for (int c = 0; c < d2; ++c) {
    std::vector<double> col(d1);
    double n = 0.0;
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (double& x : col) x = rng.normal();
      for (int prev = 0; prev < c; ++prev) {
        double proj = 0.0;
        for (int r = 0; r < d1; ++r) proj += col[r] * a(r, prev);
        for (int r = 0; r < d1; ++r) col[r] -= proj * a(r, prev);
      }
      n = norm(col);
      if (n > 1e-8) break;
    }
    if (n <= 1e-8) throw std::runtime_error("generate_synthetic: degenerate alignment matrix");
    for (int r = 0; r < d1; ++r) a(r, c) = col[r] / n;
  }
  return a;
}

inline Box box_in_cell(double cx, double cy, double cell, Rng& rng) {
  const double margin = 0.05 * cell;
  const double inner = cell - 2.0 * margin;
  const double w = inner * rng.uniform(0.55, 0.9);
  const double h = inner * rng.uniform(0.55, 0.9);
  const double x1 = cx + margin + rng.uniform(0.0, inner - w);
  const double y1 = cy + margin + rng.uniform(0.0, inner - h);
  return Box{x1, y1, x1 + w, y1 + h};
}

inline Box jitter_box(const Box& b, Rng& rng) {
  const double w = b.x2 - b.x1;
  const double h = b.y2 - b.y1;
  const double dx = w * rng.uniform(-0.06, 0.06);
  const double dy = h * rng.uniform(-0.06, 0.06);
  return Box{std::max(0.0, b.x1 + dx), std::max(0.0, b.y1 + dy), b.x2 + dx, b.y2 + dy};
}

}  // namespace detail

inline SyntheticTask generate_synthetic(const SyntheticParams& p) {
  if (p.seen <= 0 || p.unseen <= 0 || p.open_gen <= 0 || p.d1 <= 0 || p.d2 <= 0) {
    throw std::invalid_argument("generate_synthetic: counts and dimensions must be positive");
  }
  if (p.noise_sigma < 0.0) throw std::invalid_argument("generate_synthetic: negative sigma");

  Rng rng(p.seed);
  SyntheticTask task;
  task.seen = detail::synth_tokens("s", p.seen);
  task.unseen = detail::synth_tokens("u", p.unseen);
  task.open_gen = detail::synth_tokens("o", p.open_gen);

  const int total_classes = p.seen + p.unseen + p.open_gen;
  const auto vectors = detail::separated_unit_vectors(total_classes, p.d2, p.max_pairwise_cos, rng);
  task.store = EmbeddingStore(p.d2);
  {
    int idx = 0;
    for (const auto& t : task.seen) task.store.insert(t, vectors[idx++]);
    for (const auto& t : task.unseen) task.store.insert(t, vectors[idx++]);
    for (const auto& t : task.open_gen) task.store.insert(t, vectors[idx++]);
  }

  task.alignment = detail::orthonormal_columns(p.d1, p.d2, rng);
  task.features = FeatureMatrix(p.d1);

  const auto make_feature = [&](const std::string& token) {
    const auto w = task.store.vector(token);
    std::vector<double> phi = task.alignment.multiply(w);
    for (double& x : phi) x += p.noise_sigma * rng.normal();
    task.row_truth.push_back(token);
    return task.features.append_row(phi);
  };

  const double canvas = 1000.0;
  const auto layout_image = [&](const std::string& image_id,
                                const std::vector<std::string>& label_pool,
                                const std::vector<std::string>& mix_pool, double mix_fraction,
                                int objects, int jitters_each, int backgrounds) {
    const int cells_needed = objects + backgrounds;
    const int g = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cells_needed))));
    const double cell = canvas / static_cast<double>(g);
    if (cell < 8.0) {
      throw std::runtime_error("generate_synthetic: layout infeasible, too many regions per image");
    }
    std::vector<int> cells(g * g);
    for (int i = 0; i < g * g; ++i) cells[i] = i;
    rng.shuffle(cells);

    ManifestImage img;
    img.image_id = image_id;
    for (int i = 0; i < objects; ++i) {
      const int cidx = cells[i];
      const double cx = (cidx % g) * cell;
      const double cy = (cidx / g) * cell;
      const Box b = detail::box_in_cell(cx, cy, cell, rng);
      const bool mixed = mix_fraction > 0.0 && rng.uniform() < mix_fraction;
      const auto& pool = mixed ? mix_pool : label_pool;
      const std::string label = pool[rng.below(pool.size())];
      img.ground_truth.push_back(GroundTruth{b, label});
      img.proposals.push_back(Proposal{b, 1.0, make_feature(label)});
      for (int j = 0; j < jitters_each; ++j) {
        img.proposals.push_back(Proposal{detail::jitter_box(b, rng), 0.9, make_feature(label)});
      }
    }
    for (int i = 0; i < backgrounds; ++i) {
      const int cidx = cells[objects + i];
      const double cx = (cidx % g) * cell;
      const double cy = (cidx / g) * cell;
      const Box b = detail::box_in_cell(cx, cy, cell, rng);
      const std::string hidden = task.open_gen[rng.below(task.open_gen.size())];
      img.proposals.push_back(Proposal{b, 0.8, make_feature(hidden)});
    }
    return img;
  };

  for (int i = 0; i < p.train_images; ++i) {
    std::ostringstream id;
    id << "train_" << i;
    task.train_manifest.images.push_back(layout_image(id.str(), task.seen, task.seen, 0.0,
                                                      p.objects_per_image, p.jitter_per_object,
                                                      p.background_per_image));
  }
  for (int i = 0; i < p.test_images; ++i) {
    std::ostringstream id;
    id << "test_" << i;
    task.test_manifest.images.push_back(layout_image(id.str(), task.unseen, task.seen,
                                                     p.test_seen_fraction, p.objects_per_image,
                                                     0, p.distractors_per_image));
  }
  return task;
}

// EvalImage view of a manifest.
inline std::vector<EvalImage> to_eval_images(const DatasetManifest& manifest) {
  std::vector<EvalImage> out;
  out.reserve(manifest.images.size());
  for (const auto& img : manifest.images) {
    out.push_back(EvalImage{img.proposals, img.ground_truth});
  }
  return out;
}

}  // namespace zsd
