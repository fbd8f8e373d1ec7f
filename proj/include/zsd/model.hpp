#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "zsd/embedding.hpp"
#include "zsd/features.hpp"
#include "zsd/matrix.hpp"
#include "zsd/rng.hpp"

namespace zsd {

// An ordered set of class tokens with their unit embedding rows materialized
// for the inner scoring loops. The reserved background token resolves to the
// fixed unit vector (1, 0, ..., 0) and never comes from the store.
class ClassEmbeddingSet {
 public:
  ClassEmbeddingSet(const EmbeddingStore& store, std::vector<std::string> tokens)
      : tokens_(std::move(tokens)), dim_(store.dim()) {
    if (tokens_.empty()) throw std::invalid_argument("ClassEmbeddingSet: empty class set");
    rows_.reserve(tokens_.size() * dim_);
    for (const auto& t : tokens_) {
      if (t == kBackgroundToken) {
        for (std::size_t i = 0; i < dim_; ++i) rows_.push_back(i == 0 ? 1.0 : 0.0);
      } else {
        const auto v = store.vector(t);
        rows_.insert(rows_.end(), v.begin(), v.end());
      }
    }
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(std::size_t i) const { return tokens_[i]; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(rows_.data() + i * dim_, dim_);
  }

  // Index of a token; size() when absent.
  std::size_t index_of(std::string_view token) const {
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
      if (tokens_[i] == token) return i;
    }
    return tokens_.size();
  }

 private:
  std::vector<std::string> tokens_;
  std::size_t dim_ = 0;
  std::vector<double> rows_;  // size() * dim_, unit rows
};

// The learnable core: psi = W_p * phi, scored against class embeddings by
// cosine similarity. margin and recon_weight parameterize the training loss.
struct ProjectionModel {
  Matrix w_p;                  // D2 x D1
  double margin = 1.0;
  double recon_weight = 1e-3;

  std::size_t d1() const { return w_p.cols(); }
  std::size_t d2() const { return w_p.rows(); }
};

// Entries i.i.d. uniform in [-a, a], a = sqrt(6 / (D1 + D2)).
inline ProjectionModel init_model(std::size_t d1, std::size_t d2, double margin,
                                  double recon_weight, std::uint64_t seed) {
  if (d1 == 0 || d2 == 0) throw std::invalid_argument("init_model: zero dimension");
  if (margin <= 0.0) throw std::invalid_argument("init_model: margin must be positive");
  if (recon_weight < 0.0) throw std::invalid_argument("init_model: negative recon weight");
  ProjectionModel m;
  m.margin = margin;
  m.recon_weight = recon_weight;
  m.w_p = Matrix(d2, d1);
  Rng rng(seed);
  const double a = std::sqrt(6.0 / static_cast<double>(d1 + d2));
  for (double& v : m.w_p.data()) v = rng.uniform(-a, a);
  return m;
}

inline std::vector<double> project(const ProjectionModel& model, std::span<const double> phi) {
  if (phi.size() != model.d1()) throw std::invalid_argument("project: dimension mismatch");
  return model.w_p.multiply(phi);
}

// Cosine similarity of the projected feature against every class, in class order.
inline std::vector<double> score_classes(const ProjectionModel& model,
                                         std::span<const double> phi,
                                         const ClassEmbeddingSet& classes) {
  const std::vector<double> psi = project(model, phi);
  const double n = norm(psi);
  if (n == 0.0) throw std::runtime_error("score_classes: degenerate projection (psi = 0)");
  std::vector<double> scores(classes.size());
  for (std::size_t j = 0; j < classes.size(); ++j) {
    scores[j] = dot(psi, classes.row(j)) / n;  // class rows are unit vectors
  }
  return scores;
}

struct Prediction {
  std::string label;
  double score = 0.0;
  std::size_t index = 0;
};

// Nearest class by similarity; ties keep the earliest class.
inline Prediction predict(const ProjectionModel& model, std::span<const double> phi,
                          const ClassEmbeddingSet& classes) {
  const std::vector<double> scores = score_classes(model, phi, classes);
  std::size_t best = 0;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > scores[best]) best = j;
  }
  return Prediction{classes.token(best), scores[best], best};
}

struct LossGrad {
  double total = 0.0;
  double margin_term = 0.0;
  double recon_term = 0.0;  // includes the recon_weight factor
  Matrix grad;              // d(total)/dW_p
};

// Max-margin ranking loss over the class set plus the tied-decoder
// reconstruction penalty:
//   L = sum_{j != y} max(0, m - S_y + S_j) + lambda * ||W^T psi - phi||^2.
// The hinge subgradient at the kink is 0. Gradient derivation, with
// u = psi = W phi, n = ||u||, u_hat = u/n, r = W^T u - phi:
//   dS_j/du = (w_j - S_j u_hat) / n
//   dL_m/du = sum_{j active} (dS_j/du - dS_y/du)
//   dL/dW   = (dL_m/du) phi^T + 2 lambda (u r^T + (W r) phi^T).
inline LossGrad loss(const ProjectionModel& model, std::span<const double> phi,
                     std::string_view true_label, const ClassEmbeddingSet& classes) {
  const std::size_t y = classes.index_of(true_label);
  if (y == classes.size()) {
    throw std::invalid_argument("loss: true label '" + std::string(true_label) +
                                "' not in class set");
  }
  const std::vector<double> psi = project(model, phi);
  const double n = norm(psi);
  if (n == 0.0) throw std::runtime_error("loss: degenerate projection (psi = 0)");

  const std::size_t d2 = model.d2();
  std::vector<double> scores(classes.size());
  for (std::size_t j = 0; j < classes.size(); ++j) scores[j] = dot(psi, classes.row(j)) / n;

  LossGrad out;
  out.grad = Matrix(model.d2(), model.d1());

  // Margin term: accumulate the active-class sums.
  std::size_t active = 0;
  double active_score_sum = 0.0;
  std::vector<double> active_embed_sum(d2, 0.0);
  for (std::size_t j = 0; j < classes.size(); ++j) {
    if (j == y) continue;
    const double slack = model.margin - scores[y] + scores[j];
    if (slack > 0.0) {
      out.margin_term += slack;
      ++active;
      active_score_sum += scores[j];
      const auto w = classes.row(j);
      for (std::size_t k = 0; k < d2; ++k) active_embed_sum[k] += w[k];
    }
  }

  if (active > 0) {
    const auto wy = classes.row(y);
    const double cnt = static_cast<double>(active);
    std::vector<double> dl_dpsi(d2);
    const double coeff = (active_score_sum - cnt * scores[y]) / (n * n);
    for (std::size_t k = 0; k < d2; ++k) {
      dl_dpsi[k] = (active_embed_sum[k] - cnt * wy[k]) / n - coeff * psi[k];
    }
    out.grad.add_outer(dl_dpsi, phi, 1.0);
  }

  // Tied-decoder reconstruction: r = W^T psi - phi.
  if (model.recon_weight > 0.0) {
    std::vector<double> r = model.w_p.multiply_transposed(psi);
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= phi[k];
    out.recon_term = model.recon_weight * dot(r, r);
    const std::vector<double> wr = model.w_p.multiply(r);
    out.grad.add_outer(psi, r, 2.0 * model.recon_weight);
    out.grad.add_outer(wr, phi, 2.0 * model.recon_weight);
  }

  out.total = out.margin_term + out.recon_term;
  return out;
}

// Adam with bias correction; standard defaults.
struct AdamState {
  Matrix m;
  Matrix v;
  std::size_t step = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  AdamState(std::size_t rows, std::size_t cols, double lr)
      : m(rows, cols), v(rows, cols), learning_rate(lr) {}
};

inline void adam_step(AdamState& state, Matrix& w, const Matrix& grad) {
  if (grad.rows() != w.rows() || grad.cols() != w.cols()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (!grad.all_finite()) {
    throw std::runtime_error("adam_step: non-finite gradient (training diverged)");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto& md = state.m.data();
  auto& vd = state.v.data();
  auto& wd = w.data();
  const auto& gd = grad.data();
  for (std::size_t i = 0; i < wd.size(); ++i) {
    md[i] = state.beta1 * md[i] + (1.0 - state.beta1) * gd[i];
    vd[i] = state.beta2 * vd[i] + (1.0 - state.beta2) * gd[i] * gd[i];
    const double mhat = md[i] / bc1;
    const double vhat = vd[i] / bc2;
    wd[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
  }
}

// Checkpoint: magic "ZSDM", u32 version, u32 D1, u32 D2, then D2*D1 entries
// of W_p as float64 little-endian, row-major.
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const ProjectionModel& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write("ZSDM", 4);
  io::put_u32(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(model.d1()));
  io::put_u32(out, static_cast<std::uint32_t>(model.d2()));
  for (double v : model.w_p.data()) io::put_f64(out, v);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline ProjectionModel load_checkpoint(const std::string& path, double margin = 1.0,
                                       double recon_weight = 1e-3) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4)) throw std::runtime_error(path + ": truncated at byte 0");
  if (std::memcmp(magic, "ZSDM", 4) != 0) throw std::runtime_error(path + ": bad magic at byte 0");
  std::uint64_t offset = 4;
  const std::uint32_t version = io::get_u32(in, offset, path);
  if (version != kCheckpointVersion) {
    std::ostringstream msg;
    msg << path << ": unsupported version " << version << " at byte 4";
    throw std::runtime_error(msg.str());
  }
  const std::uint32_t d1 = io::get_u32(in, offset, path);
  const std::uint32_t d2 = io::get_u32(in, offset, path);
  if (d1 == 0 || d2 == 0) throw std::runtime_error(path + ": zero dimension in header");
  ProjectionModel model;
  model.margin = margin;
  model.recon_weight = recon_weight;
  model.w_p = Matrix(d2, d1);
  for (double& v : model.w_p.data()) v = io::get_f64(in, offset, path);
  char extra;
  if (in.read(&extra, 1)) {
    std::ostringstream msg;
    msg << path << ": trailing data at byte " << offset;
    throw std::runtime_error(msg.str());
  }
  return model;
}

// Store-facing conveniences: build the class view on the fly.
inline std::vector<double> score(const ProjectionModel& model, std::span<const double> phi,
                                 const std::vector<std::string>& classes,
                                 const EmbeddingStore& store) {
  return score_classes(model, phi, ClassEmbeddingSet(store, classes));
}

inline Prediction predict(const ProjectionModel& model, std::span<const double> phi,
                          const std::vector<std::string>& classes, const EmbeddingStore& store) {
  return predict(model, phi, ClassEmbeddingSet(store, classes));
}

inline LossGrad loss(const ProjectionModel& model, std::span<const double> phi,
                     std::string_view true_label, const std::vector<std::string>& classes,
                     const EmbeddingStore& store) {
  return loss(model, phi, true_label, ClassEmbeddingSet(store, classes));
}

}  // namespace zsd
