#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "zsd/model.hpp"
#include "zsd/rng.hpp"

using zsd::ClassEmbeddingSet;
using zsd::EmbeddingStore;
using zsd::Matrix;
using zsd::ProjectionModel;

namespace {

EmbeddingStore store_of(const std::vector<std::pair<std::string, std::vector<double>>>& entries) {
  EmbeddingStore store(entries.front().second.size());
  for (const auto& [token, vec] : entries) store.insert(token, vec);
  return store;
}

// Random unit vectors, no separation guarantee.
std::vector<double> random_unit(std::size_t dim, zsd::Rng& rng) {
  std::vector<double> v(dim);
  double n = 0.0;
  while (n == 0.0) {
    for (auto& x : v) x = rng.normal();
    n = zsd::norm(v);
  }
  for (auto& x : v) x /= n;
  return v;
}

// Central finite differences of the total loss with respect to W_p.
Matrix finite_difference_grad(ProjectionModel model, const std::vector<double>& phi,
                              const std::string& label, const ClassEmbeddingSet& classes,
                              double step) {
  Matrix g(model.d2(), model.d1());
  for (std::size_t r = 0; r < model.d2(); ++r) {
    for (std::size_t c = 0; c < model.d1(); ++c) {
      const double saved = model.w_p(r, c);
      model.w_p(r, c) = saved + step;
      const double up = zsd::loss(model, phi, label, classes).total;
      model.w_p(r, c) = saved - step;
      const double down = zsd::loss(model, phi, label, classes).total;
      model.w_p(r, c) = saved;
      g(r, c) = (up - down) / (2.0 * step);
    }
  }
  return g;
}

double frobenius(const Matrix& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("projection is the plain matrix-vector product") {
  ProjectionModel m;
  m.w_p = Matrix(3, 3);
  for (int i = 0; i < 3; ++i) m.w_p(i, i) = 1.0;
  const std::vector<double> phi{1.0, 2.0, 3.0};
  CHECK(zsd::project(m, phi) == phi);

  m.w_p.fill(0.0);
  CHECK(zsd::project(m, phi) == std::vector<double>{0.0, 0.0, 0.0});

  ProjectionModel m2;
  m2.w_p = Matrix(2, 2);
  m2.w_p(0, 0) = 1.0;
  m2.w_p(0, 1) = 1.0;
  m2.w_p(1, 1) = 1.0;
  CHECK(zsd::project(m2, std::vector<double>{2.0, 3.0}) == std::vector<double>{5.0, 3.0});

  REQUIRE_THROWS(zsd::project(m2, phi));
}

TEST_CASE("scores are cosine similarities in class order") {
  const auto store = store_of({{"cat", {1, 0}}, {"dog", {0, 1}}});
  ProjectionModel m;
  m.w_p = Matrix(2, 2);
  m.w_p(0, 0) = 1.0;
  m.w_p(1, 1) = 1.0;

  const ClassEmbeddingSet classes(store, {"cat", "dog"});
  const auto scores = zsd::score_classes(m, std::vector<double>{2.0, 0.0}, classes);
  CHECK(scores[0] == Catch::Approx(1.0));
  CHECK(scores[1] == Catch::Approx(0.0));

  // zero projection is an error
  m.w_p.fill(0.0);
  REQUIRE_THROWS(zsd::score_classes(m, std::vector<double>{1.0, 1.0}, classes));
}

TEST_CASE("scores agree with cosine_similarity on random instances") {
  zsd::Rng rng(5);
  const std::size_t d1 = 6, d2 = 4;
  EmbeddingStore store(d2);
  store.insert("a", random_unit(d2, rng));
  store.insert("b", random_unit(d2, rng));
  store.insert("c", random_unit(d2, rng));

  ProjectionModel m = zsd::init_model(d1, d2, 1.0, 1e-3, 9);
  const ClassEmbeddingSet classes(store, {"a", "b", "c"});
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> phi(d1);
    for (auto& v : phi) v = rng.uniform(-1.0, 1.0);
    const auto psi = zsd::project(m, phi);
    if (zsd::norm(psi) == 0.0) continue;
    const auto scores = zsd::score_classes(m, phi, classes);
    for (std::size_t j = 0; j < classes.size(); ++j) {
      CHECK(scores[j] == Catch::Approx(zsd::cosine_similarity(psi, classes.row(j))).margin(1e-12));
    }
  }
}

TEST_CASE("loss on the pinned cases") {
  // psi parallel to the true class, all other classes orthogonal: margin term 0
  const auto store = store_of({{"cat", {1, 0}}, {"dog", {0, 1}}});
  ProjectionModel m;
  m.margin = 1.0;
  m.recon_weight = 0.0;
  m.w_p = Matrix(2, 2);
  m.w_p(0, 0) = 1.0;
  m.w_p(1, 1) = 1.0;
  const ClassEmbeddingSet classes(store, {"cat", "dog"});
  const auto at_optimum = zsd::loss(m, std::vector<double>{3.0, 0.0}, "cat", classes);
  CHECK(at_optimum.margin_term == 0.0);
  CHECK(at_optimum.total == 0.0);

  // S_true = 0.2, S_other = 0.5, m = 1 -> max(0, 1 - 0.2 + 0.5) = 1.3
  const double angle_true = std::acos(0.2);
  const double angle_other = std::acos(0.5);
  const auto store2 = store_of({{"t", {std::cos(angle_true), std::sin(angle_true)}},
                                {"o", {std::cos(angle_other), -std::sin(angle_other)}}});
  const ClassEmbeddingSet classes2(store2, {"t", "o"});
  const auto lg = zsd::loss(m, std::vector<double>{1.0, 0.0}, "t", classes2);
  CHECK(lg.margin_term == Catch::Approx(1.3).margin(1e-12));

  REQUIRE_THROWS(zsd::loss(m, std::vector<double>{1.0, 0.0}, "absent", classes2));
}

TEST_CASE("analytic gradient matches central finite differences") {
  zsd::Rng rng(17);
  const std::size_t d1 = 12, d2 = 7;
  EmbeddingStore store(d2);
  const std::vector<std::string> tokens{"c0", "c1", "c2", "c3", "c4"};
  for (const auto& t : tokens) store.insert(t, random_unit(d2, rng));
  const ClassEmbeddingSet classes(store, tokens);

  int checked = 0;
  for (int trial = 0; trial < 20; ++trial) {
    ProjectionModel m = zsd::init_model(d1, d2, 1.0, 1e-3, 100 + trial);
    std::vector<double> phi(d1);
    for (auto& v : phi) v = rng.uniform(-1.0, 1.0);
    const std::string label = tokens[rng.below(tokens.size())];

    // skip draws too close to a hinge kink for finite differences
    const auto scores = zsd::score_classes(m, phi, classes);
    const std::size_t y = classes.index_of(label);
    bool near_kink = false;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (j == y) continue;
      if (std::abs(m.margin - scores[y] + scores[j]) < 1e-3) near_kink = true;
    }
    if (near_kink) continue;

    const auto lg = zsd::loss(m, phi, label, classes);
    const auto fd = finite_difference_grad(m, phi, label, classes, 1e-5);
    Matrix diff = lg.grad;
    diff.add_scaled(fd, -1.0);
    const double rel = frobenius(diff) / std::max(frobenius(fd), 1e-12);
    CHECK(rel < 1e-4);
    ++checked;
  }
  REQUIRE(checked >= 10);
}

TEST_CASE("loss is nonnegative and reduces to the reconstruction term when satisfied") {
  const auto store = store_of({{"cat", {1, 0}}, {"dog", {-1, 0}}});
  ProjectionModel m;
  m.margin = 1.0;
  m.recon_weight = 1e-3;
  m.w_p = Matrix(2, 2);
  m.w_p(0, 0) = 2.0;  // psi = (2x, y): not orthogonal, recon residual nonzero
  m.w_p(1, 1) = 1.0;
  // S_cat = 1, S_dog = -1: every constraint satisfied with slack
  const auto lg = zsd::loss(m, std::vector<double>{1.0, 0.0}, "cat", store.tokens(), store);
  CHECK(lg.margin_term == 0.0);
  CHECK(lg.total == Catch::Approx(lg.recon_term));
  CHECK(lg.total >= 0.0);
}

TEST_CASE("adam on the pinned cases") {
  // zero gradient leaves the weights untouched
  Matrix w(1, 1);
  w(0, 0) = 0.5;
  zsd::AdamState state(1, 1, 1e-3);
  zsd::adam_step(state, w, Matrix(1, 1, 0.0));
  CHECK(w(0, 0) == 0.5);
  CHECK(state.step == 1);

  // one step against gradient 1 moves by about the learning rate
  Matrix w2(1, 1);
  w2(0, 0) = 1.0;
  zsd::AdamState s2(1, 1, 1e-3);
  zsd::adam_step(s2, w2, Matrix(1, 1, 1.0));
  CHECK(w2(0, 0) == Catch::Approx(1.0 - 1e-3).margin(1e-9));

  // constant positive gradient keeps moving the weight down
  Matrix w3(1, 1);
  w3(0, 0) = 0.0;
  zsd::AdamState s3(1, 1, 1e-3);
  double prev = 0.0;
  for (int i = 0; i < 50; ++i) {
    zsd::adam_step(s3, w3, Matrix(1, 1, 2.5));
    CHECK(w3(0, 0) < prev);
    prev = w3(0, 0);
  }

  Matrix bad(1, 1, std::numeric_limits<double>::quiet_NaN());
  REQUIRE_THROWS(zsd::adam_step(s3, w3, bad));
}

TEST_CASE("predict basics and invariances") {
  const auto store = store_of({{"cat", {1, 0}}, {"dog", {0, 1}}});
  ProjectionModel m;
  m.w_p = Matrix(2, 2);
  m.w_p(0, 0) = 1.0;
  m.w_p(1, 1) = 1.0;

  const auto single = zsd::predict(m, std::vector<double>{0.3, 0.1}, {"cat"}, store);
  CHECK(single.label == "cat");

  const auto dog = zsd::predict(m, std::vector<double>{0.0, 1.0}, {"cat", "dog"}, store);
  CHECK(dog.label == "dog");
  CHECK(dog.score == Catch::Approx(1.0));

  REQUIRE_THROWS(zsd::ClassEmbeddingSet(store, {}));

  zsd::Rng rng(29);
  const ClassEmbeddingSet classes(store, {"cat", "dog"});
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> phi{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
    if (zsd::norm(zsd::project(m, phi)) == 0.0) continue;
    const auto base = zsd::predict(m, phi, classes);

    std::vector<double> scaled = phi;
    for (auto& v : scaled) v *= 2.0;
    CHECK(zsd::predict(m, scaled, classes).label == base.label);

    // argmax is invariant under increasing affine transforms of the scores
    const auto scores = zsd::score_classes(m, phi, classes);
    const double a = rng.uniform(0.1, 5.0);
    const double b = rng.uniform(-2.0, 2.0);
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.size(); ++j) {
      if (a * scores[j] + b > a * scores[best] + b) best = j;
    }
    CHECK(classes.token(best) == base.label);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  ProjectionModel m = zsd::init_model(5, 3, 1.0, 1e-3, 77);
  const auto path = (std::filesystem::temp_directory_path() / "model_rt.zsdm").string();
  zsd::save_checkpoint(m, path);
  const auto back = zsd::load_checkpoint(path, m.margin, m.recon_weight);
  CHECK(back.w_p == m.w_p);
  CHECK(back.d1() == 5);
  CHECK(back.d2() == 3);

  // corrupting the magic is rejected
  {
    std::ofstream out(path, std::ios::binary);
    out << "JUNKJUNKJUNK";
  }
  REQUIRE_THROWS(zsd::load_checkpoint(path));
}
