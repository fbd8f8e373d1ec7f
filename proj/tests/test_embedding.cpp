#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "zsd/embedding.hpp"
#include "zsd/rng.hpp"

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

}  // namespace

TEST_CASE("load keeps unit vectors and normalizes the rest") {
  const auto path = write_temp("emb_basic.txt", "cat 1 0 0\ndog 3 0 4\n");
  const auto store = zsd::EmbeddingStore::load(path, 3);
  REQUIRE(store.size() == 2);

  const auto cat = store.vector("cat");
  CHECK(cat[0] == Catch::Approx(1.0));
  CHECK(cat[1] == 0.0);
  CHECK(cat[2] == 0.0);

  const auto dog = store.vector("dog");
  CHECK(dog[0] == Catch::Approx(0.6));
  CHECK(dog[1] == 0.0);
  CHECK(dog[2] == Catch::Approx(0.8));
}

TEST_CASE("load rejects arity violations with the line number") {
  const auto path = write_temp("emb_arity.txt", "cat 1 0\n");
  REQUIRE_THROWS_WITH(zsd::EmbeddingStore::load(path, 3),
                      Catch::Matchers::ContainsSubstring(":1:"));
}

TEST_CASE("load rejects empty files and the reserved background token") {
  const auto empty = write_temp("emb_empty.txt", "");
  REQUIRE_THROWS(zsd::EmbeddingStore::load(empty, 3));

  const auto reserved = write_temp("emb_reserved.txt",
                                   std::string(zsd::kBackgroundToken) + " 1 0 0\n");
  REQUIRE_THROWS(zsd::EmbeddingStore::load(reserved, 3));
}

TEST_CASE("duplicate tokens keep the first occurrence and count a warning") {
  const auto path = write_temp("emb_dup.txt", "cat 1 0 0\ncat 0 1 0\n");
  const auto store = zsd::EmbeddingStore::load(path, 3);
  REQUIRE(store.size() == 1);
  CHECK(store.duplicate_warnings() == 1);
  CHECK(store.vector("cat")[0] == Catch::Approx(1.0));
}

TEST_CASE("every stored embedding is unit norm after load") {
  zsd::Rng rng(7);
  std::string content;
  for (int i = 0; i < 40; ++i) {
    content += "tok" + std::to_string(i);
    for (int d = 0; d < 10; ++d) content += " " + std::to_string(rng.uniform(-5.0, 5.0));
    content += "\n";
  }
  const auto store = zsd::EmbeddingStore::load(write_temp("emb_norm.txt", content), 10);
  for (const auto& t : store.tokens()) {
    CHECK(std::abs(zsd::norm(store.vector(t)) - 1.0) < 1e-6);
  }
}

TEST_CASE("cosine similarity basics") {
  const std::vector<double> ex{1.0, 0.0};
  const std::vector<double> ey{0.0, 1.0};
  const std::vector<double> diag{1.0, 1.0};
  CHECK(zsd::cosine_similarity(ex, ex) == Catch::Approx(1.0));
  CHECK(zsd::cosine_similarity(ex, ey) == Catch::Approx(0.0));
  CHECK(zsd::cosine_similarity(diag, ex) == Catch::Approx(0.70710678).epsilon(1e-8));

  const std::vector<double> zero{0.0, 0.0};
  REQUIRE_THROWS(zsd::cosine_similarity(ex, zero));
  REQUIRE_THROWS(zsd::cosine_similarity(ex, std::vector<double>{1.0, 0.0, 0.0}));
}

TEST_CASE("cosine similarity is symmetric and scale invariant") {
  zsd::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t dim = 2 + rng.below(6);
    std::vector<double> a(dim), b(dim);
    for (auto& v : a) v = rng.uniform(-1.0, 1.0);
    for (auto& v : b) v = rng.uniform(-1.0, 1.0);
    if (zsd::norm(a) == 0.0 || zsd::norm(b) == 0.0) continue;

    const double ab = zsd::cosine_similarity(a, b);
    CHECK(ab >= -1.0 - 1e-12);
    CHECK(ab <= 1.0 + 1e-12);
    CHECK(ab == Catch::Approx(zsd::cosine_similarity(b, a)));

    const double alpha = rng.uniform(0.1, 10.0);
    std::vector<double> scaled = a;
    for (auto& v : scaled) v *= alpha;
    CHECK(zsd::cosine_similarity(scaled, b) == Catch::Approx(ab).margin(1e-12));
  }
}

TEST_CASE("open vocabulary is the eligible set minus seen and unseen") {
  const auto path = write_temp("emb_vocab.txt", "a 1 0\nb 0 1\nc 1 1\nd 1 2\n");
  const auto store = zsd::EmbeddingStore::load(path, 2);

  const auto vocab = zsd::build_open_vocabulary(store, {"a"}, {"b"}, {"a", "b", "c", "d"});
  CHECK(vocab.seen == std::vector<std::string>{"a"});
  CHECK(vocab.unseen == std::vector<std::string>{"b"});
  CHECK(vocab.open == std::vector<std::string>{"c", "d"});

  const auto exhausted = zsd::build_open_vocabulary(store, {"a"}, {"b"}, {"a", "b"});
  CHECK(exhausted.open.empty());

  REQUIRE_THROWS(zsd::build_open_vocabulary(store, {"a"}, {"a"}, {"a", "b"}));
  REQUIRE_THROWS(zsd::build_open_vocabulary(store, {"zzz"}, {"b"}, {"zzz", "b"}));
}

TEST_CASE("vocabulary partition covers the embedded eligible set exactly") {
  zsd::Rng rng(3);
  std::string content;
  std::vector<std::string> all;
  for (int i = 0; i < 30; ++i) {
    const std::string tok = "w" + std::to_string(i);
    all.push_back(tok);
    content += tok + " " + std::to_string(rng.uniform(-1.0, 1.0)) + " " +
               std::to_string(rng.uniform(-1.0, 1.0)) + "\n";
  }
  const auto store = zsd::EmbeddingStore::load(write_temp("emb_part.txt", content), 2);

  const std::vector<std::string> seen(all.begin(), all.begin() + 10);
  const std::vector<std::string> unseen(all.begin() + 10, all.begin() + 15);
  const auto vocab = zsd::build_open_vocabulary(store, seen, unseen, all);

  std::set<std::string> joined(vocab.seen.begin(), vocab.seen.end());
  for (const auto& t : vocab.unseen) REQUIRE(joined.insert(t).second);
  for (const auto& t : vocab.open) REQUIRE(joined.insert(t).second);
  CHECK(joined == std::set<std::string>(all.begin(), all.end()));
}
