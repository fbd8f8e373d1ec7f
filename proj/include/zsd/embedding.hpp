#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "zsd/matrix.hpp"

namespace zsd {

// Reserved label for background training samples. Rejected by the embedding
// loader so it can never collide with a real class.
inline constexpr std::string_view kBackgroundToken = "__background__";

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  }
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw std::invalid_argument("cosine_similarity: zero vector");
  }
  return dot(a, b) / (na * nb);
}

// Word embeddings keyed by token. Vectors are L2-normalized on insertion,
// which leaves every cosine similarity unchanged. Immutable once loaded.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {}

  // One record per line: `token v1 v2 ... vD`, single-space separated.
  static EmbeddingStore load(const std::string& path, std::size_t expected_dim) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open embedding file: " + path);
    EmbeddingStore store(expected_dim);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      store.insert_line(line, line_no, path);
    }
    if (store.size() == 0) {
      throw std::runtime_error("embedding file is empty: " + path);
    }
    return store;
  }

  // Normalizes and stores; duplicates keep the first occurrence and bump the
  // warning count. The reserved background token is rejected.
  void insert(const std::string& token, std::vector<double> vec) {
    if (token == kBackgroundToken) {
      throw std::runtime_error("embedding token '" + token + "' is reserved");
    }
    if (dim_ == 0) dim_ = vec.size();
    if (vec.size() != dim_) {
      throw std::runtime_error("embedding dimension mismatch for token '" + token + "'");
    }
    if (index_.count(token)) {
      ++duplicate_warnings_;
      return;
    }
    const double n = norm(vec);
    if (n == 0.0 || !std::isfinite(n)) {
      throw std::runtime_error("embedding for token '" + token + "' is zero or non-finite");
    }
    for (double& v : vec) v /= n;
    index_.emplace(token, tokens_.size());
    tokens_.push_back(token);
    values_.insert(values_.end(), vec.begin(), vec.end());
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return tokens_.size(); }
  std::size_t duplicate_warnings() const { return duplicate_warnings_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool contains(std::string_view token) const {
    return index_.find(std::string(token)) != index_.end();
  }

  std::span<const double> vector(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) {
      throw std::out_of_range("no embedding for token '" + std::string(token) + "'");
    }
    return std::span<const double>(values_.data() + it->second * dim_, dim_);
  }

 private:
  void insert_line(const std::string& line, std::size_t line_no, const std::string& path) {
    const auto fail = [&](const std::string& what) {
      std::ostringstream msg;
      msg << path << ":" << line_no << ": " << what;
      throw std::runtime_error(msg.str());
    };
    const std::size_t sep = line.find(' ');
    if (sep == std::string::npos || sep == 0) fail("expected `token v1 ... vD`");
    const std::string token = line.substr(0, sep);
    if (token == kBackgroundToken) fail("token is reserved for the background class");

    std::vector<double> vec;
    vec.reserve(dim_);
    const char* p = line.data() + sep + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      double value = 0.0;
      const auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc() || !std::isfinite(value)) fail("malformed number");
      vec.push_back(value);
      if (next == end) break;
      if (*next != ' ') fail("expected single-space separators");
      p = next + 1;
      if (p == end) fail("trailing separator");
    }
    if (vec.size() != dim_) {
      std::ostringstream what;
      what << "expected " << dim_ << " values, found " << vec.size();
      fail(what.str());
    }
    insert(token, std::move(vec));
  }

  std::size_t dim_ = 0;
  std::size_t duplicate_warnings_ = 0;
  std::vector<std::string> tokens_;
  std::vector<double> values_;  // size() * dim_, one row per token
  std::unordered_map<std::string, std::size_t> index_;
};

// The class-set partition C = S ∪ U ∪ O. Each set is sorted lexicographically.
struct ClassVocabulary {
  std::vector<std::string> seen;
  std::vector<std::string> unseen;
  std::vector<std::string> open;

  std::vector<std::string> all() const {
    std::vector<std::string> out;
    out.reserve(seen.size() + unseen.size() + open.size());
    out.insert(out.end(), seen.begin(), seen.end());
    out.insert(out.end(), unseen.begin(), unseen.end());
    out.insert(out.end(), open.begin(), open.end());
    return out;
  }
};

namespace detail {

inline std::vector<std::string> sorted_unique(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  return tokens;
}

}  // namespace detail

// Partitions the eligible vocabulary into seen / unseen / open. The eligible
// list stands in for an external synset filter; open = (eligible ∩ store) \ (S ∪ U).
inline ClassVocabulary build_open_vocabulary(const EmbeddingStore& store,
                                             std::vector<std::string> seen,
                                             std::vector<std::string> unseen,
                                             std::vector<std::string> eligible) {
  ClassVocabulary vocab;
  vocab.seen = detail::sorted_unique(std::move(seen));
  vocab.unseen = detail::sorted_unique(std::move(unseen));
  eligible = detail::sorted_unique(std::move(eligible));

  std::vector<std::string> overlap;
  std::set_intersection(vocab.seen.begin(), vocab.seen.end(), vocab.unseen.begin(),
                        vocab.unseen.end(), std::back_inserter(overlap));
  if (!overlap.empty()) {
    throw std::invalid_argument("seen and unseen classes overlap: " + overlap.front());
  }

  std::vector<std::string> missing;
  const auto require_embedded = [&](const std::vector<std::string>& tokens) {
    for (const auto& t : tokens) {
      if (!store.contains(t)) missing.push_back(t);
    }
  };
  require_embedded(vocab.seen);
  require_embedded(vocab.unseen);
  if (!missing.empty()) {
    std::string what = "tokens without embeddings:";
    for (const auto& t : missing) what += " " + t;
    throw std::invalid_argument(what);
  }

  // seen/unseen must lie inside the eligible vocabulary
  for (const auto& t : vocab.seen) {
    if (!std::binary_search(eligible.begin(), eligible.end(), t)) {
      throw std::invalid_argument("seen class not eligible: " + t);
    }
  }
  for (const auto& t : vocab.unseen) {
    if (!std::binary_search(eligible.begin(), eligible.end(), t)) {
      throw std::invalid_argument("unseen class not eligible: " + t);
    }
  }

  std::set<std::string> assigned(vocab.seen.begin(), vocab.seen.end());
  assigned.insert(vocab.unseen.begin(), vocab.unseen.end());
  for (const auto& t : eligible) {
    // eligible tokens without an embedding drop out of the partition
    if (!assigned.count(t) && store.contains(t)) vocab.open.push_back(t);
  }
  return vocab;
}

}  // namespace zsd
