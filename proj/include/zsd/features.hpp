#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsd {

namespace io {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f32(std::ostream& out, float v) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, 8);
  put_u32(out, static_cast<std::uint32_t>(bits));
  put_u32(out, static_cast<std::uint32_t>(bits >> 32));
}

inline std::uint32_t get_u32(std::istream& in, std::uint64_t& offset, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    std::ostringstream msg;
    msg << path << ": truncated at byte " << offset;
    throw std::runtime_error(msg.str());
  }
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& in, std::uint64_t& offset, const std::string& path) {
  const std::uint32_t bits = get_u32(in, offset, path);
  float v = 0.0f;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double get_f64(std::istream& in, std::uint64_t& offset, const std::string& path) {
  const std::uint64_t lo = get_u32(in, offset, path);
  const std::uint64_t hi = get_u32(in, offset, path);
  const std::uint64_t bits = lo | (hi << 32);
  double v = 0.0;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace io

// N x D1 matrix of precomputed region features. On disk: magic "ZSDF",
// u32 version, u32 N, u32 D1, then N*D1 float32 little-endian, row-major.
class FeatureMatrix {
 public:
  static constexpr std::uint32_t kVersion = 1;

  FeatureMatrix() = default;
  explicit FeatureMatrix(std::size_t dim) : dim_(dim) {}

  std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
  std::size_t dim() const { return dim_; }

  std::span<const float> row(std::size_t r) const {
    return std::span<const float>(data_.data() + r * dim_, dim_);
  }

  std::vector<double> row_vector(std::size_t r) const {
    if (r >= rows()) throw std::out_of_range("FeatureMatrix: row out of range");
    std::vector<double> out(dim_);
    const float* p = data_.data() + r * dim_;
    for (std::size_t i = 0; i < dim_; ++i) out[i] = static_cast<double>(p[i]);
    return out;
  }

  std::uint32_t append_row(std::span<const double> values) {
    if (dim_ == 0) dim_ = values.size();
    if (values.size() != dim_) {
      throw std::invalid_argument("FeatureMatrix::append_row: dimension mismatch");
    }
    for (double v : values) {
      if (!std::isfinite(v)) throw std::invalid_argument("FeatureMatrix: non-finite feature");
      data_.push_back(static_cast<float>(v));
    }
    return static_cast<std::uint32_t>(rows() - 1);
  }

  void append(const FeatureMatrix& other) {
    if (dim_ == 0) dim_ = other.dim_;
    if (other.dim_ != dim_ && other.rows() > 0) {
      throw std::invalid_argument("FeatureMatrix::append: dimension mismatch");
    }
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write feature file: " + path);
    out.write("ZSDF", 4);
    io::put_u32(out, kVersion);
    io::put_u32(out, static_cast<std::uint32_t>(rows()));
    io::put_u32(out, static_cast<std::uint32_t>(dim_));
    for (float v : data_) io::put_f32(out, v);
    if (!out) throw std::runtime_error("write failed: " + path);
  }

  static FeatureMatrix load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open feature file: " + path);
    std::uint64_t offset = 0;
    char magic[4];
    if (!in.read(magic, 4)) throw std::runtime_error(path + ": truncated at byte 0");
    offset = 4;
    if (std::memcmp(magic, "ZSDF", 4) != 0) {
      throw std::runtime_error(path + ": bad magic at byte 0");
    }
    const std::uint32_t version = io::get_u32(in, offset, path);
    if (version != kVersion) {
      std::ostringstream msg;
      msg << path << ": unsupported version " << version << " at byte 4";
      throw std::runtime_error(msg.str());
    }
    const std::uint32_t n = io::get_u32(in, offset, path);
    const std::uint32_t dim = io::get_u32(in, offset, path);
    FeatureMatrix m(dim);
    m.data_.reserve(static_cast<std::size_t>(n) * dim);
    for (std::uint64_t i = 0; i < static_cast<std::uint64_t>(n) * dim; ++i) {
      const float v = io::get_f32(in, offset, path);
      if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << path << ": non-finite value at byte " << (offset - 4);
        throw std::runtime_error(msg.str());
      }
      m.data_.push_back(v);
    }
    char extra;
    if (in.read(&extra, 1)) {
      std::ostringstream msg;
      msg << path << ": trailing data at byte " << offset;
      throw std::runtime_error(msg.str());
    }
    return m;
  }

  bool operator==(const FeatureMatrix& other) const {
    if (dim_ != other.dim_ || data_.size() != other.data_.size()) return false;
    return std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
  }

 private:
  std::size_t dim_ = 0;
  std::vector<float> data_;
};

}  // namespace zsd
