#pragma once

// Binary files: DTF1 (dense), TTF1 (tensor train), TKF1 (Tucker). All
// integers are u64 and all values float64, little-endian, column-major.

#include "ptt/tensor.hpp"
#include "ptt/tt.hpp"
#include "ptt/tucker.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptt {

namespace io {

inline std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  std::uint64_t out = 0;
  for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
  return out;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
    if (!out_) throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  void magic(const char* m) { out_.write(m, 4); }
  void u64(std::uint64_t v) {
    v = to_le(v);
    out_.write(reinterpret_cast<const char*>(&v), 8);
  }
  void f64(const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) u64(std::bit_cast<std::uint64_t>(p[i]));
  }
  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("write to '" + path_ + "' failed");
  }

 private:
  std::ofstream out_;
  std::string path_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
    if (!in_) throw std::runtime_error("cannot open '" + path + "'");
  }
  std::string magic() {
    std::array<char, 4> m{};
    read(m.data(), 4);
    return std::string(m.data(), 4);
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    read(reinterpret_cast<char*>(&v), 8);
    return to_le(v);
  }
  std::size_t count(std::uint64_t limit = std::uint64_t{1} << 40) {
    const auto v = u64();
    if (v == 0 || v > limit) throw std::runtime_error("implausible size field in '" + path_ + "'");
    return static_cast<std::size_t>(v);
  }
  void f64(double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[i] = std::bit_cast<double>(u64());
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes in '" + path_ + "'");
  }

 private:
  void read(char* p, std::size_t n) {
    in_.read(p, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) throw std::runtime_error("'" + path_ + "' is truncated");
  }
  std::ifstream in_;
  std::string path_;
};

inline std::vector<std::size_t> read_dims(Reader& r, std::size_t d) {
  std::vector<std::size_t> dims(d);
  for (auto& n : dims) n = r.count();
  return dims;
}

}  // namespace io

/// Magic string of a file ("DTF1", "TTF1", "TKF1" or whatever is there).
inline std::string file_magic(const std::string& path) {
  io::Reader r(path);
  return r.magic();
}

inline void write_dense(const std::string& path, const DenseTensor& t) {
  io::Writer w(path);
  w.magic("DTF1");
  w.u64(t.order());
  for (auto n : t.shape().dims()) w.u64(n);
  w.f64(t.data(), t.size());
  w.finish();
}

inline DenseTensor read_dense(const std::string& path) {
  io::Reader r(path);
  if (r.magic() != "DTF1") throw std::runtime_error("'" + path + "' is not a DTF1 file");
  const auto d = r.count(64);
  DenseTensor t{Shape(io::read_dims(r, d))};
  r.f64(t.values().data(), t.size());
  r.expect_end();
  return t;
}

inline void write_tt(const std::string& path, const TTTensor& t) {
  io::Writer w(path);
  w.magic("TTF1");
  w.u64(t.order());
  for (auto n : t.dims()) w.u64(n);
  for (auto s : t.core_sizes()) w.u64(s);
  for (const auto& c : t.cores()) w.f64(c.values.data(), c.size());
  w.finish();
}

inline TTTensor read_tt(const std::string& path) {
  io::Reader r(path);
  if (r.magic() != "TTF1") throw std::runtime_error("'" + path + "' is not a TTF1 file");
  const auto d = r.count(64);
  const auto dims = io::read_dims(r, d);
  const auto sizes = io::read_dims(r, d + 1);
  std::vector<TTCore> cores;
  for (std::size_t k = 0; k < d; ++k) {
    TTCore c(sizes[k], dims[k], sizes[k + 1]);
    r.f64(c.values.data(), c.size());
    cores.push_back(std::move(c));
  }
  r.expect_end();
  return TTTensor(std::move(cores));
}

inline void write_tucker(const std::string& path, const TuckerTensor& t) {
  t.validate();
  io::Writer w(path);
  w.magic("TKF1");
  w.u64(t.order());
  for (auto n : t.dims()) w.u64(n);
  for (auto s : t.core.shape().dims()) w.u64(s);
  w.f64(t.core.data(), t.core.size());
  for (const auto& a : t.factors) w.f64(a.data(), static_cast<std::size_t>(a.size()));
  w.finish();
}

inline TuckerTensor read_tucker(const std::string& path) {
  io::Reader r(path);
  if (r.magic() != "TKF1") throw std::runtime_error("'" + path + "' is not a TKF1 file");
  const auto d = r.count(64);
  const auto dims = io::read_dims(r, d);
  const auto core_dims = io::read_dims(r, d);
  TuckerTensor t;
  t.core = DenseTensor(Shape(core_dims));
  r.f64(t.core.values().data(), t.core.size());
  for (std::size_t k = 0; k < d; ++k) {
    Matrix a(static_cast<Eigen::Index>(dims[k]), static_cast<Eigen::Index>(core_dims[k]));
    r.f64(a.data(), static_cast<std::size_t>(a.size()));
    t.factors.push_back(std::move(a));
  }
  r.expect_end();
  t.validate();
  return t;
}

}  // namespace ptt
