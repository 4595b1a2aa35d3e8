#pragma once

// Counter-based random numbers. Every scalar is a pure function of
// (seed, stream, index), so random matrices can be generated piecewise, in any
// order and on any worker, and still come out identical.

#include "ptt/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace ptt {

inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a, used to turn a purpose string into a stream id.
inline std::uint64_t hash_tag(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t combine_ids(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b + 0x632be59bd9b4e019ULL)); }

struct SeededStream {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;

  std::uint64_t bits(std::uint64_t index) const { return mix64(mix64(seed ^ mix64(stream)) + index * 0xd1b54a32d192ed03ULL); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t index) const { return static_cast<double>(bits(index) >> 11) * 0x1.0p-53; }

  /// Uniform in (0, 1): never returns 0.
  double uniform_open(std::uint64_t index) const { return (static_cast<double>(bits(index) >> 11) + 0.5) * 0x1.0p-53; }

  /// Standard normal via Box-Muller on the counter pair (2i, 2i+1).
  double gaussian(std::uint64_t index) const {
    const double u1 = uniform_open(2 * index);
    const double u2 = uniform(2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  SeededStream child(std::uint64_t id) const { return {seed, combine_ids(stream, id)}; }
};

/// Entry (i, j) uses counter i + rows * j.
inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, const SeededStream& s) {
  Matrix m(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = s.gaussian(i + rows * j);
  return m;
}

/// Rows [row_begin, row_end) of gaussian_matrix(rows, cols, s).
inline Matrix gaussian_rows(std::size_t rows, std::size_t cols, std::size_t row_begin, std::size_t row_end,
                            const SeededStream& s) {
  Matrix m(row_end - row_begin, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = row_begin; i < row_end; ++i) m(i - row_begin, j) = s.gaussian(i + rows * j);
  return m;
}

inline Matrix uniform_matrix(std::size_t rows, std::size_t cols, const SeededStream& s) {
  Matrix m(rows, cols);
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t i = 0; i < rows; ++i) m(i, j) = s.uniform_open(i + rows * j);
  return m;
}

}  // namespace ptt
