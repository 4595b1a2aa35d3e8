#pragma once

// Partition of the index box into sub-tensors, grid enumeration and the
// contiguous owner map for distributed sketch blocks.

#include "ptt/tensor.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptt {

/// Nearly equal split of n into p chunks; the first n mod p chunks get one extra.
inline std::size_t chunk_begin(std::size_t n, std::size_t p, std::size_t c) {
  const auto base = n / p, extra = n % p;
  return c * base + std::min(c, extra);
}

class Partition {
 public:
  Partition() = default;
  Partition(const Shape& shape, std::vector<std::size_t> counts) : dims_(shape.dims()), counts_(std::move(counts)) {
    if (counts_.size() != dims_.size()) throw std::invalid_argument("partition needs one chunk count per mode");
    for (std::size_t k = 0; k < dims_.size(); ++k)
      if (counts_[k] < 1 || counts_[k] > dims_[k])
        throw std::invalid_argument("chunk count for mode " + std::to_string(k + 1) + " must lie in [1, " +
                                    std::to_string(dims_[k]) + "]");
  }

  std::size_t order() const { return dims_.size(); }
  const std::vector<std::size_t>& counts() const { return counts_; }
  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t total() const { return dim_product(counts_, 0, counts_.size()); }
  /// Number of grid cells over modes [first, last) (0-based).
  std::size_t cells(std::size_t first, std::size_t last) const { return dim_product(counts_, first, last); }

  /// 0-based offsets of chunk c (0-based) of mode k (0-based).
  std::size_t begin(std::size_t k, std::size_t c) const { return chunk_begin(dims_[k], counts_[k], c); }
  std::size_t end(std::size_t k, std::size_t c) const { return chunk_begin(dims_[k], counts_[k], c + 1); }

  /// Largest sub-tensor entry count.
  std::size_t max_block_size() const {
    std::size_t s = 1;
    for (std::size_t k = 0; k < dims_.size(); ++k) s *= (dims_[k] + counts_[k] - 1) / counts_[k];
    return s;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<std::size_t> counts_;
};

/// One sub-tensor. `grid` and `linear` are 1-based as in the column-major
/// vectorization j = 1 + sum (j_k - 1) prod_{l<k} P_l; begin/end are 0-based.
struct SubTensorRef {
  std::vector<std::size_t> grid;
  std::size_t linear = 1;
  std::vector<std::size_t> begin;
  std::vector<std::size_t> end;

  std::vector<std::size_t> local_dims() const {
    std::vector<std::size_t> out(begin.size());
    for (std::size_t k = 0; k < begin.size(); ++k) out[k] = end[k] - begin[k];
    return out;
  }
  std::size_t size() const {
    std::size_t s = 1;
    for (std::size_t k = 0; k < begin.size(); ++k) s *= end[k] - begin[k];
    return s;
  }
};

inline SubTensorRef subtensor(const Partition& part, std::size_t linear) {
  if (linear < 1 || linear > part.total()) throw std::out_of_range("sub-tensor index out of range");
  SubTensorRef ref;
  ref.linear = linear;
  const auto d = part.order();
  ref.grid.resize(d);
  ref.begin.resize(d);
  ref.end.resize(d);
  auto rest = linear - 1;
  for (std::size_t k = 0; k < d; ++k) {
    const auto c = rest % part.counts()[k];
    rest /= part.counts()[k];
    ref.grid[k] = c + 1;
    ref.begin[k] = part.begin(k, c);
    ref.end[k] = part.end(k, c);
  }
  return ref;
}

inline SubTensorRef subtensor(const Partition& part, const std::vector<std::size_t>& grid) {
  if (grid.size() != part.order()) throw std::out_of_range("grid index has wrong length");
  std::size_t linear = 0, stride = 1;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid[k] < 1 || grid[k] > part.counts()[k]) throw std::out_of_range("grid index out of range");
    linear += (grid[k] - 1) * stride;
    stride *= part.counts()[k];
  }
  return subtensor(part, linear + 1);
}

/// 0-based index of the grid cell of `ref` restricted to modes [first, last).
inline std::size_t grid_cell(const Partition& part, const SubTensorRef& ref, std::size_t first, std::size_t last) {
  std::size_t cell = 0, stride = 1;
  for (std::size_t k = first; k < last; ++k) {
    cell += (ref.grid[k] - 1) * stride;
    stride *= part.counts()[k];
  }
  return cell;
}

/// Box of grid cell `cell` over modes [first, last): 0-based begin/end per mode.
inline void cell_box(const Partition& part, std::size_t cell, std::size_t first, std::size_t last,
                     std::vector<std::size_t>& begin, std::vector<std::size_t>& end) {
  begin.resize(last - first);
  end.resize(last - first);
  for (std::size_t k = first; k < last; ++k) {
    const auto c = cell % part.counts()[k];
    cell /= part.counts()[k];
    begin[k - first] = part.begin(k, c);
    end[k - first] = part.end(k, c);
  }
}

/// Evaluate a sub-tensor through the oracle (counts its entries).
inline DenseTensor extract_subtensor(const TensorOracle& oracle, const SubTensorRef& ref) {
  DenseTensor out{Shape(ref.local_dims())};
  oracle.load_box(ref.begin, ref.end, out.values());
  return out;
}

/// Contiguous balanced assignment of `blocks` to `workers`: the first
/// (blocks mod workers) workers own one extra block.
inline std::vector<std::size_t> owner_map(std::size_t blocks, std::size_t workers) {
  if (workers == 0) throw std::invalid_argument("owner_map needs at least one worker");
  std::vector<std::size_t> owner(blocks);
  for (std::size_t w = 0; w < workers; ++w)
    for (auto b = chunk_begin(blocks, workers, w); b < chunk_begin(blocks, workers, w + 1); ++b) owner[b] = w;
  return owner;
}

/// Worker count the default grid is sized for, independent of the pool size.
inline constexpr std::size_t default_grid_workers = 8;

/// Default grid: split modes 1 and d first, then 2 and d-1, and so on, until
/// sub-tensors fit `target_block` scalars and there are at least
/// 2 * workers of them along the outer modes.
inline std::vector<std::size_t> default_partition(const Shape& shape, std::size_t workers, std::size_t target_block) {
  const auto d = shape.order();
  std::vector<std::size_t> counts(d, 1);
  const auto& n = shape.dims();
  std::vector<std::size_t> order;
  for (std::size_t lo = 0, hi = d; lo < hi;) {
    order.push_back(lo++);
    if (lo < hi) order.push_back(--hi);
  }
  auto block = [&] {
    std::size_t s = 1;
    for (std::size_t k = 0; k < d; ++k) s *= (n[k] + counts[k] - 1) / counts[k];
    return s;
  };
  auto outer_cells = [&] { return d == 1 ? counts[0] : std::min(counts[0], counts[d - 1]); };
  auto grow_pair = [&](std::size_t pos) {
    const auto a = order[pos];
    const auto b = pos + 1 < order.size() ? order[pos + 1] : a;
    const auto pick = (n[a] / counts[a] >= n[b] / counts[b]) ? a : b;
    for (auto k : {pick, pick == a ? b : a}) {
      if (counts[k] < n[k]) {
        counts[k] = std::min(n[k], counts[k] * 2);
        return true;
      }
    }
    return false;
  };
  const auto outer_max = d == 1 ? n[0] : std::min(n[0], n[d - 1]);
  for (;;) {
    const bool small_enough = block() <= target_block;
    const bool distributed = outer_cells() >= std::min<std::size_t>(2 * workers, outer_max);
    if (small_enough && distributed) break;
    bool grown = false;
    if (!distributed) grown = grow_pair(0);
    for (std::size_t pos = 0; !grown && pos < order.size(); pos += 2) grown = grow_pair(pos);
    if (!grown) break;
  }
  return counts;
}

}  // namespace ptt
