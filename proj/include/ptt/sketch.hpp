#pragma once

// Streaming multi-sketch engine. Sub-tensors are streamed once per pass by a
// worker pool; each consumer turns a sub-tensor into a contribution for one
// distributed block, and contributions are added by the block's owner in
// ascending sub-tensor order so results never depend on scheduling.

#include "ptt/linalg.hpp"
#include "ptt/partition.hpp"
#include "ptt/random.hpp"
#include "ptt/tensor.hpp"
#include "ptt/workers.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptt {

enum class DrmKind { khatri_rao, gaussian };

inline std::string to_string(DrmKind k) { return k == DrmKind::khatri_rao ? "khatri-rao" : "gaussian"; }

/// Random map over the contiguous mode range [first, last) (0-based). The
/// Khatri-Rao kind stores one n_k x width Gaussian factor per mode; row
/// (l_first, ..., l_last-1), column-major with the first mode fastest, is
/// the elementwise product of the factor rows. The Gaussian kind is a dense
/// i.i.d. map generated on demand from its counter stream.
struct KhatriRaoDRM {
  DrmKind kind = DrmKind::khatri_rao;
  std::size_t first = 0;
  std::size_t last = 0;
  std::vector<std::size_t> mode_dims;  // sizes of modes first..last-1
  std::size_t width = 0;
  SeededStream stream;
  std::vector<Matrix> factors;

  std::size_t rows() const { return dim_product(mode_dims, 0, mode_dims.size()); }
  std::size_t stored_scalars() const {
    std::size_t s = 0;
    for (const auto& f : factors) s += static_cast<std::size_t>(f.size());
    return s;
  }

  /// Rows for the box [begin, end) over this map's modes.
  Matrix local(std::span<const std::size_t> begin, std::span<const std::size_t> end) const {
    const auto m = mode_dims.size();
    if (m == 0) return Matrix::Ones(1, static_cast<Eigen::Index>(width));
    if (kind == DrmKind::khatri_rao) {
      Matrix k = factors[0].middleRows(static_cast<Eigen::Index>(begin[0]), static_cast<Eigen::Index>(end[0] - begin[0]));
      for (std::size_t t = 1; t < m; ++t) {
        const auto f = factors[t].middleRows(static_cast<Eigen::Index>(begin[t]), static_cast<Eigen::Index>(end[t] - begin[t]));
        Matrix next(k.rows() * f.rows(), k.cols());
        for (Eigen::Index l = 0; l < f.rows(); ++l)
          next.middleRows(l * k.rows(), k.rows()) = k * f.row(l).asDiagonal();
        k = std::move(next);
      }
      return k;
    }
    std::size_t count = 1;
    for (std::size_t t = 0; t < m; ++t) count *= end[t] - begin[t];
    const auto total = rows();
    Matrix out(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(width));
    std::vector<std::size_t> idx(begin.begin(), begin.end());
    for (std::size_t r = 0; r < count; ++r) {
      std::size_t g = 0, stride = 1;
      for (std::size_t t = 0; t < m; ++t) {
        g += idx[t] * stride;
        stride *= mode_dims[t];
      }
      for (std::size_t c = 0; c < width; ++c) out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = stream.gaussian(g + total * c);
      for (std::size_t t = 0; t < m; ++t) {
        if (++idx[t] < end[t]) break;
        idx[t] = begin[t];
      }
    }
    return out;
  }

  Matrix full() const {
    std::vector<std::size_t> b(mode_dims.size(), 0);
    return local(b, mode_dims);
  }
};

/// Stream ids are derived from (purpose, unfolding, mode) so every map in a
/// run is distinct yet reproducible from one seed.
inline KhatriRaoDRM make_drm(DrmKind kind, const std::vector<std::size_t>& dims, std::size_t first, std::size_t last,
                             std::size_t width, std::uint64_t seed, std::string_view purpose, std::size_t unfolding) {
  KhatriRaoDRM drm;
  drm.kind = kind;
  drm.first = first;
  drm.last = last;
  drm.mode_dims.assign(dims.begin() + static_cast<std::ptrdiff_t>(first), dims.begin() + static_cast<std::ptrdiff_t>(last));
  drm.width = width;
  drm.stream = SeededStream{seed, combine_ids(hash_tag(purpose), unfolding)};
  if (kind == DrmKind::khatri_rao)
    for (std::size_t k = first; k < last; ++k) drm.factors.push_back(gaussian_matrix(dims[k], width, drm.stream.child(k + 1)));
  return drm;
}

/// Explicit Khatri-Rao product A_1 (.) ... with the first factor's row index
/// fastest, i.e. the product written right-to-left as A_m (.) ... (.) A_1.
inline Matrix khatri_rao(const std::vector<Matrix>& factors) {
  if (factors.empty()) throw std::invalid_argument("khatri_rao needs at least one factor");
  Matrix k = factors[0];
  for (std::size_t t = 1; t < factors.size(); ++t) {
    const auto& f = factors[t];
    if (f.cols() != k.cols()) throw std::invalid_argument("khatri_rao factors must share a column count");
    Matrix next(k.rows() * f.rows(), k.cols());
    for (Eigen::Index l = 0; l < f.rows(); ++l) next.middleRows(l * k.rows(), k.rows()) = k * f.row(l).asDiagonal();
    k = std::move(next);
  }
  return k;
}

/// Contribution of a block to a sketch. The block (local dims `ld`) is read as
/// the L x R matrix split after mode `split`; the map covers the modes on the
/// contracted side and `box_begin/box_end` give the block's range over them.
/// Columns side: returns Y * Omega_box (L x w). Rows side: Y^T * Omega_box (R x w).
inline Matrix apply_kr_drm(const double* y, const std::vector<std::size_t>& ld, std::size_t split, bool columns,
                           const KhatriRaoDRM& drm, std::span<const std::size_t> box_begin,
                           std::span<const std::size_t> box_end) {
  const auto L = dim_product(ld, 0, split);
  const auto R = dim_product(ld, split, ld.size());
  const auto w = drm.width;
  const auto kept = columns ? L : R;
  const auto contracted = columns ? R : L;
  std::size_t box = 1;
  for (std::size_t t = 0; t < drm.mode_dims.size(); ++t) box *= box_end[t] - box_begin[t];
  if (contracted != box) throw std::invalid_argument("apply_kr_drm: block does not match the map's modes");
  const ConstMatrixMap Y(y, static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(R));
  const bool explicit_map = drm.kind == DrmKind::gaussian || contracted * w <= L * R || drm.mode_dims.size() <= 1;
  if (explicit_map) {
    const Matrix omega = drm.local(box_begin, box_end);
    if (columns) return Y * omega;
    return Y.transpose() * omega;
  }
  // Column-by-column contraction keeps the scratch below the block size.
  const auto m = drm.mode_dims.size();
  std::vector<Matrix> slices(m);
  for (std::size_t t = 0; t < m; ++t)
    slices[t] = drm.factors[t].middleRows(static_cast<Eigen::Index>(box_begin[t]), static_cast<Eigen::Index>(box_end[t] - box_begin[t]));
  Matrix out(static_cast<Eigen::Index>(kept), static_cast<Eigen::Index>(w));
  Vector v, next;
  for (std::size_t c = 0; c < w; ++c) {
    const auto ci = static_cast<Eigen::Index>(c);
    double scale = 1.0;
    const double* src = y;
    std::size_t len = L * R;
    bool owned = false;
    if (columns) {
      for (std::size_t t = m; t-- > 0;) {  // slowest contracted mode first
        const auto mk = static_cast<std::size_t>(slices[t].rows());
        if (mk == 1) {
          scale *= slices[t](0, ci);
          continue;
        }
        const ConstMatrixMap a(src, static_cast<Eigen::Index>(len / mk), static_cast<Eigen::Index>(mk));
        next = a * slices[t].col(ci);
        v.swap(next);
        src = v.data();
        len /= mk;
        owned = true;
      }
    } else {
      for (std::size_t t = 0; t < m; ++t) {  // fastest contracted mode first
        const auto mk = static_cast<std::size_t>(slices[t].rows());
        if (mk == 1) {
          scale *= slices[t](0, ci);
          continue;
        }
        const ConstMatrixMap a(src, static_cast<Eigen::Index>(mk), static_cast<Eigen::Index>(len / mk));
        next = a.transpose() * slices[t].col(ci);
        v.swap(next);
        src = v.data();
        len /= mk;
        owned = true;
      }
    }
    if (owned)
      out.col(ci) = scale * v;
    else
      out.col(ci) = scale * Eigen::Map<const Vector>(y, static_cast<Eigen::Index>(len));
  }
  return out;
}

/// A block-row distributed matrix: block b lives on worker owner[b].
struct DistributedBlocks {
  std::vector<Matrix> blocks;
  std::vector<std::size_t> owner;
  std::vector<CostCounters::Charge> charges;

  std::size_t count() const { return blocks.size(); }
  std::size_t rows() const {
    std::size_t r = 0;
    for (const auto& b : blocks) r += static_cast<std::size_t>(b.rows());
    return r;
  }
  void release() {
    charges.clear();
    blocks.clear();
  }
};

/// One consumer of a streaming pass.
struct PassConsumer {
  std::size_t targets = 0;
  std::function<std::size_t(const SubTensorRef&)> target;
  std::function<std::pair<std::size_t, std::size_t>(std::size_t)> shape;
  std::function<Matrix(const DenseTensor&, const SubTensorRef&)> contribute;
};

namespace detail {

/// Adds contributions to their target block in ascending source order,
/// buffering early arrivals on the owner.
class OrderedReducer {
 public:
  OrderedReducer(DistributedBlocks& out, std::vector<std::vector<std::size_t>> sources, CostCounters& costs)
      : out_(out), sources_(std::move(sources)), slots_(out.blocks.size()), costs_(costs) {}

  void deliver(std::size_t target, std::size_t source, Matrix&& m, std::size_t from) {
    const auto owner = out_.owner[target];
    if (owner != from) costs_.message(static_cast<std::size_t>(m.size()));
    auto& slot = slots_[target];
    std::lock_guard lock(slot.mu);
    auto charge = costs_.transient(owner, static_cast<std::size_t>(m.size()));
    slot.pending.emplace(source, Pending{std::move(m), std::move(charge)});
    const auto& order = sources_[target];
    auto& block = out_.blocks[target];
    while (slot.next < order.size()) {
      auto it = slot.pending.find(order[slot.next]);
      if (it == slot.pending.end()) break;
      if (block.rows() != it->second.m.rows() || block.cols() != it->second.m.cols())
        throw std::logic_error("contribution shape does not match its target block");
      block += it->second.m;
      slot.pending.erase(it);
      ++slot.next;
    }
  }

  void check_complete() const {
    for (std::size_t t = 0; t < slots_.size(); ++t)
      if (slots_[t].next != sources_[t].size())
        throw std::logic_error("block " + std::to_string(t) + " is missing contributions");
  }

 private:
  struct Pending {
    Matrix m;
    CostCounters::Charge charge;
  };
  struct Slot {
    std::mutex mu;
    std::size_t next = 0;
    std::map<std::size_t, Pending> pending;
  };
  DistributedBlocks& out_;
  std::vector<std::vector<std::size_t>> sources_;
  std::vector<Slot> slots_;
  CostCounters& costs_;
};

}  // namespace detail

/// Allocates zeroed, owner-charged target blocks for a consumer.
inline DistributedBlocks allocate_blocks(std::size_t targets, const std::function<std::pair<std::size_t, std::size_t>(std::size_t)>& shape,
                                         std::size_t workers, CostCounters& costs) {
  DistributedBlocks out;
  out.owner = owner_map(targets, workers);
  out.blocks.resize(targets);
  for (std::size_t t = 0; t < targets; ++t) {
    const auto [r, c] = shape(t);
    out.blocks[t] = Matrix::Zero(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    out.charges.push_back(costs.resident(out.owner[t], r * c));
  }
  return out;
}

struct PassStats {
  double wall_ms = 0.0;
};

/// Streams every sub-tensor exactly once and feeds all consumers.
inline std::vector<DistributedBlocks> stream_pass(const TensorOracle& oracle, const Partition& part, WorkerPool& pool,
                                                  CostCounters& costs, const std::vector<PassConsumer>& consumers,
                                                  PassStats* stats = nullptr) {
  const auto P = part.total();
  std::vector<DistributedBlocks> out;
  out.reserve(consumers.size());
  std::vector<std::unique_ptr<detail::OrderedReducer>> reducers;
  for (const auto& c : consumers) {
    out.push_back(allocate_blocks(c.targets, c.shape, pool.size(), costs));
    std::vector<std::vector<std::size_t>> sources(c.targets);
    for (std::size_t j = 1; j <= P; ++j) sources[c.target(subtensor(part, j))].push_back(j);
    reducers.push_back(std::make_unique<detail::OrderedReducer>(out.back(), std::move(sources), costs));
  }
  Stopwatch sw;
  pool.dynamic_for(P, [&](std::size_t j, std::size_t w) {
    const auto ref = subtensor(part, j + 1);
    auto buffer = costs.transient(w, ref.size());
    const auto block = extract_subtensor(oracle, ref);
    for (std::size_t c = 0; c < consumers.size(); ++c) {
      Matrix m = consumers[c].contribute(block, ref);
      auto scratch = costs.transient(w, static_cast<std::size_t>(m.size()));
      reducers[c]->deliver(consumers[c].target(ref), ref.linear, std::move(m), w);
    }
  });
  if (stats) stats->wall_ms = sw.ms();
  for (const auto& r : reducers) r->check_complete();
  return out;
}

/// Column or row sketch of the unfolding split after mode `split` (1-based
/// unfolding index). Column sketches are distributed over the grid cells of
/// modes 1..split, row sketches over those of modes split+1..d.
struct SketchSpec {
  std::size_t split = 1;
  bool columns = true;
  KhatriRaoDRM drm;
};

inline PassConsumer sketch_consumer(const Partition& part, const SketchSpec& spec) {
  const auto d = part.order();
  const auto split = spec.split;
  const std::size_t kfirst = spec.columns ? 0 : split;
  const std::size_t klast = spec.columns ? split : d;
  PassConsumer c;
  c.targets = part.cells(kfirst, klast);
  c.target = [&part, kfirst, klast](const SubTensorRef& ref) { return grid_cell(part, ref, kfirst, klast); };
  c.shape = [&part, kfirst, klast, w = spec.drm.width](std::size_t cell) {
    std::vector<std::size_t> b, e;
    cell_box(part, cell, kfirst, klast, b, e);
    std::size_t rows = 1;
    for (std::size_t t = 0; t < b.size(); ++t) rows *= e[t] - b[t];
    return std::pair{rows, w};
  };
  c.contribute = [&spec, split](const DenseTensor& block, const SubTensorRef& ref) {
    const auto& drm = spec.drm;
    return apply_kr_drm(block.data(), block.shape().dims(), split, spec.columns, drm,
                        std::span<const std::size_t>(ref.begin).subspan(drm.first, drm.last - drm.first),
                        std::span<const std::size_t>(ref.end).subspan(drm.first, drm.last - drm.first));
  };
  return c;
}

/// Algorithm-level entry point: all requested sketches from a single stream.
inline std::vector<DistributedBlocks> parallel_multi_sketch(const TensorOracle& oracle, const Partition& part,
                                                            const std::vector<SketchSpec>& specs, WorkerPool& pool,
                                                            CostCounters& costs, PassStats* stats = nullptr) {
  std::vector<PassConsumer> consumers;
  for (const auto& s : specs) consumers.push_back(sketch_consumer(part, s));
  return stream_pass(oracle, part, pool, costs, consumers, stats);
}

/// ON basis of the stacked blocks: tree QR over the blocks, then CPQR of the
/// small R factor truncated to `rank`. Q blocks inherit the input owners.
inline DistributedBlocks distributed_basis(const DistributedBlocks& s, std::size_t rank, WorkerPool& pool, CostCounters& costs,
                                           std::size_t* achieved = nullptr) {
  auto tq = tree_qr(s.blocks, pool.parallel_for());
  const auto cp = cpqr_truncated(tq.R, Truncation::fixed(std::max<std::size_t>(rank, 1)));
  const auto r = std::min<std::size_t>(rank, cp.rank);
  DistributedBlocks q;
  q.owner = s.owner;
  q.blocks.resize(s.blocks.size());
  const Matrix qr_r = cp.Q.leftCols(static_cast<Eigen::Index>(r));
  for (std::size_t b = 0; b < s.blocks.size(); ++b) {
    q.blocks[b] = tq.q_blocks[b] * qr_r;
    q.charges.push_back(costs.resident(q.owner[b], static_cast<std::size_t>(q.blocks[b].size())));
  }
  if (achieved) *achieved = r;
  return q;
}

/// Reassemble a distributed matrix whose blocks follow the grid cells of
/// modes [first, last) into its global row order.
inline Matrix assemble_rows(const DistributedBlocks& blocks, const Partition& part, std::size_t first, std::size_t last) {
  const auto& n = part.dims();
  const auto rows = dim_product(n, first, last);
  const auto cols = blocks.blocks.empty() ? 0 : blocks.blocks[0].cols();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows), cols);
  std::vector<std::size_t> b, e;
  for (std::size_t cell = 0; cell < blocks.count(); ++cell) {
    cell_box(part, cell, first, last, b, e);
    std::vector<std::size_t> idx = b;
    const auto m = b.size();
    for (Eigen::Index r = 0; r < blocks.blocks[cell].rows(); ++r) {
      std::size_t g = 0, stride = 1;
      for (std::size_t t = 0; t < m; ++t) {
        g += idx[t] * stride;
        stride *= n[first + t];
      }
      out.row(static_cast<Eigen::Index>(g)) = blocks.blocks[cell].row(r);
      for (std::size_t t = 0; t < m; ++t) {
        if (++idx[t] < e[t]) break;
        idx[t] = b[t];
      }
    }
  }
  return out;
}

}  // namespace ptt
