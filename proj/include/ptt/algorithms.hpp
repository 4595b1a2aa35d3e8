#pragma once

// TT construction: Parallel-TTSVD on dense input and the streaming sketch
// family (PSTT, PSTT-onepass, PSTT2, PSTT2-onepass, SSTT) on entry oracles.

#include "ptt/linalg.hpp"
#include "ptt/partition.hpp"
#include "ptt/sketch.hpp"
#include "ptt/tensor.hpp"
#include "ptt/tt.hpp"
#include "ptt/workers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptt {

enum class Method { ttsvd, parallel_ttsvd, pstt, pstt_onepass, pstt2, pstt2_onepass, sstt };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::ttsvd: return "ttsvd";
    case Method::parallel_ttsvd: return "parallel-ttsvd";
    case Method::pstt: return "pstt";
    case Method::pstt_onepass: return "pstt-onepass";
    case Method::pstt2: return "pstt2";
    case Method::pstt2_onepass: return "pstt2-onepass";
    case Method::sstt: return "sstt";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  for (auto m : {Method::ttsvd, Method::parallel_ttsvd, Method::pstt, Method::pstt_onepass, Method::pstt2,
                 Method::pstt2_onepass, Method::sstt})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline bool is_one_pass(Method m) { return m == Method::pstt_onepass || m == Method::pstt2_onepass; }

struct DecomposeConfig {
  std::vector<std::size_t> ranks;          // r_1..r_{d-1}
  double tol = 0.0;                        // SVD methods without ranks
  std::size_t oversample = 5;
  std::vector<std::size_t> partition;      // empty: default grid
  std::size_t workers = 1;
  std::uint64_t seed = 0;
  std::size_t middle = 0;                  // 0: ceil(d/2)
  DrmKind drm = DrmKind::khatri_rao;
  std::size_t max_block_scalars = std::size_t{1} << 24;
  std::size_t target_block_scalars = std::size_t{1} << 16;
  bool collect_bases = false;
};

struct RunCosts {
  std::vector<std::size_t> partition;
  std::vector<std::uint64_t> resident_peak;
  std::vector<std::uint64_t> total_peak;
  std::vector<std::uint64_t> sketch_phase_peak;
  std::uint64_t messages = 0;
  std::uint64_t message_volume = 0;
  std::uint64_t eval_count = 0;
  std::size_t passes = 0;
  double wall_ms = 0.0;
  double stream_ms = 0.0;

  static std::uint64_t max_of(const std::vector<std::uint64_t>& v) {
    return v.empty() ? 0 : *std::max_element(v.begin(), v.end());
  }
};

struct DecomposeResult {
  TTTensor tt;
  RunCosts costs;
  std::vector<std::string> warnings;
  double max_condition = 0.0;
  // Filled when collect_bases is set. Column bases span columns of X_j,
  // row bases span rows of X_j; the index lists give j.
  std::vector<Matrix> column_bases;
  std::vector<std::size_t> column_base_unfoldings;
  std::vector<Matrix> row_bases;
  std::vector<std::size_t> row_base_unfoldings;
};

/// Validates ranks and clips each r_j to the smaller side of X_j.
inline std::vector<std::size_t> checked_ranks(const Shape& shape, const std::vector<std::size_t>& ranks,
                                              std::vector<std::string>& warnings) {
  const auto d = shape.order();
  if (ranks.size() + 1 != d)
    throw std::invalid_argument("expected " + std::to_string(d - 1) + " ranks, got " + std::to_string(ranks.size()));
  std::vector<std::size_t> out(ranks);
  for (std::size_t j = 1; j < d; ++j) {
    if (out[j - 1] < 1) throw std::invalid_argument("ranks must be >= 1");
    const auto cap = std::min(shape.product(1, j), shape.product(j + 1, d));
    if (out[j - 1] > cap) {
      warnings.push_back("rank r_" + std::to_string(j) + "=" + std::to_string(out[j - 1]) + " clipped to " + std::to_string(cap));
      out[j - 1] = cap;
    }
  }
  return out;
}

/// Cores from the compressed unfoldings: G_1 = U_1, G_{k+1} = U_k^T reshape(U_{k+1}),
/// G_d = last (s_{d-1} x n_d).
inline TTTensor assemble_from_bases(const std::vector<Matrix>& bases, const Matrix& last, const std::vector<std::size_t>& n) {
  const auto d = n.size();
  std::vector<TTCore> cores;
  cores.emplace_back(1, n[0], static_cast<std::size_t>(bases[0].cols()), bases[0]);
  for (std::size_t k = 1; k + 1 < d; ++k) {
    const auto& uk = bases[k - 1];
    const auto& uk1 = bases[k];
    const ConstMatrixMap shaped(uk1.data(), uk.rows(), static_cast<Eigen::Index>(n[k]) * uk1.cols());
    cores.emplace_back(static_cast<std::size_t>(uk.cols()), n[k], static_cast<std::size_t>(uk1.cols()), uk.transpose() * shaped);
  }
  cores.emplace_back(static_cast<std::size_t>(last.rows()), n[d - 1], 1, last);
  return TTTensor(std::move(cores));
}

/// SVD of every unfolding concurrently, each cut at tol*||X||/sqrt(d-1) (or a
/// fixed rank), then the compress-then-combine core assembly.
inline DecomposeResult parallel_ttsvd(const DenseTensor& x, const DecomposeConfig& cfg) {
  Stopwatch sw;
  const auto d = x.order();
  const auto& n = x.shape().dims();
  DecomposeResult res;
  if (d == 1) {
    res.tt = TTTensor({TTCore(1, n[0], 1, x.vec())});
    return res;
  }
  std::vector<std::size_t> ranks;
  double tail = 0.0;
  if (!cfg.ranks.empty()) {
    ranks = checked_ranks(x.shape(), cfg.ranks, res.warnings);
  } else {
    if (!(cfg.tol > 0.0 && cfg.tol < 1.0)) throw std::invalid_argument("parallel_ttsvd tolerance must lie in (0, 1)");
    tail = cfg.tol * frobenius_norm(x) / std::sqrt(static_cast<double>(d - 1));
  }
  WorkerPool pool(cfg.workers);
  std::vector<TruncatedSVD> svds(d - 1);
  pool.dynamic_for(d - 1, [&](std::size_t j, std::size_t) {
    const auto view = unfold_view(x, j + 1);
    svds[j] = truncated_svd(view, ranks.empty() ? Truncation::absolute(tail) : Truncation::fixed(ranks[j]));
    if (svds[j].rank == 0) {
      svds[j].rank = 1;
      svds[j].U = Matrix::Zero(view.rows(), 1);
      svds[j].U(0, 0) = 1.0;
      svds[j].V = Matrix::Zero(view.cols(), 1);
      svds[j].singular_values = Vector::Zero(1);
    }
  });
  std::vector<Matrix> bases;
  for (auto& s : svds) bases.push_back(s.U);
  const auto& lastsvd = svds.back();
  const Matrix last = lastsvd.singular_values.head(static_cast<Eigen::Index>(lastsvd.rank)).asDiagonal() * lastsvd.V.transpose();
  res.tt = assemble_from_bases(bases, last, n);
  if (cfg.collect_bases)
    for (std::size_t j = 0; j + 1 < d; ++j) {
      res.column_bases.push_back(bases[j]);
      res.column_base_unfoldings.push_back(j + 1);
    }
  res.costs.wall_ms = sw.ms();
  return res;
}

namespace detail {

struct StreamRun {
  const TensorOracle& oracle;
  const DecomposeConfig& cfg;
  std::vector<std::size_t> n;
  std::size_t d;
  Partition part;
  WorkerPool pool;
  CostCounters costs;
  DecomposeResult res;
  std::vector<std::size_t> ranks;
  std::vector<CostCounters::Charge> drm_charges;
  std::uint64_t eval0;
  Stopwatch sw;

  StreamRun(const TensorOracle& o, const DecomposeConfig& c)
      : oracle(o), cfg(c), n(o.shape().dims()), d(n.size()), pool(c.workers), costs(c.workers), eval0(o.eval_count()) {
    if (d < 2) throw std::invalid_argument("streaming methods need d >= 2");
    if (cfg.oversample < 2) throw std::invalid_argument("oversampling p must be >= 2");
    ranks = checked_ranks(o.shape(), cfg.ranks, res.warnings);
    auto counts = cfg.partition.empty() ? default_partition(o.shape(), default_grid_workers, cfg.target_block_scalars) : cfg.partition;
    part = Partition(o.shape(), counts);
    if (part.max_block_size() > cfg.max_block_scalars)
      throw std::invalid_argument("partition leaves sub-tensors of " + std::to_string(part.max_block_size()) +
                                  " scalars, above the per-worker budget of " + std::to_string(cfg.max_block_scalars));
    res.costs.partition = counts;
  }

  std::size_t rank(std::size_t j) const { return j == 0 || j == d ? 1 : ranks[j - 1]; }
  std::size_t prod(std::size_t first, std::size_t last) const { return dim_product(n, first, last); }

  KhatriRaoDRM drm(std::size_t first, std::size_t last, std::size_t width, std::string_view purpose, std::size_t unfolding) {
    auto m = make_drm(cfg.drm, n, first, last, width, cfg.seed, purpose, unfolding);
    for (std::size_t w = 0; w < pool.size(); ++w) drm_charges.push_back(costs.resident(w, m.stored_scalars()));
    return m;
  }

  std::vector<std::vector<std::size_t>> streamed(const std::vector<PassConsumer>& consumers,
                                                 std::vector<DistributedBlocks>& out) {
    PassStats st;
    out = stream_pass(oracle, part, pool, costs, consumers, &st);
    res.costs.stream_ms += st.wall_ms;
    ++res.costs.passes;
    return {};
  }

  void note_condition(double c, const std::string& what) {
    res.max_condition = std::max(res.max_condition, c);
    if (c > 1e12) res.warnings.push_back(what + " is ill-conditioned (condition " + std::to_string(c) + ")");
  }

  DecomposeResult finish() {
    drm_charges.clear();
    res.costs.resident_peak = costs.resident_peaks();
    res.costs.total_peak = costs.total_peaks();
    res.costs.messages = costs.messages();
    res.costs.message_volume = costs.message_volume();
    res.costs.eval_count = oracle.eval_count() - eval0;
    res.costs.wall_ms = sw.ms();
    return std::move(res);
  }
};

inline DistributedBlocks unit_blocks() {
  DistributedBlocks b;
  b.blocks.push_back(Matrix::Ones(1, 1));
  b.owner.push_back(0);
  return b;
}

/// Core (r_k, n_k+1, r_k+1) = Q_k^T reshape(Q_{k+1}) from column bases
/// distributed over the grid cells of modes [0, k) and [0, k+1).
inline TTCore combine_column_bases(const DistributedBlocks& qk, const DistributedBlocks& qk1, const Partition& part, std::size_t k,
                                   CostCounters& costs) {
  const auto& n = part.dims();
  const auto rk = static_cast<std::size_t>(qk.blocks[0].cols());
  const auto rk1 = static_cast<std::size_t>(qk1.blocks[0].cols());
  TTCore core(rk, n[k], rk1);
  const auto low = part.cells(0, k);
  for (std::size_t cell = 0; cell < qk1.count(); ++cell) {
    const auto clow = cell % low;
    const auto chunk = cell / low;
    const auto b0 = part.begin(k, chunk), m = part.end(k, chunk) - b0;
    const auto& qb = qk1.blocks[cell];
    const auto& qa = qk.blocks[clow];
    costs.message(static_cast<std::size_t>(qb.size()));
    const ConstMatrixMap shaped(qb.data(), qa.rows(), static_cast<Eigen::Index>(m * rk1));
    const Matrix w = qa.transpose() * shaped;
    for (std::size_t g = 0; g < rk1; ++g)
      for (std::size_t l = 0; l < m; ++l)
        for (std::size_t a = 0; a < rk; ++a) core(a, b0 + l, g) += w(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(l + m * g));
  }
  return core;
}

/// Core (s_u, n_u+1, s_u+1) with G(b, l, g) = sum_c P_u((l, c), b) P_{u+1}(c, g),
/// where P_u spans the rows of X_u and is distributed over cells of modes [u, d).
inline TTCore combine_row_bases(const DistributedBlocks& pu, const DistributedBlocks& pu1, const Partition& part, std::size_t u,
                                CostCounters& costs) {
  const auto& n = part.dims();
  const auto su = static_cast<std::size_t>(pu.blocks[0].cols());
  const auto su1 = static_cast<std::size_t>(pu1.blocks[0].cols());
  TTCore core(su, n[u], su1);
  const auto pu_count = part.counts()[u];
  for (std::size_t cell = 0; cell < pu.count(); ++cell) {
    const auto chunk = cell % pu_count;
    const auto rest = cell / pu_count;
    const auto b0 = part.begin(u, chunk), m = part.end(u, chunk) - b0;
    const auto& pb = pu.blocks[cell];
    const auto& pr = pu1.blocks[rest];
    costs.message(static_cast<std::size_t>(pb.size()));
    const auto cbox = static_cast<Eigen::Index>(pb.rows()) / static_cast<Eigen::Index>(m);
    for (std::size_t b = 0; b < su; ++b) {
      const ConstMatrixMap slab(pb.col(static_cast<Eigen::Index>(b)).data(), static_cast<Eigen::Index>(m), cbox);
      const Matrix t = slab * pr;
      for (std::size_t g = 0; g < su1; ++g)
        for (std::size_t l = 0; l < m; ++l) core(b, b0 + l, g) += t(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(g));
    }
  }
  return core;
}

/// Second-pass consumer for reshape(X, L, n_mid, R) x_1 Q^T x_3 P^T; blocks
/// are r_L x (m * r_R) slabs per chunk of the middle mode.
inline PassConsumer middle_projection_consumer(const Partition& part, std::size_t mid, const DistributedBlocks& q,
                                               const DistributedBlocks& p) {
  const auto d = part.order();
  const auto rl = static_cast<std::size_t>(q.blocks[0].cols());
  const auto rr = static_cast<std::size_t>(p.blocks[0].cols());
  PassConsumer c;
  c.targets = part.counts()[mid];
  c.target = [mid](const SubTensorRef& ref) { return ref.grid[mid] - 1; };
  c.shape = [&part, mid, rl, rr](std::size_t chunk) { return std::pair{rl, (part.end(mid, chunk) - part.begin(mid, chunk)) * rr}; };
  c.contribute = [&part, &q, &p, mid, d, rl, rr](const DenseTensor& y, const SubTensorRef& ref) {
    const auto& ld = y.shape().dims();
    const auto L = dim_product(ld, 0, mid), m = ld[mid], R = dim_product(ld, mid + 1, d);
    const auto& qb = q.blocks[grid_cell(part, ref, 0, mid)];
    const auto& pb = p.blocks[grid_cell(part, ref, mid + 1, d)];
    Matrix out(static_cast<Eigen::Index>(rl), static_cast<Eigen::Index>(m * rr));
    for (std::size_t l = 0; l < m; ++l) {
      Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> slab(y.data() + L * l, static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(R),
                                                           Eigen::OuterStride<>(static_cast<Eigen::Index>(L * m)));
      const Matrix t = qb.transpose() * (slab * pb);
      for (std::size_t g = 0; g < rr; ++g) out.col(static_cast<Eigen::Index>(l + m * g)) = t.col(static_cast<Eigen::Index>(g));
    }
    return out;
  };
  return c;
}

/// One-pass middle sketch T(w, l, c) = sum_a Omega(a, w) X(a, l, c), i.e. the
/// rows of the middle unfolding sketched by I (x) Omega. Blocks are
/// (w * m) x R_box over cells of modes [mid, d).
inline PassConsumer middle_sketch_consumer(const Partition& part, std::size_t mid, const KhatriRaoDRM& omega) {
  const auto d = part.order();
  const auto w = omega.width;
  PassConsumer c;
  c.targets = part.cells(mid, d);
  c.target = [&part, mid, d](const SubTensorRef& ref) { return grid_cell(part, ref, mid, d); };
  c.shape = [&part, mid, d, w](std::size_t cell) {
    std::vector<std::size_t> b, e;
    cell_box(part, cell, mid, d, b, e);
    return std::pair{w * (e[0] - b[0]), dim_product(std::vector<std::size_t>([&] {
                                                    std::vector<std::size_t> s;
                                                    for (std::size_t t = 1; t < b.size(); ++t) s.push_back(e[t] - b[t]);
                                                    return s;
                                                  }()),
                                                  0, b.size() - 1)};
  };
  c.contribute = [&omega, mid, d, w](const DenseTensor& y, const SubTensorRef& ref) {
    const auto& ld = y.shape().dims();
    const auto L = dim_product(ld, 0, mid), m = ld[mid], R = dim_product(ld, mid + 1, d);
    const Matrix om = omega.local(std::span<const std::size_t>(ref.begin).subspan(0, mid),
                                  std::span<const std::size_t>(ref.end).subspan(0, mid));
    Matrix out(static_cast<Eigen::Index>(w * m), static_cast<Eigen::Index>(R));
    for (std::size_t l = 0; l < m; ++l) {
      Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> slab(y.data() + L * l, static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(R),
                                                           Eigen::OuterStride<>(static_cast<Eigen::Index>(L * m)));
      out.middleRows(static_cast<Eigen::Index>(w * l), static_cast<Eigen::Index>(w)) = om.transpose() * slab;
    }
    return out;
  };
  return c;
}

/// Block-local pass over a distributed matrix: each owner turns its blocks
/// into contributions for target blocks, reduced in ascending source order.
inline DistributedBlocks block_pass(const DistributedBlocks& src, std::size_t targets,
                                    const std::function<std::size_t(std::size_t)>& target_of,
                                    const std::function<std::pair<std::size_t, std::size_t>(std::size_t)>& shape,
                                    const std::function<Matrix(std::size_t)>& contribute, WorkerPool& pool, CostCounters& costs) {
  auto out = allocate_blocks(targets, shape, pool.size(), costs);
  std::vector<std::vector<std::size_t>> sources(targets);
  for (std::size_t b = 0; b < src.count(); ++b) sources[target_of(b)].push_back(b + 1);
  detail::OrderedReducer reducer(out, std::move(sources), costs);
  pool.run([&](std::size_t w) {
    for (std::size_t b = 0; b < src.count(); ++b) {
      if (src.owner[b] != w) continue;
      Matrix m = contribute(b);
      auto scratch = costs.transient(w, static_cast<std::size_t>(m.size()));
      reducer.deliver(target_of(b), b + 1, std::move(m), w);
    }
  });
  reducer.check_complete();
  return out;
}

/// Streaming sketch with column bases for unfoldings 1..mid-1, row bases for
/// unfoldings mid..d-1 and the middle core (1-based index `mid`) from a second
/// pass or, with `onepass`, from an extra sketch of the middle unfolding.
/// mid = d gives the one-sided variants.
inline DecomposeResult two_sided(const TensorOracle& oracle, const DecomposeConfig& cfg, std::size_t mid, bool onepass) {
  StreamRun run(oracle, cfg);
  const auto d = run.d;
  if (mid < 1 || mid > d) throw std::invalid_argument("middle index must lie in [1, d]");
  const auto p = cfg.oversample;
  const auto m0 = mid - 1;  // 0-based middle mode

  std::vector<SketchSpec> specs;
  for (std::size_t j = 1; j < mid; ++j)
    specs.push_back({j, true, run.drm(j, d, std::min(run.rank(j) + p, run.prod(j, d)), "column", j)});
  for (std::size_t u = mid; u < d; ++u)
    specs.push_back({u, false, run.drm(0, u, std::min(run.rank(u) + p, run.prod(0, u)), "row", u)});
  std::vector<PassConsumer> consumers;
  for (const auto& s : specs) consumers.push_back(sketch_consumer(run.part, s));
  KhatriRaoDRM omega;
  if (onepass) {
    omega = run.drm(0, m0, std::min(run.rank(m0) + p, run.prod(0, m0)), "middle", mid);
    consumers.push_back(middle_sketch_consumer(run.part, m0, omega));
  }

  std::vector<DistributedBlocks> sketches;
  run.streamed(consumers, sketches);
  run.res.costs.sketch_phase_peak = run.costs.resident_peaks();

  // Bases: index j-1 for column unfolding j, and u for row unfolding u.
  std::vector<DistributedBlocks> qs, ps(d + 1);
  for (std::size_t j = 1; j < mid; ++j) {
    std::size_t got = 0;
    qs.push_back(distributed_basis(sketches[j - 1], run.rank(j), run.pool, run.costs, &got));
    sketches[j - 1].release();
    if (got < run.rank(j))
      run.res.warnings.push_back("column basis of X_" + std::to_string(j) + " has rank " + std::to_string(got));
  }
  for (std::size_t u = mid; u < d; ++u) {
    auto& s = sketches[(mid - 1) + (u - mid)];
    std::size_t got = 0;
    ps[u] = distributed_basis(s, run.rank(u), run.pool, run.costs, &got);
    s.release();
    if (got < run.rank(u))
      run.res.warnings.push_back("row basis of X_" + std::to_string(u) + " has rank " + std::to_string(got));
  }
  ps[d] = unit_blocks();
  const DistributedBlocks left = mid >= 2 ? std::move(qs[mid - 2]) : unit_blocks();
  if (mid >= 2) qs[mid - 2] = DistributedBlocks{left.blocks, left.owner, {}};
  const auto& right = ps[mid];

  std::vector<TTCore> cores(d);
  if (mid >= 2) cores[0] = TTCore(1, run.n[0], static_cast<std::size_t>(qs[0].blocks[0].cols()), assemble_rows(qs[0], run.part, 0, 1));
  for (std::size_t k = 1; k + 1 < mid; ++k) cores[k] = combine_column_bases(qs[k - 1], qs[k], run.part, k, run.costs);
  for (std::size_t u = mid; u < d; ++u) cores[u] = combine_row_bases(ps[u], ps[u + 1], run.part, u, run.costs);

  const auto rl = static_cast<std::size_t>(left.blocks[0].cols());
  const auto rr = static_cast<std::size_t>(right.blocks[0].cols());
  TTCore middle(rl, run.n[m0], rr);
  if (!onepass) {
    std::vector<DistributedBlocks> proj;
    run.streamed({middle_projection_consumer(run.part, m0, left, right)}, proj);
    for (std::size_t chunk = 0; chunk < proj[0].count(); ++chunk) {
      const auto b0 = run.part.begin(m0, chunk), m = run.part.end(m0, chunk) - b0;
      const auto& blk = proj[0].blocks[chunk];
      run.costs.message(static_cast<std::size_t>(blk.size()));
      for (std::size_t g = 0; g < rr; ++g)
        for (std::size_t l = 0; l < m; ++l)
          for (std::size_t a = 0; a < rl; ++a) middle(a, b0 + l, g) = blk(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(l + m * g));
    }
  } else {
    auto& t = sketches.back();
    const auto w = omega.width;
    const auto nm = run.n[m0];
    // Omega^T Q over the cells of modes [0, m0).
    Matrix oq = Matrix::Zero(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(rl));
    std::vector<std::size_t> b, e;
    for (std::size_t cell = 0; cell < left.count(); ++cell) {
      cell_box(run.part, cell, 0, m0, b, e);
      oq += omega.local(b, e).transpose() * left.blocks[cell];
    }
    // (T P)(w, l, g), laid out w x (n_mid * r_R).
    Matrix tp = Matrix::Zero(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(nm * rr));
    const auto pm = run.part.counts()[m0];
    for (std::size_t cell = 0; cell < t.count(); ++cell) {
      const auto chunk = cell % pm, rest = cell / pm;
      const auto b0 = run.part.begin(m0, chunk), m = run.part.end(m0, chunk) - b0;
      run.costs.message(static_cast<std::size_t>(t.blocks[cell].size()));
      const Matrix tb = t.blocks[cell] * right.blocks[rest];  // (w m) x r_R
      for (std::size_t g = 0; g < rr; ++g)
        for (std::size_t l = 0; l < m; ++l)
          tp.col(static_cast<Eigen::Index>(b0 + l + nm * g)) += tb.col(static_cast<Eigen::Index>(g)).segment(static_cast<Eigen::Index>(w * l), static_cast<Eigen::Index>(w));
    }
    t.release();
    const auto ls = pseudo_inverse_solve(oq, tp);
    run.note_condition(ls.condition, "middle sketch system");
    std::copy(ls.X.data(), ls.X.data() + ls.X.size(), middle.values.begin());
  }
  cores[m0] = std::move(middle);
  run.res.tt = TTTensor(std::move(cores));

  if (cfg.collect_bases) {
    for (std::size_t j = 1; j < mid; ++j) {
      run.res.column_bases.push_back(assemble_rows(qs[j - 1], run.part, 0, j));
      run.res.column_base_unfoldings.push_back(j);
    }
    for (std::size_t u = mid; u < d; ++u) {
      run.res.row_bases.push_back(assemble_rows(ps[u], run.part, u, d));
      run.res.row_base_unfoldings.push_back(u);
    }
  }
  return run.finish();
}

}  // namespace detail

inline std::size_t default_middle(std::size_t d) { return (d + 1) / 2; }

/// Column sketches of every unfolding, last core from a second pass.
inline DecomposeResult pstt(const TensorOracle& oracle, const DecomposeConfig& cfg) {
  return detail::two_sided(oracle, cfg, oracle.shape().order(), false);
}

/// As pstt, with the last core recovered from an extra row sketch of X_{d-1}.
inline DecomposeResult pstt_onepass(const TensorOracle& oracle, const DecomposeConfig& cfg) {
  return detail::two_sided(oracle, cfg, oracle.shape().order(), true);
}

/// Column bases left of the middle index, row bases right of it, middle core
/// from a second pass.
inline DecomposeResult pstt2(const TensorOracle& oracle, const DecomposeConfig& cfg) {
  const auto d = oracle.shape().order();
  return detail::two_sided(oracle, cfg, cfg.middle ? cfg.middle : default_middle(d), false);
}

inline DecomposeResult pstt2_onepass(const TensorOracle& oracle, const DecomposeConfig& cfg) {
  const auto d = oracle.shape().order();
  return detail::two_sided(oracle, cfg, cfg.middle ? cfg.middle : default_middle(d), true);
}

/// Serial streaming sketch: G_1 from a sketch of X_1, then Z = G_1^T X_1 from a
/// second pass, distributed over the grid cells of modes 2..d, and repeated
/// sketch-and-project on Z until the last core.
inline DecomposeResult sstt(const TensorOracle& oracle, const DecomposeConfig& cfg) {
  detail::StreamRun run(oracle, cfg);
  const auto d = run.d;
  const auto p = cfg.oversample;
  const auto& part = run.part;
  std::vector<TTCore> cores;
  std::vector<Matrix> interfaces;

  SketchSpec s1{1, true, run.drm(1, d, std::min(run.rank(1) + p, run.prod(1, d)), "column", 1)};
  std::vector<DistributedBlocks> sk;
  run.streamed({sketch_consumer(part, s1)}, sk);
  run.res.costs.sketch_phase_peak = run.costs.resident_peaks();
  auto q1 = distributed_basis(sk[0], run.rank(1), run.pool, run.costs);
  sk[0].release();
  const Matrix g1 = assemble_rows(q1, part, 0, 1);
  q1.release();
  std::vector<CostCounters::Charge> g1_copies;
  for (std::size_t w = 0; w < run.pool.size(); ++w) g1_copies.push_back(run.costs.resident(w, static_cast<std::size_t>(g1.size())));
  auto r_prev = static_cast<std::size_t>(g1.cols());
  cores.emplace_back(1, run.n[0], r_prev, g1);

  PassConsumer zc;
  zc.targets = part.cells(1, d);
  zc.target = [&part, d](const SubTensorRef& ref) { return grid_cell(part, ref, 1, d); };
  zc.shape = [&part, d, r_prev](std::size_t cell) {
    std::vector<std::size_t> b, e;
    cell_box(part, cell, 1, d, b, e);
    std::size_t cols = 1;
    for (std::size_t t = 0; t < b.size(); ++t) cols *= e[t] - b[t];
    return std::pair{r_prev, cols};
  };
  zc.contribute = [&g1](const DenseTensor& y, const SubTensorRef& ref) {
    const auto m = ref.end[0] - ref.begin[0];
    const ConstMatrixMap ym(y.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(y.size() / m));
    return Matrix(g1.middleRows(static_cast<Eigen::Index>(ref.begin[0]), static_cast<Eigen::Index>(m)).transpose() * ym);
  };
  std::vector<DistributedBlocks> zs;
  run.streamed({zc}, zs);
  DistributedBlocks z = std::move(zs[0]);

  // z holds r_prev x (modes l..d) blocks over cells of modes [l, d), l 0-based.
  for (std::size_t l = 1; l + 1 < d; ++l) {
    const auto w = std::min(run.rank(l + 1) + p, run.prod(l + 1, d));
    const auto drm = run.drm(l + 1, d, w, "column", l + 1);
    const auto pl = part.counts()[l];
    auto box_of = [&part, l, d](std::size_t cell, std::vector<std::size_t>& b, std::vector<std::size_t>& e) {
      cell_box(part, cell, l, d, b, e);
    };
    auto sketch = detail::block_pass(
        z, pl, [pl](std::size_t cell) { return cell % pl; },
        [&part, l, r_prev, w](std::size_t chunk) { return std::pair{r_prev * (part.end(l, chunk) - part.begin(l, chunk)), w}; },
        [&](std::size_t cell) {
          std::vector<std::size_t> b, e;
          box_of(cell, b, e);
          std::vector<std::size_t> ld{r_prev};
          for (std::size_t t = 0; t < b.size(); ++t) ld.push_back(e[t] - b[t]);
          return apply_kr_drm(z.blocks[cell].data(), ld, 2, true, drm, std::span<const std::size_t>(b).subspan(1),
                              std::span<const std::size_t>(e).subspan(1));
        },
        run.pool, run.costs);
    std::size_t got = 0;
    auto q = distributed_basis(sketch, run.rank(l + 1), run.pool, run.costs, &got);
    sketch.release();
    Matrix qfull(static_cast<Eigen::Index>(r_prev * run.n[l]), static_cast<Eigen::Index>(got));
    for (std::size_t chunk = 0, row = 0; chunk < pl; ++chunk) {
      qfull.middleRows(static_cast<Eigen::Index>(row), q.blocks[chunk].rows()) = q.blocks[chunk];
      row += static_cast<std::size_t>(q.blocks[chunk].rows());
    }
    cores.emplace_back(r_prev, run.n[l], got, qfull);

    const auto rest_cells = part.cells(l + 1, d);
    auto znext = detail::block_pass(
        z, rest_cells, [pl](std::size_t cell) { return cell / pl; },
        [&part, l, d, got](std::size_t cell) {
          std::vector<std::size_t> b, e;
          cell_box(part, cell, l + 1, d, b, e);
          std::size_t cols = 1;
          for (std::size_t t = 0; t < b.size(); ++t) cols *= e[t] - b[t];
          return std::pair{got, cols};
        },
        [&](std::size_t cell) {
          const auto& qb = q.blocks[cell % pl];
          const auto& zb = z.blocks[cell];
          run.costs.message(static_cast<std::size_t>(qb.size()));
          const ConstMatrixMap zm(zb.data(), qb.rows(), zb.size() / qb.rows());
          return Matrix(qb.transpose() * zm);
        },
        run.pool, run.costs);
    z.release();
    z = std::move(znext);
    r_prev = got;
  }
  Matrix last(static_cast<Eigen::Index>(r_prev), static_cast<Eigen::Index>(run.n[d - 1]));
  for (std::size_t chunk = 0, col = 0; chunk < z.count(); ++chunk) {
    run.costs.message(static_cast<std::size_t>(z.blocks[chunk].size()));
    last.middleCols(static_cast<Eigen::Index>(col), z.blocks[chunk].cols()) = z.blocks[chunk];
    col += static_cast<std::size_t>(z.blocks[chunk].cols());
  }
  z.release();
  cores.emplace_back(r_prev, run.n[d - 1], 1, last);
  run.res.tt = TTTensor(std::move(cores));

  if (cfg.collect_bases) {
    // Column bases of X_k are the left interfaces of the orthonormal cores.
    Matrix u = run.res.tt.cores()[0].left_unfolding();
    for (std::size_t k = 1; k < d; ++k) {
      run.res.column_bases.push_back(u);
      run.res.column_base_unfoldings.push_back(k);
      if (k + 1 == d) break;
      const auto& c = run.res.tt.cores()[k];
      Matrix next = u * c.right_unfolding();
      u = ConstMatrixMap(next.data(), next.rows() * static_cast<Eigen::Index>(c.n), static_cast<Eigen::Index>(c.right));
    }
  }
  g1_copies.clear();
  return run.finish();
}

/// Dispatch by method. SVD methods materialize the oracle once.
inline DecomposeResult decompose(Method method, const TensorOracle& oracle, const DecomposeConfig& cfg) {
  switch (method) {
    case Method::ttsvd: {
      Stopwatch sw;
      const auto before = oracle.eval_count();
      const auto x = oracle.materialize();
      DecomposeResult res;
      res.tt = cfg.ranks.empty() ? ttsvd(x, cfg.tol) : ttsvd(x, checked_ranks(x.shape(), cfg.ranks, res.warnings));
      res.costs.eval_count = oracle.eval_count() - before;
      res.costs.passes = 1;
      res.costs.wall_ms = sw.ms();
      return res;
    }
    case Method::parallel_ttsvd: {
      const auto before = oracle.eval_count();
      const auto x = oracle.materialize();
      auto res = parallel_ttsvd(x, cfg);
      res.costs.eval_count = oracle.eval_count() - before;
      res.costs.passes = 1;
      return res;
    }
    case Method::pstt: return pstt(oracle, cfg);
    case Method::pstt_onepass: return pstt_onepass(oracle, cfg);
    case Method::pstt2: return pstt2(oracle, cfg);
    case Method::pstt2_onepass: return pstt2_onepass(oracle, cfg);
    case Method::sstt: return sstt(oracle, cfg);
  }
  throw std::invalid_argument("unknown method");
}

}  // namespace ptt
