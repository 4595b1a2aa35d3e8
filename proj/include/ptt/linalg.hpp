#pragma once

// Dense factorizations: truncated SVD, column-pivoted QR, tree QR over row
// blocks and least-squares solves through the pseudo-inverse. Eigen does the
// heavy lifting; this layer fixes truncation rules and determinism.

#include "ptt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptt {

/// Runs body(0..n-1), possibly concurrently. Empty means sequential.
using ParallelFor = std::function<void(std::size_t, const std::function<void(std::size_t)>&)>;

inline void run_for(const ParallelFor& pf, std::size_t n, const std::function<void(std::size_t)>& body) {
  if (pf)
    pf(n, body);
  else
    for (std::size_t i = 0; i < n; ++i) body(i);
}

/// How to cut a spectrum: relative or absolute Frobenius tail, or a fixed rank.
struct Truncation {
  enum class Kind { relative, absolute, rank };
  Kind kind = Kind::relative;
  double tol = 0.0;
  std::size_t rank = 0;

  static Truncation relative(double tol) { return {Kind::relative, tol, 0}; }
  static Truncation absolute(double tail) { return {Kind::absolute, tail, 0}; }
  static Truncation fixed(std::size_t rank) { return {Kind::rank, 0.0, rank}; }
};

/// Smallest r with sqrt(sum_{k>r} sigma_k^2) <= tail.
inline std::size_t rank_for_tail(const Vector& sigma, double tail) {
  const auto n = static_cast<std::size_t>(sigma.size());
  const double tail2 = tail * tail;
  double acc = 0.0;
  std::size_t r = n;
  while (r > 0) {
    const double next = acc + sigma(static_cast<Eigen::Index>(r - 1)) * sigma(static_cast<Eigen::Index>(r - 1));
    if (next > tail2) break;
    acc = next;
    --r;
  }
  return r;
}

struct TruncatedSVD {
  Matrix U;
  Vector singular_values;  // the full spectrum, nonincreasing
  Matrix V;                // U and V hold only the leading `rank` columns
  std::size_t rank = 0;

  Matrix reconstruct() const {
    const auto r = static_cast<Eigen::Index>(rank);
    return U * singular_values.head(r).asDiagonal() * V.transpose();
  }
};

inline Vector singular_values(const Eigen::Ref<const Matrix>& a) {
  if (a.size() == 0) return Vector();
  Eigen::BDCSVD<Matrix> svd(a);
  return svd.singularValues();
}

inline TruncatedSVD truncated_svd(const Eigen::Ref<const Matrix>& a, const Truncation& t) {
  if (t.kind == Truncation::Kind::relative && !(t.tol >= 0.0 && t.tol < 1.0))
    throw std::invalid_argument("relative tolerance must lie in [0, 1)");
  if (t.kind == Truncation::Kind::absolute && !(t.tol >= 0.0)) throw std::invalid_argument("absolute tolerance must be >= 0");
  if (t.kind == Truncation::Kind::rank && t.rank < 1) throw std::invalid_argument("requested rank must be >= 1");

  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  TruncatedSVD out;
  out.singular_values = svd.singularValues();
  const auto full = static_cast<std::size_t>(out.singular_values.size());
  switch (t.kind) {
    case Truncation::Kind::relative:
      out.rank = rank_for_tail(out.singular_values, t.tol * out.singular_values.norm());
      break;
    case Truncation::Kind::absolute:
      out.rank = rank_for_tail(out.singular_values, t.tol);
      break;
    case Truncation::Kind::rank:
      out.rank = std::min(t.rank, full);
      break;
  }
  const auto r = static_cast<Eigen::Index>(out.rank);
  out.U = svd.matrixU().leftCols(r);
  out.V = svd.matrixV().leftCols(r);
  return out;
}

inline TruncatedSVD truncated_svd(const Eigen::Ref<const Matrix>& a, double rel_tol) {
  return truncated_svd(a, Truncation::relative(rel_tol));
}

inline TruncatedSVD truncated_svd(const Eigen::Ref<const Matrix>& a, std::size_t rank) {
  return truncated_svd(a, Truncation::fixed(rank));
}

/// Number of singular values above rel_tol * sigma_max.
inline std::size_t numerical_rank(const Eigen::Ref<const Matrix>& a, double rel_tol = 1e-10) {
  const Vector s = singular_values(a);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k)
    if (s(k) > rel_tol * s(0)) ++r;
  return r;
}

struct CPQRFactor {
  Matrix Q;  // leading `rank` columns
  Matrix R;  // rank x cols, upper trapezoidal
  Eigen::VectorXi perm;  // A(:, perm) = Q R
  Vector r_diagonal;  // |R_kk| over the full factorization
  std::size_t rank = 0;
};

/// Column-pivoted Householder QR. Relative mode truncates at the first k with
/// |R_kk| <= tol |R_11|; rank mode keeps min(rank, rows, cols) columns.
inline CPQRFactor cpqr_truncated(const Eigen::Ref<const Matrix>& a, const Truncation& t) {
  if (t.kind == Truncation::Kind::absolute) throw std::invalid_argument("cpqr_truncated takes a relative tolerance or a rank");
  const auto m = a.rows();
  const auto n = a.cols();
  const auto kmax = static_cast<std::size_t>(std::min(m, n));
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  CPQRFactor out;
  const Matrix& packed = qr.matrixQR();
  out.r_diagonal = packed.diagonal().cwiseAbs();
  out.perm = qr.colsPermutation().indices();

  if (t.kind == Truncation::Kind::rank) {
    if (t.rank < 1) throw std::invalid_argument("requested rank must be >= 1");
    out.rank = std::min(t.rank, kmax);
  } else {
    const double top = kmax > 0 ? out.r_diagonal(0) : 0.0;
    out.rank = 0;
    while (out.rank < kmax && out.r_diagonal(static_cast<Eigen::Index>(out.rank)) > t.tol * top && top > 0.0) ++out.rank;
  }
  const auto r = static_cast<Eigen::Index>(out.rank);
  out.Q = qr.householderQ() * Matrix::Identity(m, r);
  out.R = packed.topRows(r).triangularView<Eigen::Upper>();
  return out;
}

inline CPQRFactor cpqr_truncated(const Eigen::Ref<const Matrix>& a, std::size_t rank) {
  return cpqr_truncated(a, Truncation::fixed(rank));
}

/// Thin Householder QR; Q is rows x min(rows, cols).
inline std::pair<Matrix, Matrix> thin_qr(const Eigen::Ref<const Matrix>& a) {
  const auto k = std::min(a.rows(), a.cols());
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), k);
  Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
  return {std::move(q), std::move(r)};
}

struct TreeQR {
  std::vector<Matrix> q_blocks;  // same row counts as the input blocks
  Matrix R;
};

namespace detail {

inline TreeQR tree_qr_merge(TreeQR left, TreeQR right) {
  const auto k1 = left.R.rows();
  const auto k2 = right.R.rows();
  Matrix stacked(k1 + k2, left.R.cols());
  stacked.topRows(k1) = left.R;
  stacked.bottomRows(k2) = right.R;
  auto [q, r] = thin_qr(stacked);
  TreeQR out;
  out.R = std::move(r);
  out.q_blocks.reserve(left.q_blocks.size() + right.q_blocks.size());
  for (auto& b : left.q_blocks) out.q_blocks.push_back(b * q.topRows(k1));
  for (auto& b : right.q_blocks) out.q_blocks.push_back(b * q.bottomRows(k2));
  return out;
}

inline TreeQR tree_qr_range(std::vector<TreeQR>& leaves, std::size_t lo, std::size_t hi) {
  if (hi - lo == 1) return std::move(leaves[lo]);
  const auto mid = lo + (hi - lo) / 2;
  return tree_qr_merge(tree_qr_range(leaves, lo, mid), tree_qr_range(leaves, mid, hi));
}

}  // namespace detail

/// QR of the vertical stack of `blocks`, reduced over a fixed balanced binary
/// tree in block order. Leaves may be factored concurrently; the result does
/// not depend on how.
inline TreeQR tree_qr(const std::vector<Matrix>& blocks, const ParallelFor& pf = {}) {
  if (blocks.empty()) throw std::invalid_argument("tree_qr needs at least one block");
  const auto c = blocks.front().cols();
  for (const auto& b : blocks)
    if (b.cols() != c) throw std::invalid_argument("tree_qr blocks must share a column count");
  std::vector<TreeQR> leaves(blocks.size());
  run_for(pf, blocks.size(), [&](std::size_t i) {
    auto [q, r] = thin_qr(blocks[i]);
    leaves[i].q_blocks.push_back(std::move(q));
    leaves[i].R = std::move(r);
  });
  return detail::tree_qr_range(leaves, 0, leaves.size());
}

struct LeastSquares {
  Matrix X;
  double condition = 0.0;  // sigma_max / sigma_min of A
  std::size_t rank = 0;
};

/// argmin ||A X - B||_F through the SVD of A, cutting singular values below
/// max(m, n) * eps * sigma_max.
inline LeastSquares pseudo_inverse_solve(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("pseudo_inverse_apply: row counts differ");
  LeastSquares out;
  if (a.size() == 0) {
    out.X = Matrix::Zero(a.cols(), b.cols());
    return out;
  }
  Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  const double smax = s(0);
  const double cut = static_cast<double>(std::max(a.rows(), a.cols())) * std::numeric_limits<double>::epsilon() * smax;
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > cut) ++r;
  out.rank = static_cast<std::size_t>(r);
  const double smin = s(s.size() - 1);
  out.condition = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  Matrix utb = svd.matrixU().leftCols(r).transpose() * b;
  utb = s.head(r).cwiseInverse().asDiagonal() * utb;
  out.X = svd.matrixV().leftCols(r) * utb;
  return out;
}

inline Matrix pseudo_inverse_apply(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  return pseudo_inverse_solve(a, b).X;
}

/// ||(I - Q Q^T) M||_F for Q with orthonormal columns.
inline double projector_residual(const Eigen::Ref<const Matrix>& q, const Eigen::Ref<const Matrix>& m) {
  return (m - q * (q.transpose() * m)).norm();
}

/// Sine of the largest principal angle between the column spans of two
/// orthonormal bases of equal width.
inline double max_principal_angle_sin(const Eigen::Ref<const Matrix>& q1, const Eigen::Ref<const Matrix>& q2) {
  if (q1.cols() != q2.cols()) return 1.0;
  if (q1.cols() == 0) return 0.0;
  const Matrix m = q2 - q1 * (q1.transpose() * q2);
  return singular_values(m)(0);
}

}  // namespace ptt
