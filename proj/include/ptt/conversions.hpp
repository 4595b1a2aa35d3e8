#pragma once

// Tucker <-> TT conversion without forming the full tensor.

#include "ptt/linalg.hpp"
#include "ptt/tensor.hpp"
#include "ptt/tt.hpp"
#include "ptt/tucker.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ptt {

/// T_j = H_j x_2 A_j where H is a TT decomposition of the Tucker core.
inline TTTensor tucker2tt(const TuckerTensor& t, const Truncation& trunc, const std::vector<std::size_t>& ranks = {},
                          const ParallelFor& pf = {}) {
  t.validate();
  const auto h = ttsvd(t.core, trunc, ranks);
  std::vector<TTCore> cores(h.order());
  run_for(pf, h.order(), [&](std::size_t j) {
    const auto& c = h.cores()[j];
    const auto updated = mode_product(c.as_tensor(), t.factors[j], 2);
    cores[j] = TTCore(c.left, static_cast<std::size_t>(t.factors[j].rows()), c.right, updated.vec());
  });
  return TTTensor(std::move(cores));
}

inline TTTensor tucker2tt(const TuckerTensor& t, double tol) { return tucker2tt(t, Truncation::relative(tol)); }
inline TTTensor tucker2tt(const TuckerTensor& t, const std::vector<std::size_t>& ranks) {
  return tucker2tt(t, Truncation::fixed(1), ranks);
}

/// Orthogonal Tucker factors with the Tucker core kept in TT form.
struct TTTucker {
  std::vector<Matrix> factors;  // n_j x t_j
  TTTensor core;                // dims t_1..t_d
};

enum class FactorBasis {
  weighted_svd,  // SVD of the mode-2 matricization of the orthogonality centre at j
  core_svd,      // SVD of the raw core matricization
  cpqr,          // CPQR of the raw core matricization
};

namespace detail {

/// Centre cores: C_j = R_{j-1} x_1 T_j x_3 S_{j+1}^T, where R comes from a
/// left-to-right QR sweep and S from a right-to-left one, so that
/// (C_j)_(2) has the same singular values as X_(j).
inline std::vector<DenseTensor> centre_cores(const TTTensor& t) {
  const auto d = t.order();
  std::vector<Matrix> left(d), right(d);
  left[0] = Matrix::Ones(1, 1);
  for (std::size_t j = 0; j + 1 < d; ++j) {
    const auto& c = t.cores()[j];
    const Matrix m = left[j] * c.right_unfolding();
    const ConstMatrixMap stacked(m.data(), m.rows() * static_cast<Eigen::Index>(c.n), static_cast<Eigen::Index>(c.right));
    Eigen::HouseholderQR<Matrix> qr(stacked);
    const auto k = std::min(stacked.rows(), stacked.cols());
    Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    left[j + 1] = r;
  }
  right[d - 1] = Matrix::Ones(1, 1);
  for (std::size_t j = d - 1; j > 0; --j) {
    const auto& c = t.cores()[j];
    const Matrix m = c.left_unfolding() * right[j].transpose();
    const ConstMatrixMap wide(m.data(), static_cast<Eigen::Index>(c.left), static_cast<Eigen::Index>(c.n) * m.cols());
    Eigen::HouseholderQR<Matrix> qr(wide.transpose());
    const auto k = std::min(wide.rows(), wide.cols());
    Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    right[j - 1] = r;
  }
  std::vector<DenseTensor> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    const auto& c = t.cores()[j];
    auto x = mode_product(c.as_tensor(), left[j], 1);
    out[j] = mode_product(x, right[j], 3);
  }
  return out;
}

}  // namespace detail

/// A_j spans the column space of the mode-2 matricization of core j (cut at
/// tol*||X||/sqrt(d) for the weighted basis), H_j = T_j x_2 A_j^T.
inline TTTucker tt2tucker(const TTTensor& t, const Truncation& trunc, const std::vector<std::size_t>& ranks = {},
                          FactorBasis basis = FactorBasis::weighted_svd, const ParallelFor& pf = {}) {
  const auto d = t.order();
  if (trunc.kind == Truncation::Kind::rank && ranks.size() != d) throw std::invalid_argument("tt2tucker needs d ranks");
  if (trunc.kind == Truncation::Kind::relative && !(trunc.tol >= 0.0 && trunc.tol < 1.0))
    throw std::invalid_argument("tt2tucker tolerance must lie in [0, 1)");
  std::vector<DenseTensor> centres;
  double tail = 0.0;
  if (basis == FactorBasis::weighted_svd) {
    centres = detail::centre_cores(t);
    if (trunc.kind == Truncation::Kind::relative) tail = trunc.tol * frobenius_norm(centres[0]) / std::sqrt(static_cast<double>(d));
    if (trunc.kind == Truncation::Kind::absolute) tail = trunc.tol;
  }
  TTTucker out;
  out.factors.resize(d);
  std::vector<TTCore> cores(d);
  run_for(pf, d, [&](std::size_t j) {
    const auto& c = t.cores()[j];
    const auto raw = c.as_tensor();
    Matrix a;
    if (basis == FactorBasis::cpqr) {
      const auto m = matricize(raw, 2);
      const auto tj = trunc.kind == Truncation::Kind::rank ? Truncation::fixed(ranks[j]) : trunc;
      auto f = cpqr_truncated(m, tj);
      a = f.rank ? Matrix(f.Q.leftCols(static_cast<Eigen::Index>(f.rank))) : Matrix();
    } else {
      const auto m = matricize(basis == FactorBasis::weighted_svd ? centres[j] : raw, 2);
      Truncation tj = trunc;
      if (trunc.kind == Truncation::Kind::rank) tj = Truncation::fixed(ranks[j]);
      else if (basis == FactorBasis::weighted_svd) tj = Truncation::absolute(tail);
      auto s = truncated_svd(m, tj);
      a = s.U.leftCols(static_cast<Eigen::Index>(s.rank));
    }
    if (a.cols() == 0) {
      a = Matrix::Zero(static_cast<Eigen::Index>(c.n), 1);
      a(0, 0) = 1.0;
    }
    const auto h = mode_product(raw, a.transpose(), 2);
    cores[j] = TTCore(c.left, static_cast<std::size_t>(a.cols()), c.right, h.vec());
    out.factors[j] = std::move(a);
  });
  out.core = TTTensor(std::move(cores));
  return out;
}

inline TTTucker tt2tucker(const TTTensor& t, double tol) { return tt2tucker(t, Truncation::relative(tol)); }
inline TTTucker tt2tucker(const TTTensor& t, const std::vector<std::size_t>& ranks) {
  return tt2tucker(t, Truncation::fixed(1), ranks);
}

/// Dense Tucker form with the core materialized.
inline TuckerTensor to_tucker(const TTTucker& t) { return TuckerTensor{tt_full(t.core), t.factors}; }

inline DenseTensor tt_tucker_full(const TTTucker& t) { return tucker_full(to_tucker(t)); }

struct RankLemmaReport {
  std::vector<std::size_t> tensor_ranks;  // rank of X_j, j = 1..d-1
  std::vector<std::size_t> core_ranks;    // rank of G_j
  bool holds = true;
};

/// Numerical ranks of the unfoldings of the materialized tensor and of the
/// Tucker core; equal when the factors have orthonormal columns.
inline RankLemmaReport verify_rank_lemma(const TuckerTensor& t, double rel_tol = 1e-10) {
  t.validate();
  const auto x = tucker_full(t);
  RankLemmaReport rep;
  for (std::size_t j = 1; j < t.order(); ++j) {
    rep.tensor_ranks.push_back(numerical_rank(unfold_view(x, j), rel_tol));
    rep.core_ranks.push_back(numerical_rank(unfold_view(t.core, j), rel_tol));
    rep.holds = rep.holds && rep.tensor_ranks.back() == rep.core_ranks.back();
  }
  return rep;
}

}  // namespace ptt
