#pragma once

// Orthogonal Tucker format and HOSVD.

#include "ptt/linalg.hpp"
#include "ptt/tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ptt {

struct TuckerTensor {
  DenseTensor core;
  std::vector<Matrix> factors;  // factors[k] is n_{k+1} x t_{k+1}

  std::size_t order() const { return factors.size(); }
  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> out;
    for (const auto& a : factors) out.push_back(static_cast<std::size_t>(a.rows()));
    return out;
  }
  void validate() const {
    if (factors.size() != core.order()) throw std::invalid_argument("Tucker tensor needs one factor per core mode");
    for (std::size_t k = 0; k < factors.size(); ++k)
      if (static_cast<std::size_t>(factors[k].cols()) != core.shape().dims()[k])
        throw std::invalid_argument("Tucker factor " + std::to_string(k + 1) + " does not match the core");
  }
};

/// Factor k from the SVD of the k-th matricization, each cut at
/// tol*||T||/sqrt(d) (or a fixed rank), then core = T x_k A_k^T.
inline TuckerTensor hosvd(const DenseTensor& t, const Truncation& trunc, const std::vector<std::size_t>& ranks = {},
                          const ParallelFor& pf = {}) {
  const auto d = t.order();
  double tail = 0.0;
  if (trunc.kind == Truncation::Kind::relative) {
    if (!(trunc.tol > 0.0 && trunc.tol < 1.0)) throw std::invalid_argument("hosvd tolerance must lie in (0, 1)");
    tail = trunc.tol * frobenius_norm(t) / std::sqrt(static_cast<double>(d));
  } else if (trunc.kind == Truncation::Kind::absolute) {
    tail = trunc.tol;
  } else if (ranks.size() != d) {
    throw std::invalid_argument("hosvd needs d ranks");
  }
  TuckerTensor out;
  out.factors.resize(d);
  run_for(pf, d, [&](std::size_t k) {
    const Matrix m = matricize(t, k + 1);
    const Truncation tk = trunc.kind == Truncation::Kind::rank ? Truncation::fixed(ranks[k]) : Truncation::absolute(tail);
    auto svd = truncated_svd(m, tk);
    if (svd.rank == 0) {
      svd.U = Matrix::Zero(m.rows(), 1);
      svd.U(0, 0) = 1.0;
    }
    out.factors[k] = std::move(svd.U);
  });
  DenseTensor core = t;
  for (std::size_t k = 0; k < d; ++k) core = mode_product(core, out.factors[k].transpose(), k + 1);
  out.core = std::move(core);
  return out;
}

inline TuckerTensor hosvd(const DenseTensor& t, double tol) { return hosvd(t, Truncation::relative(tol)); }
inline TuckerTensor hosvd(const DenseTensor& t, const std::vector<std::size_t>& ranks) {
  return hosvd(t, Truncation::fixed(1), ranks);
}

inline DenseTensor tucker_full(const TuckerTensor& t, std::size_t limit = std::size_t{1} << 28) {
  t.validate();
  std::size_t total = 1;
  for (auto n : t.dims()) total = checked_mul(total, n);
  if (total > limit) throw std::length_error("tucker_full exceeds the materialization limit");
  DenseTensor out = t.core;
  for (std::size_t k = 0; k < t.order(); ++k) out = mode_product(out, t.factors[k], k + 1);
  return out;
}

}  // namespace ptt
