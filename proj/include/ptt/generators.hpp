#pragma once

// Test tensors: Hilbert, a mixture of Gaussian bumps, random TT and Tucker.

#include "ptt/random.hpp"
#include "ptt/tensor.hpp"
#include "ptt/sylvester.hpp"
#include "ptt/tt.hpp"
#include "ptt/tucker.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace ptt {

/// X(i_1..i_d) = 1 / (1 - d + i_1 + ... + i_d), 1-based.
inline TensorOracle gen_hilbert(const std::vector<std::size_t>& dims) {
  const auto d = static_cast<double>(dims.size());
  return TensorOracle(Shape(dims), [d](std::span<const std::size_t> idx) {
    double s = 1.0 - d;
    for (auto i : idx) s += static_cast<double>(i);
    return 1.0 / s;
  });
}

inline TensorOracle gaussian_bumps_oracle(const std::vector<std::size_t>& dims, std::shared_ptr<const std::vector<double>> centres,
                                          double gamma) {
  if (dims.size() != 3) throw std::invalid_argument("gaussian bumps are defined for d = 3 only");
  const std::vector<double> n(dims.begin(), dims.end());
  return TensorOracle(Shape(dims), [centres, gamma, n](std::span<const std::size_t> idx) {
    const double x = 2.0 * static_cast<double>(idx[0]) / n[0] - 1.0;
    const double y = 2.0 * static_cast<double>(idx[1]) / n[1] - 1.0;
    const double z = 2.0 * static_cast<double>(idx[2]) / n[2] - 1.0;
    double sum = 0.0;
    for (std::size_t j = 0; j < centres->size() / 3; ++j) {
      const double dx = x - (*centres)[3 * j], dy = y - (*centres)[3 * j + 1], dz = z - (*centres)[3 * j + 2];
      sum += std::exp(-gamma * (dx * dx + dy * dy + dz * dz));
    }
    return sum;
  });
}

/// Sum of N isotropic Gaussians exp(-gamma |x - c_j|^2) sampled on the grid
/// x_k = 2 i_k / n_k - 1, centres uniform in [-1, 1]^3.
inline TensorOracle gen_gaussian_bumps(const std::vector<std::size_t>& dims, std::size_t count, double gamma, std::uint64_t seed) {
  if (dims.size() != 3) throw std::invalid_argument("gaussian bumps are defined for d = 3 only");
  auto centres = std::make_shared<std::vector<double>>(3 * count);
  const SeededStream s{seed, hash_tag("bump-centres")};
  for (std::size_t t = 0; t < 3 * count; ++t) (*centres)[t] = 2.0 * s.uniform(t) - 1.0;
  return gaussian_bumps_oracle(dims, centres, gamma);
}

/// Cores with i.i.d. entries uniform in (0, 1); ranks are r_1..r_{d-1}.
inline TTTensor gen_random_tt(const std::vector<std::size_t>& dims, const std::vector<std::size_t>& ranks, std::uint64_t seed) {
  if (dims.empty() || ranks.size() + 1 != dims.size()) throw std::invalid_argument("random TT needs d dims and d-1 ranks");
  std::vector<TTCore> cores;
  const SeededStream base{seed, hash_tag("random-tt")};
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const auto l = k == 0 ? 1 : ranks[k - 1];
    const auto r = k + 1 == dims.size() ? 1 : ranks[k];
    if (l == 0 || r == 0 || dims[k] == 0) throw std::invalid_argument("random TT ranks and dims must be positive");
    TTCore c(l, dims[k], r);
    const auto s = base.child(k + 1);
    for (std::size_t t = 0; t < c.size(); ++t) c.values[t] = s.uniform_open(t);
    cores.push_back(std::move(c));
  }
  return TTTensor(std::move(cores));
}

/// Orthonormal factors from QR of Gaussian matrices, core uniform in (-1, 1).
inline TuckerTensor gen_random_tucker(const std::vector<std::size_t>& dims, const std::vector<std::size_t>& ranks, std::uint64_t seed) {
  if (dims.empty() || ranks.size() != dims.size()) throw std::invalid_argument("random Tucker needs one rank per mode");
  const SeededStream base{seed, hash_tag("random-tucker")};
  TuckerTensor t;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    if (ranks[k] < 1 || ranks[k] > dims[k]) throw std::invalid_argument("Tucker ranks must lie in [1, n_k]");
    t.factors.push_back(thin_qr(gaussian_matrix(dims[k], ranks[k], base.child(k + 1))).first);
  }
  t.core = DenseTensor(Shape(ranks));
  const auto s = base.child(0);
  for (std::size_t i = 0; i < t.core.size(); ++i) t.core.values()[i] = 2.0 * s.uniform(i) - 1.0;
  return t;
}

/// Entry oracle backed by a TT tensor.
inline TensorOracle tt_oracle(std::shared_ptr<const TTTensor> t) {
  return TensorOracle(t->shape(), [t](std::span<const std::size_t> idx) { return tt_entry(*t, idx); });
}

inline TensorOracle tt_oracle(const TTTensor& t) { return tt_oracle(std::make_shared<const TTTensor>(t)); }

/// Diagonal demo problem: A = B = C with spectrum equispaced in
/// [-1, -1/(30n)], F a random TT with ranks (n/4, 2).
inline Sylvester3DProblem demo_sylvester(std::size_t n, std::uint64_t seed) {
  if (n < 4) throw std::invalid_argument("demo size must be >= 4");
  Vector a(static_cast<Eigen::Index>(n));
  const double lo = -1.0, hi = -1.0 / (30.0 * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) a(static_cast<Eigen::Index>(i)) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  const auto op = NormalOperator::diagonal(a);
  return {op, op, op, gen_random_tt({n, n, n}, {n / 4, 2}, seed)};
}

}  // namespace ptt
