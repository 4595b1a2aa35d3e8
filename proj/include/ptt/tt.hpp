#pragma once

// Tensor-train format: cores, evaluation, reconstruction, the sequential TTSVD
// baseline and error measurement.

#include "ptt/linalg.hpp"
#include "ptt/random.hpp"
#include "ptt/tensor.hpp"

#include <cmath>
#include <optional>
#include <type_traits>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptt {

/// Three-way core of dims (left, n, right), stored column-major (left fastest).
struct TTCore {
  std::size_t left = 1;
  std::size_t n = 1;
  std::size_t right = 1;
  std::vector<double> values;

  TTCore() : values(1, 0.0) {}
  TTCore(std::size_t l, std::size_t nn, std::size_t r) : left(l), n(nn), right(r), values(checked_mul(checked_mul(l, nn), r), 0.0) {}
  TTCore(std::size_t l, std::size_t nn, std::size_t r, const Eigen::Ref<const Matrix>& m) : TTCore(l, nn, r) {
    if (static_cast<std::size_t>(m.size()) != values.size()) throw std::invalid_argument("core data has wrong size");
    Matrix contiguous = m;
    std::copy(contiguous.data(), contiguous.data() + contiguous.size(), values.begin());
  }

  std::size_t size() const { return values.size(); }
  double operator()(std::size_t a, std::size_t i, std::size_t b) const { return values[a + left * (i + n * b)]; }
  double& operator()(std::size_t a, std::size_t i, std::size_t b) { return values[a + left * (i + n * b)]; }

  /// (left*n) x right
  ConstMatrixMap left_unfolding() const {
    return {values.data(), static_cast<Eigen::Index>(left * n), static_cast<Eigen::Index>(right)};
  }
  /// left x (n*right)
  ConstMatrixMap right_unfolding() const {
    return {values.data(), static_cast<Eigen::Index>(left), static_cast<Eigen::Index>(n * right)};
  }
  /// Slice G(:, i, :) for a 0-based i.
  Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> slice(std::size_t i) const {
    return {values.data() + left * i, static_cast<Eigen::Index>(left), static_cast<Eigen::Index>(right),
            Eigen::OuterStride<>(static_cast<Eigen::Index>(left * n))};
  }
  DenseTensor as_tensor() const { return DenseTensor(Shape{left, n, right}, values); }
};

class TTTensor {
 public:
  TTTensor() = default;
  explicit TTTensor(std::vector<TTCore> cores) : cores_(std::move(cores)) { validate(); }

  std::size_t order() const { return cores_.size(); }
  const std::vector<TTCore>& cores() const { return cores_; }
  const TTCore& core(std::size_t k) const { return cores_.at(k - 1); }  // 1-based

  std::vector<std::size_t> dims() const {
    std::vector<std::size_t> out;
    for (const auto& c : cores_) out.push_back(c.n);
    return out;
  }
  Shape shape() const { return Shape(dims()); }
  /// s_0..s_d
  std::vector<std::size_t> core_sizes() const {
    std::vector<std::size_t> out{1};
    for (const auto& c : cores_) out.push_back(c.right);
    return out;
  }

 private:
  void validate() const {
    if (cores_.empty()) throw std::invalid_argument("a TT tensor needs at least one core");
    if (cores_.front().left != 1 || cores_.back().right != 1) throw std::invalid_argument("boundary core sizes must be 1");
    for (std::size_t k = 0; k + 1 < cores_.size(); ++k)
      if (cores_[k].right != cores_[k + 1].left)
        throw std::invalid_argument("core sizes do not chain between cores " + std::to_string(k + 1) + " and " +
                                    std::to_string(k + 2));
    for (const auto& c : cores_)
      if (c.n == 0 || c.left == 0 || c.right == 0) throw std::invalid_argument("core dimensions must be positive");
  }

  std::vector<TTCore> cores_;
};

inline double tt_entry(const TTTensor& t, std::span<const std::size_t> idx) {
  const auto d = t.order();
  if (idx.size() != d) throw std::out_of_range("multi-index has wrong length");
  Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
  for (std::size_t k = 0; k < d; ++k) {
    const auto& c = t.cores()[k];
    if (idx[k] < 1 || idx[k] > c.n) throw std::out_of_range("TT index out of range in mode " + std::to_string(k + 1));
    v = v * c.slice(idx[k] - 1);
  }
  return v(0);
}

inline double tt_entry(const TTTensor& t, std::initializer_list<std::size_t> idx) {
  return tt_entry(t, std::span<const std::size_t>(idx.begin(), idx.size()));
}

inline constexpr std::size_t default_materialize_limit = std::size_t{1} << 28;

inline DenseTensor tt_full(const TTTensor& t, std::size_t limit = default_materialize_limit) {
  const Shape shape = t.shape();
  if (shape.size() > limit) throw std::length_error("tt_full: " + shape.str() + " exceeds the materialization limit");
  Matrix m = t.cores()[0].left_unfolding();
  for (std::size_t k = 1; k < t.order(); ++k) {
    const auto& c = t.cores()[k];
    Matrix next = m * c.right_unfolding();
    m = ConstMatrixMap(next.data(), next.rows() * static_cast<Eigen::Index>(c.n), static_cast<Eigen::Index>(c.right));
  }
  return DenseTensor(shape, std::vector<double>(m.data(), m.data() + m.size()));
}

inline std::size_t tt_storage_count(const TTTensor& t) {
  std::size_t total = 0;
  for (const auto& c : t.cores()) total += c.size();
  return total;
}

/// Left-to-right TTSVD. Relative mode cuts each SVD at tol*||X||/sqrt(d-1).
inline TTTensor ttsvd(const DenseTensor& x, const Truncation& trunc, const std::vector<std::size_t>& ranks = {}) {
  const auto d = x.order();
  const auto& n = x.shape().dims();
  if (d == 1) return TTTensor({TTCore(1, n[0], 1, x.vec())});
  const double norm = frobenius_norm(x);
  double tail = 0.0;
  if (trunc.kind == Truncation::Kind::relative) {
    if (!(trunc.tol > 0.0 && trunc.tol < 1.0)) throw std::invalid_argument("ttsvd tolerance must lie in (0, 1)");
    tail = trunc.tol * norm / std::sqrt(static_cast<double>(d - 1));
  } else if (trunc.kind == Truncation::Kind::absolute) {
    tail = trunc.tol;
  } else if (ranks.size() != d - 1) {
    throw std::invalid_argument("ttsvd needs d-1 ranks");
  }

  std::vector<TTCore> cores;
  Matrix c = ConstMatrixMap(x.data(), static_cast<Eigen::Index>(n[0]), static_cast<Eigen::Index>(x.size() / n[0]));
  std::size_t left = 1;
  for (std::size_t k = 0; k + 1 < d; ++k) {
    const auto rows = left * n[k];
    const auto cols = static_cast<std::size_t>(c.size()) / rows;
    const ConstMatrixMap view(c.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    const Truncation t = trunc.kind == Truncation::Kind::rank ? Truncation::fixed(ranks[k]) : Truncation::absolute(tail);
    auto svd = truncated_svd(view, t);
    auto r = svd.rank;
    if (r == 0) {  // zero tensor: keep a rank-1 zero chain
      r = 1;
      svd.U = Matrix::Zero(static_cast<Eigen::Index>(rows), 1);
      svd.U(0, 0) = 1.0;
      svd.singular_values = Vector::Zero(1);
      svd.V = Matrix::Zero(static_cast<Eigen::Index>(cols), 1);
    }
    cores.emplace_back(left, n[k], r, svd.U);
    c = svd.singular_values.head(static_cast<Eigen::Index>(r)).asDiagonal() * svd.V.transpose();
    left = r;
  }
  cores.emplace_back(left, n[d - 1], 1, c);
  return TTTensor(std::move(cores));
}

inline TTTensor ttsvd(const DenseTensor& x, double tol) { return ttsvd(x, Truncation::relative(tol)); }
inline TTTensor ttsvd(const DenseTensor& x, const std::vector<std::size_t>& ranks) {
  return ttsvd(x, Truncation::fixed(1), ranks);
}

struct ErrorEstimate {
  double value = 0.0;
  double standard_error = 0.0;
  bool sampled = false;
  std::size_t samples = 0;
};

inline ErrorEstimate tt_error_full(const DenseTensor& ref, const TTTensor& t) {
  const auto approx = tt_full(t);
  if (!(approx.shape() == ref.shape())) throw std::invalid_argument("TT shape does not match the reference tensor");
  const double denom = frobenius_norm(ref);
  const double num = (ref.vec() - approx.vec()).norm();
  return {denom > 0.0 ? num / denom : num, 0.0, false, 0};
}

inline ErrorEstimate tt_error_full(const TensorOracle& ref, const TTTensor& t) { return tt_error_full(ref.materialize(), t); }

/// Ratio estimator sqrt(mean e^2 / mean x^2) over `samples` indices drawn
/// uniformly with replacement, with a delta-method standard error.
template <class Ref>
ErrorEstimate tt_error_sample(const Ref& ref, const TTTensor& t, std::size_t samples, const SeededStream& stream) {
  if (samples == 0) throw std::invalid_argument("sampled error needs at least one sample");
  const auto dims = t.dims();
  if (!(Shape(dims) == ref.shape())) throw std::invalid_argument("TT shape does not match the reference tensor");
  const auto d = dims.size();
  std::vector<std::size_t> idx(d);
  double se2 = 0, sx2 = 0, se4 = 0, sx4 = 0, sex = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t k = 0; k < d; ++k) {
      const auto u = stream.bits(s * d + k);
      idx[k] = static_cast<std::size_t>(u % dims[k]) + 1;
    }
    double x;
    if constexpr (std::is_same_v<Ref, DenseTensor>)
      x = ref(idx);
    else
      x = ref.entry(idx);
    const double e = x - tt_entry(t, idx);
    const double e2 = e * e, x2 = x * x;
    se2 += e2;
    sx2 += x2;
    se4 += e2 * e2;
    sx4 += x2 * x2;
    sex += e2 * x2;
  }
  const double N = static_cast<double>(samples);
  const double a = se2 / N, b = sx2 / N;
  ErrorEstimate out;
  out.sampled = true;
  out.samples = samples;
  if (b <= 0.0) {
    out.value = std::sqrt(a);
    return out;
  }
  const double ratio = a / b;
  out.value = std::sqrt(ratio);
  if (samples > 1 && ratio > 0.0) {
    const double va = (se4 / N - a * a), vb = (sx4 / N - b * b), cab = (sex / N - a * b);
    const double var_ratio = std::max(0.0, (va / (b * b) - 2.0 * a * cab / (b * b * b) + a * a * vb / (b * b * b * b)) / N);
    out.standard_error = std::sqrt(var_ratio) / (2.0 * out.value);
  }
  return out;
}

}  // namespace ptt
