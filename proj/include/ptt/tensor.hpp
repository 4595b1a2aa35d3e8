#pragma once

// Dense tensors, entry oracles and the reshaping vocabulary shared by every
// algorithm in the library. Storage is column-major (first index fastest)
// throughout, so an unfolding is a reinterpretation of the flat array.

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace ptt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Multiply two sizes, throwing on overflow.
inline std::size_t checked_mul(std::size_t a, std::size_t b) {
  std::size_t out = 0;
  if (__builtin_mul_overflow(a, b, &out)) throw std::overflow_error("tensor size overflows size_t");
  return out;
}

/// Product of dims[first, last) (0-based offsets).
inline std::size_t dim_product(std::span<const std::size_t> dims, std::size_t first, std::size_t last) {
  std::size_t p = 1;
  for (std::size_t k = first; k < last; ++k) p = checked_mul(p, dims[k]);
  return p;
}

class Shape {
 public:
  Shape() = default;
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) { validate(); }
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) { validate(); }

  std::size_t order() const { return dims_.size(); }
  const std::vector<std::size_t>& dims() const { return dims_; }
  /// Size of mode k, 1-based.
  std::size_t mode(std::size_t k) const {
    if (k < 1 || k > dims_.size()) throw std::out_of_range("mode index out of range");
    return dims_[k - 1];
  }
  std::size_t size() const { return size_; }
  /// Product of mode sizes first..last (1-based, inclusive); empty range gives 1.
  std::size_t product(std::size_t first, std::size_t last) const {
    if (last < first) return 1;
    return dim_product(dims_, first - 1, last);
  }

  friend bool operator==(const Shape& a, const Shape& b) { return a.dims_ == b.dims_; }

  std::string str() const {
    std::string s = "(";
    for (std::size_t k = 0; k < dims_.size(); ++k) s += (k ? "," : "") + std::to_string(dims_[k]);
    return s + ")";
  }

 private:
  void validate() {
    if (dims_.empty()) throw std::invalid_argument("tensor order must be at least 1");
    for (auto n : dims_)
      if (n == 0) throw std::invalid_argument("tensor mode sizes must be positive");
    size_ = dim_product(dims_, 0, dims_.size());
  }

  std::vector<std::size_t> dims_;
  std::size_t size_ = 0;
};

/// Column-major offset of a 1-based multi-index.
inline std::size_t linear_index(std::span<const std::size_t> idx, const Shape& shape) {
  if (idx.size() != shape.order()) throw std::out_of_range("multi-index has wrong length");
  std::size_t offset = 0;
  std::size_t stride = 1;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto n = shape.dims()[k];
    if (idx[k] < 1 || idx[k] > n)
      throw std::out_of_range("index " + std::to_string(idx[k]) + " out of range for mode " +
                              std::to_string(k + 1));
    offset += (idx[k] - 1) * stride;
    stride *= n;
  }
  return offset;
}

inline std::size_t linear_index(std::initializer_list<std::size_t> idx, const Shape& shape) {
  return linear_index(std::span<const std::size_t>(idx.begin(), idx.size()), shape);
}

/// Inverse of linear_index: writes the 1-based multi-index of `offset`.
inline void multi_index(std::size_t offset, const Shape& shape, std::span<std::size_t> out) {
  for (std::size_t k = 0; k < shape.order(); ++k) {
    const auto n = shape.dims()[k];
    out[k] = offset % n + 1;
    offset /= n;
  }
}

class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape) : shape_(std::move(shape)), values_(shape_.size(), 0.0) {}
  DenseTensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.size()) throw std::invalid_argument("value count does not match shape " + shape_.str());
  }

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.order(); }
  std::size_t size() const { return values_.size(); }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const double* data() const { return values_.data(); }
  double* data() { return values_.data(); }
  std::vector<double> release() && { return std::move(values_); }

  double operator()(std::span<const std::size_t> idx) const { return values_[linear_index(idx, shape_)]; }
  double& operator()(std::span<const std::size_t> idx) { return values_[linear_index(idx, shape_)]; }
  double operator()(std::initializer_list<std::size_t> idx) const { return values_[linear_index(idx, shape_)]; }
  double& operator()(std::initializer_list<std::size_t> idx) { return values_[linear_index(idx, shape_)]; }

  /// Flat data viewed as a column vector.
  Eigen::Map<const Vector> vec() const { return {values_.data(), static_cast<Eigen::Index>(values_.size())}; }
  Eigen::Map<Vector> vec() { return {values_.data(), static_cast<Eigen::Index>(values_.size())}; }

 private:
  Shape shape_;
  std::vector<double> values_;
};

/// Entry-evaluation function standing in for a tensor that may be too large to
/// hold. Every requested entry is counted exactly once; the counter is safe to
/// bump from concurrent workers.
class TensorOracle {
 public:
  /// Receives a 1-based multi-index.
  using EntryFn = std::function<double(std::span<const std::size_t>)>;

  TensorOracle(Shape shape, EntryFn fn)
      : shape_(std::move(shape)), fn_(std::move(fn)), count_(std::make_unique<std::atomic<std::uint64_t>>(0)) {}

  TensorOracle(TensorOracle&&) noexcept = default;
  TensorOracle& operator=(TensorOracle&&) noexcept = default;

  const Shape& shape() const { return shape_; }

  double entry(std::span<const std::size_t> idx) const {
    if (idx.size() != shape_.order()) throw std::out_of_range("multi-index has wrong length");
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (idx[k] < 1 || idx[k] > shape_.dims()[k]) throw std::out_of_range("oracle index out of range");
    count_->fetch_add(1, std::memory_order_relaxed);
    return fn_(idx);
  }
  double entry(std::initializer_list<std::size_t> idx) const {
    return entry(std::span<const std::size_t>(idx.begin(), idx.size()));
  }

  /// Evaluate the index box [begin_k, end_k) (0-based offsets) into `out` in
  /// column-major order. Counts one evaluation per entry.
  void load_box(std::span<const std::size_t> begin, std::span<const std::size_t> end, std::span<double> out) const {
    const auto d = shape_.order();
    std::size_t count = 1;
    for (std::size_t k = 0; k < d; ++k) {
      if (end[k] <= begin[k] || end[k] > shape_.dims()[k]) throw std::out_of_range("oracle box out of range");
      count *= end[k] - begin[k];
    }
    if (out.size() != count) throw std::invalid_argument("oracle box buffer has wrong size");
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

    std::vector<std::size_t> idx(d);
    for (std::size_t k = 0; k < d; ++k) idx[k] = begin[k] + 1;
    for (std::size_t t = 0; t < count; ++t) {
      out[t] = fn_(idx);
      for (std::size_t k = 0; k < d; ++k) {
        if (++idx[k] <= end[k]) break;
        idx[k] = begin[k] + 1;
      }
    }
    count_->fetch_add(count, std::memory_order_relaxed);
  }

  std::uint64_t eval_count() const { return count_->load(); }
  void reset_count() { count_->store(0); }

  /// Simulated I/O latency paid once per load_box call.
  void set_block_latency(std::chrono::microseconds latency) { latency_ = latency; }

  /// Evaluate every entry (counts them).
  DenseTensor materialize() const {
    DenseTensor t(shape_);
    std::vector<std::size_t> begin(shape_.order(), 0);
    load_box(begin, shape_.dims(), t.values());
    return t;
  }

 private:
  Shape shape_;
  EntryFn fn_;
  std::unique_ptr<std::atomic<std::uint64_t>> count_;
  std::chrono::microseconds latency_{0};
};

/// Oracle reading from a dense tensor. The tensor must outlive the oracle.
inline TensorOracle as_oracle(const DenseTensor& t) {
  const DenseTensor* src = &t;
  return TensorOracle(t.shape(), [src](std::span<const std::size_t> idx) {
    std::size_t offset = 0, stride = 1;
    const auto& dims = src->shape().dims();
    for (std::size_t k = 0; k < idx.size(); ++k) {
      offset += (idx[k] - 1) * stride;
      stride *= dims[k];
    }
    return src->data()[offset];
  });
}

/// Pure reinterpretation of a column-major matrix with new dimensions.
inline Matrix reshape(const Eigen::Ref<const Matrix>& m, std::size_t rows, std::size_t cols) {
  if (checked_mul(rows, cols) != static_cast<std::size_t>(m.size()))
    throw std::invalid_argument("reshape changes the number of entries");
  Matrix contiguous = m;
  return ConstMatrixMap(contiguous.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

/// k-th unfolding as a view over the tensor's own storage (1 <= k <= d-1).
inline ConstMatrixMap unfold_view(const DenseTensor& t, std::size_t k) {
  const auto d = t.order();
  if (k < 1 || k + 1 > d) throw std::out_of_range("unfolding index must satisfy 1 <= k <= d-1");
  const auto rows = t.shape().product(1, k);
  const auto cols = t.shape().product(k + 1, d);
  return {t.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

/// k-th unfolding X_k: rows are modes 1..k, columns modes k+1..d.
inline Matrix unfold(const DenseTensor& t, std::size_t k) { return unfold_view(t, k); }

inline DenseTensor refold(const Eigen::Ref<const Matrix>& m, const Shape& shape) {
  if (static_cast<std::size_t>(m.size()) != shape.size())
    throw std::invalid_argument("refold: matrix has " + std::to_string(m.size()) + " entries, shape " + shape.str() +
                                " needs " + std::to_string(shape.size()));
  Matrix contiguous = m;
  return DenseTensor(shape, std::vector<double>(contiguous.data(), contiguous.data() + contiguous.size()));
}

/// Mode-k matricization X_(k): column j is the j-th mode-k fiber, fibers
/// enumerated column-major over the remaining modes.
inline Matrix matricize(const DenseTensor& t, std::size_t k) {
  const auto d = t.order();
  if (k < 1 || k > d) throw std::out_of_range("matricization index must satisfy 1 <= k <= d");
  const auto left = t.shape().product(1, k - 1);
  const auto nk = t.shape().mode(k);
  const auto right = t.shape().product(k + 1, d);
  Matrix out(nk, left * right);
  for (std::size_t b = 0; b < right; ++b) {
    ConstMatrixMap slab(t.data() + b * left * nk, static_cast<Eigen::Index>(left), static_cast<Eigen::Index>(nk));
    out.middleCols(static_cast<Eigen::Index>(b * left), static_cast<Eigen::Index>(left)) = slab.transpose();
  }
  return out;
}

/// Inverse of matricize for a target shape.
inline DenseTensor dematricize(const Eigen::Ref<const Matrix>& m, const Shape& shape, std::size_t k) {
  const auto d = shape.order();
  if (k < 1 || k > d) throw std::out_of_range("matricization index must satisfy 1 <= k <= d");
  const auto left = shape.product(1, k - 1);
  const auto nk = shape.mode(k);
  const auto right = shape.product(k + 1, d);
  if (static_cast<std::size_t>(m.rows()) != nk || static_cast<std::size_t>(m.cols()) != left * right)
    throw std::invalid_argument("dematricize: matrix does not match shape");
  DenseTensor t(shape);
  for (std::size_t b = 0; b < right; ++b) {
    MatrixMap slab(t.data() + b * left * nk, static_cast<Eigen::Index>(left), static_cast<Eigen::Index>(nk));
    slab = m.middleCols(static_cast<Eigen::Index>(b * left), static_cast<Eigen::Index>(left)).transpose();
  }
  return t;
}

/// k-mode product T x_k A, i.e. the refolding of A * T_(k).
inline DenseTensor mode_product(const DenseTensor& t, const Eigen::Ref<const Matrix>& a, std::size_t k) {
  const auto d = t.order();
  if (k < 1 || k > d) throw std::out_of_range("mode index out of range");
  const auto nk = t.shape().mode(k);
  if (static_cast<std::size_t>(a.cols()) != nk)
    throw std::invalid_argument("mode_product: matrix has " + std::to_string(a.cols()) + " columns, mode " +
                                std::to_string(k) + " has size " + std::to_string(nk));
  const auto left = t.shape().product(1, k - 1);
  const auto right = t.shape().product(k + 1, d);
  const auto m = static_cast<std::size_t>(a.rows());
  auto dims = t.shape().dims();
  dims[k - 1] = m;
  DenseTensor out{Shape(dims)};
  const Matrix at = a.transpose();
  for (std::size_t b = 0; b < right; ++b) {
    ConstMatrixMap slab(t.data() + b * left * nk, static_cast<Eigen::Index>(left), static_cast<Eigen::Index>(nk));
    MatrixMap dst(out.data() + b * left * m, static_cast<Eigen::Index>(left), static_cast<Eigen::Index>(m));
    dst.noalias() = slab * at;
  }
  return out;
}

inline double frobenius_norm(const DenseTensor& t) { return t.vec().norm(); }

inline DenseTensor operator-(const DenseTensor& a, const DenseTensor& b) {
  if (!(a.shape() == b.shape())) throw std::invalid_argument("tensor shapes differ");
  DenseTensor out(a.shape());
  out.vec() = a.vec() - b.vec();
  return out;
}

}  // namespace ptt
