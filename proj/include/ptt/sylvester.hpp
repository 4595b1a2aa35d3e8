#pragma once

// Sylvester equations: Zolotarev shifts, factored ADI for A X - X B^T = U V^T,
// and the three-recurrence TT solver for X x_1 A + X x_2 B + X x_3 C = F.

#include "ptt/linalg.hpp"
#include "ptt/tensor.hpp"
#include "ptt/tt.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ptt {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

/// Symmetric (normal, real spectrum) operator stored as a spectrum plus an
/// optional orthogonal eigenvector matrix; empty V means diagonal.
class NormalOperator {
 public:
  NormalOperator() = default;

  static NormalOperator diagonal(Vector spectrum) {
    NormalOperator op;
    op.lambda_ = std::move(spectrum);
    op.init_interval();
    return op;
  }

  static NormalOperator symmetric(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("operator must be square");
    if ((a - a.transpose()).norm() > 1e-12 * std::max(1.0, a.norm()))
      throw std::invalid_argument("dense operators must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> es(a);
    NormalOperator op;
    op.lambda_ = es.eigenvalues();
    op.v_ = es.eigenvectors();
    op.init_interval();
    return op;
  }

  std::size_t size() const { return static_cast<std::size_t>(lambda_.size()); }
  bool is_diagonal() const { return v_.size() == 0; }
  const Vector& spectrum() const { return lambda_; }
  const Matrix& eigenvectors() const { return v_; }
  Interval interval() const { return interval_; }
  void set_interval(Interval i) {
    if (!(i.lo <= lambda_.minCoeff() && i.hi >= lambda_.maxCoeff()))
      throw std::invalid_argument("spectral interval must enclose every eigenvalue");
    interval_ = i;
  }

  Matrix dense() const {
    if (is_diagonal()) return lambda_.asDiagonal();
    return v_ * lambda_.asDiagonal() * v_.transpose();
  }

  Matrix apply(const Eigen::Ref<const Matrix>& m) const {
    if (is_diagonal()) return lambda_.asDiagonal() * m;
    return v_ * (lambda_.asDiagonal() * (v_.transpose() * m));
  }

  /// (A - s I)^{-1} M through the eigendecomposition.
  Matrix shifted_solve(double s, const Eigen::Ref<const Matrix>& m) const {
    const double scale = std::max(1.0, lambda_.cwiseAbs().maxCoeff());
    Vector inv(lambda_.size());
    for (Eigen::Index i = 0; i < lambda_.size(); ++i) {
      const double g = lambda_(i) - s;
      if (std::abs(g) < 1e-14 * scale) throw std::domain_error("shifted system is singular at shift " + std::to_string(s));
      inv(i) = 1.0 / g;
    }
    if (is_diagonal()) return inv.asDiagonal() * m;
    return v_ * (inv.asDiagonal() * (v_.transpose() * m));
  }

  /// Scalar operations of one shifted solve with `cols` right-hand sides.
  std::uint64_t solve_flops(std::size_t cols) const {
    const auto n = static_cast<std::uint64_t>(size());
    return is_diagonal() ? n * cols : (4 * n * n + n) * cols;
  }

 private:
  void init_interval() {
    if (lambda_.size() == 0) throw std::invalid_argument("operator needs at least one eigenvalue");
    interval_ = {lambda_.minCoeff(), lambda_.maxCoeff()};
  }

  Vector lambda_;
  Matrix v_;
  Interval interval_;
};

namespace elliptic {

inline double agm(double a, double b) {
  for (int i = 0; i < 64 && std::abs(a - b) > 1e-16 * a; ++i) {
    const double m = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = m;
  }
  return 0.5 * (a + b);
}

/// Complete elliptic integral K in terms of the complementary modulus k'.
inline double complete_k_from_complement(double kp) { return std::numbers::pi / (2.0 * agm(1.0, kp)); }

/// Jacobi dn(u | m) with emc = 1 - m, by descending Landen/AGM.
inline double dn(double u, double emc) {
  if (emc == 0.0) return 1.0 / std::cosh(u);
  double em[16], en[16];
  double a = 1.0, c = 1.0, d = 1.0;
  int l = 0;
  for (int i = 0; i < 16; ++i) {
    l = i;
    em[i] = a;
    emc = std::sqrt(emc);
    en[i] = emc;
    c = 0.5 * (a + emc);
    if (std::abs(a - emc) <= 1e-10 * a) break;
    emc *= a;
    a = c;
  }
  u *= c;
  const double sn = std::sin(u), cn = std::cos(u);
  if (sn == 0.0) return 1.0;
  a = cn / sn;
  c *= a;
  for (int ii = l; ii >= 0; --ii) {
    const double b = em[ii];
    a *= c;
    c *= d;
    d = (en[ii] + a) / (b + a);
    a = c / b;
  }
  return d;
}

}  // namespace elliptic

struct ShiftParameters {
  std::vector<double> p;  // zeros, in E
  std::vector<double> q;  // poles, in F
  Interval e;
  Interval f;
  double gamma = 1.0;
  std::vector<double> predicted;  // bound for 1..l shifts

  std::size_t count() const { return p.size(); }
  double predicted_bound() const { return predicted.empty() ? 1.0 : predicted.back(); }
};

/// Cross-ratio of the endpoints of E = [a, b] and F = [c, e], b < c.
inline double cross_ratio(Interval e, Interval f) {
  return std::abs((f.lo - e.lo) * (f.hi - e.hi) / ((f.lo - e.hi) * (f.hi - e.lo)));
}

/// 4 exp(-pi^2 l / log(16 gamma)).
inline double zolotarev_bound(double gamma, std::size_t l) {
  return 4.0 * std::exp(-std::numbers::pi * std::numbers::pi * static_cast<double>(l) / std::log(16.0 * gamma));
}

inline std::size_t zolotarev_count(double gamma, double eps) {
  const double pi2 = std::numbers::pi * std::numbers::pi;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::log(16.0 * gamma) * std::log(4.0 / eps) / pi2)));
}

namespace detail {

inline void check_intervals(Interval e, Interval f) {
  if (!(e.lo <= e.hi && f.lo <= f.hi)) throw std::invalid_argument("interval endpoints out of order");
  if (!(e.hi < f.lo || f.hi < e.lo)) throw std::invalid_argument("spectral intervals overlap: the solution is not unique");
}

/// Moebius map sending -alpha, -1, 1, alpha to a, b, c, e.
struct Moebius {
  double a11, a12, a21, a22;
  double operator()(double z) const { return (a11 * z + a12) / (a21 * z + a22); }
};

inline Moebius moebius(double alpha, Interval e, Interval f) {
  const double z[3] = {-alpha, -1.0, 1.0};
  const double w[3] = {e.lo, e.hi, f.lo};
  Eigen::Matrix<double, 3, 4> m;
  for (int i = 0; i < 3; ++i) m.row(i) << z[i], 1.0, -w[i] * z[i], -w[i];
  Eigen::JacobiSVD<Eigen::Matrix<double, 3, 4>> svd(m, Eigen::ComputeFullV);
  const Eigen::Vector4d v = svd.matrixV().col(3);
  return {v(0), v(1), v(2), v(3)};
}

}  // namespace detail

/// `l` shifts from the elliptic-function construction on [-alpha,-1] and
/// [1, alpha], mapped back to E and F.
inline ShiftParameters zolotarev_shifts_count(Interval e, Interval f, std::size_t l) {
  detail::check_intervals(e, f);
  if (l < 1) throw std::invalid_argument("need at least one shift");
  if (e.lo > f.hi) {
    // E to the right of F: solve the mirrored problem.
    auto s = zolotarev_shifts_count({-e.hi, -e.lo}, {-f.hi, -f.lo}, l);
    for (auto& v : s.p) v = -v;
    for (auto& v : s.q) v = -v;
    s.e = e;
    s.f = f;
    return s;
  }
  ShiftParameters out;
  out.e = e;
  out.f = f;
  out.gamma = cross_ratio(e, f);
  const double g = out.gamma;
  const double alpha = -1.0 + 2.0 * g + 2.0 * std::sqrt(g * g - g);
  const auto t = detail::moebius(alpha, e, f);
  const double kp = 1.0 / alpha;
  const double emc = kp * kp;
  const double k = elliptic::complete_k_from_complement(kp);
  for (std::size_t j = 0; j < l; ++j) {
    const double u = (static_cast<double>(j) + 0.5) * k / static_cast<double>(l);
    const double s = alpha * elliptic::dn(u, emc);
    out.p.push_back(t(-s));
    out.q.push_back(t(s));
  }
  for (std::size_t j = 1; j <= l; ++j) out.predicted.push_back(zolotarev_bound(g, j));
  return out;
}

/// Shift count from the cross-ratio formula so that the predicted bound is <= eps.
inline ShiftParameters zolotarev_shifts(Interval e, Interval f, double eps) {
  detail::check_intervals(e, f);
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0, 1)");
  const auto g = e.hi < f.lo ? cross_ratio(e, f) : cross_ratio({-e.hi, -e.lo}, {-f.hi, -f.lo});
  return zolotarev_shifts_count(e, f, zolotarev_count(g, eps));
}

/// sup_E |r| / inf_F |r| for r(z) = prod (z - p_j)/(z - q_j), on uniform grids
/// of `points` nodes (first `use` shifts; 0 means all).
inline double rational_ratio_on_grid(const ShiftParameters& s, Interval e, Interval f, std::size_t points = 20001, std::size_t use = 0) {
  const auto l = use ? use : s.count();
  auto r = [&](double z) {
    double v = 1.0;
    for (std::size_t j = 0; j < l; ++j) v *= (z - s.p[j]) / (z - s.q[j]);
    return std::abs(v);
  };
  // Geometric grids resolve intervals that hug the origin.
  auto node = [points](Interval iv, std::size_t i) {
    const double t = static_cast<double>(i) / static_cast<double>(points - 1);
    if (iv.lo > 0.0) return iv.lo * std::pow(iv.hi / iv.lo, t);
    if (iv.hi < 0.0) return iv.hi * std::pow(iv.lo / iv.hi, t);
    return iv.lo + t * (iv.hi - iv.lo);
  };
  double sup = 0.0, inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points; ++i) {
    sup = std::max(sup, r(node(e, i)));
    inf = std::min(inf, r(node(f, i)));
  }
  for (double z : {e.lo, e.hi}) sup = std::max(sup, r(z));
  for (double z : {f.lo, f.hi}) inf = std::min(inf, r(z));
  return sup / inf;
}

struct FadiOps {
  std::uint64_t flops = 0;
  std::uint64_t solves_z = 0;
  std::uint64_t solves_w = 0;
  std::uint64_t solves_y = 0;
  std::uint64_t peak_scalars = 0;
  std::uint64_t max_array_scalars = 0;
};

struct LowRankFactors {
  Matrix W;
  Matrix D;
  Matrix Y;
  std::size_t rank() const { return static_cast<std::size_t>(D.rows()); }
  Matrix product() const { return W * D * Y.transpose(); }
};

/// Low-rank solution W D Y^T of A X - X B^T = U V^T after l shifts.
inline LowRankFactors fadi_matrix(const NormalOperator& a, const NormalOperator& b, const Matrix& u, const Matrix& v,
                                  const ShiftParameters& s, FadiOps* ops = nullptr) {
  const auto l = s.count();
  const auto r = static_cast<Eigen::Index>(u.cols());
  if (v.cols() != r) throw std::invalid_argument("U and V must have the same number of columns");
  Matrix wj = a.shifted_solve(s.q[0], u);
  Matrix yj = b.shifted_solve(s.p[0], v);
  LowRankFactors out;
  out.W.resize(u.rows(), r * static_cast<Eigen::Index>(l));
  out.Y.resize(v.rows(), r * static_cast<Eigen::Index>(l));
  out.D = Matrix::Zero(r * static_cast<Eigen::Index>(l), r * static_cast<Eigen::Index>(l));
  for (std::size_t j = 0;; ++j) {
    out.W.middleCols(r * static_cast<Eigen::Index>(j), r) = wj;
    out.Y.middleCols(r * static_cast<Eigen::Index>(j), r) = yj;
    out.D.diagonal().segment(r * static_cast<Eigen::Index>(j), r).setConstant(s.q[j] - s.p[j]);
    if (ops) {
      ops->flops += a.solve_flops(static_cast<std::size_t>(r)) + b.solve_flops(static_cast<std::size_t>(r));
      ++ops->solves_z;
      ++ops->solves_y;
    }
    if (j + 1 == l) break;
    wj = wj + (s.q[j + 1] - s.p[j]) * a.shifted_solve(s.q[j + 1], wj);
    yj = yj + (s.p[j + 1] - s.q[j]) * b.shifted_solve(s.p[j + 1], yj);
  }
  return out;
}

/// Solves (I (x) A + B (x) I - q I) vec(M) = vec(R) column by column, with each
/// column of `rhs` a vectorized n_A x n_B matrix: A M + M B^T - q M = R.
inline Matrix kron_shifted_solve(const NormalOperator& a, const NormalOperator& b, double q, const Matrix& rhs,
                                 FadiOps* ops = nullptr) {
  const auto n1 = static_cast<Eigen::Index>(a.size()), n2 = static_cast<Eigen::Index>(b.size());
  if (rhs.rows() != n1 * n2) throw std::invalid_argument("right-hand side has wrong length");
  const double scale = std::max({1.0, a.spectrum().cwiseAbs().maxCoeff(), b.spectrum().cwiseAbs().maxCoeff()});
  Matrix out(rhs.rows(), rhs.cols());
  for (Eigen::Index col = 0; col < rhs.cols(); ++col) {
    Matrix m = Eigen::Map<const Matrix>(rhs.col(col).data(), n1, n2);
    if (!b.is_diagonal()) m = m * b.eigenvectors();
    if (!a.is_diagonal()) m = a.eigenvectors().transpose() * m;
    for (Eigen::Index j = 0; j < n2; ++j)
      for (Eigen::Index i = 0; i < n1; ++i) {
        const double g = a.spectrum()(i) + b.spectrum()(j) - q;
        if (std::abs(g) < 1e-14 * scale) throw std::domain_error("Kronecker-sum system is singular at shift " + std::to_string(q));
        m(i, j) /= g;
      }
    if (!a.is_diagonal()) m = a.eigenvectors() * m;
    if (!b.is_diagonal()) m = m * b.eigenvectors().transpose();
    Eigen::Map<Matrix>(out.col(col).data(), n1, n2) = m;
  }
  if (ops) {
    const auto s1 = static_cast<std::uint64_t>(n1), s2 = static_cast<std::uint64_t>(n2);
    std::uint64_t per = s1 * s2;
    if (!a.is_diagonal()) per += 4 * s1 * s1 * s2;
    if (!b.is_diagonal()) per += 4 * s1 * s2 * s2;
    ops->flops += per * static_cast<std::uint64_t>(rhs.cols());
    ops->solves_w += static_cast<std::uint64_t>(rhs.cols());
  }
  return out;
}

/// QR of W and Y, SVD of R_W D R_Y^T, cut at relative Frobenius tail eps.
/// The returned W and Y have orthonormal columns and D is diagonal.
inline LowRankFactors lowrank_recompress(const Matrix& w, const Matrix& d, const Matrix& y, double eps, FadiOps* ops = nullptr) {
  auto [qw, rw] = thin_qr(w);
  auto [qy, ry] = thin_qr(y);
  const Matrix core = rw * d * ry.transpose();
  auto svd = truncated_svd(core, Truncation::relative(std::max(eps, 0.0)));
  if (eps <= 0.0) svd.rank = numerical_rank(core, 1e-14);
  if (svd.rank == 0) {
    svd = truncated_svd(core, Truncation::fixed(1));
    svd.rank = 0;
  }
  LowRankFactors out;
  const auto k = static_cast<Eigen::Index>(std::max<std::size_t>(svd.rank, 1));
  out.W = qw * svd.U.leftCols(k);
  out.Y = qy * svd.V.leftCols(k);
  out.D = svd.singular_values.head(k).asDiagonal();
  if (svd.rank == 0) out.D.setZero();
  if (ops) {
    const auto m = static_cast<std::uint64_t>(w.rows()), c = static_cast<std::uint64_t>(w.cols());
    const auto my = static_cast<std::uint64_t>(y.rows());
    ops->flops += 2 * m * c * c + 2 * my * c * c + 4 * c * c * c + 2 * (m + my) * c * static_cast<std::uint64_t>(k);
  }
  return out;
}

namespace detail {

/// Orthogonalize the new block against an orthonormal W (two Gram-Schmidt
/// passes), returning the extension Q2 and coefficients [C; R2].
inline std::pair<Matrix, Matrix> extend_basis(const Matrix& w, const Matrix& block, FadiOps* ops) {
  const auto k = w.cols(), r = block.cols();
  Matrix c = w.transpose() * block;
  Matrix res = block - w * c;
  const Matrix c2 = w.transpose() * res;
  res -= w * c2;
  c += c2;
  auto [q2, r2] = thin_qr(res);
  Matrix coeff = Matrix::Zero(k + q2.cols(), r);
  coeff.topRows(k) = c;
  coeff.bottomRows(q2.cols()) = r2;
  if (ops) {
    const auto m = static_cast<std::uint64_t>(w.rows());
    ops->flops += 8 * m * static_cast<std::uint64_t>(k * r) + 2 * m * static_cast<std::uint64_t>(r * r);
  }
  return {std::move(q2), std::move(coeff)};
}

/// Recompression of [W, w_new] blkdiag(D, dn I) [Y, y_new]^T when W and Y
/// already have orthonormal columns: only the new columns are orthogonalized.
template <class Track>
LowRankFactors append_recompress(const LowRankFactors& acc, const Matrix& wn, const Matrix& yn, double dn, double eps, FadiOps* ops,
                                 Track&& track) {
  const auto k = acc.W.cols(), r = wn.cols();
  auto [qw, cw] = extend_basis(acc.W, wn, ops);
  auto [qy, cy] = extend_basis(acc.Y, yn, ops);
  const auto kw = k + qw.cols(), ky = k + qy.cols();
  Matrix rw = Matrix::Zero(kw, k + r), ry = Matrix::Zero(ky, k + r);
  rw.topLeftCorner(k, k).setIdentity();
  rw.rightCols(r) = cw;
  ry.topLeftCorner(k, k).setIdentity();
  ry.rightCols(r) = cy;
  Matrix d = Matrix::Zero(k + r, k + r);
  d.topLeftCorner(k, k) = acc.D;
  d.bottomRightCorner(r, r).diagonal().setConstant(dn);
  const Matrix core = rw * d * ry.transpose();
  auto svd = truncated_svd(core, Truncation::relative(eps));
  if (svd.rank == 0) {
    svd = truncated_svd(core, Truncation::fixed(1));
    svd.rank = 0;
  }
  const auto keep = static_cast<Eigen::Index>(std::max<std::size_t>(svd.rank, 1));
  track(static_cast<std::uint64_t>(acc.W.rows()) * static_cast<std::uint64_t>(keep));
  LowRankFactors out;
  out.W = acc.W * svd.U.topLeftCorner(k, keep) + qw * svd.U.bottomLeftCorner(qw.cols(), keep);
  out.Y = acc.Y * svd.V.topLeftCorner(k, keep) + qy * svd.V.bottomLeftCorner(qy.cols(), keep);
  out.D = svd.singular_values.head(keep).asDiagonal();
  if (svd.rank == 0) out.D.setZero();
  if (ops) {
    const auto m = static_cast<std::uint64_t>(acc.W.rows()) + static_cast<std::uint64_t>(acc.Y.rows());
    const auto c = static_cast<std::uint64_t>(k + r);
    ops->flops += 2 * m * c * static_cast<std::uint64_t>(keep) + 12 * c * c * c;
  }
  return out;
}

}  // namespace detail

struct Sylvester3DProblem {
  NormalOperator a, b, c;
  TTTensor f;
};

/// Shift intervals containing Lambda(A) u (Lambda(A) + Lambda(B)) and
/// Lambda(-C) u (Lambda(-B) + Lambda(-C)).
inline std::pair<Interval, Interval> shared_shift_intervals(const Sylvester3DProblem& p) {
  const auto ia = p.a.interval(), ib = p.b.interval(), ic = p.c.interval();
  Interval e{std::min(ia.lo, ia.lo + ib.lo), std::max(ia.hi, ia.hi + ib.hi)};
  Interval f{std::min(-ic.hi, -ib.hi - ic.hi), std::max(-ic.lo, -ib.lo - ic.lo)};
  return {e, f};
}

struct TTFadiResult {
  TTTensor tt;
  ShiftParameters shifts;
  std::size_t s1 = 0;
  std::size_t s2 = 0;
  FadiOps ops;
  std::vector<std::string> warnings;
};

/// Three coupled fADI recurrences with shared shifts: Z for the first
/// unfolding, W and Y for the second; then U_1 from CPQR of Z and
/// H_2 = U_1^T reshape(W), H_3 = D Y^T.
inline TTFadiResult tt_fadi(const Sylvester3DProblem& prob, double eps, std::optional<std::size_t> shift_count = {}) {
  if (prob.f.order() != 3) throw std::invalid_argument("tt_fadi needs a 3-way right-hand side");
  const auto n = prob.f.dims();
  if (n[0] != prob.a.size() || n[1] != prob.b.size() || n[2] != prob.c.size())
    throw std::invalid_argument("operator sizes do not match the right-hand side");
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0, 1)");
  const auto [e, f] = shared_shift_intervals(prob);
  TTFadiResult res;
  res.shifts = shift_count ? zolotarev_shifts_count(e, f, *shift_count) : zolotarev_shifts(e, f, eps);
  const auto& s = res.shifts;
  const auto l = s.count();
  const auto& g1c = prob.f.cores()[0];
  const auto& g2c = prob.f.cores()[1];
  const auto& g3c = prob.f.cores()[2];
  const auto r1 = g1c.right, r2 = g2c.right;
  const auto n1 = static_cast<Eigen::Index>(n[0]), n2 = static_cast<Eigen::Index>(n[1]), n3 = static_cast<Eigen::Index>(n[2]);
  const Matrix g1 = g1c.left_unfolding();                      // n1 x r1
  const Matrix g3t = g3c.right_unfolding().transpose();         // n3 x r2
  const NormalOperator minus_c = [&] {
    if (prob.c.is_diagonal()) return NormalOperator::diagonal(-prob.c.spectrum());
    return NormalOperator::symmetric(-prob.c.dense());
  }();

  FadiOps zops;
  auto z_task = std::async(std::launch::async, [&] {
    Matrix zj = prob.a.shifted_solve(s.q[0], g1);
    Matrix z(n1, static_cast<Eigen::Index>(l * r1));
    zops.flops += prob.a.solve_flops(r1);
    ++zops.solves_z;
    for (std::size_t j = 0;; ++j) {
      z.middleCols(static_cast<Eigen::Index>(j * r1), static_cast<Eigen::Index>(r1)) = zj;
      if (j + 1 == l) break;
      zj = zj + (s.q[j + 1] - s.p[j]) * prob.a.shifted_solve(s.q[j + 1], zj);
      zops.flops += prob.a.solve_flops(r1) + 2 * static_cast<std::uint64_t>(zj.size());
      ++zops.solves_z;
    }
    return z;
  });

  auto& ops = res.ops;
  auto track = [&](std::uint64_t now) { ops.peak_scalars = std::max(ops.peak_scalars, now); };
  auto array = [&](std::uint64_t size) { ops.max_array_scalars = std::max(ops.max_array_scalars, size); };

  // (I (x) G_1)(G_2)_2 as an (n1 n2) x r2 matrix.
  Matrix rhs_w(n1 * n2, static_cast<Eigen::Index>(r2));
  {
    const Matrix t = g1 * g2c.right_unfolding();  // n1 x (n2 r2)
    std::copy(t.data(), t.data() + t.size(), rhs_w.data());
    ops.flops += 2 * static_cast<std::uint64_t>(n1) * r1 * static_cast<std::uint64_t>(n2) * r2;
  }
  Matrix wj = kron_shifted_solve(prob.a, prob.b, s.q[0], rhs_w, &ops);
  rhs_w.resize(0, 0);
  Matrix yj = minus_c.shifted_solve(s.p[0], g3t);
  ops.flops += minus_c.solve_flops(r2);
  ++ops.solves_y;
  LowRankFactors acc = lowrank_recompress(wj, (s.q[0] - s.p[0]) * Matrix::Identity(static_cast<Eigen::Index>(r2), static_cast<Eigen::Index>(r2)), yj, eps, &ops);
  const auto big = static_cast<std::uint64_t>(n1 * n2);
  const auto zsize = static_cast<std::uint64_t>(n1) * l * r1;
  const auto small = static_cast<std::uint64_t>(n3) * 3 * r2;
  track(big * (2 * r2 + static_cast<std::uint64_t>(acc.W.cols())) + zsize);
  for (std::size_t j = 0; j + 1 < l; ++j) {
    Matrix wn = wj + kron_shifted_solve(prob.a, prob.b, s.q[j + 1], (s.q[j + 1] - s.p[j]) * wj, &ops);
    Matrix yn = yj + minus_c.shifted_solve(s.p[j + 1], (s.p[j + 1] - s.q[j]) * yj);
    ops.flops += minus_c.solve_flops(r2) + 4 * static_cast<std::uint64_t>(wj.size() + yj.size());
    ++ops.solves_y;
    const auto k = static_cast<std::uint64_t>(acc.W.cols());
    track(big * (k + 3 * r2) + zsize + small + static_cast<std::uint64_t>(acc.Y.size()));
    array(big * std::max<std::uint64_t>(k, r2));
    acc = detail::append_recompress(acc, wn, yn, s.q[j + 1] - s.p[j + 1], eps, &ops, [&](std::uint64_t extra) { track(big * (k + 2 * r2) + extra + zsize + small); });
    wj = std::move(wn);
    yj = std::move(yn);
  }
  res.s2 = acc.rank();
  if (res.s2 >= static_cast<std::size_t>(n3)) res.warnings.push_back("recompression rank reached n_3");

  const Matrix z = z_task.get();
  ops.flops += zops.flops;
  ops.solves_z = zops.solves_z;
  track(static_cast<std::uint64_t>(acc.W.size() + acc.Y.size() + z.size()));
  array(static_cast<std::uint64_t>(std::max(acc.W.size(), z.size())));
  array(big * r2);
  auto cp = cpqr_truncated(z, Truncation::relative(eps));
  ops.flops += 4 * static_cast<std::uint64_t>(z.rows()) * static_cast<std::uint64_t>(z.cols()) * static_cast<std::uint64_t>(z.cols());
  Matrix u1;
  if (cp.rank == 0) {
    u1 = Matrix::Zero(n1, 1);
    u1(0, 0) = 1.0;
  } else {
    u1 = cp.Q.leftCols(static_cast<Eigen::Index>(cp.rank));
  }
  res.s1 = static_cast<std::size_t>(u1.cols());
  const auto s2 = static_cast<Eigen::Index>(res.s2);
  const ConstMatrixMap wshaped(acc.W.data(), n1, n2 * s2);
  const Matrix t = u1.transpose() * wshaped;
  ops.flops += 2 * static_cast<std::uint64_t>(n1) * static_cast<std::uint64_t>(n2 * s2) * res.s1;
  const Matrix h3 = acc.D * acc.Y.transpose();
  std::vector<TTCore> cores;
  cores.emplace_back(1, n[0], res.s1, u1);
  cores.emplace_back(res.s1, n[1], res.s2, t);
  cores.emplace_back(res.s2, n[2], 1, h3);
  res.tt = TTTensor(std::move(cores));
  return res;
}

/// X(i,j,k) = F(i,j,k) / (a_i + b_j + c_k) for diagonal operators.
inline DenseTensor direct_diag_solve(const Vector& a, const Vector& b, const Vector& c, const DenseTensor& f) {
  const auto& n = f.shape().dims();
  if (f.order() != 3 || n[0] != static_cast<std::size_t>(a.size()) || n[1] != static_cast<std::size_t>(b.size()) ||
      n[2] != static_cast<std::size_t>(c.size()))
    throw std::invalid_argument("spectra do not match the right-hand side");
  DenseTensor x(f.shape());
  std::size_t t = 0;
  for (Eigen::Index k = 0; k < c.size(); ++k)
    for (Eigen::Index j = 0; j < b.size(); ++j)
      for (Eigen::Index i = 0; i < a.size(); ++i, ++t) {
        const double g = a(i) + b(j) + c(k);
        if (g == 0.0) throw std::domain_error("zero denominator in the direct solve");
        x.values()[t] = f.values()[t] / g;
      }
  return x;
}

inline DenseTensor direct_diag_solve(const Sylvester3DProblem& p, const DenseTensor& f) {
  if (!p.a.is_diagonal() || !p.b.is_diagonal() || !p.c.is_diagonal()) throw std::invalid_argument("direct solve needs diagonal operators");
  return direct_diag_solve(p.a.spectrum(), p.b.spectrum(), p.c.spectrum(), f);
}

/// X x_1 A + X x_2 B + X x_3 C.
inline DenseTensor apply_sylvester(const Sylvester3DProblem& p, const DenseTensor& x) {
  DenseTensor out = mode_product(x, p.a.dense(), 1);
  const auto xb = mode_product(x, p.b.dense(), 2);
  const auto xc = mode_product(x, p.c.dense(), 3);
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += xb.values()[i] + xc.values()[i];
  return out;
}

/// ||X x_1 A + X x_2 B + X x_3 C - F|| / ||F||, materializing both.
inline double sylvester_residual(const Sylvester3DProblem& p, const TTTensor& x) {
  const auto f = tt_full(p.f);
  const auto ax = apply_sylvester(p, tt_full(x));
  const double nf = frobenius_norm(f);
  return nf == 0.0 ? frobenius_norm(ax) : frobenius_norm(ax - f) / nf;
}

}  // namespace ptt
