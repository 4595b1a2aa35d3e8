#include "ptt/linalg.hpp"
#include "ptt/random.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ptt;

namespace {

Matrix with_spectrum(std::size_t m, std::size_t n, const Vector& sigma, std::uint64_t seed) {
  const auto k = static_cast<Eigen::Index>(sigma.size());
  Eigen::HouseholderQR<Matrix> qu(gaussian_matrix(m, static_cast<std::size_t>(k), {seed, 1}));
  Eigen::HouseholderQR<Matrix> qv(gaussian_matrix(n, static_cast<std::size_t>(k), {seed, 2}));
  const Matrix u = qu.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(m), k);
  const Matrix v = qv.householderQ() * Matrix::Identity(static_cast<Eigen::Index>(n), k);
  return u * sigma.asDiagonal() * v.transpose();
}

Vector geometric(std::size_t k, double ratio) {
  Vector s(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::pow(ratio, static_cast<double>(i));
  return s;
}

}  // namespace

TEST(RankForTail, SmallestRankMeetingTail) {
  Vector s(4);
  s << 4, 3, 2, 1;
  EXPECT_EQ(rank_for_tail(s, 0.0), 4u);
  EXPECT_EQ(rank_for_tail(s, 1.0), 3u);
  EXPECT_EQ(rank_for_tail(s, std::sqrt(5.0)), 2u);
  EXPECT_EQ(rank_for_tail(s, std::sqrt(4.99)), 3u);
  EXPECT_EQ(rank_for_tail(s, 100.0), 0u);
}

TEST(TruncatedSVD, TailBoundHolds) {
  const auto sigma = geometric(10, 0.3);
  const Matrix a = with_spectrum(20, 15, sigma, 3);
  for (double tol : {1e-1, 1e-3, 1e-6}) {
    const auto svd = truncated_svd(a, tol);
    EXPECT_LE((a - svd.reconstruct()).norm(), tol * a.norm() * (1 + 1e-10));
    if (svd.rank > 1) {
      const auto fewer = truncated_svd(a, Truncation::fixed(svd.rank - 1));
      EXPECT_GT((a - fewer.reconstruct()).norm(), tol * a.norm());
    }
  }
  const auto fixed = truncated_svd(a, std::size_t{4});
  EXPECT_EQ(fixed.rank, 4u);
  double tail = 0;
  for (Eigen::Index i = 4; i < sigma.size(); ++i) tail += sigma(i) * sigma(i);
  EXPECT_NEAR((a - fixed.reconstruct()).norm(), std::sqrt(tail), 1e-12);
  for (Eigen::Index i = 0; i < sigma.size(); ++i) EXPECT_NEAR(fixed.singular_values(i), sigma(i), 1e-12);
}

TEST(NumericalRank, CountsRelativeToLeading) {
  Vector s(5);
  s << 1, 1e-3, 1e-8, 1e-12, 1e-15;
  const Matrix a = with_spectrum(12, 9, s, 4);
  EXPECT_EQ(numerical_rank(a, 1e-10), 3u);
  EXPECT_EQ(numerical_rank(a, 1e-5), 2u);
}

TEST(CPQR, FactorsPermutedMatrix) {
  const Matrix a = gaussian_matrix(9, 6, {7, 0});
  const auto f = cpqr_truncated(a, std::size_t{6});
  ASSERT_EQ(f.rank, 6u);
  Matrix ap(9, 6);
  for (Eigen::Index j = 0; j < 6; ++j) ap.col(j) = a.col(f.perm(j));
  EXPECT_LT((ap - f.Q * f.R).norm(), 1e-12 * a.norm());
  EXPECT_LT((f.Q.transpose() * f.Q - Matrix::Identity(6, 6)).norm(), 1e-13);
  for (Eigen::Index k = 1; k < f.r_diagonal.size(); ++k) EXPECT_LE(f.r_diagonal(k), f.r_diagonal(k - 1) * (1 + 1e-12));
}

TEST(CPQR, RelativeToleranceFindsRank) {
  Vector s(6);
  s << 1, 0.5, 0.2, 1e-13, 1e-14, 1e-15;
  const Matrix a = with_spectrum(15, 10, s, 8);
  const auto f = cpqr_truncated(a, Truncation::relative(1e-9));
  EXPECT_EQ(f.rank, 3u);
  EXPECT_LT(projector_residual(f.Q, a), 1e-11);
  EXPECT_THROW(cpqr_truncated(a, Truncation::absolute(1.0)), std::invalid_argument);
  EXPECT_THROW(cpqr_truncated(a, std::size_t{0}), std::invalid_argument);
}

TEST(TreeQR, MatchesStackedQR) {
  std::vector<Matrix> blocks;
  Matrix stacked(0, 4);
  for (int b = 0; b < 5; ++b) {
    blocks.push_back(gaussian_matrix(3 + static_cast<std::size_t>(b), 4, {12, static_cast<std::uint64_t>(b)}));
    Matrix next(stacked.rows() + blocks.back().rows(), 4);
    next << stacked, blocks.back();
    stacked = next;
  }
  const auto tq = tree_qr(blocks);
  Matrix q(stacked.rows(), 4);
  Eigen::Index row = 0;
  for (const auto& qb : tq.q_blocks) {
    q.middleRows(row, qb.rows()) = qb;
    row += qb.rows();
  }
  EXPECT_LT((q * tq.R - stacked).norm(), 1e-12 * stacked.norm());
  EXPECT_LT((q.transpose() * q - Matrix::Identity(4, 4)).norm(), 1e-13);
  const Matrix rtr = tq.R.transpose() * tq.R;
  const Matrix ata = stacked.transpose() * stacked;
  EXPECT_LT((rtr - ata).norm(), 1e-11 * ata.norm());
  EXPECT_THROW(tree_qr({}), std::invalid_argument);
}

TEST(PseudoInverse, SolvesLeastSquares) {
  const Matrix a = gaussian_matrix(10, 4, {3, 3});
  const Matrix b = gaussian_matrix(10, 2, {3, 4});
  const auto ls = pseudo_inverse_solve(a, b);
  const Matrix normal = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  EXPECT_LT((ls.X - normal).norm(), 1e-11);
  EXPECT_EQ(ls.rank, 4u);
  EXPECT_GT(ls.condition, 1.0);
}

TEST(PseudoInverse, RankDeficientGivesMinimumNorm) {
  Matrix a = Matrix::Zero(4, 3);
  a(0, 0) = 2.0;
  a(1, 1) = 1.0;
  Matrix b(4, 1);
  b << 4, 3, 5, 7;
  const auto ls = pseudo_inverse_solve(a, b);
  EXPECT_EQ(ls.rank, 2u);
  EXPECT_NEAR(ls.X(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(ls.X(1, 0), 3.0, 1e-14);
  EXPECT_NEAR(ls.X(2, 0), 0.0, 1e-14);
}

TEST(PrincipalAngles, IdenticalAndOrthogonalSpans) {
  const auto [q, r] = thin_qr(gaussian_matrix(8, 3, {1, 1}));
  Matrix rot = thin_qr(gaussian_matrix(3, 3, {1, 2})).first;
  EXPECT_LT(max_principal_angle_sin(q, q * rot), 1e-13);
  Matrix e1 = Matrix::Zero(8, 1), e2 = Matrix::Zero(8, 1);
  e1(0, 0) = 1;
  e2(1, 0) = 1;
  EXPECT_NEAR(max_principal_angle_sin(e1, e2), 1.0, 1e-15);
}
