#include "ptt/generators.hpp"
#include "ptt/sketch.hpp"

#include <gtest/gtest.h>

#include <cstring>

using namespace ptt;

namespace {

// Row (l_0, ..., l_{m-1}) of the Khatri-Rao map, built one entry at a time.
Matrix kr_by_entries(const std::vector<Matrix>& factors) {
  std::size_t rows = 1;
  for (const auto& f : factors) rows *= static_cast<std::size_t>(f.rows());
  const auto w = factors[0].cols();
  Matrix out(static_cast<Eigen::Index>(rows), w);
  for (std::size_t r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < w; ++c) {
      double v = 1.0;
      std::size_t rest = r;
      for (const auto& f : factors) {
        const auto n = static_cast<std::size_t>(f.rows());
        v *= f(static_cast<Eigen::Index>(rest % n), c);
        rest /= n;
      }
      out(static_cast<Eigen::Index>(r), c) = v;
    }
  }
  return out;
}

bool bitwise_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace

TEST(KhatriRao, MatchesEntrywiseProduct) {
  const std::vector<Matrix> f{gaussian_matrix(3, 4, {1, 1}), gaussian_matrix(2, 4, {1, 2}), gaussian_matrix(5, 4, {1, 3})};
  EXPECT_LT((khatri_rao(f) - kr_by_entries(f)).norm(), 1e-14);
  EXPECT_THROW(khatri_rao({}), std::invalid_argument);
}

TEST(DRM, LocalRowsAreSubmatrixOfFull) {
  const std::vector<std::size_t> dims{4, 5, 3, 6};
  for (auto kind : {DrmKind::khatri_rao, DrmKind::gaussian}) {
    const auto drm = make_drm(kind, dims, 1, 3, 7, 99, "test", 2);
    EXPECT_EQ(drm.rows(), 15u);
    const Matrix full = drm.full();
    std::vector<std::size_t> b{1, 1}, e{4, 3};
    const Matrix loc = drm.local(b, e);
    ASSERT_EQ(loc.rows(), 6);
    std::size_t r = 0;
    for (std::size_t j = 1; j < 3; ++j)
      for (std::size_t i = 1; i < 4; ++i, ++r)
        EXPECT_EQ(loc.row(static_cast<Eigen::Index>(r)), full.row(static_cast<Eigen::Index>(i + 5 * j)));
    if (kind == DrmKind::khatri_rao) {
      EXPECT_EQ(drm.stored_scalars(), (5u + 3u) * 7u);
      EXPECT_LT((full - kr_by_entries(drm.factors)).norm(), 1e-14);
    }
  }
  const auto a = make_drm(DrmKind::khatri_rao, dims, 0, 2, 3, 1, "column", 1);
  const auto b = make_drm(DrmKind::khatri_rao, dims, 0, 2, 3, 1, "column", 2);
  EXPECT_NE(a.factors[0](0, 0), b.factors[0](0, 0));
}

TEST(ApplyDRM, BothPathsMatchDenseProduct) {
  const std::vector<std::size_t> ld{3, 4, 5};
  DenseTensor block{Shape(ld)};
  for (std::size_t i = 0; i < block.size(); ++i) block.values()[i] = std::sin(0.7 * static_cast<double>(i) + 0.1);
  const std::vector<std::size_t> dims{6, 8, 9};
  for (std::size_t width : {2u, 10u}) {
    const auto col = make_drm(DrmKind::khatri_rao, dims, 1, 3, width, 4, "c", 1);
    std::vector<std::size_t> cb{2, 3}, ce{6, 8};
    const Matrix om = kr_by_entries({col.factors[0].middleRows(2, 4), col.factors[1].middleRows(3, 5)});
    const Matrix y = ConstMatrixMap(block.data(), 3, 20);
    EXPECT_LT((apply_kr_drm(block.data(), ld, 1, true, col, cb, ce) - y * om).norm(), 1e-12);

    const auto row = make_drm(DrmKind::khatri_rao, dims, 0, 2, width, 4, "r", 2);
    std::vector<std::size_t> rb{1, 0}, re{4, 4};
    const Matrix omr = kr_by_entries({row.factors[0].middleRows(1, 3), row.factors[1].middleRows(0, 4)});
    const Matrix y2 = ConstMatrixMap(block.data(), 12, 5);
    EXPECT_LT((apply_kr_drm(block.data(), ld, 2, false, row, rb, re) - y2.transpose() * omr).norm(), 1e-12);
  }
  const auto bad = make_drm(DrmKind::khatri_rao, dims, 1, 3, 2, 4, "c", 1);
  std::vector<std::size_t> bb{0, 0}, be{2, 2};
  EXPECT_THROW(apply_kr_drm(block.data(), ld, 1, true, bad, bb, be), std::invalid_argument);
}

TEST(StreamPass, SketchesMatchDenseUnfoldings) {
  const std::vector<std::size_t> dims{6, 5, 7, 4};
  const auto oracle = gen_hilbert(dims);
  const auto x = oracle.materialize();
  const Partition part(Shape(dims), {2, 2, 3, 2});
  std::vector<SketchSpec> specs;
  specs.push_back({2, true, make_drm(DrmKind::khatri_rao, dims, 2, 4, 5, 3, "column", 2)});
  specs.push_back({2, false, make_drm(DrmKind::khatri_rao, dims, 0, 2, 4, 3, "row", 2)});
  specs.push_back({1, true, make_drm(DrmKind::gaussian, dims, 1, 4, 3, 3, "column", 1)});
  WorkerPool pool(3);
  CostCounters costs(3);
  const auto fresh = gen_hilbert(dims);
  const auto out = parallel_multi_sketch(fresh, part, specs, pool, costs);
  EXPECT_EQ(fresh.eval_count(), x.size());
  const Matrix col = assemble_rows(out[0], part, 0, 2);
  EXPECT_LT((col - unfold(x, 2) * specs[0].drm.full()).norm(), 1e-12 * col.norm());
  const Matrix row = assemble_rows(out[1], part, 2, 4);
  EXPECT_LT((row - unfold(x, 2).transpose() * specs[1].drm.full()).norm(), 1e-12 * row.norm());
  const Matrix c1 = assemble_rows(out[2], part, 0, 1);
  EXPECT_LT((c1 - unfold(x, 1) * specs[2].drm.full()).norm(), 1e-12 * c1.norm());
  EXPECT_EQ(out[0].count(), 4u);
  EXPECT_EQ(out[1].count(), 6u);
  EXPECT_GT(costs.messages(), 0u);
}

TEST(StreamPass, BitwiseIdenticalAcrossWorkerCounts) {
  const std::vector<std::size_t> dims{9, 8, 10};
  const Partition part(Shape(dims), {3, 2, 5});
  std::vector<SketchSpec> specs{{1, true, make_drm(DrmKind::khatri_rao, dims, 1, 3, 6, 11, "column", 1)}};
  std::vector<Matrix> results;
  for (std::size_t c : {1u, 2u, 5u, 8u}) {
    WorkerPool pool(c);
    CostCounters costs(c);
    const auto oracle = gen_hilbert(dims);
    results.push_back(assemble_rows(parallel_multi_sketch(oracle, part, specs, pool, costs)[0], part, 0, 1));
  }
  for (std::size_t i = 1; i < results.size(); ++i) EXPECT_TRUE(bitwise_equal(results[0], results[i]));
}

TEST(DistributedBasis, OrthonormalAndSpansSketch) {
  const std::vector<std::size_t> dims{8, 6, 7};
  const auto tt = gen_random_tt(dims, {3, 2}, 21);
  const auto oracle = tt_oracle(tt);
  const Partition part(Shape(dims), {4, 1, 2});
  std::vector<SketchSpec> specs{{1, true, make_drm(DrmKind::khatri_rao, dims, 1, 3, 5, 2, "column", 1)}};
  WorkerPool pool(2);
  CostCounters costs(2);
  const auto s = parallel_multi_sketch(oracle, part, specs, pool, costs);
  std::size_t achieved = 0;
  const auto q = distributed_basis(s[0], 3, pool, costs, &achieved);
  EXPECT_EQ(achieved, 3u);
  const Matrix qm = assemble_rows(q, part, 0, 1);
  EXPECT_LT((qm.transpose() * qm - Matrix::Identity(3, 3)).norm(), 1e-13);
  const auto x = tt_full(tt);
  EXPECT_LT(projector_residual(qm, unfold(x, 1)), 1e-12 * frobenius_norm(x));
  EXPECT_EQ(q.owner, s[0].owner);
}
