#include "ptt/algorithms.hpp"
#include "ptt/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ptt;

namespace {

const std::vector<Method> sketch_methods{Method::pstt, Method::pstt_onepass, Method::pstt2, Method::pstt2_onepass,
                                         Method::sstt};

bool same_bits(const TTTensor& a, const TTTensor& b) {
  if (a.core_sizes() != b.core_sizes() || a.dims() != b.dims()) return false;
  for (std::size_t k = 0; k < a.order(); ++k)
    if (a.cores()[k].values != b.cores()[k].values) return false;
  return true;
}

DecomposeConfig config(std::vector<std::size_t> ranks, std::uint64_t seed, std::size_t workers = 1) {
  DecomposeConfig cfg;
  cfg.ranks = std::move(ranks);
  cfg.seed = seed;
  cfg.workers = workers;
  return cfg;
}

// Squared residual of column span nesting: rows of Q_k index modes 1..k.
double column_nesting(const Matrix& qk, const Matrix& qk1) {
  const auto rows = qk.rows();
  const Matrix shaped = reshape(qk1, static_cast<std::size_t>(rows), static_cast<std::size_t>(qk1.size() / rows));
  return projector_residual(qk, shaped);
}

// Rows of P_u index modes u+1..d with mode u+1 fastest; each column of P_u,
// laid out as n_{u+1} x rest, has its rows in the span of P_{u+1}.
double row_nesting(const Matrix& pu, const Matrix& pu1, std::size_t n_next) {
  double acc = 0.0;
  for (Eigen::Index c = 0; c < pu.cols(); ++c) {
    const Matrix m = reshape(pu.col(c), n_next, static_cast<std::size_t>(pu.rows()) / n_next);
    const double r = projector_residual(pu1, m.transpose());
    acc += r * r;
  }
  return std::sqrt(acc);
}

double max_nesting(const DecomposeResult& res, const std::vector<std::size_t>& dims) {
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < res.column_bases.size(); ++i)
    worst = std::max(worst, column_nesting(res.column_bases[i], res.column_bases[i + 1]));
  for (std::size_t i = 0; i + 1 < res.row_bases.size(); ++i)
    worst = std::max(worst, row_nesting(res.row_bases[i], res.row_bases[i + 1], dims[res.row_base_unfoldings[i]]));
  return worst;
}

}  // namespace

TEST(Method, NamesRoundTrip) {
  for (auto m : {Method::ttsvd, Method::parallel_ttsvd, Method::pstt, Method::pstt_onepass, Method::pstt2,
                 Method::pstt2_onepass, Method::sstt})
    EXPECT_EQ(parse_method(to_string(m)), m);
  EXPECT_THROW(parse_method("tt-cross"), std::invalid_argument);
  EXPECT_TRUE(is_one_pass(Method::pstt_onepass));
  EXPECT_FALSE(is_one_pass(Method::sstt));
}

TEST(CheckedRanks, ValidatesAndClips) {
  std::vector<std::string> warnings;
  EXPECT_THROW(checked_ranks(Shape{4, 4, 4}, {2}, warnings), std::invalid_argument);
  EXPECT_THROW(checked_ranks(Shape{4, 4, 4}, {2, 0}, warnings), std::invalid_argument);
  const auto r = checked_ranks(Shape{3, 5, 2}, {7, 9}, warnings);
  EXPECT_EQ(r, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(warnings.size(), 2u);
}

TEST(Algorithms, ExactRankRecoveryEveryMethod) {
  const std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> cases{
      {{7, 8, 9}, {3, 4}}, {{6, 5, 7, 6}, {2, 4, 3}}, {{5, 4, 6, 4, 5}, {3, 2, 4, 2}}};
  std::uint64_t seed = 1;
  for (const auto& [dims, ranks] : cases) {
    const auto truth = gen_random_tt(dims, ranks, seed);
    const auto x = tt_full(truth);
    for (auto m : sketch_methods) {
      const auto oracle = tt_oracle(truth);
      const auto res = decompose(m, oracle, config(ranks, seed + 10));
      EXPECT_LE(tt_error_full(x, res.tt).value, 1e-9) << to_string(m) << " d=" << dims.size();
    }
    ++seed;
  }
}

TEST(Algorithms, SvdBaselinesOnExactRank) {
  const auto truth = gen_random_tt({6, 7, 5, 6}, {3, 3, 2}, 4);
  const auto x = tt_full(truth);
  for (auto m : {Method::ttsvd, Method::parallel_ttsvd}) {
    const auto res = decompose(m, tt_oracle(truth), config({3, 3, 2}, 0));
    EXPECT_LT(tt_error_full(x, res.tt).value, 1e-12);
    EXPECT_EQ(res.tt.core_sizes(), (std::vector<std::size_t>{1, 3, 3, 2, 1}));
    EXPECT_EQ(res.costs.eval_count, x.size());
  }
  DecomposeConfig tol;
  tol.tol = 1e-6;
  const auto h = gen_hilbert({12, 12, 12}).materialize();
  EXPECT_LE(tt_error_full(h, parallel_ttsvd(h, tol).tt).value, 1e-6);
}

TEST(Algorithms, EvalCountsArePassesTimesEntries) {
  const std::vector<std::size_t> dims{7, 8, 9, 6};
  const auto truth = gen_random_tt(dims, {3, 4, 2}, 2);
  const std::uint64_t total = 7 * 8 * 9 * 6;
  for (auto m : sketch_methods) {
    const auto oracle = tt_oracle(truth);
    const auto res = decompose(m, oracle, config({3, 4, 2}, 3, 2));
    const std::uint64_t passes = is_one_pass(m) ? 1 : 2;
    EXPECT_EQ(res.costs.eval_count, passes * total) << to_string(m);
    EXPECT_EQ(oracle.eval_count(), passes * total) << to_string(m);
    EXPECT_EQ(res.costs.passes, passes) << to_string(m);
  }
}

TEST(Algorithms, BitwiseIdenticalAcrossWorkerCounts) {
  const std::vector<std::size_t> dims{10, 9, 11};
  for (auto m : sketch_methods) {
    auto cfg = config({5, 5}, 77, 1);
    cfg.partition = {3, 2, 4};
    const auto base = decompose(m, gen_hilbert(dims), cfg);
    for (std::size_t c : {2u, 3u, 8u}) {
      cfg.workers = c;
      EXPECT_TRUE(same_bits(base.tt, decompose(m, gen_hilbert(dims), cfg).tt)) << to_string(m) << " C=" << c;
    }
  }
}

TEST(Algorithms, DefaultGridIsIndependentOfWorkerCount) {
  const std::vector<std::size_t> dims{20, 18, 22};
  for (auto m : sketch_methods) {
    auto cfg = config({5, 5}, 5, 1);
    cfg.target_block_scalars = 500;
    const auto base = decompose(m, gen_hilbert(dims), cfg);
    for (std::size_t c : {4u, 16u}) {
      cfg.workers = c;
      const auto other = decompose(m, gen_hilbert(dims), cfg);
      EXPECT_EQ(other.costs.partition, base.costs.partition);
      EXPECT_TRUE(same_bits(base.tt, other.tt)) << to_string(m) << " C=" << c;
    }
  }
}

TEST(Algorithms, SeedSelectsTheSketch) {
  const std::vector<std::size_t> dims{10, 9, 11};
  for (auto m : sketch_methods) {
    const auto a = decompose(m, gen_hilbert(dims), config({4, 4}, 1));
    const auto b = decompose(m, gen_hilbert(dims), config({4, 4}, 1));
    const auto c = decompose(m, gen_hilbert(dims), config({4, 4}, 2));
    EXPECT_TRUE(same_bits(a.tt, b.tt)) << to_string(m);
    EXPECT_FALSE(same_bits(a.tt, c.tt)) << to_string(m);
  }
}

TEST(Algorithms, SubspaceNesting) {
  const std::vector<std::size_t> dims{5, 6, 4, 5, 4};
  const std::vector<std::size_t> ranks{3, 4, 4, 2};
  const auto truth = gen_random_tt(dims, ranks, 8);
  for (auto m : sketch_methods) {
    auto cfg = config(ranks, 9, 2);
    cfg.collect_bases = true;
    const auto res = decompose(m, tt_oracle(truth), cfg);
    EXPECT_EQ(res.column_bases.size() + res.row_bases.size(), dims.size() - 1) << to_string(m);
    EXPECT_LE(max_nesting(res, dims), 1e-8) << to_string(m);
  }
  auto cfg = config(ranks, 0);
  cfg.collect_bases = true;
  const auto res = parallel_ttsvd(tt_full(truth), cfg);
  EXPECT_LE(max_nesting(res, dims), 1e-8);
}

TEST(Algorithms, ErrorSplitsOverProjections) {
  const std::vector<std::size_t> dims{8, 7, 6, 7};
  const auto x = gen_hilbert(dims).materialize();
  for (auto m : {Method::pstt, Method::pstt2, Method::sstt}) {
    auto cfg = config({3, 3, 3}, 5, 2);
    cfg.collect_bases = true;
    const auto res = decompose(m, as_oracle(x), cfg);
    double bound = 0.0;
    for (std::size_t i = 0; i < res.column_bases.size(); ++i) {
      const double r = projector_residual(res.column_bases[i], unfold(x, res.column_base_unfoldings[i]));
      bound += r * r;
    }
    for (std::size_t i = 0; i < res.row_bases.size(); ++i) {
      const double r = projector_residual(res.row_bases[i], unfold(x, res.row_base_unfoldings[i]).transpose());
      bound += r * r;
    }
    const double err = tt_error_full(x, res.tt).value * frobenius_norm(x);
    EXPECT_LE(err * err, bound + 1e-12) << to_string(m);
  }
}

TEST(Algorithms, MiddleIndexChoices) {
  const std::vector<std::size_t> dims{5, 6, 4, 5};
  const auto truth = gen_random_tt(dims, {2, 3, 3}, 12);
  const auto x = tt_full(truth);
  for (std::size_t mid = 1; mid <= 4; ++mid)
    for (auto m : {Method::pstt2, Method::pstt2_onepass}) {
      auto cfg = config({2, 3, 3}, 4);
      cfg.middle = mid;
      EXPECT_LE(tt_error_full(x, decompose(m, tt_oracle(truth), cfg).tt).value, 1e-9) << to_string(m) << " mid=" << mid;
    }
  auto cfg = config({2, 3, 3}, 4);
  cfg.middle = 5;
  EXPECT_THROW(pstt2(tt_oracle(truth), cfg), std::invalid_argument);
  EXPECT_EQ(default_middle(4), 2u);
  EXPECT_EQ(default_middle(5), 3u);
}

TEST(Algorithms, GaussianDrmKind) {
  const auto truth = gen_random_tt({6, 5, 7}, {3, 2}, 31);
  const auto x = tt_full(truth);
  for (auto m : sketch_methods) {
    auto cfg = config({3, 2}, 6);
    cfg.drm = DrmKind::gaussian;
    EXPECT_LE(tt_error_full(x, decompose(m, tt_oracle(truth), cfg).tt).value, 1e-9) << to_string(m);
  }
}

TEST(Algorithms, RejectsBadConfigurations) {
  const auto oracle = gen_hilbert({8, 8, 8});
  auto cfg = config({3, 3}, 0);
  cfg.oversample = 1;
  for (auto m : sketch_methods) EXPECT_THROW(decompose(m, oracle, cfg), std::invalid_argument);
  cfg.oversample = 5;
  cfg.partition = {1, 1, 1};
  cfg.max_block_scalars = 100;
  EXPECT_THROW(pstt(oracle, cfg), std::invalid_argument);
  cfg.partition = {2, 2};
  cfg.max_block_scalars = std::size_t{1} << 24;
  EXPECT_THROW(pstt(oracle, cfg), std::invalid_argument);
  EXPECT_THROW(pstt(gen_hilbert({8}), config({}, 0)), std::invalid_argument);
}

TEST(Algorithms, OversizedRanksAreClippedWithWarning) {
  const auto truth = gen_random_tt({3, 4, 3}, {3, 3}, 2);
  const auto res = pstt(tt_oracle(truth), config({5, 5}, 1));
  EXPECT_FALSE(res.warnings.empty());
  EXPECT_EQ(res.tt.core_sizes(), (std::vector<std::size_t>{1, 3, 3, 1}));
  EXPECT_LT(tt_error_full(tt_full(truth), res.tt).value, 1e-10);
}

TEST(Algorithms, HilbertAccuracy) {
  const std::vector<std::size_t> dims{30, 30, 30};
  const auto x = gen_hilbert(dims).materialize();
  const auto reference = tt_error_full(x, ttsvd(x, std::vector<std::size_t>{12, 12})).value;
  ASSERT_LT(reference, 1e-10);
  for (auto m : sketch_methods) {
    const auto res = decompose(m, gen_hilbert(dims), config({12, 12}, 3, 2));
    EXPECT_LT(tt_error_full(x, res.tt).value, 1e-9) << to_string(m);
  }
}

TEST(Algorithms, OnePassTwoSidedOnFiveWayHilbert) {
  const std::vector<std::size_t> dims{20, 20, 20, 20, 20};
  const auto x = gen_hilbert(dims).materialize();
  const auto ref = ttsvd(x, 1e-10);
  const auto sizes = ref.core_sizes();
  const std::vector<std::size_t> ranks(sizes.begin() + 1, sizes.end() - 1);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto res = pstt2_onepass(gen_hilbert(dims), config(ranks, seed, 2));
    EXPECT_LE(tt_error_full(x, res.tt).value, 1e-8) << "seed " << seed;
  }
}

TEST(Algorithms, CostsAreReported) {
  const auto truth = gen_random_tt({8, 8, 8}, {3, 3}, 1);
  for (auto m : sketch_methods) {
    auto cfg = config({3, 3}, 1, 4);
    cfg.partition = {4, 1, 4};
    const auto res = decompose(m, tt_oracle(truth), cfg);
    EXPECT_EQ(res.costs.partition, (std::vector<std::size_t>{4, 1, 4}));
    EXPECT_EQ(res.costs.resident_peak.size(), 4u);
    EXPECT_GT(RunCosts::max_of(res.costs.resident_peak), 0u);
    EXPECT_GE(RunCosts::max_of(res.costs.total_peak), RunCosts::max_of(res.costs.resident_peak));
    EXPECT_GT(res.costs.messages, 0u);
    EXPECT_GT(res.costs.message_volume, res.costs.messages);
  }
}
