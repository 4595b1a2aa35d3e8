#include "ptt/partition.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace ptt;

TEST(Chunks, NearlyEqualWithExtrasFirst) {
  EXPECT_EQ(chunk_begin(10, 3, 0), 0u);
  EXPECT_EQ(chunk_begin(10, 3, 1), 4u);
  EXPECT_EQ(chunk_begin(10, 3, 2), 7u);
  EXPECT_EQ(chunk_begin(10, 3, 3), 10u);
  EXPECT_EQ(chunk_begin(9, 3, 2), 6u);
}

TEST(Partition, RejectsBadCounts) {
  const Shape s{4, 5};
  EXPECT_THROW(Partition(s, {1}), std::invalid_argument);
  EXPECT_THROW(Partition(s, {0, 1}), std::invalid_argument);
  EXPECT_THROW(Partition(s, {5, 1}), std::invalid_argument);
}

TEST(Partition, SubTensorsTileTheTensor) {
  const Shape s{7, 3, 5};
  const Partition p(s, {3, 1, 2});
  EXPECT_EQ(p.total(), 6u);
  EXPECT_EQ(p.cells(0, 2), 3u);
  EXPECT_EQ(p.max_block_size(), 3u * 3u * 3u);
  std::vector<int> hits(s.size(), 0);
  for (std::size_t j = 1; j <= p.total(); ++j) {
    const auto ref = subtensor(p, j);
    EXPECT_EQ(subtensor(p, ref.grid).linear, j);
    std::vector<std::size_t> idx(3);
    for (idx[2] = ref.begin[2]; idx[2] < ref.end[2]; ++idx[2])
      for (idx[1] = ref.begin[1]; idx[1] < ref.end[1]; ++idx[1])
        for (idx[0] = ref.begin[0]; idx[0] < ref.end[0]; ++idx[0]) ++hits[idx[0] + 7 * (idx[1] + 3 * idx[2])];
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Partition, LinearIndexIsColumnMajorOverGrid) {
  const Partition p(Shape{4, 4, 4}, {2, 2, 2});
  const auto ref = subtensor(p, std::vector<std::size_t>{2, 1, 2});
  EXPECT_EQ(ref.linear, 1u + 1u + 4u);
  EXPECT_EQ(ref.begin, (std::vector<std::size_t>{2, 0, 2}));
  EXPECT_EQ(grid_cell(p, ref, 0, 2), 1u);
  EXPECT_EQ(grid_cell(p, ref, 2, 3), 1u);
  EXPECT_THROW(subtensor(p, 9), std::out_of_range);
  EXPECT_THROW(subtensor(p, std::vector<std::size_t>{3, 1, 1}), std::out_of_range);
}

TEST(Partition, CellBoxMatchesSubtensors) {
  const Partition p(Shape{5, 6, 7}, {2, 3, 2});
  std::vector<std::size_t> b, e;
  for (std::size_t j = 1; j <= p.total(); ++j) {
    const auto ref = subtensor(p, j);
    cell_box(p, grid_cell(p, ref, 1, 3), 1, 3, b, e);
    EXPECT_EQ(b, (std::vector<std::size_t>{ref.begin[1], ref.begin[2]}));
    EXPECT_EQ(e, (std::vector<std::size_t>{ref.end[1], ref.end[2]}));
  }
}

TEST(Partition, ExtractCountsEvaluations) {
  const Shape s{4, 4};
  TensorOracle o(s, [](std::span<const std::size_t> i) { return static_cast<double>(i[0] * 10 + i[1]); });
  const Partition p(s, {2, 2});
  const auto block = extract_subtensor(o, subtensor(p, 4));
  EXPECT_EQ(o.eval_count(), 4u);
  EXPECT_EQ(block({1, 1}), 33.0);
  EXPECT_EQ(block({2, 2}), 44.0);
}

TEST(OwnerMap, ContiguousAndBalanced) {
  const auto o = owner_map(10, 4);
  EXPECT_EQ(o, (std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 2, 2, 3, 3}));
  EXPECT_EQ(owner_map(2, 4), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(owner_map(3, 0), std::invalid_argument);
}

TEST(DefaultPartition, MeetsTargetsAndSplitsOuterModesFirst) {
  const Shape s{60, 60, 60};
  const auto counts = default_partition(s, 4, 1 << 16);
  EXPECT_LE(Partition(s, counts).max_block_size(), std::size_t{1} << 16);
  EXPECT_GE(std::min(counts[0], counts[2]), 8u);
  EXPECT_EQ(counts[1], 1u);
  const auto tiny = default_partition(Shape{3, 3}, 8, 1 << 16);
  EXPECT_EQ(tiny, (std::vector<std::size_t>{3, 3}));
  const auto one = default_partition(Shape{10, 10, 10}, 1, 1 << 20);
  EXPECT_GE(std::min(one[0], one[2]), 2u);
}
