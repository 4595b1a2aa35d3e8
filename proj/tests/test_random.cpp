#include "ptt/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace ptt;

TEST(SeededStream, ReproducibleAndIndexAddressed) {
  const SeededStream a{42, 7}, b{42, 7}, c{43, 7}, d{42, 8};
  for (std::uint64_t i = 0; i < 100; ++i) {
    EXPECT_EQ(a.bits(i), b.bits(i));
    EXPECT_NE(a.bits(i), c.bits(i));
    EXPECT_NE(a.bits(i), d.bits(i));
  }
}

TEST(SeededStream, UniformRanges) {
  const SeededStream s{1, 2};
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const double u = s.uniform(i);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const double v = s.uniform_open(i);
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(SeededStream, GaussianMoments) {
  const SeededStream s{5, 0};
  const int n = 200000;
  double m1 = 0, m2 = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const double g = s.gaussian(static_cast<std::uint64_t>(i));
    m1 += g;
    m2 += g * g;
    m4 += g * g * g * g;
  }
  m1 /= n;
  m2 /= n;
  m4 /= n;
  EXPECT_NEAR(m1, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(m2, 1.0, 0.02);
  EXPECT_NEAR(m4, 3.0, 0.1);
}

TEST(SeededStream, ChildrenAreDistinct) {
  const SeededStream s{9, 3};
  std::set<std::uint64_t> first;
  for (std::uint64_t id = 0; id < 64; ++id) first.insert(s.child(id).bits(0));
  EXPECT_EQ(first.size(), 64u);
  EXPECT_NE(hash_tag("column"), hash_tag("row"));
}

TEST(GaussianMatrix, RowsAreSubmatrix) {
  const SeededStream s{11, 4};
  const Matrix full = gaussian_matrix(13, 5, s);
  const Matrix part = gaussian_rows(13, 5, 4, 9, s);
  EXPECT_EQ(part, full.middleRows(4, 5));
  EXPECT_EQ(full(2, 3), s.gaussian(2 + 13 * 3));
}
