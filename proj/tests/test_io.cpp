#include "ptt/generators.hpp"
#include "ptt/io.hpp"
#include "ptt/report.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace ptt;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("ptt_test_" + name)).string();
}

std::vector<unsigned char> bytes_of(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& b) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

std::uint64_t u64_at(const std::vector<unsigned char>& b, std::size_t off) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[off + static_cast<std::size_t>(i)];
  return v;
}

}  // namespace

TEST(Generators, HilbertEntries) {
  const auto h = gen_hilbert({3, 4, 5});
  EXPECT_EQ(h.entry({1, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(h.entry({2, 3, 4}), 1.0 / 7.0);
  EXPECT_DOUBLE_EQ(gen_hilbert({6, 6}).entry({6, 6}), 1.0 / 11.0);
}

TEST(Generators, GaussianBumps) {
  const auto g = gen_gaussian_bumps({8, 8, 8}, 5, 10.0, 3);
  const auto h = gen_gaussian_bumps({8, 8, 8}, 5, 10.0, 3);
  EXPECT_EQ(g.entry({2, 5, 7}), h.entry({2, 5, 7}));
  EXPECT_GT(g.entry({4, 4, 4}), 0.0);
  EXPECT_LE(g.entry({4, 4, 4}), 5.0);
  auto c = std::make_shared<const std::vector<double>>(std::vector<double>{0.0, 0.0, 0.0});
  const auto one = gaussian_bumps_oracle({4, 4, 4}, c, 2.0);
  EXPECT_DOUBLE_EQ(one.entry({2, 2, 2}), 1.0);
  EXPECT_DOUBLE_EQ(one.entry({4, 2, 2}), std::exp(-2.0));
  EXPECT_THROW(gen_gaussian_bumps({4, 4}, 1, 1.0, 0), std::invalid_argument);
  EXPECT_EQ(gen_gaussian_bumps({3, 3, 3}, 0, 10.0, 1).materialize().vec().norm(), 0.0);
}

TEST(Generators, RandomTTAndTucker) {
  const auto t = gen_random_tt({4, 5, 6}, {2, 3}, 8);
  EXPECT_EQ(t.core_sizes(), (std::vector<std::size_t>{1, 2, 3, 1}));
  for (const auto& c : t.cores())
    for (double v : c.values) {
      EXPECT_GT(v, 0.0);
      EXPECT_LT(v, 1.0);
    }
  EXPECT_EQ(gen_random_tt({4, 5, 6}, {2, 3}, 8).cores()[1].values, t.cores()[1].values);
  EXPECT_THROW(gen_random_tt({4, 5}, {2, 3}, 1), std::invalid_argument);
  const auto k = gen_random_tucker({6, 7}, {2, 3}, 1);
  for (const auto& a : k.factors) EXPECT_LT((a.transpose() * a - Matrix::Identity(a.cols(), a.cols())).norm(), 1e-13);
  EXPECT_THROW(gen_random_tucker({3, 3}, {4, 1}, 1), std::invalid_argument);
  const auto o = tt_oracle(t);
  EXPECT_DOUBLE_EQ(o.entry({3, 2, 5}), tt_entry(t, {3, 2, 5}));
}

TEST(Generators, DemoSylvester) {
  const auto p = demo_sylvester(20, 4);
  EXPECT_DOUBLE_EQ(p.a.spectrum()(0), -1.0);
  EXPECT_NEAR(p.a.spectrum()(19), -1.0 / 600.0, 1e-15);
  EXPECT_EQ(p.f.core_sizes(), (std::vector<std::size_t>{1, 5, 2, 1}));
  EXPECT_THROW(demo_sylvester(3, 0), std::invalid_argument);
}

TEST(DenseFile, LayoutAndRoundTrip) {
  const auto path = temp_path("dense.dtf");
  const auto x = gen_hilbert({3, 2, 4}).materialize();
  write_dense(path, x);
  const auto b = bytes_of(path);
  ASSERT_EQ(b.size(), 4u + 8u * 4u + 8u * 24u);
  EXPECT_EQ(std::memcmp(b.data(), "DTF1", 4), 0);
  EXPECT_EQ(u64_at(b, 4), 3u);
  EXPECT_EQ(u64_at(b, 12), 3u);
  EXPECT_EQ(u64_at(b, 20), 2u);
  EXPECT_EQ(u64_at(b, 28), 4u);
  double first;
  const auto bits = u64_at(b, 36);
  std::memcpy(&first, &bits, 8);
  EXPECT_EQ(first, x.values()[0]);
  const auto y = read_dense(path);
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(std::memcmp(y.data(), x.data(), 8 * x.size()), 0);
  EXPECT_EQ(file_magic(path), "DTF1");
  std::filesystem::remove(path);
}

TEST(TTFile, RoundTripIsBitwise) {
  const auto path = temp_path("tt.ttf");
  const auto t = gen_random_tt({5, 3, 4, 2}, {2, 3, 2}, 6);
  write_tt(path, t);
  const auto u = read_tt(path);
  EXPECT_EQ(u.core_sizes(), t.core_sizes());
  for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(u.cores()[k].values, t.cores()[k].values);
  const auto b = bytes_of(path);
  EXPECT_EQ(b.size(), 4u + 8u * (1 + 4 + 5) + 8u * tt_storage_count(t));
  std::filesystem::remove(path);
}

TEST(TuckerFile, RoundTripIsBitwise) {
  const auto path = temp_path("tk.tkf");
  const auto t = gen_random_tucker({5, 6, 4}, {2, 3, 2}, 1);
  write_tucker(path, t);
  const auto u = read_tucker(path);
  EXPECT_EQ(u.core.shape(), t.core.shape());
  EXPECT_EQ(u.core.vec(), t.core.vec());
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(u.factors[k], t.factors[k]);
  std::filesystem::remove(path);
}

TEST(Files, RejectCorruptInput) {
  const auto path = temp_path("bad.dtf");
  write_dense(path, gen_hilbert({3, 3}).materialize());
  auto b = bytes_of(path);
  EXPECT_THROW(read_tt(path), std::runtime_error);
  auto truncated = b;
  truncated.resize(truncated.size() - 3);
  write_bytes(path, truncated);
  EXPECT_THROW(read_dense(path), std::runtime_error);
  auto trailing = b;
  trailing.push_back(0);
  write_bytes(path, trailing);
  EXPECT_THROW(read_dense(path), std::runtime_error);
  auto zero_dim = b;
  std::fill(zero_dim.begin() + 12, zero_dim.begin() + 20, 0);
  write_bytes(path, zero_dim);
  EXPECT_THROW(read_dense(path), std::runtime_error);
  auto bad_magic = b;
  bad_magic[3] = '2';
  write_bytes(path, bad_magic);
  EXPECT_THROW(read_dense(path), std::runtime_error);
  std::filesystem::remove(path);
  EXPECT_THROW(read_dense(path), std::runtime_error);
}

TEST(TTFile, RejectsBrokenChain) {
  const auto path = temp_path("chain.ttf");
  write_tt(path, gen_random_tt({3, 3, 3}, {2, 2}, 1));
  auto b = bytes_of(path);
  // Core size s_1 lives after magic, d and three dims.
  const std::size_t off = 4 + 8 + 24 + 8;
  b[off] = 3;
  write_bytes(path, b);
  EXPECT_ANY_THROW(read_tt(path));
  std::filesystem::remove(path);
}

TEST(Report, JsonRoundTrip) {
  RunReport r;
  r.command = "decompose";
  r.method = "pstt2";
  r.dims = {60, 60, 60};
  r.ranks = {20, 20};
  r.core_sizes = {1, 20, 20, 1};
  r.oversampling = 5;
  r.partition = {6, 1, 6};
  r.workers = 4;
  r.seed = 18446744073709551615ULL;
  r.relative_error = 1.2345678901234567e-11;
  r.error_mode = "full";
  r.eval_count = 432000;
  r.per_worker_peak_scalars = {10, 20, 30, 40};
  r.per_worker_total_peak_scalars = {11, 21, 31, 41};
  r.message_count = 7;
  r.message_volume = 900;
  r.passes = 2;
  r.wall_time_ms = 12.5;
  r.warnings = {"w"};
  r.extra["s1"] = 3;
  const auto text = dump_report(r);
  const auto back = parse_report(text);
  EXPECT_EQ(dump_report(back), text);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_EQ(*back.relative_error, *r.relative_error);
  EXPECT_FALSE(back.standard_error.has_value());
  const auto j = Json::parse(text);
  EXPECT_EQ(j["schema"], 1);
  EXPECT_TRUE(j["standard_error"].is_null());
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
  auto wrong = j;
  wrong["schema"] = 2;
  EXPECT_THROW(parse_report(wrong.dump()), std::runtime_error);
}

TEST(Report, FilledFromDecomposition) {
  const auto t = gen_random_tt({6, 6, 6}, {2, 2}, 1);
  DecomposeConfig cfg;
  cfg.ranks = {2, 2};
  cfg.workers = 2;
  cfg.seed = 4;
  const auto res = pstt2(tt_oracle(t), cfg);
  RunReport r;
  fill_report(r, res, cfg);
  EXPECT_EQ(r.dims, (std::vector<std::size_t>{6, 6, 6}));
  EXPECT_EQ(r.core_sizes, res.tt.core_sizes());
  EXPECT_EQ(r.eval_count, 2u * 216u);
  EXPECT_EQ(r.per_worker_peak_scalars.size(), 2u);
  EXPECT_EQ(r.passes, 2u);
}
