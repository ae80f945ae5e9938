#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "figforge/embed_eval.hpp"
#include "figforge/rng.hpp"
#include "test_support.hpp"

using namespace figforge;
using support::make_matrix;

TEST_CASE("all-positive differences at n=5 give p exactly 1/16") {
  // W- = 0, and only the two all-same-sign assignments are as extreme:
  // p = 2 / 2^5 = 0.0625.
  const std::vector<double> a{5, 6, 7, 8, 9};
  const std::vector<double> b{1, 2, 3, 0, 4};
  const StatTestResult r = wilcoxon_signed_rank(a, b);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 0.0625);
  CHECK(r.method == "wilcoxon_exact");
  CHECK(r.n_effective == 5);
}

TEST_CASE("identical paired samples are rejected") {
  const std::vector<double> a{1, 2, 3};
  CHECK_THROWS_AS(wilcoxon_signed_rank(a, a), ValidationError);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2}, {1, 2, 3}), ValidationError);
}

TEST_CASE("zero differences are dropped before ranking") {
  const std::vector<double> a{3, 5, 5, 9, 2, 2};
  const std::vector<double> b{1, 5, 2, 4, 2, 7};
  const StatTestResult r = wilcoxon_signed_rank(a, b);
  CHECK(r.n_effective == 4);  // two exact ties excluded
}

TEST_CASE("exact path equals the full sign-assignment enumeration") {
  SplitMix64 rng(6001);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.next_below(12);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse integer grids force |difference| ties and occasional zeros.
      a[i] = double(rng.next_below(8));
      b[i] = double(rng.next_below(8)) * 0.5;
    }
    const auto want = support::ref_wilcoxon(a, b);
    if (!want) {
      CHECK_THROWS_AS(wilcoxon_signed_rank(a, b), ValidationError);
      continue;
    }
    const StatTestResult got = wilcoxon_signed_rank(a, b);
    CHECK(got.method == "wilcoxon_exact");
    CHECK(got.n_effective == want->n_eff);
    CHECK(got.statistic == doctest::Approx(want->w).epsilon(1e-12));
    CHECK(got.p_value == doctest::Approx(want->p).epsilon(1e-12));
    ++checked;
  }
  CHECK(checked > 400);  // nearly all trials exercise the comparison
}

TEST_CASE("pair order does not affect the test") {
  SplitMix64 rng(6002);
  std::vector<double> a(10), b(10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.next_real() * 10.0;
    b[i] = rng.next_real() * 10.0;
  }
  const StatTestResult base = wilcoxon_signed_rank(a, b);
  std::vector<std::size_t> order{7, 3, 9, 1, 0, 5, 2, 8, 6, 4};
  std::vector<double> pa, pb;
  for (std::size_t i : order) {
    pa.push_back(a[i]);
    pb.push_back(b[i]);
  }
  const StatTestResult shuffled = wilcoxon_signed_rank(pa, pb);
  CHECK(shuffled.statistic == base.statistic);
  CHECK(shuffled.p_value == base.p_value);
}

TEST_CASE("large samples switch to the corrected normal approximation") {
  // 26 nonzero differences is one past the exact-path cutoff.
  std::vector<double> a(26), b(26, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    a[i] = (i % 2 ? 1.0 : -1.0) * double(i + 1);
  const StatTestResult r = wilcoxon_signed_rank(a, b);
  CHECK(r.method == "wilcoxon_normal");
  CHECK(r.n_effective == 26);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value <= 1.0);
}

TEST_CASE("normal path reproduces a frozen reference value") {
  // Fixed integer inputs with 27 nonzero differences; expected values come
  // from an independent implementation of the tie-corrected, continuity-
  // corrected two-sided normal approximation.
  std::vector<double> a(30), b(30);
  for (int i = 0; i < 30; ++i) {
    a[i] = double((i * 37) % 19 + 1);
    b[i] = double((i * 53) % 17 + 1);
  }
  const StatTestResult r = wilcoxon_signed_rank(a, b);
  CHECK(r.method == "wilcoxon_normal");
  CHECK(r.n_effective == 27);
  CHECK(r.statistic == 103.0);
  CHECK(r.p_value == doctest::Approx(0.039776076870203146).epsilon(1e-12));
}

TEST_CASE("squared discrepancy of a sample with itself is exactly zero") {
  SplitMix64 rng(6003);
  const EmbeddingMatrix x = support::random_matrix(rng, 7, 5);
  CHECK(mmd2_biased(x, x, 1.0) == 0.0);
}

TEST_CASE("two-point closed form") {
  const EmbeddingMatrix x = make_matrix(1, 1, {0.0f});
  const EmbeddingMatrix y = make_matrix(1, 1, {1.0f});
  // 1 + 1 - 2*exp(-1/2).
  CHECK(mmd2_biased(x, y, 1.0) ==
        doctest::Approx(0.7869386805747332).epsilon(1e-12));
  CHECK(mmd2_biased(y, x, 1.0) == mmd2_biased(x, y, 1.0));
}

TEST_CASE("squared discrepancy is symmetric and nonnegative") {
  SplitMix64 rng(6004);
  for (int trial = 0; trial < 50; ++trial) {
    const EmbeddingMatrix x =
        support::random_matrix(rng, 2 + rng.next_below(6), 4);
    const EmbeddingMatrix y =
        support::random_matrix(rng, 2 + rng.next_below(6), 4);
    const double xy = mmd2_biased(x, y, 0.8);
    CHECK(xy == doctest::Approx(mmd2_biased(y, x, 0.8)).epsilon(1e-12));
    CHECK(xy >= -1e-12);
  }
}

TEST_CASE("discrepancy input validation") {
  const EmbeddingMatrix x = make_matrix(1, 1, {0.0f});
  const EmbeddingMatrix y2 = make_matrix(1, 2, {0.0f, 1.0f});
  CHECK_THROWS_AS(mmd2_biased(x, y2, 1.0), ValidationError);
  CHECK_THROWS_AS(mmd2_biased(x, x, 0.0), ValidationError);
  EmbeddingMatrix empty;
  CHECK_THROWS_AS(mmd2_biased(empty, x, 1.0), ValidationError);
}

TEST_CASE("median bandwidth uses the midpoint convention") {
  // Pooled points {0, 1, 3}: distances 1, 2, 3 -> median 2.
  CHECK(median_heuristic_sigma(make_matrix(2, 1, {0.0f, 1.0f}),
                               make_matrix(1, 1, {3.0f})) ==
        doctest::Approx(2.0));
  // Pooled points {0, 1, 2, 4}: distances 1, 1, 2, 2, 3, 4 -> median 2.
  CHECK(median_heuristic_sigma(make_matrix(2, 1, {0.0f, 1.0f}),
                               make_matrix(2, 1, {2.0f, 4.0f})) ==
        doctest::Approx(2.0));
  // Coincident points fall back to 1.
  CHECK(median_heuristic_sigma(make_matrix(2, 1, {5.0f, 5.0f}),
                               make_matrix(1, 1, {5.0f})) == 1.0);
}

TEST_CASE("permutation test is reproducible and properly bounded") {
  SplitMix64 rng(6005);
  const EmbeddingMatrix x = support::random_matrix(rng, 8, 4);
  const EmbeddingMatrix y = support::random_matrix(rng, 6, 4);
  const StatTestResult r1 = mmd_permutation_test(x, y, 150, {}, 1234);
  const StatTestResult r2 = mmd_permutation_test(x, y, 150, {}, 1234);
  CHECK(r1.p_value == r2.p_value);
  CHECK(r1.statistic == r2.statistic);
  CHECK(r1.method == "mmd_permutation");
  CHECK(r1.n_effective == 14);
  CHECK(r1.p_value >= 1.0 / 151.0);
  CHECK(r1.p_value <= 1.0);
}

TEST_CASE("permuting a constant pooled sample never looks extreme") {
  // Constant rows make every kernel entry exactly 1: the observed and all
  // permuted statistics are exactly 0, so every permutation counts.
  const EmbeddingMatrix x = make_matrix(3, 2, {2, 5, 2, 5, 2, 5});
  const StatTestResult r = mmd_permutation_test(x, x, 50, 1.0, 7);
  CHECK(r.statistic == 0.0);
  CHECK(r.p_value == 1.0);
}

TEST_CASE("well-separated one-dimensional samples reject") {
  std::vector<float> lo(20), hi(20);
  SplitMix64 rng(6006);
  for (int i = 0; i < 20; ++i) {
    lo[i] = float(rng.next_real());         // around 0
    hi[i] = float(10.0 + rng.next_real());  // around 10
  }
  const StatTestResult r = mmd_permutation_test(
      make_matrix(20, 1, lo), make_matrix(20, 1, hi), 99, {}, 42);
  CHECK(r.p_value == doctest::Approx(0.01));  // the smallest reachable p
}

TEST_CASE("a fixed bandwidth is honored by the observed statistic") {
  SplitMix64 rng(6007);
  const EmbeddingMatrix x = support::random_matrix(rng, 5, 3);
  const EmbeddingMatrix y = support::random_matrix(rng, 4, 3);
  const StatTestResult r = mmd_permutation_test(x, y, 25, 0.9, 11);
  CHECK(r.statistic == doctest::Approx(mmd2_biased(x, y, 0.9)).epsilon(1e-12));
}

TEST_CASE("permutation test input validation") {
  const EmbeddingMatrix one = make_matrix(1, 1, {0.0f});
  const EmbeddingMatrix two = make_matrix(2, 1, {0.0f, 1.0f});
  CHECK_THROWS_AS(mmd_permutation_test(one, two, 10, {}, 0), ValidationError);
  CHECK_THROWS_AS(mmd_permutation_test(two, two, 0, {}, 0), ConfigError);
}
