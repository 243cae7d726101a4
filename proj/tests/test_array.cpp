#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "gdf/array.hpp"
#include "gdf/models.hpp"

using namespace gdf;

TEST(SampleArray, EntriesFollowTheModel) {
  const auto model = models::gram_product();
  const auto a = sample_array(model, 20, 42);
  ASSERT_TRUE(a.latents());
  const auto& u = a.latents()->u;
  for (std::size_t l = 0; l < 20; ++l) {
    EXPECT_EQ(a(l, l), u[l] * u[l]);
    for (std::size_t lp = 0; lp < 20; ++lp) {
      if (lp != l) {
        EXPECT_DOUBLE_EQ(a(l, lp), u[l] * u[lp]);
      }
    }
  }
}

TEST(SampleArray, DeterministicAndPrefixStable) {
  const auto model = models::mixed();
  const auto a = sample_array(model, 30, 7);
  EXPECT_EQ(a, sample_array(model, 30, 7));
  EXPECT_FALSE(a == sample_array(model, 30, 8));
  // Counter-based latents: the first rows do not depend on n.
  const auto b = sample_array(model, 10, 7);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 10; ++j) EXPECT_EQ(a(i, j), b(i, j));
  }
}

TEST(SampleArray, EdgeLatentsAreSymmetric) {
  const auto a = sample_array(models::w_sign(), 25, 3);
  for (std::size_t i = 0; i < 25; ++i) {
    for (std::size_t j = 0; j < 25; ++j) EXPECT_EQ(a(i, j), a(j, i));
  }
  EXPECT_EQ(pair_latent(3, 4, 9), pair_latent(3, 9, 4));
}

TEST(SampleArray, RejectsZeroSize) { EXPECT_THROW(sample_array(models::constant(), 0, 1), ConfigError); }

TEST(SampledArray, RejectsAsymmetricInput) {
  EXPECT_THROW(SampledArray(2, {1.0, 0.5, 0.4, 1.0}), DataError);
  EXPECT_THROW(SampledArray(2, {1.0, 0.5, 0.5}), DataError);
}

TEST(CheckPsd, GramSamplesArePsd) {
  for (const auto& m : models::bounded_suite()) {
    const auto res = check_psd(sample_array(m, 60, 11));
    EXPECT_TRUE(res.is_psd) << m.name << " lambda_min " << res.min_eigenvalue;
  }
}

TEST(CheckPsd, DetectsIndefinite) {
  const SampledArray a(2, {1.0, 2.0, 2.0, 1.0});
  const auto res = check_psd(a);
  EXPECT_FALSE(res.is_psd);
  EXPECT_NEAR(res.min_eigenvalue, -1.0, 1e-12);
}

TEST(Truncation, FactorsAndDiagonal) {
  const SampledArray a(2, {4.0, 1.0, 1.0, 0.25});
  const auto t = truncate_array(a, 1.0);
  EXPECT_DOUBLE_EQ(t(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(t(1, 1), 0.25);
  EXPECT_DOUBLE_EQ(t(0, 1), 0.5);
  EXPECT_THROW(truncate_array(a, 0.0), DomainError);
  EXPECT_THROW(truncate_array(SampledArray(2, {0.0, 1.0, 1.0, 1.0}), 1.0), DomainError);
}

TEST(Truncation, SemigroupOnSimulatedArrays) {
  const auto a = sample_array(models::unbounded(), 50, 5);
  for (double N : {0.5, 1.0, 2.0, 4.0}) {
    for (double Np : {N + 1.0, 2.0 * N, 8.0}) {
      const auto lhs = truncate_array(truncate_array(a, Np), N);
      const auto rhs = truncate_array(a, N);
      for (std::size_t i = 0; i < a.entries().size(); ++i) EXPECT_NEAR(lhs.entries()[i], rhs.entries()[i], 1e-12);
    }
  }
}

TEST(Truncation, PreservesPsd) {
  const auto a = sample_array(models::unbounded(), 50, 9);
  EXPECT_TRUE(check_psd(truncate_array(a, 1.0)).is_psd);
  EXPECT_LE(truncate_array(a, 1.0).max_diagonal(), 1.0);
}

TEST(Permutation, RelabelsRowsAndColumns) {
  const auto a = sample_array(models::brownian(), 5, 2);
  const std::vector<std::size_t> rho{4, 2, 0, 1, 3};
  const auto p = a.permuted(rho);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(p(i, j), a(rho[i], rho[j]));
  }
}

TEST(Exchangeability, AldousHooverModelsPass) {
  for (const auto& m : {models::mixed(), models::w_sign()}) {
    const auto rep = exchangeability_check(m, 30, 4, 150, 13);
    EXPECT_TRUE(rep.pass) << m.name << " statistic " << rep.statistic << " threshold " << rep.threshold;
  }
}

// Rows sorted by latent are not exchangeable: the leading minor sees the small values.
TEST(Exchangeability, SortedSamplerIsRejected) {
  struct Sorted {
    SampledArray operator()(const AldousHooverModel& m, std::size_t n, std::uint64_t seed) const {
      const auto a = sample_array(m, n, seed);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      const auto& u = a.latents()->u;
      std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return u[x] < u[y]; });
      return a.permuted(order);
    }
  };
  const auto rep = exchangeability_check(models::brownian(), 30, 4, 150, 13, 0.01, Sorted{});
  EXPECT_FALSE(rep.pass) << rep.statistic;
}
