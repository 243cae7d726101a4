#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gdf/assignment.hpp"
#include "gdf/measures.hpp"
#include "gdf/models.hpp"

using namespace gdf;

namespace {

EmpiricalMeasure random_measure(std::size_t n, std::size_t r, std::uint64_t seed) {
  EmpiricalMeasure mu{r, {}, n};
  for (std::size_t i = 0; i < n; ++i) {
    Atom a{std::vector<double>(r), 0.0};
    double sq = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
      a.h[k] = 2.0 * rng::uniform(seed, k + 1, i) - 1.0;
      sq += a.h[k] * a.h[k];
    }
    a.t = sq + 4.0 * rng::uniform(seed, 99, i);
    mu.atoms.push_back(std::move(a));
  }
  return mu;
}

Eigen::MatrixXd rotation(double angle) {
  Eigen::MatrixXd q(2, 2);
  q << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return q;
}

double brute_force_assignment(const Eigen::MatrixXd& c) {
  std::vector<int> perm(static_cast<std::size_t>(c.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) s += c(static_cast<Eigen::Index>(i), perm[i]);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

TEST(Assignment, MatchesBruteForce) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Eigen::MatrixXd c(6, 6);
    for (Eigen::Index i = 0; i < 6; ++i) {
      for (Eigen::Index j = 0; j < 6; ++j) c(i, j) = rng::uniform(seed, 1, static_cast<std::uint64_t>(i * 6 + j));
    }
    const auto a = solve_assignment(c);
    EXPECT_NEAR(a.cost, brute_force_assignment(c), 1e-12);
    std::vector<std::size_t> cols = a.column_of_row;
    std::sort(cols.begin(), cols.end());
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(cols[i], i);
  }
}

TEST(Assignment, RejectsOversizedAndNonSquare) {
  EXPECT_THROW(solve_assignment(Eigen::MatrixXd::Zero(2, 3)), ConfigError);
  EXPECT_THROW(solve_assignment(Eigen::MatrixXd::Zero(1025, 1025)), ConfigError);
}

TEST(Wasserstein, Oracles) {
  const auto mu = random_measure(30, 2, 4);
  EXPECT_NEAR(wasserstein2(mu, mu), 0.0, 1e-15);
  // A constant shift of t by d moves every atom by d.
  auto shifted = mu;
  for (auto& a : shifted.atoms) a.t += 0.3;
  EXPECT_NEAR(wasserstein2(mu, shifted), 0.3, 1e-12);
  // Relabeling does not change the measure.
  auto reversed = mu;
  std::reverse(reversed.atoms.begin(), reversed.atoms.end());
  EXPECT_NEAR(wasserstein2(mu, reversed), 0.0, 1e-15);
  EXPECT_THROW(wasserstein2(mu, random_measure(29, 2, 4)), ConfigError);
  EXPECT_THROW(wasserstein2(mu, random_measure(30, 3, 4)), ConfigError);
}

TEST(Wasserstein, TriangleInequality) {
  const auto x = random_measure(40, 2, 1), y = random_measure(40, 2, 2), z = random_measure(40, 2, 3);
  EXPECT_LE(wasserstein2(x, z), wasserstein2(x, y) + wasserstein2(y, z) + 1e-12);
}

TEST(Procrustes, PairedRecoversRotationAndReflection) {
  const auto mu = random_measure(50, 2, 7);
  for (const auto& q : {rotation(0.7), Eigen::MatrixXd(rotation(-2.0) * Eigen::Vector2d(1, -1).asDiagonal())}) {
    const auto moved = apply(OrthogonalMap{q}, mu);
    const auto al = procrustes_align(mu, moved, true);
    EXPECT_LE((al.q.q - q).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(al.residual, 1e-20);
    EXPECT_LE(al.q.orthogonality_residual(), 1e-12);
  }
}

TEST(Procrustes, PairedIdentityOnRankDeficientData) {
  auto mu = random_measure(20, 3, 2);
  for (auto& a : mu.atoms) a.h[2] = 0.0;
  const auto al = procrustes_align(mu, mu, true);
  EXPECT_LE((al.q.q - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Procrustes, UnpairedRecoversRotationUpToRelabeling) {
  const auto mu = random_measure(40, 2, 11);
  auto moved = apply(OrthogonalMap{rotation(1.1)}, mu);
  std::reverse(moved.atoms.begin(), moved.atoms.end());
  const auto al = procrustes_align(mu, moved, false, 3);
  EXPECT_LE(al.residual, 1e-18);
  EXPECT_NEAR(wasserstein2(apply(al.q, mu), moved), 0.0, 1e-9);
  for (std::size_t i = 0; i < 40; ++i) EXPECT_EQ(al.matching[i], 39 - i);
}

TEST(Procrustes, MismatchedInputsThrow) {
  EXPECT_THROW(procrustes_align(random_measure(5, 2, 1), random_measure(6, 2, 1), true), ConfigError);
  EXPECT_THROW(procrustes_align(random_measure(5, 2, 1), random_measure(5, 3, 1), true), ConfigError);
}

TEST(Measures, PushforwardAndRestrict) {
  const auto mu = from_cloud(models::planted_scalar(100, 2, 1.0));
  const auto p = pushforward(mu, 1.2);
  for (const auto& a : p.atoms) EXPECT_LE(a.t, 1.2);
  EXPECT_DOUBLE_EQ(p.mass(), 1.0);
  const auto r = restrict(mu, 1.2);
  EXPECT_LT(r.mass(), 1.0);
  for (const auto& a : r.atoms) EXPECT_LT(a.t, 1.2);
  // Semigroup: psi_N o psi_N' = psi_N.
  const auto twice = pushforward(pushforward(mu, 1.7), 1.2);
  for (std::size_t i = 0; i < mu.size(); ++i) EXPECT_NEAR(twice.atoms[i].t, p.atoms[i].t, 1e-12);
  EXPECT_THROW(from_cloud(FeatureCloud{}), ConfigError);
}

TEST(Consistency, PushforwardTowerHasZeroDefect) {
  const auto mu = from_cloud(models::planted_scalar(200, 5, 3.0));
  std::vector<std::pair<double, EmpiricalMeasure>> tower;
  for (double N : {1.0, 2.0, 4.0}) tower.emplace_back(N, pushforward(mu, N));
  const auto res = consistency_check(tower, 1e-12);
  EXPECT_TRUE(res.report.pass);
  for (double d : res.defects) EXPECT_EQ(d, 0.0);
  // Stitched pieces cover every atom exactly once.
  EXPECT_EQ(res.stitched.size(), mu.size());
  // Restriction equality, atom for atom.
  for (std::size_t k = 0; k + 1 < tower.size(); ++k) {
    const auto lo = restrict(tower[k].second, tower[k].first);
    const auto hi = restrict(tower[k + 1].second, tower[k].first);
    ASSERT_EQ(lo.size(), hi.size());
    for (std::size_t i = 0; i < lo.size(); ++i) {
      EXPECT_EQ(lo.atoms[i].t, hi.atoms[i].t);
      EXPECT_EQ(lo.atoms[i].h, hi.atoms[i].h);
    }
  }
}

TEST(Consistency, PlantedDefectIsLocated) {
  const auto mu = from_cloud(models::planted_scalar(100, 5, 3.0));
  std::vector<std::pair<double, EmpiricalMeasure>> tower;
  for (double N : {1.0, 2.0, 4.0}) tower.emplace_back(N, pushforward(mu, N));
  tower[1].second.atoms[7].h[0] += 1e-3;
  const auto res = consistency_check(tower, 1e-9);
  EXPECT_FALSE(res.report.pass);
  ASSERT_EQ(res.defects.size(), 2u);
  EXPECT_GT(res.defects[0], 0.0);
  EXPECT_GT(res.defects[1], 0.0);
  EXPECT_NEAR(res.defects[0], 0.01, 1e-15);
  EXPECT_EQ(res.report.details["failing_levels"][0]["level"], 0);
}

TEST(Consistency, ToleranceAbsorbsRounding) {
  const auto mu = from_cloud(models::planted_scalar(50, 1, 3.0));
  std::vector<std::pair<double, EmpiricalMeasure>> tower{{1.0, pushforward(mu, 1.0)}, {2.0, pushforward(mu, 2.0)}};
  for (auto& a : tower[0].second.atoms) a.t += 1e-13;
  std::reverse(tower[0].second.atoms.begin(), tower[0].second.atoms.end());
  EXPECT_TRUE(consistency_check(tower, 1e-12).report.pass);
  EXPECT_THROW(consistency_check({}, 1e-12), ConfigError);
}

TEST(Alignment, PlantedRecoveryEndToEnd) {
  const auto planted = models::planted_scalar(300, 7);
  const auto res = split_diagonal(build_array(planted));
  const auto rec = from_cloud(res.cloud);
  const auto pl = from_cloud(pad_to(planted, res.cloud.r));
  const auto al = procrustes_align(rec, pl, true);
  EXPECT_LE(wasserstein2(apply(al.q, rec), pl), 0.05);
}
