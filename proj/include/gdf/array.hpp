#pragma once

// Finite weakly exchangeable arrays drawn from Aldous-Hoover models
//   R_ll = g(u_l),  R_ll' = f(u_l, u_l', u_ll')  (l != l'),
// their PSD certification, and the diagonal truncation map Psi_N.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gdf/error.hpp"
#include "gdf/kernel_spec.hpp"
#include "gdf/ks.hpp"
#include "gdf/report.hpp"
#include "gdf/rng.hpp"

namespace gdf {

struct AldousHooverModel {
  KernelSpec f;  // symmetric in its first two arguments
  FunctionSpec g;
  bool bounded = false;  // declares |f|, |g| <= 1
  std::string name;

  AldousHooverModel() = default;
  AldousHooverModel(KernelSpec f_, FunctionSpec g_, bool bounded_ = false, std::string name_ = {})
      : f(std::move(f_)), g(std::move(g_)), bounded(bounded_), name(std::move(name_)) {
    if (bounded) validate_bound();
  }

  // f with the edge coordinate integrated out.
  KernelSpec f_bar(std::size_t quadrature_points = 64) const { return f.averaged(quadrature_points); }

 private:
  void validate_bound() const {
    constexpr double slack = 1e-12;
    if (f.bound() > 1.0 + slack) {
      const DyadicLevel lvl(6);
      if (rasterize(f.averaged(), lvl).max_abs() > 1.0 + slack || f.depends_on_w()) {
        throw ConfigError("model declared bounded but |f| may exceed 1");
      }
    }
    if (g.bound() > 1.0 + slack) {
      const auto r = g.rasterize(DyadicLevel(6));
      for (double v : r.values()) {
        if (std::abs(v) > 1.0 + slack) throw ConfigError("model declared bounded but |g| exceeds 1");
      }
    }
  }
};

struct Latents {
  std::uint64_t seed = 0;
  std::vector<double> u;  // row latents u_1..u_n
};

// Symmetric n x n realization, row-major.
class SampledArray {
 public:
  SampledArray() = default;
  explicit SampledArray(std::size_t n) : n_(n), entries_(n * n, 0.0) {}

  // Takes a full row-major matrix; rejects asymmetric input.
  SampledArray(std::size_t n, std::vector<double> entries, std::optional<Latents> latents = {})
      : n_(n), entries_(std::move(entries)), latents_(std::move(latents)) {
    if (entries_.size() != n_ * n_) throw DataError("array entry count does not match n*n");
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        if (entries_[i * n_ + j] != entries_[j * n_ + i]) {
          throw DataError("array is not symmetric at (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
        }
      }
    }
    if (latents_ && latents_->u.size() != n_) throw DataError("latent count does not match n");
  }

  static SampledArray from_matrix(const Eigen::MatrixXd& m) {
    const auto n = static_cast<std::size_t>(m.rows());
    if (m.cols() != m.rows()) throw DataError("array must be square");
    SampledArray a(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i; j < n; ++j) {
        a.set(i, j, 0.5 * (m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) +
                           m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i))));
      }
    }
    return a;
  }

  std::size_t n() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    entries_[i * n_ + j] = v;
    entries_[j * n_ + i] = v;
  }
  const std::vector<double>& entries() const noexcept { return entries_; }
  const std::optional<Latents>& latents() const noexcept { return latents_; }
  void set_latents(std::optional<Latents> l) { latents_ = std::move(l); }

  double diagonal(std::size_t i) const { return (*this)(i, i); }
  double max_diagonal() const {
    double m = 0.0;
    for (std::size_t i = 0; i < n_; ++i) m = std::max(m, diagonal(i));
    return m;
  }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(n_, n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (*this)(i, j);
      }
    }
    return m;
  }

  // (R_{rho(l), rho(l')}).
  SampledArray permuted(const std::vector<std::size_t>& rho) const {
    SampledArray out(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i; j < n_; ++j) out.set(i, j, (*this)(rho[i], rho[j]));
    }
    if (latents_) {
      Latents l{latents_->seed, std::vector<double>(n_)};
      for (std::size_t i = 0; i < n_; ++i) l.u[i] = latents_->u[rho[i]];
      out.latents_ = std::move(l);
    }
    return out;
  }

  bool all_finite() const {
    return std::all_of(entries_.begin(), entries_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const SampledArray& a, const SampledArray& b) {
    return a.n_ == b.n_ && a.entries_ == b.entries_;
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> entries_;
  std::optional<Latents> latents_;
};

// Latent draws: u_l from stream 1 at counter l, u_{l,l'} from stream 2 at
// counter (min << 32 | max). Arrays of different sizes from the same seed are
// principal minors of each other.
inline double row_latent(std::uint64_t seed, std::size_t l) {
  return rng::uniform(seed, rng::kStreamRowLatent, l);
}

inline double pair_latent(std::uint64_t seed, std::size_t l, std::size_t lp) {
  const auto lo = static_cast<std::uint64_t>(std::min(l, lp));
  const auto hi = static_cast<std::uint64_t>(std::max(l, lp));
  return rng::uniform(seed, rng::kStreamPairLatent, (lo << 32) | hi);
}

inline SampledArray sample_array(const AldousHooverModel& model, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("n must be at least 1");
  Latents lat{seed, std::vector<double>(n)};
  for (std::size_t l = 0; l < n; ++l) lat.u[l] = row_latent(seed, l);
  SampledArray a(n);
  const bool edge = model.f.depends_on_w();
  for (std::size_t l = 0; l < n; ++l) {
    a.set(l, l, model.g(lat.u[l]));
    for (std::size_t lp = l + 1; lp < n; ++lp) {
      const double w = edge ? pair_latent(seed, l, lp) : 0.5;
      a.set(l, lp, model.f(lat.u[l], lat.u[lp], w));
    }
  }
  a.set_latents(std::move(lat));
  return a;
}

struct PsdCheck {
  bool is_psd = false;
  double min_eigenvalue = 0.0;
  double max_eigenvalue = 0.0;
};

inline constexpr double kDefaultPsdTol = 1e-9;

// lambda_min >= -tol * max(1, lambda_max).
inline PsdCheck check_psd(const SampledArray& a, double tol = kDefaultPsdTol) {
  if (tol < 0.0) throw ConfigError("psd tolerance must be nonnegative");
  if (!a.all_finite()) throw DataError("array has non-finite entries");
  if (a.n() == 0) return {true, 0.0, 0.0};
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.matrix(), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  PsdCheck out;
  out.min_eigenvalue = ev(0);
  out.max_eigenvalue = ev(ev.size() - 1);
  out.is_psd = out.min_eigenvalue >= -tol * std::max(1.0, out.max_eigenvalue);
  return out;
}

// min((N / d)^{1/2}, 1), with d = 0 mapping to 1.
inline double truncation_factor(double diag, double N) {
  if (diag <= N) return 1.0;
  return std::sqrt(N / diag);
}

// Psi_N: scales row and column l by min((N / Gamma_ll)^{1/2}, 1).
inline SampledArray truncate_array(const SampledArray& a, double N) {
  if (!(N > 0.0)) throw DomainError("truncation level N must be positive");
  const std::size_t n = a.n();
  std::vector<double> factor(n);
  for (std::size_t l = 0; l < n; ++l) {
    const double d = a.diagonal(l);
    if (d < 0.0) throw DomainError("negative diagonal entry at " + std::to_string(l));
    factor[l] = truncation_factor(d, N);
  }
  SampledArray out(n);
  for (std::size_t l = 0; l < n; ++l) {
    out.set(l, l, std::min(N, a.diagonal(l)));
    for (std::size_t lp = l + 1; lp < n; ++lp) {
      const double v = a(l, lp);
      if (v != 0.0 && (a.diagonal(l) == 0.0 || a.diagonal(lp) == 0.0)) {
        throw DomainError("zero diagonal with nonzero off-diagonal at (" + std::to_string(l) +
                          "," + std::to_string(lp) + "); input is not PSD");
      }
      out.set(l, lp, v * factor[l] * factor[lp]);
    }
  }
  out.set_latents(a.latents());
  return out;
}

namespace detail {

struct ExchangeabilitySummary {
  double trace = 0.0;          // whole array; invariant under relabeling
  double minor_mean = 0.0;     // leading principal minor
  double minor_offdiag_sq = 0.0;
  double minor_trace = 0.0;
};

inline ExchangeabilitySummary summarize(const SampledArray& a) {
  const std::size_t n = a.n();
  const std::size_t k = std::max<std::size_t>(1, n / 2);
  ExchangeabilitySummary s;
  for (std::size_t i = 0; i < n; ++i) s.trace += a(i, i);
  double sum = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    s.minor_trace += a(i, i);
    for (std::size_t j = 0; j < k; ++j) {
      sum += a(i, j);
      if (i != j) sq += a(i, j) * a(i, j);
    }
  }
  s.minor_mean = sum / static_cast<double>(k * k);
  s.minor_offdiag_sq = k > 1 ? sq / static_cast<double>(k * (k - 1)) : 0.0;
  return s;
}

}  // namespace detail

struct DefaultSampler {
  SampledArray operator()(const AldousHooverModel& m, std::size_t n, std::uint64_t seed) const {
    return sample_array(m, n, seed);
  }
};

// Compares summary statistics of sampled arrays against the same arrays under
// random simultaneous row/column permutations with two-sample KS tests. The
// entry statistics are taken on the leading principal minor of size
// max(1, n/2); whole-array statistics would be invariant under relabeling.
// The level is split evenly over the four sub-statistics.
template <class Sampler = DefaultSampler>
TestReport exchangeability_check(const AldousHooverModel& model, std::size_t n,
                                 std::size_t permutations, std::size_t replicas,
                                 std::uint64_t seed, double level = 0.01,
                                 Sampler sampler = Sampler{}) {
  if (n < 2) throw ConfigError("exchangeability check needs n >= 2");
  if (permutations == 0 || replicas == 0) throw ConfigError("permutations and replicas must be positive");
  std::vector<detail::ExchangeabilitySummary> orig, perm;
  orig.reserve(replicas);
  perm.reserve(replicas * permutations);
  const std::uint64_t stage = rng::derive(seed, rng::kStageExchangeability);
  for (std::size_t r = 0; r < replicas; ++r) {
    const auto a = sampler(model, n, rng::derive(stage, {r, 0}));
    orig.push_back(detail::summarize(a));
    CounterRng gen(rng::derive(stage, {r, 1}));
    std::vector<std::size_t> rho(n);
    for (std::size_t p = 0; p < permutations; ++p) {
      std::iota(rho.begin(), rho.end(), std::size_t{0});
      for (std::size_t i = n - 1; i > 0; --i) std::swap(rho[i], rho[gen.below(i + 1)]);
      perm.push_back(detail::summarize(a.permuted(rho)));
    }
  }
  auto column = [](const std::vector<detail::ExchangeabilitySummary>& v, auto member) {
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(s.*member);
    return out;
  };
  using S = detail::ExchangeabilitySummary;
  const std::pair<const char*, double S::*> stats[] = {
      {"trace", &S::trace},
      {"minor_mean", &S::minor_mean},
      {"minor_offdiag_second_moment", &S::minor_offdiag_sq},
      {"minor_trace", &S::minor_trace},
  };
  TestReport rep;
  rep.name = "exchangeability";
  rep.seed = seed;
  rep.replicates = replicas;
  rep.threshold = ks_critical_value(level / 4.0, orig.size(), perm.size());
  for (const auto& [label, member] : stats) {
    const double d = ks_statistic(column(orig, member), column(perm, member));
    rep.details[label] = d;
    rep.statistic = std::max(rep.statistic, d);
  }
  rep.details["level"] = level;
  rep.details["n"] = n;
  rep.details["permutations"] = permutations;
  rep.pass = rep.statistic <= rep.threshold;
  return rep;
}

}  // namespace gdf
