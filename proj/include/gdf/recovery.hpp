#pragma once

// Recovery of latent features (h_l, t_l, a_l) from a Gram-de Finetti sample
//   Gamma_ll' = h_l . h_l' + a_l delta_ll',   t_l = Gamma_ll,
// and the feature-level truncation psi_N.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gdf/array.hpp"
#include "gdf/error.hpp"
#include "gdf/mercer.hpp"

namespace gdf {

enum class Provenance { planted, recovered };

inline const char* to_string(Provenance p) { return p == Provenance::planted ? "planted" : "recovered"; }

struct FeaturePoint {
  std::vector<double> h;
  double t = 0.0;
  double a = 0.0;  // t - |h|^2

  double norm_sq() const {
    double s = 0.0;
    for (double v : h) s += v * v;
    return s;
  }
};

struct FeatureCloud {
  std::size_t r = 0;
  std::vector<FeaturePoint> points;
  Provenance provenance = Provenance::planted;

  std::size_t size() const noexcept { return points.size(); }

  double max_t() const {
    double m = 0.0;
    for (const auto& p : points) m = std::max(m, p.t);
    return m;
  }

  // Rows are h_l.
  Eigen::MatrixXd h_matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), static_cast<Eigen::Index>(r));
    for (std::size_t l = 0; l < points.size(); ++l) {
      for (std::size_t k = 0; k < r; ++k) {
        m(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = points[l].h[k];
      }
    }
    return m;
  }
};

// Builds a cloud from features and totals, computing a = t - |h|^2.
inline FeatureCloud make_cloud(std::size_t r, const std::vector<std::vector<double>>& h,
                               const std::vector<double>& t,
                               Provenance provenance = Provenance::planted) {
  if (h.size() != t.size()) throw ConfigError("feature and total counts differ");
  FeatureCloud c{r, {}, provenance};
  c.points.reserve(h.size());
  for (std::size_t l = 0; l < h.size(); ++l) {
    if (h[l].size() != r) throw ConfigError("feature vector has wrong dimension");
    FeaturePoint p{h[l], t[l], 0.0};
    p.a = p.t - p.norm_sq();
    c.points.push_back(std::move(p));
  }
  return c;
}

// Zero-pads every feature vector to dimension r (r >= c.r).
inline FeatureCloud pad_to(const FeatureCloud& c, std::size_t r) {
  if (r < c.r) throw ConfigError("cannot pad a cloud to a smaller dimension");
  FeatureCloud out = c;
  out.r = r;
  for (auto& p : out.points) p.h.resize(r, 0.0);
  return out;
}

// Gamma_ll' = h_l . h_l' off the diagonal, t_l on it.
inline SampledArray build_array(const FeatureCloud& c) {
  const std::size_t n = c.size();
  SampledArray a(n);
  for (std::size_t l = 0; l < n; ++l) {
    a.set(l, l, c.points[l].t);
    for (std::size_t lp = l + 1; lp < n; ++lp) {
      double dot = 0.0;
      for (std::size_t k = 0; k < c.r; ++k) dot += c.points[l].h[k] * c.points[lp].h[k];
      a.set(l, lp, dot);
    }
  }
  return a;
}

struct GramEmbedding {
  Eigen::MatrixXd vectors;  // row l is g_l
  double residual = 0.0;    // max |g_l . g_l' - Gamma_ll'|
};

inline double gram_residual(const Eigen::MatrixXd& vectors, const SampledArray& a) {
  const Eigen::MatrixXd g = vectors * vectors.transpose();
  return (g - a.matrix()).cwiseAbs().maxCoeff();
}

// Factorization Gamma = V Lambda V^T with g_l the rows of V Lambda^{1/2};
// negative eigenvalues within tolerance are clipped to zero and eigenvalues
// below the numerical rank cutoff n * eps * lambda_max are dropped.
inline GramEmbedding gram_embed(const SampledArray& a, double tol = kDefaultPsdTol) {
  const auto psd = check_psd(a, tol);
  if (!psd.is_psd) {
    throw NotPsdError("array is not PSD: lambda_min = " + std::to_string(psd.min_eigenvalue),
                      psd.min_eigenvalue);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.matrix());
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cutoff = ev.size() ? static_cast<double>(ev.size()) * std::numeric_limits<double>::epsilon() *
                                        std::max(ev.maxCoeff(), 0.0)
                                  : 0.0;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = ev.size() - 1; i >= 0; --i) {
    if (ev(i) > cutoff) keep.push_back(i);
  }
  GramEmbedding out;
  out.vectors.resize(ev.size(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(keep[c]);
    canonicalize_sign(v);
    out.vectors.col(static_cast<Eigen::Index>(c)) = v * std::sqrt(ev(keep[c]));
  }
  out.residual = a.n() ? gram_residual(out.vectors, a) : 0.0;
  return out;
}

inline constexpr double kPinvCutoff = 1e-12;

// Length of the orthogonal projection of g_l onto span{g_l' : l' != l},
// by least squares on the Gram data of the other indices.
inline double reconstruct_norm(const SampledArray& a, std::size_t l, double tol = kDefaultPsdTol) {
  const std::size_t n = a.n();
  if (n < 2) throw ConfigError("reconstruct_norm needs n >= 2");
  if (l >= n) throw ConfigError("index out of range");
  const auto psd = check_psd(a, tol);
  if (!psd.is_psd) {
    throw NotPsdError("array is not PSD: lambda_min = " + std::to_string(psd.min_eigenvalue),
                      psd.min_eigenvalue);
  }
  const auto m = static_cast<Eigen::Index>(n - 1);
  Eigen::MatrixXd others(m, m);
  Eigen::VectorXd gamma(m);
  for (std::size_t i = 0, ii = 0; i < n; ++i) {
    if (i == l) continue;
    gamma(static_cast<Eigen::Index>(ii)) = a(i, l);
    for (std::size_t j = 0, jj = 0; j < n; ++j) {
      if (j == l) continue;
      others(static_cast<Eigen::Index>(ii), static_cast<Eigen::Index>(jj)) = a(i, j);
      ++jj;
    }
    ++ii;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(others);
  const Eigen::VectorXd& mu = es.eigenvalues();
  const double cutoff = kPinvCutoff * std::max(mu(m - 1), 0.0);
  const Eigen::VectorXd coeff = es.eigenvectors().transpose() * gamma;
  double proj_sq = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (mu(i) > cutoff) proj_sq += coeff(i) * coeff(i) / mu(i);
  }
  return std::sqrt(std::clamp(proj_sq, 0.0, std::max(a.diagonal(l), 0.0)));
}

// Squared projection lengths for every index from one eigendecomposition of
// Gamma. With Gamma = V Lambda V^T on its numerical range, g_l is outside the
// span of the others exactly when its leverage sum_i V_li^2 is 1, and then the
// squared distance is 1 / sum_i V_li^2 / lambda_i (a Schur complement).
inline std::vector<double> reconstruct_norms_sq(const SampledArray& a, double tol = kDefaultPsdTol) {
  const std::size_t n = a.n();
  if (n < 2) throw ConfigError("reconstruct_norm needs n >= 2");
  const auto psd = check_psd(a, tol);
  if (!psd.is_psd) {
    throw NotPsdError("array is not PSD: lambda_min = " + std::to_string(psd.min_eigenvalue),
                      psd.min_eigenvalue);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.matrix());
  const Eigen::VectorXd& ev = es.eigenvalues();
  const Eigen::MatrixXd& v = es.eigenvectors();
  const double cutoff = kPinvCutoff * std::max(ev(ev.size() - 1), 0.0);
  constexpr double leverage_slack = 1e-8;
  std::vector<double> out(n);
  for (std::size_t l = 0; l < n; ++l) {
    const auto row = static_cast<Eigen::Index>(l);
    double leverage = 0.0, inv = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
      if (ev(i) > cutoff) {
        const double x = v(row, i) * v(row, i);
        leverage += x;
        inv += x / ev(i);
      }
    }
    const double t = std::max(a.diagonal(l), 0.0);
    const double dist_sq = (leverage >= 1.0 - leverage_slack && inv > 0.0) ? 1.0 / inv : 0.0;
    out[l] = std::clamp(t - dist_sq, 0.0, t);
  }
  return out;
}

struct SplitOptions {
  std::size_t rank = 0;  // 0 selects the rank from rank_share
  double psd_tol = kDefaultPsdTol;
  double rank_share = 1e-6;       // eigenvalues kept if >= share * trace
  double a_tol_relative = 1e-6;   // a in [-a_tol, 0) clamps to 0; a_tol = this * max t
  double max_clipped_fraction = 0.05;  // of trace(Gamma)
};

struct SplitResult {
  FeatureCloud cloud;
  double clipped_mass = 0.0;
  double clipped_fraction = 0.0;
  std::vector<double> reconstructed_norm_sq;
  std::size_t clamped = 0;  // points whose small negative a was set to 0
};

// Splits Gamma into a feature Gram part and a nonnegative diagonal excess:
// reconstruct |h_l|^2 by projection, replace the diagonal, project onto the
// PSD cone, embed at rank r, and set a_l = t_l - |h_l|^2.
inline SplitResult split_diagonal(const SampledArray& a, const SplitOptions& opt = {}) {
  const std::size_t n = a.n();
  if (n < 3) throw ConfigError("split_diagonal needs n >= 3");
  SplitResult res;
  res.reconstructed_norm_sq = reconstruct_norms_sq(a, opt.psd_tol);

  Eigen::MatrixXd h = a.matrix();
  double trace = 0.0;
  for (std::size_t l = 0; l < n; ++l) {
    trace += a.diagonal(l);
    h(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(l)) = res.reconstructed_norm_sq[l];
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  const Eigen::VectorXd& ev = es.eigenvalues();
  double positive_mass = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) < 0.0) {
      res.clipped_mass += -ev(i);
    } else {
      positive_mass += ev(i);
    }
  }
  res.clipped_fraction = trace > 0.0 ? res.clipped_mass / trace : 0.0;
  if (res.clipped_fraction > opt.max_clipped_fraction) {
    throw ModelMismatchError("diagonal split discarded " + std::to_string(res.clipped_fraction) +
                                 " of the trace; input is likely not a Gram-de Finetti sample",
                             res.clipped_fraction);
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = ev.size() - 1; i >= 0; --i) {
    if (!(ev(i) > 0.0)) break;
    if (opt.rank ? keep.size() >= opt.rank : ev(i) < opt.rank_share * positive_mass) break;
    keep.push_back(i);
  }
  const std::size_t r = opt.rank ? opt.rank : keep.size();

  FeatureCloud& cloud = res.cloud;
  cloud.r = r;
  cloud.provenance = Provenance::recovered;
  cloud.points.resize(n);
  for (auto& p : cloud.points) p.h.assign(r, 0.0);
  for (std::size_t c = 0; c < keep.size(); ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(keep[c]);
    canonicalize_sign(v);
    const double root = std::sqrt(ev(keep[c]));
    for (std::size_t l = 0; l < n; ++l) cloud.points[l].h[c] = v(static_cast<Eigen::Index>(l)) * root;
  }
  const double a_tol = opt.a_tol_relative * a.max_diagonal();
  for (std::size_t l = 0; l < n; ++l) {
    auto& p = cloud.points[l];
    p.t = a.diagonal(l);
    p.a = p.t - p.norm_sq();
    if (p.a < 0.0 && p.a >= -a_tol) {
      p.a = 0.0;
      ++res.clamped;
    }
  }
  return res;
}

// psi_N(h, t) = (h min((N/t)^{1/2}, 1), min(N, t)).
inline FeaturePoint truncate_point(const FeaturePoint& p, double N) {
  if (!(N > 0.0)) throw DomainError("truncation level N must be positive");
  if (p.t < 0.0) throw DomainError("negative total t");
  if (p.t == 0.0 && std::any_of(p.h.begin(), p.h.end(), [](double v) { return v != 0.0; })) {
    throw DomainError("t = 0 with nonzero feature vector");
  }
  if (p.t <= N) return p;
  const double f = std::sqrt(N / p.t);
  FeaturePoint out{p.h, N, 0.0};
  for (double& v : out.h) v *= f;
  out.a = out.t - out.norm_sq();
  return out;
}

inline FeatureCloud truncate_features(const FeatureCloud& c, double N) {
  FeatureCloud out{c.r, {}, c.provenance};
  out.points.reserve(c.size());
  for (const auto& p : c.points) out.points.push_back(truncate_point(p, N));
  return out;
}

// Re-expresses the points in the orthonormal basis produced by Gram-Schmidt on
// the point sequence, so point l lies in the span of the first l axes and the
// triangular factor has a positive diagonal.
inline FeatureCloud canonicalize(const FeatureCloud& c) {
  const std::size_t r = c.r;
  double scale = 0.0;
  for (const auto& p : c.points) scale = std::max(scale, std::sqrt(p.norm_sq()));
  const double eps = 1e-12 * scale;

  std::vector<Eigen::VectorXd> basis;
  FeatureCloud out{r, {}, c.provenance};
  out.points.reserve(c.size());
  for (const auto& p : c.points) {
    const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(p.h.data(), static_cast<Eigen::Index>(r));
    std::vector<double> coords(r, 0.0);
    Eigen::VectorXd resid = x;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t b = 0; b < basis.size(); ++b) {
        const double d = basis[b].dot(resid);
        coords[b] += d;
        resid -= d * basis[b];
      }
    }
    const double rn = resid.norm();
    if (rn > eps && basis.size() < r) {
      coords[basis.size()] = rn;
      basis.push_back(resid / rn);
    }
    FeaturePoint q{std::move(coords), p.t, 0.0};
    q.a = p.a;
    out.points.push_back(std::move(q));
  }
  return out;
}

}  // namespace gdf
