#pragma once

// Spectral factorization of a PSD grid kernel,
//   k(x, y) = sum_l lambda_l phi_l(x) phi_l(y),
// and the feature map x -> (sqrt(lambda_l) phi_l(x))_l.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "gdf/dyadic.hpp"
#include "gdf/error.hpp"

namespace gdf {

inline constexpr double kDefaultRankThreshold = 1e-12;
inline constexpr double kDefaultNegativeTolerance = 1e-8;
inline constexpr double kClusterGap = 1e-8;

struct SpectralDecomposition {
  DyadicLevel level;
  std::vector<double> eigenvalues;             // descending, all > 0
  std::vector<GridFunction1D> eigenfunctions;  // orthonormal in L^2([0,1])
  double clipped_mass = 0.0;    // |sum| of negative eigenvalues within tolerance
  double discarded_mass = 0.0;  // sum of nonnegative eigenvalues below the rank threshold
  // cluster[l] is shared by eigenvalues whose relative gap is below kClusterGap.
  std::vector<std::size_t> cluster;

  std::size_t rank() const noexcept { return eigenvalues.size(); }

  bool has_degenerate_clusters() const {
    for (std::size_t l = 1; l < cluster.size(); ++l) {
      if (cluster[l] == cluster[l - 1]) return true;
    }
    return false;
  }
};

// Sign convention: the largest-magnitude component (lowest index on ties) is positive.
inline void canonicalize_sign(Eigen::Ref<Eigen::VectorXd> v) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (std::abs(v(i)) > std::abs(v(best))) best = i;
  }
  if (v(best) < 0.0) v = -v;
}

// rank_threshold is relative to lambda_1; negative_tolerance relative to the
// spectral radius.
inline SpectralDecomposition decompose(const GridKernel& k,
                                       double rank_threshold = kDefaultRankThreshold,
                                       double negative_tolerance = kDefaultNegativeTolerance) {
  const auto n = static_cast<Eigen::Index>(k.cells());
  const double w = k.level().width();
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      a(i, j) = k(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) * w;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success) throw Error("symmetric eigensolver did not converge");
  const Eigen::VectorXd& ev = es.eigenvalues();  // ascending
  const double radius = std::max(std::abs(ev(0)), std::abs(ev(n - 1)));
  if (ev(0) < -negative_tolerance * radius) {
    throw NotPsdError("kernel not PSD: lambda_min = " + std::to_string(ev(0)), ev(0));
  }

  SpectralDecomposition s;
  s.level = k.level();
  const double top = std::max(ev(n - 1), 0.0);
  const double cutoff = rank_threshold * top;
  const double scale = std::sqrt(static_cast<double>(n));  // 2^{m/2}
  for (Eigen::Index idx = n - 1; idx >= 0; --idx) {
    const double lambda = ev(idx);
    if (lambda < 0.0) {
      s.clipped_mass += -lambda;
    } else if (lambda <= cutoff || lambda == 0.0) {
      s.discarded_mass += lambda;
    } else {
      Eigen::VectorXd v = es.eigenvectors().col(idx);
      canonicalize_sign(v);
      std::vector<double> vals(static_cast<std::size_t>(n));
      for (Eigen::Index i = 0; i < n; ++i) vals[static_cast<std::size_t>(i)] = v(i) * scale;
      s.eigenvalues.push_back(lambda);
      s.eigenfunctions.emplace_back(k.level(), std::move(vals));
    }
  }
  s.cluster.resize(s.rank());
  for (std::size_t l = 1; l < s.rank(); ++l) {
    const double gap = (s.eigenvalues[l - 1] - s.eigenvalues[l]) / s.eigenvalues.front();
    s.cluster[l] = gap < kClusterGap ? s.cluster[l - 1] : s.cluster[l - 1] + 1;
  }
  return s;
}

// Component l is sqrt(lambda_l) phi_l evaluated on the cell containing x.
inline std::vector<double> feature_map(const SpectralDecomposition& s, double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("feature_map argument must lie in [0,1]");
  const std::size_t cell = s.level.cell_of(x);
  std::vector<double> out(s.rank());
  for (std::size_t l = 0; l < s.rank(); ++l) {
    out[l] = std::sqrt(s.eigenvalues[l]) * s.eigenfunctions[l][cell];
  }
  return out;
}

// Feature vectors of every cell as rows of a (2^m x r) matrix.
inline Eigen::MatrixXd feature_matrix(const SpectralDecomposition& s) {
  const auto cells = static_cast<Eigen::Index>(s.level.cells());
  Eigen::MatrixXd f(cells, static_cast<Eigen::Index>(s.rank()));
  for (std::size_t l = 0; l < s.rank(); ++l) {
    const double root = std::sqrt(s.eigenvalues[l]);
    for (Eigen::Index i = 0; i < cells; ++i) {
      f(i, static_cast<Eigen::Index>(l)) = root * s.eigenfunctions[l][static_cast<std::size_t>(i)];
    }
  }
  return f;
}

// Rank-r kernel sum_l lambda_l phi_l(x) phi_l(y) on the grid.
inline GridKernel reconstruct(const SpectralDecomposition& s) {
  const Eigen::MatrixXd f = feature_matrix(s);
  const Eigen::MatrixXd g = f * f.transpose();
  GridKernel out(s.level);
  for (std::size_t i = 0; i < s.level.cells(); ++i) {
    for (std::size_t j = i; j < s.level.cells(); ++j) {
      out.set(i, j, g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    }
  }
  return out;
}

inline double l2_norm(const GridKernel& k) {
  double s = 0.0;
  for (double v : k.values()) s += v * v;
  return std::sqrt(s) * k.level().width();
}

// Cell-measure L^2 norm of k minus the rank-r reconstruction.
inline double reconstruction_error(const SpectralDecomposition& s, const GridKernel& k) {
  if (s.level != k.level()) throw ConfigError("decomposition and kernel have different levels");
  const GridKernel rec = reconstruct(s);
  double acc = 0.0;
  for (std::size_t i = 0; i < k.values().size(); ++i) {
    const double d = k.values()[i] - rec.values()[i];
    acc += d * d;
  }
  return std::sqrt(acc) * k.level().width();
}

// max_{l,j} |<phi_l, phi_j> - delta_lj|
inline double orthonormality_residual(const SpectralDecomposition& s) {
  double worst = 0.0;
  const double w = s.level.width();
  for (std::size_t a = 0; a < s.rank(); ++a) {
    for (std::size_t b = a; b < s.rank(); ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < s.level.cells(); ++i) {
        dot += s.eigenfunctions[a][i] * s.eigenfunctions[b][i];
      }
      worst = std::max(worst, std::abs(dot * w - (a == b ? 1.0 : 0.0)));
    }
  }
  return worst;
}

struct UnitBallResult {
  double max_norm_sq = 0.0;
  std::size_t argmax_cell = 0;
  bool pass = false;
};

// Checks sup_x |phi(x)|^2 <= bound + tol over grid cells.
inline UnitBallResult unit_ball_check(const SpectralDecomposition& s, double bound = 1.0,
                                      double tol = 1e-6) {
  if (!(bound > 0.0)) throw ConfigError("unit ball bound must be positive");
  UnitBallResult r;
  for (std::size_t i = 0; i < s.level.cells(); ++i) {
    double norm_sq = 0.0;
    for (std::size_t l = 0; l < s.rank(); ++l) {
      const double phi = s.eigenfunctions[l][i];
      norm_sq += s.eigenvalues[l] * phi * phi;
    }
    if (norm_sq > r.max_norm_sq) {
      r.max_norm_sq = norm_sq;
      r.argmax_cell = i;
    }
  }
  r.pass = r.max_norm_sq <= bound + tol;
  return r;
}

}  // namespace gdf
