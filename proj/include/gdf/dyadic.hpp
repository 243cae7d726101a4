#pragma once

// Piecewise-constant functions on [0,1] and [0,1]^2 over dyadic partitions.
// Values are cell averages, so coarsening is an exact conditional expectation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gdf/error.hpp"

namespace gdf {

inline constexpr unsigned kDefaultLevel = 8;
inline constexpr unsigned kMaxLevel = 24;

// Resolution of a dyadic partition: 2^m cells per axis, cell i covering
// [i 2^-m, (i+1) 2^-m).
class DyadicLevel {
 public:
  constexpr DyadicLevel() = default;
  explicit DyadicLevel(unsigned m, unsigned cap = kMaxLevel) : m_(m) {
    if (m > cap) {
      throw ResolutionError("dyadic level " + std::to_string(m) + " exceeds cap " +
                            std::to_string(cap));
    }
  }

  constexpr unsigned m() const noexcept { return m_; }
  constexpr std::size_t cells() const noexcept { return std::size_t{1} << m_; }
  constexpr double width() const noexcept { return std::ldexp(1.0, -static_cast<int>(m_)); }
  constexpr double lower(std::size_t i) const noexcept { return static_cast<double>(i) * width(); }
  constexpr double upper(std::size_t i) const noexcept { return static_cast<double>(i + 1) * width(); }
  constexpr double midpoint(std::size_t i) const noexcept {
    return (static_cast<double>(i) + 0.5) * width();
  }

  // Cell containing x; x = 1 is assigned to the last cell.
  std::size_t cell_of(double x) const noexcept {
    if (!(x > 0.0)) return 0;
    const auto i = static_cast<std::size_t>(std::floor(std::ldexp(x, static_cast<int>(m_))));
    return std::min(i, cells() - 1);
  }

  friend constexpr bool operator==(DyadicLevel, DyadicLevel) = default;

 private:
  unsigned m_ = 0;
};

class GridFunction1D {
 public:
  GridFunction1D() = default;
  explicit GridFunction1D(DyadicLevel level, double fill = 0.0)
      : level_(level), values_(level.cells(), fill) {}
  GridFunction1D(DyadicLevel level, std::vector<double> values)
      : level_(level), values_(std::move(values)) {
    if (values_.size() != level_.cells()) {
      throw DataError("grid function length " + std::to_string(values_.size()) +
                      " does not match 2^" + std::to_string(level_.m()));
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw DataError("grid function has a non-finite value");
    }
  }

  DyadicLevel level() const noexcept { return level_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  double at(double x) const { return values_[level_.cell_of(x)]; }

  double integral() const {
    double s = 0.0;
    for (double v : values_) s += v;
    return s * level_.width();
  }

  friend bool operator==(const GridFunction1D&, const GridFunction1D&) = default;

 private:
  DyadicLevel level_{};
  std::vector<double> values_{0.0};
};

// Symmetric kernel stored as cell-pair averages, row-major.
class GridKernel {
 public:
  GridKernel() = default;
  explicit GridKernel(DyadicLevel level, double fill = 0.0)
      : level_(level), values_(level.cells() * level.cells(), fill) {}

  // Validates shape, finiteness and exact symmetry.
  GridKernel(DyadicLevel level, std::vector<double> values)
      : level_(level), values_(std::move(values)) {
    const std::size_t n = level_.cells();
    if (values_.size() != n * n) {
      throw DataError("grid kernel has " + std::to_string(values_.size()) +
                      " values, expected " + std::to_string(n * n));
    }
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double v = values_[i * n + j];
        if (!std::isfinite(v)) throw DataError("grid kernel has a non-finite value");
        if (v != values_[j * n + i]) {
          throw DataError("grid kernel is not symmetric at (" + std::to_string(i) + "," +
                          std::to_string(j) + ")");
        }
      }
    }
  }

  DyadicLevel level() const noexcept { return level_; }
  std::size_t cells() const noexcept { return level_.cells(); }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cells() + j]; }
  std::span<const double> values() const noexcept { return values_; }

  // Writes v at (i,j) and (j,i).
  void set(std::size_t i, std::size_t j, double v) {
    values_[i * cells() + j] = v;
    values_[j * cells() + i] = v;
  }

  double at(double x, double y) const {
    return (*this)(level_.cell_of(x), level_.cell_of(y));
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  friend bool operator==(const GridKernel&, const GridKernel&) = default;

 private:
  DyadicLevel level_{};
  std::vector<double> values_{0.0};
};

// Conditional expectation onto a coarser dyadic sigma-algebra.
inline GridKernel dyadic_project(const GridKernel& k, DyadicLevel target) {
  if (target.m() > k.level().m()) {
    throw ResolutionError("cannot project level " + std::to_string(k.level().m()) +
                          " onto finer level " + std::to_string(target.m()));
  }
  if (target == k.level()) return k;
  const std::size_t ratio = k.cells() / target.cells();
  const std::size_t nt = target.cells();
  const double inv = 1.0 / static_cast<double>(ratio * ratio);
  GridKernel out(target);
  for (std::size_t I = 0; I < nt; ++I) {
    for (std::size_t J = I; J < nt; ++J) {
      double s = 0.0;
      for (std::size_t a = 0; a < ratio; ++a) {
        for (std::size_t b = 0; b < ratio; ++b) s += k(I * ratio + a, J * ratio + b);
      }
      out.set(I, J, s * inv);
    }
  }
  return out;
}

inline GridFunction1D dyadic_project(const GridFunction1D& f, DyadicLevel target) {
  if (target.m() > f.level().m()) {
    throw ResolutionError("cannot project level " + std::to_string(f.level().m()) +
                          " onto finer level " + std::to_string(target.m()));
  }
  if (target == f.level()) return f;
  const std::size_t ratio = f.size() / target.cells();
  GridFunction1D out(target);
  for (std::size_t I = 0; I < target.cells(); ++I) {
    double s = 0.0;
    for (std::size_t a = 0; a < ratio; ++a) s += f[I * ratio + a];
    out[I] = s / static_cast<double>(ratio);
  }
  return out;
}

// Copies each cell value into the finer cells it covers.
inline GridKernel refine(const GridKernel& k, DyadicLevel target) {
  if (target.m() < k.level().m()) return dyadic_project(k, target);
  if (target == k.level()) return k;
  const std::size_t ratio = target.cells() / k.cells();
  const std::size_t n = target.cells();
  GridKernel out(target);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) out.set(i, j, k(i / ratio, j / ratio));
  }
  return out;
}

inline GridFunction1D refine(const GridFunction1D& f, DyadicLevel target) {
  if (target.m() < f.level().m()) return dyadic_project(f, target);
  if (target == f.level()) return f;
  const std::size_t ratio = target.cells() / f.size();
  GridFunction1D out(target);
  for (std::size_t i = 0; i < target.cells(); ++i) out[i] = f[i / ratio];
  return out;
}

// Double integral over [0,1]^2, i.e. the mean cell value.
inline double integrate(const GridKernel& k) {
  const std::size_t n = k.cells();
  std::vector<double> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += k(i, j);
    rows[i] = s;
  }
  double total = 0.0;
  for (double r : rows) total += r;
  return total / static_cast<double>(n * n);
}

}  // namespace gdf
