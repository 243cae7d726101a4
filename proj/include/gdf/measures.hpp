#pragma once

// Equal-weight empirical measures on R^r x R+: pushforward under psi_N,
// restriction to A_N = {t < N}, the consistency tower, orthogonal alignment,
// and exact W2 transport distance.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gdf/assignment.hpp"
#include "gdf/error.hpp"
#include "gdf/mercer.hpp"
#include "gdf/recovery.hpp"
#include "gdf/report.hpp"
#include "gdf/rng.hpp"

namespace gdf {

struct Atom {
  std::vector<double> h;
  double t = 0.0;
};

// Each atom carries weight 1 / base_count; restriction drops atoms but keeps
// the weights, so the total mass can be below one.
struct EmpiricalMeasure {
  std::size_t r = 0;
  std::vector<Atom> atoms;
  std::size_t base_count = 0;

  double weight() const { return base_count ? 1.0 / static_cast<double>(base_count) : 0.0; }
  double mass() const { return static_cast<double>(atoms.size()) * weight(); }
  std::size_t size() const noexcept { return atoms.size(); }
};

inline EmpiricalMeasure from_cloud(const FeatureCloud& c) {
  if (c.points.empty()) throw ConfigError("cannot build a measure from an empty cloud");
  EmpiricalMeasure mu{c.r, {}, c.size()};
  mu.atoms.reserve(c.size());
  for (const auto& p : c.points) {
    if (p.t < 0.0) throw DomainError("measure atoms need t >= 0");
    mu.atoms.push_back({p.h, p.t});
  }
  return mu;
}

inline FeatureCloud to_cloud(const EmpiricalMeasure& mu, Provenance provenance = Provenance::recovered) {
  FeatureCloud c{mu.r, {}, provenance};
  c.points.reserve(mu.size());
  for (const auto& a : mu.atoms) {
    FeaturePoint p{a.h, a.t, 0.0};
    p.a = p.t - p.norm_sq();
    c.points.push_back(std::move(p));
  }
  return c;
}

// Image measure under psi_N; weights unchanged.
inline EmpiricalMeasure pushforward(const EmpiricalMeasure& mu, double N) {
  EmpiricalMeasure out{mu.r, {}, mu.base_count};
  out.atoms.reserve(mu.size());
  for (const auto& a : mu.atoms) {
    const auto p = truncate_point(FeaturePoint{a.h, a.t, 0.0}, N);
    out.atoms.push_back({p.h, p.t});
  }
  return out;
}

// Restriction to A_N = R^r x [0, N).
inline EmpiricalMeasure restrict(const EmpiricalMeasure& mu, double N) {
  EmpiricalMeasure out{mu.r, {}, mu.base_count};
  for (const auto& a : mu.atoms) {
    if (a.t < N) out.atoms.push_back(a);
  }
  return out;
}

namespace detail {

// Size of a maximum matching between atoms that agree coordinate-wise within tol.
inline std::size_t tolerant_match(const std::vector<Atom>& a, const std::vector<Atom>& b, double tol) {
  std::vector<std::size_t> order(b.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&b](std::size_t x, std::size_t y) { return b[x].t < b[y].t; });
  std::vector<double> sorted_t(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) sorted_t[i] = b[order[i]].t;

  std::vector<std::vector<std::size_t>> adj(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto lo = std::lower_bound(sorted_t.begin(), sorted_t.end(), a[i].t - tol);
    for (auto it = lo; it != sorted_t.end() && *it <= a[i].t + tol; ++it) {
      const std::size_t j = order[static_cast<std::size_t>(it - sorted_t.begin())];
      if (a[i].h.size() != b[j].h.size()) continue;
      bool close = true;
      for (std::size_t k = 0; k < a[i].h.size() && close; ++k) {
        close = std::abs(a[i].h[k] - b[j].h[k]) <= tol;
      }
      if (close) adj[i].push_back(j);
    }
  }

  std::vector<std::size_t> match_b(b.size(), SIZE_MAX), match_a(a.size(), SIZE_MAX);
  std::size_t matched = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j : adj[i]) {
      if (match_b[j] == SIZE_MAX) {
        match_b[j] = i;
        match_a[i] = j;
        ++matched;
        break;
      }
    }
  }
  // Kuhn augmenting paths for whatever the greedy pass left unmatched.
  std::vector<char> seen(b.size());
  auto augment = [&](auto&& self, std::size_t i) -> bool {
    for (std::size_t j : adj[i]) {
      if (seen[j]) continue;
      seen[j] = 1;
      if (match_b[j] == SIZE_MAX || self(self, match_b[j])) {
        match_b[j] = i;
        match_a[i] = j;
        return true;
      }
    }
    return false;
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (match_a[i] != SIZE_MAX) continue;
    std::fill(seen.begin(), seen.end(), 0);
    if (augment(augment, i)) ++matched;
  }
  return matched;
}

}  // namespace detail

struct ConsistencyResult {
  TestReport report;
  std::vector<double> defects;  // defects[k] compares levels k and k+1
  EmpiricalMeasure stitched;    // sum_k eta_{N_k} restricted to [N_{k-1}, N_k), plus top-level remainder
};

// Checks pushforward(eta_{N_{k+1}}, N_k) == eta_{N_k} as multisets within tol
// per coordinate. The defect at a level is the unmatched weight.
inline ConsistencyResult consistency_check(const std::vector<std::pair<double, EmpiricalMeasure>>& tower,
                                           double tol) {
  if (tower.empty()) throw ConfigError("empty truncation tower");
  for (std::size_t k = 0; k < tower.size(); ++k) {
    if (tower[k].second.r != tower[0].second.r) throw ConfigError("tower levels have mismatched dimensions");
    if (k > 0 && !(tower[k].first > tower[k - 1].first)) {
      throw ConfigError("tower levels must be strictly increasing");
    }
  }
  ConsistencyResult res;
  res.report.name = "consistency";
  res.report.threshold = 0.0;
  res.report.replicates = tower.size();
  nlohmann::json failing = nlohmann::json::array();
  for (std::size_t k = 0; k + 1 < tower.size(); ++k) {
    const auto& lower = tower[k].second;
    const auto pushed = pushforward(tower[k + 1].second, tower[k].first);
    const std::size_t matched = detail::tolerant_match(lower.atoms, pushed.atoms, tol);
    const std::size_t total = std::max(lower.size(), pushed.size());
    const double defect = static_cast<double>(total - matched) * lower.weight();
    res.defects.push_back(defect);
    res.report.statistic = std::max(res.report.statistic, defect);
    if (defect > 0.0) failing.push_back({{"level", k}, {"N", tower[k].first}, {"defect", defect}});
  }
  res.report.pass = res.report.statistic <= res.report.threshold;
  res.report.details["defects"] = res.defects;
  res.report.details["failing_levels"] = failing;
  res.report.details["tol"] = tol;

  const auto& base = tower.front().second;
  res.stitched = EmpiricalMeasure{base.r, {}, base.base_count};
  double below = -1.0;
  for (const auto& [N, mu] : tower) {
    for (const auto& a : mu.atoms) {
      if (a.t >= below && a.t < N) res.stitched.atoms.push_back(a);
    }
    below = N;
  }
  for (const auto& a : tower.back().second.atoms) {
    if (a.t >= tower.back().first) res.stitched.atoms.push_back(a);
  }
  res.report.details["stitched_mass"] = res.stitched.mass();
  return res;
}

// Orthogonal map on R^r (reflections allowed).
struct OrthogonalMap {
  Eigen::MatrixXd q;

  static OrthogonalMap identity(std::size_t r) {
    return {Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r))};
  }

  double orthogonality_residual() const {
    return (q.transpose() * q - Eigen::MatrixXd::Identity(q.rows(), q.cols())).cwiseAbs().maxCoeff();
  }

  std::vector<double> apply(const std::vector<double>& h) const {
    const Eigen::VectorXd x = q * Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<Eigen::Index>(h.size()));
    return {x.data(), x.data() + x.size()};
  }
};

inline EmpiricalMeasure apply(const OrthogonalMap& q, const EmpiricalMeasure& mu) {
  EmpiricalMeasure out = mu;
  for (auto& a : out.atoms) a.h = q.apply(a.h);
  return out;
}

inline Eigen::MatrixXd h_rows(const EmpiricalMeasure& mu) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(mu.size()), static_cast<Eigen::Index>(mu.r));
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (std::size_t k = 0; k < mu.r; ++k) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = mu.atoms[i].h[k];
    }
  }
  return m;
}

// argmax_q tr(q^T M) over orthogonal q. On the null space of M the map is
// chosen closest to the identity, so q = I whenever the two sides agree.
inline Eigen::MatrixXd polar_orthogonal(const Eigen::MatrixXd& m) {
  const Eigen::Index r = m.rows();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  Eigen::Index k = 0;
  const double cutoff = r ? 1e-12 * s(0) : 0.0;
  while (k < r && s(k) > cutoff) ++k;
  const Eigen::MatrixXd& u = svd.matrixU();
  const Eigen::MatrixXd& v = svd.matrixV();
  Eigen::MatrixXd q = u.leftCols(k) * v.leftCols(k).transpose();
  if (k < r) {
    const Eigen::MatrixXd uc = u.rightCols(r - k);
    const Eigen::MatrixXd vc = v.rightCols(r - k);
    Eigen::JacobiSVD<Eigen::MatrixXd> inner(uc.transpose() * vc, Eigen::ComputeFullU | Eigen::ComputeFullV);
    q += uc * inner.matrixU() * inner.matrixV().transpose() * vc.transpose();
  }
  return q;
}

struct AlignmentResult {
  OrthogonalMap q;
  double residual = 0.0;  // sum_i |q h_i - h'_{sigma(i)}|^2
  std::size_t iterations = 0;
  std::vector<std::size_t> matching;  // sigma; identity in paired mode
};

inline constexpr std::size_t kAlignMaxIterations = 50;
inline constexpr std::size_t kAlignRestarts = 5;

namespace detail {

inline double paired_residual(const Eigen::MatrixXd& q, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a * q.transpose() - b).squaredNorm();
}

inline Eigen::MatrixXd transport_costs(const Eigen::MatrixXd& a, const std::vector<double>& ta,
                                       const Eigen::MatrixXd& b, const std::vector<double>& tb) {
  const Eigen::Index n = a.rows();
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double dt = ta[static_cast<std::size_t>(i)] - tb[static_cast<std::size_t>(j)];
      c(i, j) = (a.row(i) - b.row(j)).squaredNorm() + dt * dt;
    }
  }
  return c;
}

inline std::vector<double> totals(const EmpiricalMeasure& mu) {
  std::vector<double> t;
  t.reserve(mu.size());
  for (const auto& a : mu.atoms) t.push_back(a.t);
  return t;
}

}  // namespace detail

// Paired mode: closed-form orthogonal Procrustes on corresponding atoms.
// Unpaired mode: heuristic alternation of exact assignment and Procrustes from
// second-moment-matched starts (kAlignRestarts sign patterns, at most
// kAlignMaxIterations rounds each); the best objective found is returned.
inline AlignmentResult procrustes_align(const EmpiricalMeasure& from, const EmpiricalMeasure& to,
                                        bool paired, std::uint64_t seed = 0) {
  if (from.r != to.r) throw ConfigError("alignment needs measures of the same dimension");
  if (from.size() != to.size()) throw ConfigError("alignment needs measures with equal atom counts");
  const std::size_t n = from.size();
  const Eigen::MatrixXd a = h_rows(from);
  const Eigen::MatrixXd b = h_rows(to);
  AlignmentResult best;
  if (paired || from.r == 0) {
    best.q.q = polar_orthogonal(b.transpose() * a);
    best.residual = detail::paired_residual(best.q.q, a, b);
    best.iterations = 1;
    best.matching.resize(n);
    std::iota(best.matching.begin(), best.matching.end(), std::size_t{0});
    return best;
  }

  const auto r = static_cast<Eigen::Index>(from.r);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ea(a.transpose() * a);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eb(b.transpose() * b);
  Eigen::MatrixXd va = ea.eigenvectors(), vb = eb.eigenvectors();
  for (Eigen::Index c = 0; c < r; ++c) {
    canonicalize_sign(va.col(c));
    canonicalize_sign(vb.col(c));
  }
  const auto ta = detail::totals(from), tb = detail::totals(to);
  double best_cost = std::numeric_limits<double>::infinity();
  for (std::size_t restart = 0; restart < kAlignRestarts; ++restart) {
    Eigen::VectorXd signs = Eigen::VectorXd::Ones(r);
    if (restart > 0) {
      CounterRng gen(rng::derive(seed, {rng::kStageAlignment, restart}));
      for (Eigen::Index c = 0; c < r; ++c) signs(c) = (gen() & 1u) ? -1.0 : 1.0;
    }
    Eigen::MatrixXd q = vb * signs.asDiagonal() * va.transpose();
    std::vector<std::size_t> matching;
    Assignment asg;
    std::size_t it = 0;
    for (; it < kAlignMaxIterations; ++it) {
      asg = solve_assignment(detail::transport_costs(a * q.transpose(), ta, b, tb));
      if (asg.column_of_row == matching) break;
      matching = asg.column_of_row;
      Eigen::MatrixXd bm(static_cast<Eigen::Index>(n), r);
      for (std::size_t i = 0; i < n; ++i) bm.row(static_cast<Eigen::Index>(i)) = b.row(static_cast<Eigen::Index>(matching[i]));
      q = polar_orthogonal(bm.transpose() * a);
    }
    if (asg.cost < best_cost) {
      best_cost = asg.cost;
      best.q.q = q;
      best.iterations = it + 1;
      best.matching = matching;
      Eigen::MatrixXd bm(static_cast<Eigen::Index>(n), r);
      for (std::size_t i = 0; i < n; ++i) bm.row(static_cast<Eigen::Index>(i)) = b.row(static_cast<Eigen::Index>(matching[i]));
      best.residual = detail::paired_residual(q, a, bm);
    }
  }
  return best;
}

// Exact W2 between equal-size equal-weight measures, Euclidean metric on (h, t).
inline double wasserstein2(const EmpiricalMeasure& x, const EmpiricalMeasure& y) {
  if (x.size() != y.size()) {
    throw ConfigError("wasserstein2 needs equal atom counts; resample the inputs first");
  }
  if (x.r != y.r) throw ConfigError("wasserstein2 needs measures of the same dimension");
  if (x.size() == 0) return 0.0;
  const auto cost = detail::transport_costs(h_rows(x), detail::totals(x), h_rows(y), detail::totals(y));
  const auto asg = solve_assignment(cost);
  return std::sqrt(std::max(asg.cost, 0.0) / static_cast<double>(x.size()));
}

}  // namespace gdf
