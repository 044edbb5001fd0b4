#pragma once

// Invariant densities (Ulam's method), empirical mixing rates, density bounds
// and the radius rescaling that gives a box a prescribed mu-measure.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "recurlab/errors.hpp"
#include "recurlab/numeric.hpp"
#include "recurlab/partition_geometry.hpp"
#include "recurlab/targets.hpp"
#include "recurlab/torus_maps.hpp"

namespace recurlab {

/// Anything with dim() and a double-precision forward step.
template <typename M>
concept DoubleStepMap = requires(const M& m, const double* x, double* y) {
  { m.dim() } -> std::convertible_to<std::size_t>;
  m.apply_double(x, y);
};

struct DensityGrid {
  std::size_t dim = 1;
  std::size_t resolution = 1;  // cells per axis
  std::vector<Real> masses;    // row-major, first coordinate slowest
  std::size_t iterations = 0;
  Real residual = 0;

  std::size_t cells() const { return masses.size(); }
  Real density(std::size_t cell) const { return masses[cell] * static_cast<Real>(cells()); }

  static DensityGrid lebesgue(std::size_t d, std::size_t res) {
    DensityGrid g;
    g.dim = d;
    g.resolution = res;
    std::size_t n = 1;
    for (std::size_t i = 0; i < d; ++i) n *= res;
    g.masses.assign(n, Real(1) / static_cast<Real>(n));
    return g;
  }

  std::size_t cell_of(const double* x) const {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < dim; ++i)
      idx = idx * resolution +
            std::min(resolution - 1, static_cast<std::size_t>(x[i] * static_cast<double>(resolution)));
    return idx;
  }
};

namespace detail {

inline bool power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

}  // namespace detail

/// Discretized transfer operator: samples_per_cell points in each cell (a
/// shifted k^d lattice) are pushed forward once; the stationary vector of the
/// lazy chain (I + P)/2 is found by power iteration.
template <DoubleStepMap M>
DensityGrid ulam_density(const M& map, std::size_t resolution, u64 seed, std::size_t samples_per_cell = 64,
                         Real tol = 1e-10L, std::size_t max_iterations = 10000) {
  if constexpr (requires { map.expanding(); }) {
    if (!map.expanding()) throw DomainError("ulam_density requires an expanding-certified map");
  }
  if (!detail::power_of_two(resolution)) throw DomainError("resolution must be a power of 2");
  const std::size_t d = map.dim();
  const std::size_t cells = detail::ipow(resolution, d);
  std::size_t k = 1;
  while (detail::ipow(k + 1, d) <= samples_per_cell) ++k;
  const std::size_t per_cell = detail::ipow(k, d);

  auto rng = make_rng(seed, 0, /*stream=*/21);
  std::vector<double> shift(d);
  for (auto& s : shift) s = uniform01(rng);

  DensityGrid grid;
  grid.dim = d;
  grid.resolution = resolution;
  // transitions[c] = sorted (target, count)
  std::vector<std::vector<std::pair<std::size_t, Real>>> transitions(cells);
  std::vector<double> x(d), y(d);
  std::vector<std::size_t> cell_coord(d), sub(d);
  const double h = 1.0 / static_cast<double>(resolution);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rest = c;
    for (std::size_t i = d; i-- > 0;) {
      cell_coord[i] = rest % resolution;
      rest /= resolution;
    }
    std::vector<std::size_t> targets;
    targets.reserve(per_cell);
    for (std::size_t s = 0; s < per_cell; ++s) {
      std::size_t r = s;
      for (std::size_t i = d; i-- > 0;) {
        sub[i] = r % k;
        r /= k;
      }
      for (std::size_t i = 0; i < d; ++i)
        x[i] = (static_cast<double>(cell_coord[i]) + (static_cast<double>(sub[i]) + shift[i]) / static_cast<double>(k)) * h;
      map.apply_double(x.data(), y.data());
      targets.push_back(grid.cell_of(y.data()));
    }
    std::sort(targets.begin(), targets.end());
    for (std::size_t i = 0; i < targets.size();) {
      std::size_t j = i;
      while (j < targets.size() && targets[j] == targets[i]) ++j;
      transitions[c].push_back({targets[i], static_cast<Real>(j - i) / static_cast<Real>(per_cell)});
      i = j;
    }
  }

  std::vector<Real> m(cells, Real(1) / static_cast<Real>(cells)), next(cells);
  Real change = 0;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    for (std::size_t c = 0; c < cells; ++c) next[c] = m[c] / 2;
    for (std::size_t c = 0; c < cells; ++c)
      for (const auto& [t, w] : transitions[c]) next[t] += m[c] * w / 2;
    Real total = 0;
    for (Real v : next) total += v;
    change = 0;
    for (std::size_t c = 0; c < cells; ++c) {
      next[c] /= total;
      change += std::abs(next[c] - m[c]);
    }
    m.swap(next);
    if (change < tol) {
      grid.masses = std::move(m);
      grid.iterations = it;
      grid.residual = change;
      return grid;
    }
  }
  throw NumericalFailure("Ulam power iteration did not converge", static_cast<double>(change));
}

// ---------------------------------------------------------------------------

struct DensityBoundReport {
  Real h_max = 0;
  Real h_min = 0;
  /// Smallest c with 1/c <= h <= c; absent when some cell has h <= 0.
  std::optional<Real> c;
  bool bounded = false;
};

inline DensityBoundReport density_bound_check(const DensityGrid& grid) {
  DensityBoundReport rep;
  rep.h_max = 0;
  rep.h_min = INFINITY;
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    rep.h_max = std::max(rep.h_max, grid.density(c));
    rep.h_min = std::min(rep.h_min, grid.density(c));
  }
  if (rep.h_min > 0) {
    rep.c = std::max({Real(1), rep.h_max, 1 / rep.h_min});
    rep.bounded = true;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// mu-measure of a torus box and the scaled radius

namespace detail {

/// Length of [a, b) intersected with the arc (c - w, c + w) on the circle.
inline Real arc_overlap(Real a, Real b, Real c, Real w) {
  if (w >= Real(0.5)) return b - a;
  Real lo = c - w, total = 0;
  for (int shift = -1; shift <= 1; ++shift) {
    const Real l = lo + shift, u = l + 2 * w;
    total += std::max<Real>(0, std::min(b, u) - std::max(a, l));
  }
  return total;
}

}  // namespace detail

/// mu(R(center, radii)) for the piecewise-constant density on the grid.
inline Real grid_box_measure(const DensityGrid& grid, const std::vector<Real>& center, const std::vector<Real>& radii) {
  const std::size_t d = grid.dim, res = grid.resolution;
  const Real h = Real(1) / static_cast<Real>(res);
  std::vector<std::vector<Real>> frac(d, std::vector<Real>(res));
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < res; ++j)
      frac[i][j] = detail::arc_overlap(j * h, (j + 1) * h, center[i], radii[i]) / h;
  Real total = 0;
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t c = 0; c < grid.cells(); ++c) {
    Real w = grid.masses[c];
    for (std::size_t i = 0; i < d && w != 0; ++i) w *= frac[i][idx[i]];
    total += w;
    for (std::size_t i = d; i-- > 0;) {
      if (++idx[i] < res) break;
      idx[i] = 0;
    }
  }
  return total;
}

struct ScaledRadius {
  Real l = 0;
  Real achieved_measure = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Find l with mu(R(center, l r)) = target by bisection; rel_tol bounds both
/// the measure residual and the relative error in l.
inline ScaledRadius solve_scaled_radius(const DensityGrid& grid, const std::vector<Real>& center,
                                        const std::vector<Real>& r, Real target, Real rel_tol = 1e-9L,
                                        std::size_t max_iterations = 200) {
  if (target > 1) throw DomainError("target measure exceeds 1");
  if (target < 0) throw DomainError("target measure must be non-negative");
  if (center.size() != grid.dim || r.size() != grid.dim) throw DomainError("dimension mismatch");
  for (Real v : r)
    if (!(v > 0)) throw DomainError("radii must be positive");
  ScaledRadius out;
  if (target == 0) {
    out.converged = true;
    return out;
  }
  Real lo = 0, hi = 0;
  for (Real v : r) hi = std::max(hi, 1 / (2 * v));
  auto measure_at = [&](Real l) {
    std::vector<Real> scaled(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) scaled[i] = l * r[i];
    return grid_box_measure(grid, center, scaled);
  };
  const Real tol = rel_tol * target;
  for (std::size_t it = 1; it <= max_iterations; ++it) {
    const Real mid = (lo + hi) / 2;
    const Real m = measure_at(mid);
    out.iterations = it;
    out.l = mid;
    out.achieved_measure = m;
    // the root lies in [lo, hi], so the bracket bounds the error in l
    if (std::abs(m - target) <= tol && hi - lo <= rel_tol * mid) {
      out.converged = true;
      return out;
    }
    (m < target ? lo : hi) = mid;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mixing

/// Half-open box lo <= x < hi.
inline bool box_contains(const Box& b, const double* x) {
  for (std::size_t i = 0; i < b.lo.size(); ++i)
    if (!(x[i] >= b.lo[i] && x[i] < b.hi[i])) return false;
  return true;
}

inline Box box_intersection(const Box& a, const Box& b) {
  Box out{a.lo, a.hi};
  for (std::size_t i = 0; i < a.lo.size(); ++i) {
    out.lo[i] = std::max(a.lo[i], b.lo[i]);
    out.hi[i] = std::max(out.lo[i], std::min(a.hi[i], b.hi[i]));
  }
  return out;
}

/// The 2^d dyadic half-space boxes and two random boxes; every ordered pair.
inline std::vector<std::pair<Box, Box>> default_pair_family(std::size_t d, u64 seed) {
  std::vector<Box> boxes;
  for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
    Box b{std::vector<Real>(d), std::vector<Real>(d)};
    for (std::size_t i = 0; i < d; ++i) {
      const bool upper = (mask >> i) & 1;
      b.lo[i] = upper ? 0.5L : 0;
      b.hi[i] = upper ? 1 : 0.5L;
    }
    boxes.push_back(b);
  }
  auto rng = make_rng(seed, 0, /*stream=*/22);
  for (int r = 0; r < 2; ++r) {
    Box b{std::vector<Real>(d), std::vector<Real>(d)};
    for (std::size_t i = 0; i < d; ++i) {
      Real u = uniform01(rng), v = uniform01(rng);
      if (u > v) std::swap(u, v);
      b.lo[i] = u;
      b.hi[i] = std::max(v, u + 0.05L);
      b.hi[i] = std::min<Real>(b.hi[i], 1);
    }
    boxes.push_back(b);
  }
  std::vector<std::pair<Box, Box>> pairs;
  for (const auto& f : boxes)
    for (const auto& g : boxes) pairs.push_back({f, g});
  return pairs;
}

struct MixingProfile {
  std::vector<long> lags;
  std::vector<Real> phi_hat;
  std::optional<Real> c;
  std::optional<Real> tau;
  Real noise_floor = 0;
  std::size_t usable_lags = 0;
  std::string confidence;
  bool exponential = false, polynomial = false, summable = false;
  bool exact_marginals = false;
};

namespace detail {

/// Draw x from the density grid (uniform inside a cell chosen by mass).
inline void sample_from_grid(const DensityGrid& g, std::mt19937_64& rng, const std::vector<Real>& cumulative,
                             std::vector<double>& x) {
  const Real u = uniform01(rng);
  std::size_t c = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
  c = std::min(c, g.cells() - 1);
  const double h = 1.0 / static_cast<double>(g.resolution);
  for (std::size_t i = g.dim; i-- > 0;) {
    x[i] = (static_cast<double>(c % g.resolution) + uniform01(rng)) * h;
    c /= g.resolution;
  }
}

inline void fit_exponential(MixingProfile& p) {
  std::vector<std::pair<Real, Real>> pts;
  for (std::size_t i = 0; i < p.lags.size(); ++i)
    if (p.lags[i] >= 1 && p.phi_hat[i] > p.noise_floor) pts.push_back({static_cast<Real>(p.lags[i]), std::log(p.phi_hat[i])});
  p.usable_lags = pts.size();
  if (pts.size() < 2) {
    p.confidence = pts.empty() ? "all lags below the noise floor; fit omitted"
                               : "one usable lag; fit omitted";
    return;
  }
  Real sx = 0, sy = 0, sxx = 0, sxy = 0;
  const Real n = static_cast<Real>(pts.size());
  for (auto [x, y] : pts) {
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const Real slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const Real intercept = (sy - slope * sx) / n;
  p.tau = -slope;
  p.c = std::exp(intercept);
  p.confidence = pts.size() < 3 ? "low: fewer than 3 usable lags" : "ok";
  const bool decays = *p.tau > 0;
  p.exponential = p.polynomial = p.summable = decays;
}

}  // namespace detail

/// phi_hat(n) = max over pairs |mu(F & T^-n G) - mu(F) mu(G)| / mu(G).
/// Integer maps: x is an exact lattice point of a 61-bit prime grid and the
/// marginals (and lag 0) are exact Lebesgue volumes. Other maps: x is drawn
/// from `density` (Lebesgue when absent) and iterated in MPFR.
inline MixingProfile estimate_mixing(const MatrixTorusMap& map, const std::vector<std::pair<Box, Box>>& pairs,
                                     const std::vector<long>& lags, std::size_t samples, u64 seed,
                                     const DensityGrid* density = nullptr) {
  if (samples < 100000) throw DomainError("estimate_mixing needs at least 1e5 samples");
  if (pairs.empty() || lags.empty()) throw DomainError("need at least one pair and one lag");
  for (long n : lags)
    if (n < 0) throw DomainError("lags must be non-negative");
  const std::size_t d = map.dim();
  for (const auto& [f, g] : pairs)
    if (f.lo.size() != d || g.lo.size() != d) throw DomainError("pair boxes have the wrong dimension");
  const long max_lag = *std::max_element(lags.begin(), lags.end());
  const bool exact = map.is_integer() && density == nullptr;

  MixingProfile prof;
  prof.lags = lags;
  prof.noise_floor = 3 / std::sqrt(static_cast<Real>(samples));
  prof.exact_marginals = exact;

  const std::size_t P = pairs.size();
  std::vector<std::size_t> in_f(P, 0), in_g(P, 0);
  std::vector<std::vector<std::size_t>> joint(static_cast<std::size_t>(max_lag) + 1, std::vector<std::size_t>(P, 0));
  std::vector<double> x0(d), xn(d);

  std::vector<Real> cumulative;
  if (density) {
    if (density->dim != d) throw DomainError("density grid has the wrong dimension");
    Real acc = 0;
    for (Real m : density->masses) cumulative.push_back(acc += m);
  }

  std::optional<u64> prime;
  std::vector<u64> t_mod;
  std::vector<BigFloat> t_big;
  PrecisionBudget budget;
  if (exact) {
    auto rng = make_rng(seed, 0, /*stream=*/23);
    prime = random_prime(61, rng);
    t_mod = detail::reduced_matrix(map, *prime);
  } else {
    budget = required_precision(map, max_lag);
    t_big = map.evaluate(budget.bits_required);
  }
  const double cost = detail::step_cost_bits(map);

  std::vector<u64> k(d), scratch;
  for (std::size_t s = 0; s < samples; ++s) {
    auto rng = make_rng(seed, s, /*stream=*/24);
    FloatPoint fp;
    if (exact) {
      std::uniform_int_distribution<u64> dist(0, *prime - 1);
      for (std::size_t i = 0; i < d; ++i) {
        k[i] = dist(rng);
        x0[i] = static_cast<double>(static_cast<Real>(k[i]) / static_cast<Real>(*prime));
      }
    } else {
      if (density)
        detail::sample_from_grid(*density, rng, cumulative, x0);
      else
        for (auto& v : x0) v = uniform01(rng);
      fp.precision_bits = static_cast<unsigned>(budget.bits_required);
      fp.accuracy_bits = fp.precision_bits;
      fp.guard_bits = budget.guard_bits;
      for (double v : x0) fp.coords.emplace_back(v, fp.precision_bits);
    }
    std::vector<bool> f_hit(P);
    for (std::size_t q = 0; q < P; ++q) {
      f_hit[q] = box_contains(pairs[q].first, x0.data());
      in_f[q] += f_hit[q];
      in_g[q] += box_contains(pairs[q].second, x0.data());
    }
    for (long n = 0; n <= max_lag; ++n) {
      if (n > 0) {
        if (exact) {
          detail::lattice_step(t_mod, d, *prime, k, scratch);
          for (std::size_t i = 0; i < d; ++i)
            xn[i] = static_cast<double>(static_cast<Real>(k[i]) / static_cast<Real>(*prime));
        } else {
          detail::float_step(t_big, d, fp, cost);
          for (std::size_t i = 0; i < d; ++i) xn[i] = fp.coords[i].to_double();
        }
      } else {
        xn = x0;
      }
      for (std::size_t q = 0; q < P; ++q)
        if (f_hit[q] && box_contains(pairs[q].second, xn.data())) ++joint[n][q];
    }
  }

  const Real M = static_cast<Real>(samples);
  for (long n : lags) {
    Real best = 0;
    for (std::size_t q = 0; q < P; ++q) {
      const auto& [f, g] = pairs[q];
      const Real mf = exact ? f.measure() : in_f[q] / M;
      const Real mg = exact ? g.measure() : in_g[q] / M;
      if (mg <= 0) continue;
      Real mfg = joint[n][q] / M;
      if (exact && n == 0) mfg = box_intersection(f, g).measure();
      best = std::max(best, std::abs(mfg - mf * mg) / mg);
    }
    prof.phi_hat.push_back(best);
  }
  detail::fit_exponential(prof);
  return prof;
}

}  // namespace recurlab
