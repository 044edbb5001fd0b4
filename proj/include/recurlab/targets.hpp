#pragma once

// Shrinking targets on the torus: coordinate boxes and hyperboloids around a
// centre, their volumes, and radius/delta schedules with a divergence class
// known in closed form.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "recurlab/errors.hpp"
#include "recurlab/polygon.hpp"
#include "recurlab/torus_maps.hpp"

namespace recurlab {

/// Nearest-integer distance |a - b| on the circle, in [0, 1/2].
inline Real circle_distance(Real a, Real b) {
  Real t = std::fmod(a - b, Real(1));
  if (t < 0) t += 1;
  return std::min(t, 1 - t);
}

/// Coordinate-i torus distance. Two lattice points with the same modulus are
/// compared exactly in integers before the single final division.
inline Real torus_distance(const TorusPoint& a, const TorusPoint& b, std::size_t i) {
  if (a.is_lattice() && b.is_lattice() && a.as_lattice().modulus == b.as_lattice().modulus) {
    const u64 p = a.as_lattice().modulus;
    const u64 x = a.as_lattice().numerators[i], y = b.as_lattice().numerators[i];
    const u64 diff = x >= y ? x - y : y - x;
    return static_cast<Real>(std::min(diff, p - diff)) / static_cast<Real>(p);
  }
  if (!a.is_lattice() || !b.is_lattice()) {
    // Subtract in MPFR so that close high-precision points keep their digits.
    const mpfr_prec_t bits = 128;
    BigFloat diff = a.coord_big(i, bits) - b.coord_big(i, bits);
    diff.reduce_mod1();
    const Real t = diff.to_long_double();
    return std::min(t, 1 - t);
  }
  return circle_distance(a.coord(i), b.coord(i));
}

inline void check_same_dim(const TorusPoint& a, const TorusPoint& b) {
  if (a.dim() != b.dim()) throw DomainError("target and point dimensions differ");
}

struct RectTarget {
  TorusPoint center;
  std::vector<Real> radii;

  RectTarget(TorusPoint c, std::vector<Real> r) : center(std::move(c)), radii(std::move(r)) {
    if (radii.size() != center.dim()) throw DomainError("radius vector has the wrong dimension");
    for (auto& v : radii) {
      if (v < 0) throw DomainError("radii must be non-negative");
      v = std::min<Real>(v, 0.5L);
    }
  }

  bool contains(const TorusPoint& y) const {
    check_same_dim(center, y);
    for (std::size_t i = 0; i < radii.size(); ++i) {
      // Radius 1/2 covers the whole circle, including the antipode.
      if (radii[i] >= 0.5L) continue;
      if (!(torus_distance(y, center, i) < radii[i])) return false;
    }
    return true;
  }
};

struct HyperboloidTarget {
  TorusPoint center;
  Real delta = 0;

  HyperboloidTarget(TorusPoint c, Real d) : center(std::move(c)), delta(d) {
    if (delta < 0) throw DomainError("delta must be non-negative");
  }

  bool contains(const TorusPoint& y) const {
    check_same_dim(center, y);
    Real prod = 1;
    for (std::size_t i = 0; i < center.dim(); ++i) prod *= torus_distance(y, center, i);
    return prod < delta;
  }
};

inline bool rect_contains(const RectTarget& t, const TorusPoint& y) { return t.contains(y); }
inline bool hyperboloid_contains(const HyperboloidTarget& t, const TorusPoint& y) { return t.contains(y); }

/// Lebesgue measure of { z : prod ||z_i|| < delta } in [0,1)^d.
inline Real hyperboloid_volume(std::size_t d, Real delta) {
  if (d < 1) throw DomainError("dimension must be at least 1");
  if (delta < 0) throw DomainError("delta must be non-negative");
  const Real cap = std::ldexp(Real(1), -static_cast<int>(d));
  if (delta >= cap) return 1;
  if (delta == 0) return 0;
  const Real u = std::log(1 / (delta / cap));  // log(1/(2^d delta)) > 0
  Real term = 1, sum = 1;
  for (std::size_t t = 1; t < d; ++t) {
    term *= u / static_cast<Real>(t);
    sum += term;
  }
  return std::min<Real>(1, delta / cap * sum);
}

struct VolumeEstimate {
  Real estimate = 0;
  Real sigma = 0;  // binomial standard error
  std::size_t samples = 0;
};

/// Monte Carlo counterpart of hyperboloid_volume (uniform points, centre 0).
inline VolumeEstimate hyperboloid_volume_mc(std::size_t d, Real delta, std::size_t samples, u64 seed) {
  if (d < 1) throw DomainError("dimension must be at least 1");
  if (samples == 0) throw DomainError("need at least one sample");
  auto rng = make_rng(seed, d, /*stream=*/5);
  std::size_t inside = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    Real prod = 1;
    for (std::size_t i = 0; i < d; ++i) {
      const Real u = uniform01(rng);
      prod *= std::min(u, 1 - u);
    }
    inside += prod < delta;
  }
  VolumeEstimate e;
  e.samples = samples;
  e.estimate = static_cast<Real>(inside) / static_cast<Real>(samples);
  e.sigma = std::sqrt(e.estimate * (1 - e.estimate) / static_cast<Real>(samples));
  return e;
}

/// delta (-log delta)^(d-1), the summand of the hyperboloid divergence test.
inline Real log_weighted_delta(std::size_t d, Real delta) {
  if (delta <= 0) return 0;
  const Real l = std::max<Real>(0, -std::log(delta));
  return delta * std::pow(l, static_cast<Real>(d - 1));
}

struct VolumeBounds {
  std::optional<Real> lower;
  Real upper = 0;
  /// Bound for the enlarged target delta + c0 n^-3 (set when n and c0 are given).
  std::optional<Real> perturbed_upper;
  std::optional<Real> perturbed_volume;
};

inline VolumeBounds hyperboloid_volume_bounds(std::size_t d, Real delta, std::optional<Real> r = std::nullopt,
                                              std::optional<long> n = std::nullopt,
                                              std::optional<Real> c0 = std::nullopt) {
  if (d < 1) throw DomainError("dimension must be at least 1");
  if (!(delta > 0 && delta < 1)) throw DomainError("volume bounds need 0 < delta < 1");
  VolumeBounds b;
  const Real w = log_weighted_delta(d, delta);
  b.upper = static_cast<Real>(d) * std::ldexp(Real(1), static_cast<int>(d)) * w;
  if (r) {
    if (!(std::pow(*r, static_cast<Real>(d)) > std::sqrt(delta)))
      throw DomainError("lower bound needs r^d > sqrt(delta)");
    b.lower = 2 / std::tgamma(static_cast<Real>(d)) * w;
  }
  if (n && c0) {
    if (*n < 1 || *c0 < 0) throw DomainError("perturbation needs n >= 1 and c0 >= 0");
    b.perturbed_upper = 2 * b.upper;
    const Real nn = static_cast<Real>(*n);
    b.perturbed_volume = hyperboloid_volume(d, delta + *c0 / (nn * nn * nn));
  }
  return b;
}

// ---------------------------------------------------------------------------
// Schedules

enum class Divergence { Divergent, Convergent, Undetermined };

inline std::string to_string(Divergence v) {
  switch (v) {
    case Divergence::Divergent:
      return "divergent";
    case Divergence::Convergent:
      return "convergent";
    default:
      return "undetermined";
  }
}

enum class ScheduleKind { Radius, Delta };

/// n -> r_n in (R>=0)^d or n -> delta_n, indexed from n = 1.
class Schedule {
 public:
  struct Params {
    std::string family;
    std::size_t dim = 1;
    std::vector<Real> scale;     // c or c_i
    std::vector<Real> exponent;  // alpha or alpha_i
    Real beta = 0;               // log-corrected delta exponent
    long cutoff = 0;             // last non-zero index for const-then-zero
    std::vector<std::vector<Real>> radius_table;
    std::vector<Real> delta_table;
  };

  static Schedule build(Params p) {
    Schedule s;
    s.params_ = std::move(p);
    s.classify();
    return s;
  }

  ScheduleKind kind() const { return kind_; }
  const Params& params() const { return params_; }
  const std::string& family() const { return params_.family; }
  std::size_t dim() const { return params_.dim; }
  Divergence declared_divergence() const { return divergence_; }
  bool aspect_bounded() const { return aspect_bounded_; }
  /// sup |r_n| / |r_n|_min when finite.
  std::optional<Real> aspect_sup() const { return aspect_sup_; }
  bool thresholded() const { return thresholded_; }

  std::vector<Real> radius(long n) const {
    if (kind_ != ScheduleKind::Radius) throw DomainError("not a radius schedule");
    if (n < 1) throw DomainError("schedules start at n = 1");
    const std::size_t d = params_.dim;
    std::vector<Real> r(d, 0);
    const Real nn = static_cast<Real>(n);
    const auto& f = params_.family;
    if (f == "rect-power") {
      for (std::size_t i = 0; i < d; ++i) r[i] = params_.scale[i] * std::pow(nn, -params_.exponent[i]);
    } else if (f == "rect-isotropic") {
      std::fill(r.begin(), r.end(), params_.scale[0] * std::pow(nn, -params_.exponent[0]));
    } else if (f == "rect-const-then-zero") {
      if (n <= params_.cutoff) r = params_.scale;
    } else if (static_cast<std::size_t>(n) <= params_.radius_table.size()) {
      r = params_.radius_table[n - 1];
    }
    if (thresholded_) {
      const Real floor = 1 / (nn * nn);
      if (*std::min_element(r.begin(), r.end()) <= floor) std::fill(r.begin(), r.end(), 0);
    }
    return r;
  }

  Real delta(long n) const {
    if (kind_ != ScheduleKind::Delta) throw DomainError("not a delta schedule");
    if (n < 1) throw DomainError("schedules start at n = 1");
    const Real nn = static_cast<Real>(n);
    const auto& f = params_.family;
    if (f == "delta-log") return params_.scale[0] / (nn * std::pow(std::log(nn + 2), params_.beta));
    if (f == "delta-power") return params_.scale[0] * std::pow(nn, -params_.exponent[0]);
    if (f == "delta-const-then-zero") return n <= params_.cutoff ? params_.scale[0] : 0;
    return static_cast<std::size_t>(n) <= params_.delta_table.size() ? params_.delta_table[n - 1] : 0;
  }

  /// Zero r_n unless every coordinate exceeds n^-2.
  Schedule thresholded_copy() const {
    if (kind_ != ScheduleKind::Radius) throw DomainError("thresholding applies to radius schedules");
    Schedule s = *this;
    s.thresholded_ = true;
    return s;
  }

 private:
  void require(bool ok, const std::string& what) const {
    if (!ok) throw ConfigError(params_.family + ": " + what);
  }

  void classify() {
    auto& p = params_;
    const auto& f = p.family;
    require(p.dim >= 1, "dimension must be at least 1");
    for (Real v : p.scale) require(v >= 0, "negative scale");
    for (Real v : p.exponent) require(v >= 0, "negative exponent");
    require(p.beta >= 0, "negative beta");
    require(p.cutoff >= 0, "negative cutoff");

    if (f.rfind("rect-", 0) == 0) {
      kind_ = ScheduleKind::Radius;
    } else if (f.rfind("delta-", 0) == 0) {
      kind_ = ScheduleKind::Delta;
    } else {
      throw ConfigError("unknown schedule family '" + f + "'");
    }

    const std::size_t d = p.dim;
    if (f == "rect-power") {
      require(p.scale.size() == d && p.exponent.size() == d, "needs d scales and d exponents");
      for (Real a : p.exponent) require(a > 0, "exponents must be positive for radii to shrink");
      Real total = 0;
      bool any_zero = false;
      for (std::size_t i = 0; i < d; ++i) {
        total += p.exponent[i];
        any_zero |= p.scale[i] == 0;
      }
      divergence_ = any_zero ? Divergence::Convergent : (total <= 1 ? Divergence::Divergent : Divergence::Convergent);
      const bool same_rate = std::all_of(p.exponent.begin(), p.exponent.end(),
                                         [&](Real a) { return a == p.exponent[0]; });
      if (same_rate && !any_zero) {
        aspect_bounded_ = true;
        aspect_sup_ = *std::max_element(p.scale.begin(), p.scale.end()) /
                      *std::min_element(p.scale.begin(), p.scale.end());
      }
    } else if (f == "rect-isotropic") {
      require(p.scale.size() == 1 && p.exponent.size() == 1, "needs one scale and one exponent");
      require(p.exponent[0] > 0, "exponent must be positive for radii to shrink");
      divergence_ = p.scale[0] > 0 && p.exponent[0] * static_cast<Real>(d) <= 1 ? Divergence::Divergent
                                                                                 : Divergence::Convergent;
      aspect_bounded_ = true;
      aspect_sup_ = 1;
    } else if (f == "rect-const-then-zero") {
      require(p.scale.size() == d, "needs d radii");
      divergence_ = Divergence::Convergent;
      const Real mn = *std::min_element(p.scale.begin(), p.scale.end());
      if (mn > 0) {
        aspect_bounded_ = true;
        aspect_sup_ = *std::max_element(p.scale.begin(), p.scale.end()) / mn;
      }
    } else if (f == "rect-table") {
      for (const auto& row : p.radius_table) {
        require(row.size() == d, "table row has the wrong dimension");
        for (Real v : row) require(v >= 0, "negative radius in table");
      }
      divergence_ = Divergence::Undetermined;
      Real sup = 0;
      bool ok = true;
      for (const auto& row : p.radius_table) {
        const Real mn = *std::min_element(row.begin(), row.end());
        const Real mx = *std::max_element(row.begin(), row.end());
        if (mx == 0) continue;
        if (mn == 0) ok = false;
        else sup = std::max(sup, mx / mn);
      }
      aspect_bounded_ = ok;
      if (ok) aspect_sup_ = sup;
    } else if (f == "delta-log") {
      require(p.scale.size() == 1, "needs one scale");
      // sum delta (-log delta)^(d-1) ~ sum (log n)^(d-1-beta) / n
      divergence_ = p.scale[0] > 0 && p.beta <= static_cast<Real>(d) ? Divergence::Divergent : Divergence::Convergent;
    } else if (f == "delta-power") {
      require(p.scale.size() == 1 && p.exponent.size() == 1, "needs one scale and one exponent");
      require(p.exponent[0] > 0, "exponent must be positive for delta to shrink");
      divergence_ = p.scale[0] > 0 && p.exponent[0] <= 1 ? Divergence::Divergent : Divergence::Convergent;
    } else if (f == "delta-const-then-zero") {
      require(p.scale.size() == 1, "needs one scale");
      divergence_ = Divergence::Convergent;
    } else if (f == "delta-table") {
      for (Real v : p.delta_table) require(v >= 0, "negative delta in table");
      divergence_ = Divergence::Undetermined;
    } else {
      throw ConfigError("unknown schedule family '" + f + "'");
    }
  }

  Params params_;
  ScheduleKind kind_ = ScheduleKind::Radius;
  Divergence divergence_ = Divergence::Undetermined;
  bool aspect_bounded_ = false;
  std::optional<Real> aspect_sup_;
  bool thresholded_ = false;
};

inline Schedule build_schedule(Schedule::Params p) { return Schedule::build(std::move(p)); }
inline Schedule threshold_schedule(const Schedule& s) { return s.thresholded_copy(); }

struct PartialSums {
  /// Sum of prod r_{n,i}, or of delta_n (-log delta_n)^(d-1).
  std::vector<Real> volume;
  /// Sum of the Lebesgue measures of the targets.
  std::vector<Real> measure;
};

inline Real target_measure(const Schedule& s, long n) {
  if (s.kind() == ScheduleKind::Delta) return hyperboloid_volume(s.dim(), s.delta(n));
  Real m = 1;
  for (Real r : s.radius(n)) m *= std::min<Real>(2 * r, 1);
  return m;
}

inline Real volume_term(const Schedule& s, long n) {
  if (s.kind() == ScheduleKind::Delta) return log_weighted_delta(s.dim(), s.delta(n));
  Real v = 1;
  for (Real r : s.radius(n)) v *= r;
  return v;
}

inline PartialSums volume_partial_sums(const Schedule& s, long N) {
  if (N < 1) throw DomainError("N must be at least 1");
  PartialSums out;
  Real v = 0, m = 0;
  for (long n = 1; n <= N; ++n) {
    v += volume_term(s, n);
    m += target_measure(s, n);
    out.volume.push_back(v);
    out.measure.push_back(m);
  }
  return out;
}

}  // namespace recurlab
