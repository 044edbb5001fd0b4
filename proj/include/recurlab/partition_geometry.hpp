#pragma once

// Piece families {U_i} and cylinders of matrix torus maps, plus boundary
// (Minkowski) content measurements.
//
// A piece is labelled by the integer translate k of the unit cell that its
// image lands in: U_k = { x in [0,1)^d : k <= x T < k + 1 }, and T acts on it
// as the affine branch x -> x T - k. A cylinder of order n carries the
// composed branch x -> x T^n - s, so every further refinement is one more
// batch of half-space constraints.
//
// Three exact representations are used:
//   d = 1       intervals (any real slope);
//   d = 2       convex polygons clipped in long double (any real matrix);
//   any d       integer constraint systems for integer matrices, with
//               non-emptiness decided by Fourier-Motzkin elimination.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "recurlab/errors.hpp"
#include "recurlab/numeric.hpp"
#include "recurlab/polygon.hpp"
#include "recurlab/torus_maps.hpp"

namespace recurlab {

/// Minkowski content of a rectifiable curve in the plane is c_M times its
/// length under the m_d(A(eps))/eps normalization.
inline constexpr Real kMinkowskiConstant = 2;

struct Interval {
  Real lo = 0, hi = 0;
  Real length() const { return hi - lo; }
};

/// Strict integer constraint a . x < c.
struct IntConstraint {
  std::vector<i64> a;
  i64 c = 0;
  friend bool operator<(const IntConstraint& l, const IntConstraint& r) {
    return std::tie(l.a, l.c) < std::tie(r.a, r.c);
  }
};

struct CellSystem {
  std::vector<IntConstraint> constraints;
};

using Region = std::variant<Interval, Polygon2, CellSystem>;

/// x -> x M - s, valid on the region it is attached to.
struct AffineBranch {
  detail::MatrixLd matrix;
  std::vector<Real> shift;
  std::vector<i64> int_matrix;  // row-major, integer path only
  std::vector<i64> int_shift;
};

enum class PartitionKind { Interval, Polygon, IntegerCells };

struct Piece {
  std::vector<i64> translate;
  Region region;
  std::optional<Real> measure;
};

struct PartitionFamily {
  PartitionKind kind = PartitionKind::Polygon;
  std::size_t dim = 0;
  std::vector<Piece> pieces;
  std::size_t Q = 0;
  /// Max boundary content over pieces (an upper bound for IntegerCells).
  Real K_bound = 0;
  std::vector<std::string> warnings;
};

struct Cylinder {
  std::vector<std::size_t> word;
  Region region;
  AffineBranch branch;
  std::optional<Real> measure;
  std::size_t order() const { return word.size(); }
};

enum class PartitionMethod { Auto, Symbolic };

namespace detail {

inline i64 gcd_abs(i64 a, i64 b) { return std::gcd(a < 0 ? -a : a, b < 0 ? -b : b); }

inline i64 narrow(i128 v) {
  if (v > static_cast<i128>(INT64_MAX) || v < static_cast<i128>(INT64_MIN))
    throw NumericalFailure("integer constraint coefficients overflowed");
  return static_cast<i64>(v);
}

inline void normalize(IntConstraint& k) {
  i64 g = k.c;
  for (i64 v : k.a) g = gcd_abs(g, v);
  if (g > 1) {
    for (auto& v : k.a) v /= g;
    k.c /= g;
  }
}

/// Does { x : a_i . x < c_i for all i } have a solution? Fourier-Motzkin
/// elimination; strictness is inherited by every combination.
inline bool strict_system_feasible(std::vector<IntConstraint> rows, std::size_t dim) {
  for (std::size_t var = 0; var < dim; ++var) {
    std::vector<IntConstraint> pos, neg, next;
    for (auto& r : rows) {
      if (r.a[var] > 0)
        pos.push_back(r);
      else if (r.a[var] < 0)
        neg.push_back(r);
      else
        next.push_back(r);
    }
    for (const auto& p : pos) {
      for (const auto& q : neg) {
        const i128 wp = -static_cast<i128>(q.a[var]);
        const i128 wq = p.a[var];
        IntConstraint comb;
        comb.a.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) comb.a[j] = narrow(wp * p.a[j] + wq * q.a[j]);
        comb.c = narrow(wp * p.c + wq * q.c);
        normalize(comb);
        next.push_back(std::move(comb));
      }
    }
    // Keep only the tightest bound per direction.
    std::map<std::vector<i64>, i64> tightest;
    for (auto& r : next) {
      auto [it, inserted] = tightest.emplace(r.a, r.c);
      if (!inserted) it->second = std::min(it->second, r.c);
    }
    rows.clear();
    for (auto& [a, c] : tightest) {
      if (std::all_of(a.begin(), a.end(), [](i64 v) { return v == 0; })) {
        if (c <= 0) return false;
        continue;
      }
      rows.push_back({a, c});
    }
  }
  return true;
}

/// s_j < (x M)_j < s_j + 1 for every j, as strict integer constraints.
inline void push_cell_constraints(std::vector<IntConstraint>& out, const std::vector<i64>& m,
                                  const std::vector<i64>& s, std::size_t d) {
  for (std::size_t j = 0; j < d; ++j) {
    IntConstraint upper, lower;
    upper.a.resize(d);
    lower.a.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      upper.a[i] = m[i * d + j];
      lower.a[i] = -m[i * d + j];
    }
    upper.c = narrow(static_cast<i128>(s[j]) + 1);
    lower.c = -s[j];
    out.push_back(upper);
    out.push_back(lower);
  }
}

inline std::vector<i64> int_matmul(const std::vector<i64>& a, const std::vector<i64>& b, std::size_t d) {
  std::vector<i64> out(d * d, 0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      i128 acc = 0;
      for (std::size_t k = 0; k < d; ++k) acc += static_cast<i128>(a[i * d + k]) * b[k * d + j];
      out[i * d + j] = narrow(acc);
    }
  return out;
}

/// Row vector s times matrix m, plus k.
inline std::vector<i64> int_shift_step(const std::vector<i64>& s, const std::vector<i64>& m,
                                       const std::vector<i64>& k, std::size_t d) {
  std::vector<i64> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    i128 acc = k[j];
    for (std::size_t i = 0; i < d; ++i) acc += static_cast<i128>(s[i]) * m[i * d + j];
    out[j] = narrow(acc);
  }
  return out;
}

inline std::vector<i64> int_identity(std::size_t d) {
  std::vector<i64> id(d * d, 0);
  for (std::size_t i = 0; i < d; ++i) id[i * d + i] = 1;
  return id;
}

/// Integer translates k whose unit cell can meet the image of [0,1)^d.
inline std::vector<std::vector<i64>> candidate_translates(const MatrixTorusMap& map) {
  const std::size_t d = map.dim();
  std::vector<i64> lo(d), hi(d);
  for (std::size_t j = 0; j < d; ++j) {
    Real mn = 0, mx = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const Real v = map.entry(i, j);
      (v < 0 ? mn : mx) += v;
    }
    lo[j] = static_cast<i64>(std::floor(mn));
    hi[j] = static_cast<i64>(std::ceil(mx)) - 1;
  }
  std::vector<std::vector<i64>> out;
  std::vector<i64> cur(lo);
  for (;;) {
    out.push_back(cur);
    std::size_t j = 0;
    while (j < d && ++cur[j] > hi[j]) {
      cur[j] = lo[j];
      ++j;
    }
    if (j == d) break;
  }
  return out;
}

/// Half-planes s_j <= (x M)_j <= s_j + 1 for a 2x2 real branch.
inline std::vector<HalfPlane> cell_halfplanes(const MatrixLd& m, const std::vector<Real>& s) {
  std::vector<HalfPlane> hs;
  for (int j = 0; j < 2; ++j) {
    const Vec2 col{m(0, j), m(1, j)};
    hs.push_back({col, s[j] + 1});
    hs.push_back({-1 * col, -s[j]});
  }
  return hs;
}

inline Real region_diameter(const Region& r) {
  if (const auto* iv = std::get_if<Interval>(&r)) return iv->length();
  if (const auto* pg = std::get_if<Polygon2>(&r)) return pg->diameter();
  return std::numeric_limits<Real>::quiet_NaN();
}

}  // namespace detail

inline PartitionFamily compute_pieces(const MatrixTorusMap& map, PartitionMethod method = PartitionMethod::Auto) {
  if (!map.expanding()) throw DomainError("compute_pieces requires an expanding-certified map");
  const std::size_t d = map.dim();
  PartitionFamily fam;
  fam.dim = d;
  const bool symbolic = method == PartitionMethod::Symbolic || d > 2;
  if (symbolic && !map.is_integer())
    throw UnsupportedDimension("exact partitions beyond d = 2 need an integer matrix");

  const auto candidates = detail::candidate_translates(map);
  if (symbolic) {
    fam.kind = PartitionKind::IntegerCells;
    std::vector<i64> t(d * d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) t[i * d + j] = map.int_entry(i, j);
    const auto id = detail::int_identity(d);
    const std::vector<i64> zero(d, 0);
    for (const auto& k : candidates) {
      CellSystem sys;
      detail::push_cell_constraints(sys.constraints, id, zero, d);
      detail::push_cell_constraints(sys.constraints, t, k, d);
      if (detail::strict_system_feasible(sys.constraints, d)) fam.pieces.push_back({k, std::move(sys), std::nullopt});
    }
    // A convex body inside the unit cube has smaller surface area than the cube.
    fam.K_bound = kMinkowskiConstant * 2 * static_cast<Real>(d);
  } else if (d == 1) {
    fam.kind = PartitionKind::Interval;
    const Real t = map.entry(0, 0);
    for (const auto& k : candidates) {
      Real a = static_cast<Real>(k[0]) / t, b = static_cast<Real>(k[0] + 1) / t;
      if (a > b) std::swap(a, b);
      Interval iv{std::max<Real>(a, 0), std::min<Real>(b, 1)};
      if (iv.length() > kSliverArea) {
        fam.pieces.push_back({k, iv, iv.length()});
      } else if (iv.length() > 0) {
        fam.warnings.push_back("DegeneracyWarning: sliver interval dropped");
      }
    }
    // Two boundary points, each of content 2 under the /eps convention.
    fam.K_bound = 4;
  } else {
    fam.kind = PartitionKind::Polygon;
    const auto& m = map.values();
    for (const auto& k : candidates) {
      const std::vector<Real> s{static_cast<Real>(k[0]), static_cast<Real>(k[1])};
      Polygon2 poly = Polygon2::unit_square().clip(detail::cell_halfplanes(m, s));
      const Real area = poly.vertices().size() >= 3 ? poly.area() : 0;
      if (area > kSliverArea) {
        fam.K_bound = std::max(fam.K_bound, kMinkowskiConstant * poly.perimeter());
        fam.pieces.push_back({k, std::move(poly), area});
      } else if (area > 0) {
        fam.warnings.push_back("DegeneracyWarning: sliver piece of area " + std::to_string(static_cast<double>(area)) +
                               " merged");
      }
    }
  }
  fam.Q = fam.pieces.size();
  return fam;
}

inline AffineBranch piece_branch(const MatrixTorusMap& map, const Piece& piece) {
  const std::size_t d = map.dim();
  AffineBranch b;
  b.matrix = map.values();
  b.shift.assign(piece.translate.begin(), piece.translate.end());
  if (map.is_integer()) {
    b.int_matrix.resize(d * d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) b.int_matrix[i * d + j] = map.int_entry(i, j);
    b.int_shift = piece.translate;
  }
  return b;
}

/// All non-empty cylinders of order n, sorted lexicographically by word.
inline std::vector<Cylinder> refine_cylinders(const MatrixTorusMap& map, const PartitionFamily& fam, std::size_t n) {
  if (n < 1) throw DomainError("cylinder order must be at least 1");
  const std::size_t d = map.dim();
  constexpr Real kMinDiameter = 1e-12L;
  // Cylinders shrink by at most op_norm per step; refuse before enumerating.
  if (std::pow(map.op_norm_2(), static_cast<Real>(n)) > 1 / kMinDiameter)
    throw RefinementLimit("cylinders of this order are below the 1e-12 diameter floor");

  std::vector<Cylinder> level;
  for (std::size_t i = 0; i < fam.pieces.size(); ++i)
    level.push_back({{i}, fam.pieces[i].region, piece_branch(map, fam.pieces[i]), fam.pieces[i].measure});

  std::vector<i64> t;
  if (fam.kind == PartitionKind::IntegerCells) {
    t.resize(d * d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) t[i * d + j] = map.int_entry(i, j);
  }

  for (std::size_t order = 1; order < n; ++order) {
    std::vector<Cylinder> next;
    for (const auto& cyl : level) {
      const detail::MatrixLd m_next = cyl.branch.matrix * map.values();
      for (std::size_t i = 0; i < fam.pieces.size(); ++i) {
        const auto& k = fam.pieces[i].translate;
        // new shift s' = s T + k
        std::vector<Real> s_next(d);
        for (std::size_t j = 0; j < d; ++j) {
          Real acc = static_cast<Real>(k[j]);
          for (std::size_t r = 0; r < d; ++r) acc += cyl.branch.shift[r] * map.entry(r, j);
          s_next[j] = map.is_integer() ? std::round(acc) : acc;
        }
        Cylinder child;
        child.word = cyl.word;
        child.word.push_back(i);
        child.branch.matrix = m_next;
        child.branch.shift = s_next;
        if (const auto* iv = std::get_if<Interval>(&cyl.region)) {
          const Real slope = m_next(0, 0);
          Real a = s_next[0] / slope, b = (s_next[0] + 1) / slope;
          if (a > b) std::swap(a, b);
          Interval c{std::max(iv->lo, a), std::min(iv->hi, b)};
          if (c.length() <= kSliverArea) continue;
          child.region = c;
          child.measure = c.length();
        } else if (const auto* pg = std::get_if<Polygon2>(&cyl.region)) {
          Polygon2 c = pg->clip(detail::cell_halfplanes(m_next, s_next));
          if (c.vertices().size() < 3 || c.area() <= kSliverArea) continue;
          child.measure = c.area();
          child.region = std::move(c);
        } else {
          const auto& sys = std::get<CellSystem>(cyl.region);
          child.branch.int_matrix = detail::int_matmul(cyl.branch.int_matrix, t, d);
          child.branch.int_shift = detail::int_shift_step(cyl.branch.int_shift, t, k, d);
          CellSystem c = sys;
          detail::push_cell_constraints(c.constraints, child.branch.int_matrix, child.branch.int_shift, d);
          if (!detail::strict_system_feasible(c.constraints, d)) continue;
          child.region = std::move(c);
        }
        next.push_back(std::move(child));
      }
    }
    level = std::move(next);
    for (const auto& c : level) {
      const Real diam = detail::region_diameter(c.region);
      if (!std::isnan(diam) && diam < kMinDiameter)
        throw RefinementLimit("cylinder diameter fell below 1e-12 at order " + std::to_string(order + 1));
    }
  }
  std::sort(level.begin(), level.end(), [](const Cylinder& a, const Cylinder& b) { return a.word < b.word; });
  return level;
}

// ---------------------------------------------------------------------------
// Minkowski content

struct MinkowskiEstimate {
  std::vector<Real> epsilons;
  std::vector<Real> ratios;  // m_d(A(eps)) / eps
  std::vector<bool> feature_scale_warning;
  Real extrapolated = 0;
};

namespace detail {

inline void check_epsilons(const std::vector<Real>& eps) {
  if (eps.empty()) throw DomainError("at least one epsilon is required");
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (!(eps[i] > 0)) throw DomainError("epsilons must be positive");
    if (i > 0 && !(eps[i] < eps[i - 1])) throw DomainError("epsilons must be strictly decreasing");
  }
}

/// Richardson step for an O(eps) leading error term.
inline void extrapolate(MinkowskiEstimate& est) {
  const std::size_t n = est.ratios.size();
  if (n == 1) {
    est.extrapolated = est.ratios[0];
    return;
  }
  const Real e1 = est.epsilons[n - 2], e2 = est.epsilons[n - 1];
  const Real r1 = est.ratios[n - 2], r2 = est.ratios[n - 1];
  est.extrapolated = (e1 * r2 - e2 * r1) / (e1 - e2);
}

inline Real segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const Real len2 = dot(ab, ab);
  Real t = len2 > 0 ? dot(p - a, ab) / len2 : 0;
  t = std::clamp<Real>(t, 0, 1);
  return norm(p - (a + t * ab));
}

}  // namespace detail

/// Boundary content of a convex polygon from exact offset areas:
/// m(A(eps)) = (area + perimeter * eps + pi * eps^2) - area(inner parallel set).
inline MinkowskiEstimate minkowski_content_estimate(const Polygon2& polygon, const std::vector<Real>& epsilons) {
  detail::check_epsilons(epsilons);
  if (!polygon.is_convex()) throw DomainError("exact offset areas need a convex polygon; use the sampled estimator");
  MinkowskiEstimate est;
  const Real area = polygon.area(), perim = polygon.perimeter();
  const auto& v = polygon.vertices();
  for (Real eps : epsilons) {
    const Real outer = area + perim * eps + std::acos(Real(-1)) * eps * eps;
    std::vector<HalfPlane> inward;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Vec2 e = v[(i + 1) % v.size()] - v[i];
      const Vec2 n_out{e.y / norm(e), -e.x / norm(e)};  // outward normal for CCW order
      inward.push_back({n_out, dot(n_out, v[i]) - eps});
    }
    Polygon2 inner = polygon.clip(inward);
    const bool collapsed = inner.vertices().size() < 3 || inner.area() <= 0;
    const Real inner_area = collapsed ? 0 : inner.area();
    est.epsilons.push_back(eps);
    est.ratios.push_back((outer - inner_area) / eps);
    est.feature_scale_warning.push_back(collapsed);
  }
  detail::extrapolate(est);
  return est;
}

/// Sampled estimate for a finite union of points and segments: uniform points
/// in the eps-padded bounding box, counted when within eps of the set.
inline MinkowskiEstimate minkowski_content_estimate(const std::vector<Vec2>& points,
                                                    const std::vector<std::pair<Vec2, Vec2>>& segments,
                                                    const std::vector<Real>& epsilons, std::size_t samples,
                                                    u64 seed) {
  detail::check_epsilons(epsilons);
  if (points.empty() && segments.empty()) throw DomainError("empty set");
  Real x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
  auto grow = [&](Vec2 p) {
    x0 = std::min(x0, p.x);
    y0 = std::min(y0, p.y);
    x1 = std::max(x1, p.x);
    y1 = std::max(y1, p.y);
  };
  for (auto p : points) grow(p);
  for (auto [a, b] : segments) {
    grow(a);
    grow(b);
  }
  Real feature = INFINITY;
  for (auto [a, b] : segments) feature = std::min(feature, norm(b - a));
  MinkowskiEstimate est;
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    const Real eps = epsilons[e];
    auto rng = make_rng(seed, e, /*stream=*/7);
    const Real bx0 = x0 - eps, by0 = y0 - eps, w = (x1 - x0) + 2 * eps, h = (y1 - y0) + 2 * eps;
    std::size_t inside = 0;
    for (std::size_t s = 0; s < samples; ++s) {
      const Vec2 p{bx0 + w * uniform01(rng), by0 + h * uniform01(rng)};
      bool hit = false;
      for (auto q : points)
        if (norm(p - q) < eps) {
          hit = true;
          break;
        }
      for (std::size_t k = 0; !hit && k < segments.size(); ++k)
        hit = detail::segment_distance(p, segments[k].first, segments[k].second) < eps;
      inside += hit;
    }
    const Real measure = w * h * static_cast<Real>(inside) / static_cast<Real>(samples);
    est.epsilons.push_back(eps);
    est.ratios.push_back(measure / eps);
    est.feature_scale_warning.push_back(eps > feature / 2);
  }
  detail::extrapolate(est);
  return est;
}

// ---------------------------------------------------------------------------
// Boundary-content bound for J_n ∩ R1 ∩ T^{-n} R2

/// Axis-parallel box [lo, hi] inside [0,1]^d.
struct Box {
  std::vector<Real> lo, hi;
  Real measure() const {
    Real m = 1;
    for (std::size_t i = 0; i < lo.size(); ++i) m *= std::max<Real>(0, hi[i] - lo[i]);
    return m;
  }
};

struct BoundaryContentReport {
  std::size_t order = 0;
  std::size_t cylinders = 0;
  std::size_t nonempty_intersections = 0;
  Real max_content = 0;
  std::vector<std::size_t> worst_word;
  Real bound = 0;
  Real K = 0;
  Real L = 0;
  bool holds = true;
};

inline Real boundary_content_bound(std::size_t d, Real K, Real L) {
  return 4 * static_cast<Real>(d) * kMinkowskiConstant +
         K * kMinkowskiConstant / (1 - std::pow(L, -static_cast<Real>(d - 1)));
}

inline BoundaryContentReport boundary_content_bound_check(const MatrixTorusMap& map, const PartitionFamily& fam,
                                                          std::size_t n, const Box& r1, const Box& r2) {
  if (map.dim() != 2 || fam.kind != PartitionKind::Polygon)
    throw UnsupportedDimension("boundary-content check runs on the d = 2 polygon path");
  BoundaryContentReport rep;
  rep.order = n;
  rep.K = fam.K_bound;
  rep.L = map.expansion_L();
  rep.bound = boundary_content_bound(2, rep.K, rep.L);
  const auto cylinders = refine_cylinders(map, fam, n);
  rep.cylinders = cylinders.size();
  const auto box_planes = [](const Box& b) {
    return std::vector<HalfPlane>{{{1, 0}, b.hi[0]}, {{-1, 0}, -b.lo[0]}, {{0, 1}, b.hi[1]}, {{0, -1}, -b.lo[1]}};
  };
  const auto r1_planes = box_planes(r1);
  for (const auto& cyl : cylinders) {
    Polygon2 poly = std::get<Polygon2>(cyl.region).clip(r1_planes);
    if (poly.vertices().size() < 3) continue;
    // x M - s in R2
    const auto& m = cyl.branch.matrix;
    std::vector<HalfPlane> pulled;
    for (int j = 0; j < 2; ++j) {
      const Vec2 col{m(0, j), m(1, j)};
      pulled.push_back({col, r2.hi[j] + cyl.branch.shift[j]});
      pulled.push_back({-1 * col, -(r2.lo[j] + cyl.branch.shift[j])});
    }
    poly = poly.clip(pulled);
    if (poly.vertices().size() < 3 || poly.area() <= kSliverArea) continue;
    ++rep.nonempty_intersections;
    const Real content = kMinkowskiConstant * poly.perimeter();
    if (content > rep.max_content) {
      rep.max_content = content;
      rep.worst_word = cyl.word;
    }
  }
  rep.holds = rep.max_content <= rep.bound;
  return rep;
}

}  // namespace recurlab
