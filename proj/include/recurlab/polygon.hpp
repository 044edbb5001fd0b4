#pragma once

// Convex polygon primitives in extended precision. Every region produced by
// a matrix torus map (pieces, cylinders, their intersections with
// rectangles) is an intersection of half-planes, so convex clipping is all
// the geometry the partition code needs.

#include <algorithm>
#include <cmath>
#include <vector>

namespace recurlab {

using Real = long double;

inline constexpr Real kClipTolerance = 1e-12L;
inline constexpr Real kSliverArea = 1e-15L;

struct Vec2 {
  Real x = 0, y = 0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(Real s, Vec2 a) { return {s * a.x, s * a.y}; }
inline Real cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline Real dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline Real norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// { p : a.x * p.x + a.y * p.y <= c }
struct HalfPlane {
  Vec2 a;
  Real c = 0;
  Real eval(Vec2 p) const { return dot(a, p) - c; }
};

class Polygon2 {
 public:
  Polygon2() = default;
  explicit Polygon2(std::vector<Vec2> vertices) : v_(std::move(vertices)) { normalize(); }

  static Polygon2 rectangle(Real x0, Real y0, Real x1, Real y1) {
    return Polygon2({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
  }
  static Polygon2 unit_square() { return rectangle(0, 0, 1, 1); }

  const std::vector<Vec2>& vertices() const { return v_; }
  bool empty() const { return v_.size() < 3 || area() <= 0; }

  /// Shoelace area (counterclockwise vertices give a positive value).
  Real area() const {
    Real s = 0;
    for (std::size_t i = 0, n = v_.size(); i < n; ++i) s += cross(v_[i], v_[(i + 1) % n]);
    return s / 2;
  }

  Real perimeter() const {
    Real s = 0;
    for (std::size_t i = 0, n = v_.size(); i < n; ++i) s += norm(v_[(i + 1) % n] - v_[i]);
    return s;
  }

  Real diameter() const {
    Real best = 0;
    for (const auto& p : v_)
      for (const auto& q : v_) best = std::max(best, norm(p - q));
    return best;
  }

  Vec2 centroid() const {
    Real cx = 0, cy = 0, a = 0;
    for (std::size_t i = 0, n = v_.size(); i < n; ++i) {
      const Vec2 p = v_[i], q = v_[(i + 1) % n];
      const Real w = cross(p, q);
      a += w;
      cx += (p.x + q.x) * w;
      cy += (p.y + q.y) * w;
    }
    if (a == 0) return v_.empty() ? Vec2{} : v_.front();
    return {cx / (3 * a), cy / (3 * a)};
  }

  bool is_convex() const {
    const std::size_t n = v_.size();
    if (n < 3) return false;
    for (std::size_t i = 0; i < n; ++i)
      if (cross(v_[(i + 1) % n] - v_[i], v_[(i + 2) % n] - v_[(i + 1) % n]) < -kClipTolerance) return false;
    return true;
  }

  /// Closed containment with tolerance.
  bool contains(Vec2 p, Real tol = kClipTolerance) const {
    for (std::size_t i = 0, n = v_.size(); i < n; ++i) {
      const Vec2 e = v_[(i + 1) % n] - v_[i];
      if (cross(e, p - v_[i]) < -tol * std::max<Real>(1, norm(e))) return false;
    }
    return !v_.empty();
  }

  /// Sutherland-Hodgman against one half-plane.
  Polygon2 clip(const HalfPlane& h) const {
    std::vector<Vec2> out;
    const std::size_t n = v_.size();
    const Real scale = std::max<Real>(1, norm(h.a));
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 p = v_[i], q = v_[(i + 1) % n];
      const Real fp = h.eval(p) / scale, fq = h.eval(q) / scale;
      const bool in_p = fp <= kClipTolerance, in_q = fq <= kClipTolerance;
      if (in_p) out.push_back(p);
      if (in_p != in_q && std::abs(fp - fq) > 0) {
        const Real t = fp / (fp - fq);
        if (t > 0 && t < 1) out.push_back(p + t * (q - p));
      }
    }
    Polygon2 r;
    r.v_ = std::move(out);
    r.normalize();
    return r;
  }

  Polygon2 clip(const std::vector<HalfPlane>& hs) const {
    Polygon2 r = *this;
    for (const auto& h : hs) {
      if (r.v_.size() < 3) break;
      r = r.clip(h);
    }
    return r;
  }

 private:
  void normalize() {
    // Drop repeated and collinear vertices; enforce counterclockwise order.
    std::vector<Vec2> out;
    for (const auto& p : v_)
      if (out.empty() || norm(p - out.back()) > kClipTolerance) out.push_back(p);
    while (out.size() > 1 && norm(out.front() - out.back()) <= kClipTolerance) out.pop_back();
    bool changed = true;
    while (changed && out.size() >= 3) {
      changed = false;
      for (std::size_t i = 0; i < out.size(); ++i) {
        const Vec2 a = out[(i + out.size() - 1) % out.size()], b = out[i], c = out[(i + 1) % out.size()];
        // b within tolerance of the chord ac
        if (std::abs(cross(b - a, c - b)) <= kClipTolerance * norm(c - a)) {
          out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
          changed = true;
          break;
        }
      }
    }
    v_ = std::move(out);
    if (v_.size() >= 3 && area() < 0) std::reverse(v_.begin(), v_.end());
  }

  std::vector<Vec2> v_;
};

}  // namespace recurlab
