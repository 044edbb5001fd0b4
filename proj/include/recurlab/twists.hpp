#pragma once

// Twist functions f : [0,1)^d -> [0,1)^d that move the target centre, so a
// hit at time n means T^n x lands near f(x) rather than near x.

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "recurlab/errors.hpp"
#include "recurlab/expr.hpp"
#include "recurlab/numeric.hpp"
#include "recurlab/polygon.hpp"
#include "recurlab/torus_maps.hpp"

namespace recurlab {

enum class TwistKind { Identity, Constant, Permute, Affine, CoordinatewiseDemo, Custom };

inline std::string to_string(TwistKind k) {
  switch (k) {
    case TwistKind::Identity:
      return "identity";
    case TwistKind::Constant:
      return "constant";
    case TwistKind::Permute:
      return "permute";
    case TwistKind::Affine:
      return "affine";
    case TwistKind::CoordinatewiseDemo:
      return "coordinatewise-demo";
    default:
      return "custom";
  }
}

namespace detail {

// Component maps of the coordinatewise demo, applied to x in [0,1).
inline constexpr int kDemoComponents = 6;

inline Real demo_component(int which, Real x, Real k) {
  static const Real e = std::exp(Real(1));
  static const Real pi = std::acos(Real(-1));
  switch (which) {
    case 0:
      return 1 - x;
    case 1:
      return (std::exp(x) - 1) / (e - 1);
    case 2:
      return std::log1p(x) / std::log(Real(2));
    case 3:
      return k * x;
    case 4:
      return std::tan(pi * x / 4);
    default:
      return 4 / pi * std::atan(x);
  }
}

inline BigFloat demo_component(int which, const BigFloat& x, Real k) {
  const mpfr_prec_t bits = x.precision();
  const BigFloat one(1.0, bits);
  switch (which) {
    case 0:
      return one - x;
    case 1: {
      const BigFloat e = one.apply(mpfr_exp);
      return (x.apply(mpfr_exp) - one) / (e - one);
    }
    case 2:
      return x.apply(mpfr_log1p) / BigFloat(2.0, bits).apply(mpfr_log);
    case 3:
      return BigFloat(static_cast<double>(k), bits) * x;
    case 4:
      return (BigFloat::pi(bits) * x / BigFloat(4.0, bits)).apply(mpfr_tan);
    default:
      return BigFloat(4.0, bits) / BigFloat::pi(bits) * x.apply(mpfr_atan);
  }
}

/// Sup of |g'| on [0,1] for each component map.
inline Real demo_lipschitz(int which, Real k) {
  const Real pi = std::acos(Real(-1));
  switch (which) {
    case 0:
      return 1;
    case 1:
      return std::exp(Real(1)) / (std::exp(Real(1)) - 1);
    case 2:
      return 1 / std::log(Real(2));
    case 3:
      return k;
    case 4:
      return pi / 2;
    default:
      return 4 / pi;
  }
}

inline Real wrap01(Real v) {
  v -= std::floor(v);
  return v >= 1 ? 0 : v;
}

}  // namespace detail

class TwistFunction {
 public:
  using CustomFn = std::function<std::vector<double>(const std::vector<double>&)>;

  static TwistFunction identity(std::size_t d) {
    TwistFunction f(TwistKind::Identity, d);
    f.declared_p_ = 1;
    f.coordinatewise_ = true;
    return f;
  }

  /// Shrinking-target mode: f(x) = y for every x.
  static TwistFunction constant(TorusPoint y) {
    TwistFunction f(TwistKind::Constant, y.dim());
    f.constant_ = std::move(y);
    f.declared_p_ = 0;
    f.coordinatewise_ = true;
    return f;
  }

  /// output_i = x_{sigma(i)}, sigma given 1-based.
  static TwistFunction permute(const std::vector<std::size_t>& sigma_one_based) {
    const std::size_t d = sigma_one_based.size();
    TwistFunction f(TwistKind::Permute, d);
    std::vector<bool> seen(d, false);
    for (std::size_t s : sigma_one_based) {
      if (s < 1 || s > d || seen[s - 1]) throw ConfigError("permutation must list 1..d exactly once");
      seen[s - 1] = true;
      f.sigma_.push_back(s - 1);
    }
    f.declared_p_ = 1;
    f.coordinatewise_ = true;
    return f;
  }

  /// x -> x A + b mod 1 (row-vector convention).
  static TwistFunction affine(std::vector<std::vector<Expr>> a, std::vector<Expr> b = {}) {
    const std::size_t d = a.size();
    if (d == 0) throw ConfigError("affine twist needs a non-empty matrix");
    for (const auto& row : a)
      if (row.size() != d) throw ConfigError("affine twist matrix must be square");
    if (b.empty())
      for (std::size_t i = 0; i < d; ++i) b.push_back(Expr::literal(0));
    if (b.size() != d) throw ConfigError("affine offset has the wrong dimension");
    TwistFunction f(TwistKind::Affine, d);
    f.a_ = std::move(a);
    f.b_ = std::move(b);
    f.a_ld_.assign(d * d, 0);
    f.b_ld_.assign(d, 0);
    bool integer = true;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const BigFloat v = f.a_[i][j].eval(256);
        f.a_ld_[i * d + j] = v.to_long_double();
        integer = integer && v.is_integer() && std::abs(f.a_ld_[i * d + j]) < 0x1p62L;
      }
      f.b_ld_[i] = f.b_[i].eval_ld();
    }
    f.integer_ = integer && std::all_of(f.b_ld_.begin(), f.b_ld_.end(), [](Real v) { return v == 0; });
    // max-norm operator norm for row vectors: largest column absolute sum
    Real p = 0;
    for (std::size_t j = 0; j < d; ++j) {
      Real col = 0;
      for (std::size_t i = 0; i < d; ++i) col += std::abs(f.a_ld_[i * d + j]);
      p = std::max(p, col);
    }
    if (!(p > 0)) throw ConfigError("affine twist matrix must be non-zero");
    f.declared_p_ = p;
    std::size_t nonzero_per_column = 0;
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t c = 0;
      for (std::size_t i = 0; i < d; ++i) c += f.a_ld_[i * d + j] != 0;
      nonzero_per_column = std::max(nonzero_per_column, c);
    }
    f.coordinatewise_ = nonzero_per_column <= 1;
    return f;
  }

  static TwistFunction affine_from_strings(const std::vector<std::vector<std::string>>& a,
                                           const std::vector<std::string>& b = {}) {
    std::vector<std::vector<Expr>> ae;
    for (const auto& row : a) {
      ae.emplace_back();
      for (const auto& s : row) ae.back().push_back(Expr::parse(s));
    }
    std::vector<Expr> be;
    for (const auto& s : b) be.push_back(Expr::parse(s));
    return affine(std::move(ae), std::move(be));
  }

  /// Coordinate i uses component map i mod 6 of the demo catalogue.
  static TwistFunction coordinatewise_demo(std::size_t d, Real k = 0.5L) {
    if (!(k > 0 && k <= 1)) throw ConfigError("coordinatewise-demo needs 0 < k <= 1");
    TwistFunction f(TwistKind::CoordinatewiseDemo, d);
    f.k_ = k;
    Real p = 0;
    for (std::size_t i = 0; i < d; ++i)
      p = std::max(p, detail::demo_lipschitz(static_cast<int>(i % detail::kDemoComponents), k));
    f.declared_p_ = p;
    f.coordinatewise_ = true;
    return f;
  }

  /// User function; it must return values in [0,1) and its constant is taken on trust.
  static TwistFunction custom(std::size_t d, CustomFn fn, Real declared_p, bool coordinatewise = false) {
    if (!(declared_p > 0)) throw ConfigError("custom twist needs a positive Lipschitz constant");
    TwistFunction f(TwistKind::Custom, d);
    f.custom_ = std::move(fn);
    f.declared_p_ = declared_p;
    f.coordinatewise_ = coordinatewise;
    return f;
  }

  TwistKind kind() const { return kind_; }
  std::size_t dim() const { return dim_; }
  Real declared_p() const { return declared_p_; }
  bool coordinatewise() const { return coordinatewise_; }
  const std::optional<TorusPoint>& constant_point() const { return constant_; }
  const std::vector<std::size_t>& sigma() const { return sigma_; }
  Real demo_k() const { return k_; }
  const std::vector<std::vector<Expr>>& affine_matrix() const { return a_; }
  const std::vector<Expr>& affine_offset() const { return b_; }

  TorusPoint evaluate(const TorusPoint& x) const {
    check(x.dim());
    switch (kind_) {
      case TwistKind::Identity:
        return x;
      case TwistKind::Constant:
        return *constant_;
      case TwistKind::Permute:
        if (x.is_lattice()) {
          const auto& lp = x.as_lattice();
          std::vector<u64> out(dim_);
          for (std::size_t i = 0; i < dim_; ++i) out[i] = lp.numerators[sigma_[i]];
          return TorusPoint::lattice(std::move(out), lp.modulus);
        } else {
          FloatPoint fp = x.as_float();
          for (std::size_t i = 0; i < dim_; ++i) fp.coords[i] = x.as_float().coords[sigma_[i]];
          return TorusPoint::from_float(std::move(fp));
        }
      case TwistKind::Affine:
        if (x.is_lattice() && integer_) return affine_lattice(x.as_lattice());
        return affine_float(x);
      case TwistKind::CoordinatewiseDemo: {
        FloatPoint fp = float_shell(x);
        for (std::size_t i = 0; i < dim_; ++i)
          fp.coords.push_back(detail::demo_component(static_cast<int>(i % detail::kDemoComponents),
                                                     x.coord_big(i, fp.precision_bits), k_));
        return TorusPoint::from_float(std::move(fp));
      }
      default: {
        const auto out = evaluate(x.to_doubles());
        return TorusPoint::from_doubles(out, shell_bits(x));
      }
    }
  }

  /// Double-precision evaluation for sampling diagnostics.
  std::vector<double> evaluate(const std::vector<double>& x) const {
    check(x.size());
    std::vector<double> out(dim_);
    switch (kind_) {
      case TwistKind::Identity:
        return x;
      case TwistKind::Constant:
        return constant_->to_doubles();
      case TwistKind::Permute:
        for (std::size_t i = 0; i < dim_; ++i) out[i] = x[sigma_[i]];
        return out;
      case TwistKind::Affine:
        for (std::size_t j = 0; j < dim_; ++j) {
          Real acc = b_ld_[j];
          for (std::size_t i = 0; i < dim_; ++i) acc += x[i] * a_ld_[i * dim_ + j];
          out[j] = static_cast<double>(detail::wrap01(acc));
        }
        return out;
      case TwistKind::CoordinatewiseDemo:
        for (std::size_t i = 0; i < dim_; ++i)
          out[i] = static_cast<double>(
              detail::wrap01(detail::demo_component(static_cast<int>(i % detail::kDemoComponents), x[i], k_)));
        return out;
      default:
        out = custom_(x);
        if (out.size() != dim_) throw RangeError("custom twist returned the wrong dimension");
        for (double v : out)
          if (!(v >= 0 && v < 1)) throw RangeError("custom twist returned a value outside [0,1)");
        return out;
    }
  }

 private:
  TwistFunction(TwistKind k, std::size_t d) : kind_(k), dim_(d) {
    if (d == 0) throw ConfigError("twist dimension must be positive");
  }

  void check(std::size_t d) const {
    if (d != dim_) throw DomainError("twist and point dimensions differ");
  }

  static unsigned shell_bits(const TorusPoint& x) {
    if (!x.is_lattice()) return x.as_float().precision_bits;
    // enough bits to hold k/p for a 62-bit modulus with room to spare
    return 128;
  }

  static FloatPoint float_shell(const TorusPoint& x) {
    FloatPoint fp;
    fp.precision_bits = shell_bits(x);
    if (x.is_lattice()) {
      fp.accuracy_bits = fp.precision_bits;
    } else {
      fp.accuracy_bits = x.as_float().accuracy_bits;
      fp.guard_bits = x.as_float().guard_bits;
    }
    return fp;
  }

  TorusPoint affine_lattice(const LatticePoint& lp) const {
    const u64 p = lp.modulus;
    std::vector<u64> out(dim_, 0);
    for (std::size_t j = 0; j < dim_; ++j) {
      u64 acc = 0;
      for (std::size_t i = 0; i < dim_; ++i) {
        const u64 a = reduce_signed(static_cast<i128>(a_ld_[i * dim_ + j]), p);
        acc = (acc + mulmod(lp.numerators[i], a, p)) % p;
      }
      out[j] = acc;
    }
    return TorusPoint::lattice(std::move(out), p);
  }

  TorusPoint affine_float(const TorusPoint& x) const {
    FloatPoint fp = float_shell(x);
    const mpfr_prec_t bits = fp.precision_bits;
    std::vector<BigFloat> xs;
    for (std::size_t i = 0; i < dim_; ++i) xs.push_back(x.coord_big(i, bits));
    for (std::size_t j = 0; j < dim_; ++j) {
      BigFloat acc = b_[j].eval(bits);
      for (std::size_t i = 0; i < dim_; ++i) acc += xs[i] * a_[i][j].eval(bits);
      fp.coords.push_back(std::move(acc));
    }
    // Multiplying by A costs up to log2 p bits of absolute accuracy.
    fp.accuracy_bits -= std::max(0.0, std::log2(static_cast<double>(declared_p_)));
    return TorusPoint::from_float(std::move(fp));
  }

  TwistKind kind_;
  std::size_t dim_;
  Real declared_p_ = 1;
  bool coordinatewise_ = false;
  std::optional<TorusPoint> constant_;
  std::vector<std::size_t> sigma_;
  std::vector<std::vector<Expr>> a_;
  std::vector<Expr> b_;
  std::vector<Real> a_ld_, b_ld_;
  bool integer_ = false;
  Real k_ = 0.5L;
  CustomFn custom_;
};

inline TorusPoint evaluate(const TwistFunction& f, const TorusPoint& x) { return f.evaluate(x); }

/// Lower estimate of the Lipschitz constant: the largest observed
/// ||f(x) - f(y)|| / |x - y| (sup norms; torus distance on outputs, plain
/// distance on inputs). Half the pairs are uniform, half are close pairs.
inline Real estimate_lipschitz(const TwistFunction& f, std::size_t pairs, u64 seed) {
  if (pairs < 1000) throw DomainError("estimate_lipschitz needs at least 1000 pairs");
  const std::size_t d = f.dim();
  Real best = 0;
  std::vector<double> x(d), y(d);
  for (std::size_t s = 0; s < pairs; ++s) {
    auto rng = make_rng(seed, s, /*stream=*/11);
    const bool local = s % 2 == 1;
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = uniform01(rng);
      if (local) {
        const double step = 1e-3 * (2 * uniform01(rng) - 1);
        y[i] = std::clamp(x[i] + step, 0.0, std::nextafter(1.0, 0.0));
      } else {
        y[i] = uniform01(rng);
      }
    }
    Real in = 0, out = 0;
    for (std::size_t i = 0; i < d; ++i) in = std::max<Real>(in, std::abs(Real(x[i]) - Real(y[i])));
    if (in == 0) continue;
    const auto fx = f.evaluate(x), fy = f.evaluate(y);
    for (std::size_t i = 0; i < d; ++i) {
      Real t = std::abs(Real(fx[i]) - Real(fy[i]));
      out = std::max(out, std::min(t, 1 - t));
    }
    best = std::max(best, out / in);
  }
  return best;
}

struct PushforwardDiagnostic {
  std::size_t grid_res = 0;
  std::size_t samples = 0;
  /// Empirical mass of each cell over its volume, row-major by coordinate.
  std::vector<Real> ratios;
  Real max_ratio = 0;
  /// Cells whose ratio keeps growing when the grid is refined once.
  std::vector<std::size_t> flagged_cells;
  std::string label = "heuristic";
};

namespace detail {

inline std::vector<Real> pushforward_ratios(const TwistFunction& f, std::size_t res, std::size_t samples, u64 seed) {
  const std::size_t d = f.dim();
  std::size_t cells = 1;
  for (std::size_t i = 0; i < d; ++i) cells *= res;
  std::vector<std::size_t> counts(cells, 0);
  std::vector<double> x(d);
  for (std::size_t s = 0; s < samples; ++s) {
    auto rng = make_rng(seed, s, /*stream=*/12);
    for (auto& v : x) v = uniform01(rng);
    const auto y = f.evaluate(x);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < d; ++i)
      idx = idx * res + std::min(res - 1, static_cast<std::size_t>(y[i] * static_cast<double>(res)));
    ++counts[idx];
  }
  std::vector<Real> ratios(cells);
  for (std::size_t c = 0; c < cells; ++c)
    ratios[c] = static_cast<Real>(counts[c]) * static_cast<Real>(cells) / static_cast<Real>(samples);
  return ratios;
}

}  // namespace detail

inline PushforwardDiagnostic pushforward_diagnostic(const TwistFunction& f, std::size_t grid_res, std::size_t samples,
                                                    u64 seed) {
  if (grid_res == 0 || (grid_res & (grid_res - 1)) != 0) throw DomainError("grid resolution must be a power of 2");
  if (samples < 100000) throw DomainError("pushforward diagnostic needs at least 1e5 samples");
  const std::size_t d = f.dim();
  PushforwardDiagnostic out;
  out.grid_res = grid_res;
  out.samples = samples;
  out.ratios = detail::pushforward_ratios(f, grid_res, samples, seed);
  out.max_ratio = *std::max_element(out.ratios.begin(), out.ratios.end());
  const auto fine = detail::pushforward_ratios(f, 2 * grid_res, samples, seed);
  const std::size_t cells = out.ratios.size();
  // Sampling noise of a coarse cell ratio around 1.
  const Real noise = 4 * std::sqrt(static_cast<Real>(cells) / static_cast<Real>(samples));
  for (std::size_t c = 0; c < cells; ++c) {
    if (out.ratios[c] < 2 + noise) continue;
    // coordinates of coarse cell c
    std::vector<std::size_t> coord(d);
    std::size_t rest = c;
    for (std::size_t i = d; i-- > 0;) {
      coord[i] = rest % grid_res;
      rest /= grid_res;
    }
    Real child_max = 0;
    for (std::size_t mask = 0; mask < (std::size_t{1} << d); ++mask) {
      std::size_t idx = 0;
      for (std::size_t i = 0; i < d; ++i) idx = idx * 2 * grid_res + 2 * coord[i] + ((mask >> (d - 1 - i)) & 1);
      child_max = std::max(child_max, fine[idx]);
    }
    if (child_max >= 1.8L * out.ratios[c]) out.flagged_cells.push_back(c);
  }
  return out;
}

}  // namespace recurlab
