#pragma once

// Matrix maps of the d-torus, x -> x T mod 1 (row-vector convention), with
// an expansion certificate and a precision policy for long orbits.
//
// Two point representations are supported:
//   * lattice points (k_1/p, ..., k_d/p) with p prime, iterated exactly for
//     integer matrices;
//   * MPFR points at a declared binary precision, which carry an accuracy
//     ledger so that an orbit refuses to continue once the expansion has
//     eaten through the guard bits.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "recurlab/bigfloat.hpp"
#include "recurlab/errors.hpp"
#include "recurlab/expr.hpp"
#include "recurlab/numeric.hpp"

namespace recurlab {

inline constexpr unsigned kDefaultGuardBits = 64;
inline constexpr unsigned kMinPrecisionBits = 53;

struct LatticePoint {
  std::vector<u64> numerators;
  u64 modulus = 1;
};

struct FloatPoint {
  std::vector<BigFloat> coords;
  unsigned precision_bits = kMinPrecisionBits;
  /// Bits of the current value that are still trustworthy.
  double accuracy_bits = kMinPrecisionBits;
  unsigned guard_bits = kDefaultGuardBits;
};

/// A point of [0,1)^d.
class TorusPoint {
 public:
  static TorusPoint lattice(std::vector<u64> numerators, u64 modulus) {
    if (!is_prime(modulus)) throw DomainError("lattice modulus must be prime");
    for (u64 k : numerators)
      if (k >= modulus) throw DomainError("lattice numerator out of range");
    return TorusPoint(LatticePoint{std::move(numerators), modulus});
  }

  static TorusPoint from_doubles(const std::vector<double>& xs, unsigned precision_bits = 128,
                                 unsigned guard_bits = kDefaultGuardBits) {
    precision_bits = std::max(precision_bits, kMinPrecisionBits);
    FloatPoint fp;
    fp.precision_bits = precision_bits;
    fp.accuracy_bits = precision_bits;
    fp.guard_bits = guard_bits;
    for (double x : xs) {
      BigFloat v(x, precision_bits);
      v.reduce_mod1();
      fp.coords.push_back(std::move(v));
    }
    return TorusPoint(std::move(fp));
  }

  static TorusPoint from_float(FloatPoint fp) {
    fp.precision_bits = std::max(fp.precision_bits, kMinPrecisionBits);
    for (auto& c : fp.coords) c.reduce_mod1();
    return TorusPoint(std::move(fp));
  }

  std::size_t dim() const {
    return std::visit([](const auto& p) -> std::size_t {
      if constexpr (std::is_same_v<std::decay_t<decltype(p)>, LatticePoint>)
        return p.numerators.size();
      else
        return p.coords.size();
    }, rep_);
  }

  bool is_lattice() const { return std::holds_alternative<LatticePoint>(rep_); }
  const LatticePoint& as_lattice() const { return std::get<LatticePoint>(rep_); }
  const FloatPoint& as_float() const { return std::get<FloatPoint>(rep_); }

  long double coord(std::size_t i) const {
    if (is_lattice()) {
      const auto& lp = as_lattice();
      return static_cast<long double>(lp.numerators[i]) / static_cast<long double>(lp.modulus);
    }
    return as_float().coords[i].to_long_double();
  }

  /// Coordinate i as an MPFR value of at least `bits` precision.
  BigFloat coord_big(std::size_t i, mpfr_prec_t bits) const {
    if (is_lattice()) {
      const auto& lp = as_lattice();
      return BigFloat::ratio(lp.numerators[i], lp.modulus, bits);
    }
    BigFloat c(std::max<mpfr_prec_t>(bits, as_float().coords[i].precision()));
    mpfr_set(c.get(), as_float().coords[i].get(), MPFR_RNDN);
    return c;
  }

  std::vector<double> to_doubles() const {
    std::vector<double> out(dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(coord(i));
    return out;
  }

  /// "k/p" for lattice coordinates, decimal otherwise.
  std::string coord_string(std::size_t i) const {
    if (is_lattice()) {
      const auto& lp = as_lattice();
      return std::to_string(lp.numerators[i]) + "/" + std::to_string(lp.modulus);
    }
    return as_float().coords[i].to_string(20);
  }

 private:
  explicit TorusPoint(std::variant<LatticePoint, FloatPoint> rep) : rep_(std::move(rep)) {}
  std::variant<LatticePoint, FloatPoint> rep_;
};

struct ExpansionCertificate {
  std::vector<double> eigen_moduli;  // ascending
  bool passes = false;
  double margin = 0.0;  // min modulus - 1
  double op_norm_2 = 0.0;
  // Matrix conditions under which the zero-full laws are known to apply.
  bool exceeds_one_plus_sqrt_d = false;
  bool diagonal = false;
  bool integer = false;
  /// Diagonal with every eigenvalue in (-inf, -(1+sqrt 5)/2] U (1, inf):
  /// the hyperboloid-law condition for non-integer matrices.
  bool diagonal_golden = false;
};

struct PrecisionBudget {
  long n_max = 0;
  long bits_required = kMinPrecisionBits;
  unsigned guard_bits = kDefaultGuardBits;
};

namespace detail {

using MatrixLd = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using Complex = std::complex<long double>;

/// Characteristic polynomial coefficients c_0..c_d (monic, c_d = 1) via
/// Faddeev-LeVerrier.
inline std::vector<long double> characteristic_polynomial(const MatrixLd& a) {
  const auto n = a.rows();
  std::vector<long double> c(n + 1, 0.0L);
  c[n] = 1.0L;
  MatrixLd m = MatrixLd::Zero(n, n);
  const MatrixLd id = MatrixLd::Identity(n, n);
  for (Eigen::Index k = 1; k <= n; ++k) {
    m = a * m + c[n - k + 1] * id;
    c[n - k] = -(a * m).trace() / static_cast<long double>(k);
  }
  return c;
}

inline Complex eval_poly(const std::vector<long double>& c, Complex z) {
  Complex acc = 0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * z + *it;
  return acc;
}

/// Durand-Kerner simultaneous iteration.
inline std::vector<Complex> polynomial_roots(const std::vector<long double>& c) {
  const std::size_t n = c.size() - 1;
  long double bound = 0;
  for (std::size_t i = 0; i < n; ++i) bound = std::max(bound, std::abs(c[i]));
  bound += 1;
  std::vector<Complex> z(n);
  const Complex seed(0.4L, 0.9L);
  for (std::size_t i = 0; i < n; ++i) z[i] = bound * std::pow(seed, static_cast<long double>(i));
  bool converged = false;
  for (int iter = 0; iter < 2000 && !converged; ++iter) {
    long double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
      Complex denom = 1;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) denom *= (z[i] - z[j]);
      if (std::abs(denom) == 0) denom = Complex(1e-30L, 0);
      const Complex step = eval_poly(c, z[i]) / denom;
      z[i] -= step;
      worst = std::max(worst, std::abs(step) / std::max(1.0L, std::abs(z[i])));
    }
    converged = worst < 1e-17L;
  }
  // Multiple roots converge linearly; accept anything whose residual is small.
  long double scale = 0;
  for (long double ci : c) scale = std::max(scale, std::abs(ci));
  for (auto& r : z) {
    const long double res = std::abs(eval_poly(c, r)) / (scale * std::pow(std::max(1.0L, std::abs(r)), n));
    if (!converged && res > 1e-12L)
      throw NumericalFailure("eigenvalue iteration did not converge", static_cast<double>(res));
  }
  return z;
}

inline std::vector<long double> eigen_moduli(const MatrixLd& a) {
  const auto n = a.rows();
  std::vector<long double> mods;
  bool triangular = true;
  for (Eigen::Index i = 0; i < n && triangular; ++i)
    for (Eigen::Index j = 0; j < i; ++j)
      if (a(i, j) != 0) triangular = false;
  bool upper = true;
  for (Eigen::Index i = 0; i < n && upper; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      if (a(i, j) != 0) upper = false;
  if (triangular || upper) {
    for (Eigen::Index i = 0; i < n; ++i) mods.push_back(std::abs(a(i, i)));
  } else if (n == 2) {
    const long double tr = a.trace();
    const long double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const long double disc = tr * tr - 4 * det;
    if (disc >= 0) {
      const long double s = std::sqrt(disc);
      const long double big = (tr >= 0) ? (tr + s) / 2 : (tr - s) / 2;
      mods.push_back(std::abs(big));
      mods.push_back(big != 0 ? std::abs(det / big) : 0.0L);
    } else {
      const long double m = std::sqrt(det);  // complex pair: |lambda|^2 = det
      mods.assign(2, m);
    }
  } else if (n <= 3) {
    for (const auto& r : polynomial_roots(characteristic_polynomial(a))) mods.push_back(std::abs(r));
  } else {
    Eigen::EigenSolver<MatrixLd> solver(a, false);
    if (solver.info() != Eigen::Success) throw NumericalFailure("dense eigen-solver failed");
    for (Eigen::Index i = 0; i < n; ++i) mods.push_back(std::abs(solver.eigenvalues()(i)));
  }
  // Moduli within rounding of 1 are ties and must fail the strict test.
  for (auto& m : mods)
    if (std::abs(m - 1.0L) < 1e-12L) m = 1.0L;
  std::sort(mods.begin(), mods.end());
  return mods;
}

}  // namespace detail

class MatrixTorusMap {
 public:
  explicit MatrixTorusMap(std::vector<std::vector<Expr>> entries) : entries_(std::move(entries)) {
    const std::size_t d = entries_.size();
    if (d == 0) throw ConfigError("matrix must have at least one row");
    for (const auto& row : entries_)
      if (row.size() != d) throw ConfigError("matrix must be square");
    values_ = detail::MatrixLd(d, d);
    integer_ = true;
    int_entries_.assign(d * d, 0);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        BigFloat v = entries_[i][j].eval(256);
        if (!v.is_finite()) throw ConfigError("matrix entry '" + entries_[i][j].text() + "' is not finite");
        values_(i, j) = v.to_long_double();
        if (v.is_integer() && std::abs(values_(i, j)) < 0x1p62L)
          int_entries_[i * d + j] = static_cast<i64>(values_(i, j));
        else
          integer_ = false;
      }
    }
    long double scale = values_.cwiseAbs().maxCoeff();
    const long double det = values_.determinant();
    if (scale == 0 || std::abs(det) <= 1e-14L * std::pow(scale, static_cast<long double>(d)))
      throw SingularMatrix("matrix is singular");
    det_ = det;
    Eigen::JacobiSVD<detail::MatrixLd> svd(values_);
    op_norm_2_ = svd.singularValues()(0);
    moduli_ = detail::eigen_moduli(values_);
  }

  static MatrixTorusMap from_strings(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::vector<Expr>> e;
    for (const auto& row : rows) {
      auto& out = e.emplace_back();
      for (const auto& s : row) out.push_back(Expr::parse(s));
    }
    return MatrixTorusMap(std::move(e));
  }

  static MatrixTorusMap from_values(const std::vector<std::vector<double>>& rows) {
    std::vector<std::vector<Expr>> e;
    for (const auto& row : rows) {
      auto& out = e.emplace_back();
      for (double v : row) out.push_back(Expr::literal(v));
    }
    return MatrixTorusMap(std::move(e));
  }

  static MatrixTorusMap scaled_identity(std::size_t d, long c) {
    std::vector<std::vector<std::string>> rows(d, std::vector<std::string>(d, "0"));
    for (std::size_t i = 0; i < d; ++i) rows[i][i] = std::to_string(c);
    return from_strings(rows);
  }

  std::size_t dim() const { return entries_.size(); }
  bool is_integer() const { return integer_; }
  long double entry(std::size_t i, std::size_t j) const { return values_(i, j); }
  i64 int_entry(std::size_t i, std::size_t j) const { return int_entries_[i * dim() + j]; }
  const Expr& entry_expr(std::size_t i, std::size_t j) const { return entries_[i][j]; }
  const detail::MatrixLd& values() const { return values_; }
  long double determinant() const { return det_; }
  long double op_norm_2() const { return op_norm_2_; }
  /// Ascending eigenvalue moduli.
  const std::vector<long double>& eigen_moduli() const { return moduli_; }
  long double expansion_L() const { return moduli_.front(); }
  bool expanding() const { return moduli_.front() > 1.0L; }

  /// Entries evaluated at `bits` of precision, row-major.
  std::vector<BigFloat> evaluate(mpfr_prec_t bits) const {
    std::vector<BigFloat> out;
    out.reserve(dim() * dim());
    for (const auto& row : entries_)
      for (const auto& e : row) out.push_back(e.eval(bits));
    return out;
  }

  /// y = x T mod 1 in double precision. Diagnostics only: no precision ledger.
  void apply_double(const double* x, double* y) const {
    const std::size_t d = dim();
    for (std::size_t j = 0; j < d; ++j) {
      long double acc = 0;
      for (std::size_t i = 0; i < d; ++i) acc += static_cast<long double>(x[i]) * values_(i, j);
      acc -= std::floor(acc);
      double v = static_cast<double>(acc);
      y[j] = v >= 1.0 ? 0.0 : v;
    }
  }

  std::string describe() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dim(); ++i) {
      s += i ? ", [" : "[";
      for (std::size_t j = 0; j < dim(); ++j) s += (j ? ", " : "") + entries_[i][j].text();
      s += "]";
    }
    return s + "]";
  }

 private:
  std::vector<std::vector<Expr>> entries_;
  detail::MatrixLd values_;
  std::vector<i64> int_entries_;
  bool integer_ = false;
  long double det_ = 0;
  long double op_norm_2_ = 0;
  std::vector<long double> moduli_;
};

inline ExpansionCertificate validate_expanding(const MatrixTorusMap& map) {
  ExpansionCertificate cert;
  const std::size_t d = map.dim();
  for (long double m : map.eigen_moduli()) cert.eigen_moduli.push_back(static_cast<double>(m));
  cert.margin = static_cast<double>(map.eigen_moduli().front() - 1.0L);
  cert.passes = cert.margin > 0;
  cert.op_norm_2 = static_cast<double>(map.op_norm_2());
  cert.exceeds_one_plus_sqrt_d = map.eigen_moduli().front() > 1.0L + std::sqrt(static_cast<long double>(d));
  cert.integer = map.is_integer();
  cert.diagonal = true;
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (i != j && map.entry(i, j) != 0) cert.diagonal = false;
  if (cert.diagonal) {
    const long double golden = (std::sqrt(5.0L) + 1) / 2;
    cert.diagonal_golden = true;
    for (std::size_t i = 0; i < d; ++i) {
      const long double v = map.entry(i, i);
      if (!(v > 1 || v <= -golden)) cert.diagonal_golden = false;
    }
  }
  return cert;
}

inline PrecisionBudget required_precision(const MatrixTorusMap& map, long n_max,
                                          unsigned guard_bits = kDefaultGuardBits) {
  if (n_max < 0) throw DomainError("orbit length must be non-negative");
  const long double per_step = std::max(0.0L, std::log2(map.op_norm_2()));
  const long growth = static_cast<long>(std::ceil(static_cast<long double>(n_max) * per_step - 1e-12L));
  PrecisionBudget b;
  b.n_max = n_max;
  b.guard_bits = guard_bits;
  b.bits_required = std::max<long>(kMinPrecisionBits, growth + guard_bits);
  return b;
}

namespace detail {

inline double step_cost_bits(const MatrixTorusMap& map) {
  return static_cast<double>(std::max(0.0L, std::log2(map.op_norm_2())));
}

inline void check_dim(const MatrixTorusMap& map, const TorusPoint& x) {
  if (x.dim() != map.dim()) throw DomainError("point dimension does not match map dimension");
}

/// Matrix entries reduced into [0, p).
inline std::vector<u64> reduced_matrix(const MatrixTorusMap& map, u64 p) {
  if (!map.is_integer()) throw UnsupportedExactPath("exact lattice path needs an integer matrix");
  const std::size_t d = map.dim();
  std::vector<u64> out(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = reduce_signed(map.int_entry(i, j), p);
  return out;
}

inline void lattice_step(const std::vector<u64>& t, std::size_t d, u64 p, std::vector<u64>& k,
                         std::vector<u64>& scratch) {
  scratch.assign(d, 0);
  for (std::size_t j = 0; j < d; ++j) {
    u128 acc = 0;
    for (std::size_t i = 0; i < d; ++i) {
      acc += static_cast<u128>(k[i]) * t[i * d + j];
      if (acc >> 126) acc %= p;
    }
    scratch[j] = static_cast<u64>(acc % p);
  }
  k.swap(scratch);
}

inline void float_step(const std::vector<BigFloat>& t, std::size_t d, FloatPoint& fp,
                       double cost_bits) {
  const double remaining = fp.accuracy_bits - cost_bits;
  if (remaining < static_cast<double>(fp.guard_bits) - 1e-9) {
    const long max_steps =
        cost_bits > 0 ? static_cast<long>(std::floor((fp.accuracy_bits - fp.guard_bits) / cost_bits + 1e-9))
                      : 0;
    throw PrecisionExhausted("precision budget exhausted", std::max(0L, max_steps));
  }
  std::vector<BigFloat> next;
  next.reserve(d);
  BigFloat prod(fp.precision_bits);
  for (std::size_t j = 0; j < d; ++j) {
    BigFloat acc(fp.precision_bits);
    for (std::size_t i = 0; i < d; ++i) {
      mpfr_mul(prod.get(), fp.coords[i].get(), t[i * d + j].get(), MPFR_RNDN);
      mpfr_add(acc.get(), acc.get(), prod.get(), MPFR_RNDN);
    }
    acc.reduce_mod1();
    next.push_back(std::move(acc));
  }
  fp.coords = std::move(next);
  fp.accuracy_bits = remaining;
}

}  // namespace detail

/// x T mod 1. Lattice points stay exact (integer matrices only); MPFR points
/// spend log2(op_norm_2) bits of their accuracy ledger.
inline TorusPoint apply(const MatrixTorusMap& map, const TorusPoint& x) {
  detail::check_dim(map, x);
  const std::size_t d = map.dim();
  if (x.is_lattice()) {
    const auto& lp = x.as_lattice();
    const auto t = detail::reduced_matrix(map, lp.modulus);
    std::vector<u64> k = lp.numerators, scratch;
    detail::lattice_step(t, d, lp.modulus, k, scratch);
    return TorusPoint::lattice(std::move(k), lp.modulus);
  }
  FloatPoint fp = x.as_float();
  detail::float_step(map.evaluate(fp.precision_bits), d, fp, detail::step_cost_bits(map));
  return TorusPoint::from_float(std::move(fp));
}

/// (x, Tx, ..., T^N x).
inline std::vector<TorusPoint> orbit(const MatrixTorusMap& map, const TorusPoint& x, long N,
                                     const PrecisionBudget& budget) {
  detail::check_dim(map, x);
  if (N < 0) throw DomainError("orbit length must be non-negative");
  std::vector<TorusPoint> out;
  out.reserve(static_cast<std::size_t>(N) + 1);
  out.push_back(x);
  if (N == 0) return out;
  const std::size_t d = map.dim();
  if (x.is_lattice()) {
    const auto& lp = x.as_lattice();
    const auto t = detail::reduced_matrix(map, lp.modulus);
    std::vector<u64> k = lp.numerators, scratch;
    for (long n = 1; n <= N; ++n) {
      detail::lattice_step(t, d, lp.modulus, k, scratch);
      out.push_back(TorusPoint::lattice(k, lp.modulus));
    }
    return out;
  }
  if (budget.n_max < N)
    throw PrecisionExhausted("orbit length exceeds the precision budget", budget.n_max);
  FloatPoint fp = x.as_float();
  if (static_cast<long>(fp.precision_bits) < budget.bits_required) {
    const double cost = detail::step_cost_bits(map);
    const long max_steps = cost > 0 ? static_cast<long>((fp.precision_bits - static_cast<double>(budget.guard_bits)) / cost) : N;
    throw PrecisionExhausted("point precision is below the budget's bits_required", std::max(0L, max_steps));
  }
  fp.guard_bits = budget.guard_bits;
  const auto t = map.evaluate(fp.precision_bits);
  const double cost = detail::step_cost_bits(map);
  for (long n = 1; n <= N; ++n) {
    detail::float_step(t, d, fp, cost);
    out.push_back(TorusPoint::from_float(fp));
  }
  return out;
}

/// Uniform lattice points with a fresh random prime p >= 2^prime_bits per
/// sample. Sample i depends only on (seed, i).
inline std::vector<TorusPoint> sample_lattice_points(const MatrixTorusMap& map, std::size_t count,
                                                     unsigned prime_bits, u64 seed) {
  if (!map.is_integer()) throw UnsupportedExactPath("lattice sampling needs an integer matrix");
  if (prime_bits < 31) throw ConfigError("prime_bits must be at least 31");
  std::vector<TorusPoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto rng = make_rng(seed, i, /*stream=*/1);
    const u64 p = random_prime(prime_bits, rng);
    std::vector<u64> k(map.dim());
    std::uniform_int_distribution<u64> dist(0, p - 1);
    for (auto& ki : k) ki = dist(rng);
    out.push_back(TorusPoint::lattice(std::move(k), p));
  }
  return out;
}

/// Uniform point with `bits` random mantissa bits per coordinate.
inline TorusPoint sample_float_point(std::size_t dim, unsigned bits, std::mt19937_64& rng,
                                     unsigned guard_bits = kDefaultGuardBits) {
  FloatPoint fp;
  fp.precision_bits = std::max(bits, kMinPrecisionBits);
  fp.accuracy_bits = fp.precision_bits;
  fp.guard_bits = guard_bits;
  for (std::size_t i = 0; i < dim; ++i) {
    BigFloat v(fp.precision_bits);
    unsigned filled = 0;
    BigFloat chunk(fp.precision_bits);
    while (filled < fp.precision_bits) {
      const unsigned take = std::min(64U, fp.precision_bits - filled);
      const u64 word = rng() >> (64 - take);
      filled += take;
      mpfr_set_ui_2exp(chunk.get(), word, -static_cast<long>(filled), MPFR_RNDN);
      mpfr_add(v.get(), v.get(), chunk.get(), MPFR_RNDN);
    }
    fp.coords.push_back(std::move(v));
  }
  return TorusPoint::from_float(std::move(fp));
}

}  // namespace recurlab
