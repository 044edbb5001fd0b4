#pragma once

#include <cstdint>

#include <mpfr.h>

#include <algorithm>
#include <string>
#include <utility>

namespace recurlab {

/// Owning handle to an MPFR value. Precision is carried per value; binary
/// operations round to the larger precision of their operands.
class BigFloat {
 public:
  explicit BigFloat(mpfr_prec_t bits = 128) {
    mpfr_init2(v_, bits);
    mpfr_set_zero(v_, 1);
  }
  BigFloat(double x, mpfr_prec_t bits) {
    mpfr_init2(v_, bits);
    mpfr_set_d(v_, x, MPFR_RNDN);
  }
  BigFloat(const BigFloat& o) {
    mpfr_init2(v_, mpfr_get_prec(o.v_));
    mpfr_set(v_, o.v_, MPFR_RNDN);
  }
  BigFloat(BigFloat&& o) noexcept {
    mpfr_init2(v_, MPFR_PREC_MIN);
    mpfr_swap(v_, o.v_);
  }
  BigFloat& operator=(const BigFloat& o) {
    if (this != &o) {
      mpfr_set_prec(v_, mpfr_get_prec(o.v_));
      mpfr_set(v_, o.v_, MPFR_RNDN);
    }
    return *this;
  }
  BigFloat& operator=(BigFloat&& o) noexcept {
    mpfr_swap(v_, o.v_);
    return *this;
  }
  ~BigFloat() { mpfr_clear(v_); }

  /// k / p rounded to nearest at `bits`.
  static BigFloat ratio(std::uint64_t k, std::uint64_t p, mpfr_prec_t bits) {
    BigFloat r(bits);
    static_assert(sizeof(unsigned long) == sizeof(std::uint64_t));
    mpfr_set_ui(r.v_, k, MPFR_RNDN);
    mpfr_div_ui(r.v_, r.v_, p, MPFR_RNDN);
    return r;
  }

  static BigFloat from_string(const std::string& s, mpfr_prec_t bits) {
    BigFloat r(bits);
    if (mpfr_set_str(r.v_, s.c_str(), 10, MPFR_RNDN) != 0 && !mpfr_number_p(r.v_))
      mpfr_set_nan(r.v_);
    return r;
  }

  static BigFloat pi(mpfr_prec_t bits) {
    BigFloat r(bits);
    mpfr_const_pi(r.v_, MPFR_RNDN);
    return r;
  }

  mpfr_prec_t precision() const { return mpfr_get_prec(v_); }
  mpfr_ptr get() { return v_; }
  mpfr_srcptr get() const { return v_; }

  long double to_long_double() const { return mpfr_get_ld(v_, MPFR_RNDN); }
  double to_double() const { return mpfr_get_d(v_, MPFR_RNDN); }
  bool is_integer() const { return mpfr_integer_p(v_) != 0; }
  bool is_finite() const { return mpfr_number_p(v_) != 0; }
  bool is_zero() const { return mpfr_zero_p(v_) != 0; }
  int sign() const { return mpfr_sgn(v_); }

  /// Reduce into [0, 1).
  BigFloat& reduce_mod1() {
    BigFloat fl(precision());
    mpfr_floor(fl.v_, v_);
    mpfr_sub(v_, v_, fl.v_, MPFR_RNDN);
    // Rounding can land exactly on 1 for tiny negative inputs.
    if (mpfr_cmp_ui(v_, 1) >= 0) mpfr_sub_ui(v_, v_, 1, MPFR_RNDN);
    if (mpfr_sgn(v_) < 0) mpfr_set_zero(v_, 1);
    return *this;
  }

  friend BigFloat operator+(const BigFloat& a, const BigFloat& b) {
    BigFloat r(std::max(a.precision(), b.precision()));
    mpfr_add(r.v_, a.v_, b.v_, MPFR_RNDN);
    return r;
  }
  friend BigFloat operator-(const BigFloat& a, const BigFloat& b) {
    BigFloat r(std::max(a.precision(), b.precision()));
    mpfr_sub(r.v_, a.v_, b.v_, MPFR_RNDN);
    return r;
  }
  friend BigFloat operator*(const BigFloat& a, const BigFloat& b) {
    BigFloat r(std::max(a.precision(), b.precision()));
    mpfr_mul(r.v_, a.v_, b.v_, MPFR_RNDN);
    return r;
  }
  friend BigFloat operator/(const BigFloat& a, const BigFloat& b) {
    BigFloat r(std::max(a.precision(), b.precision()));
    mpfr_div(r.v_, a.v_, b.v_, MPFR_RNDN);
    return r;
  }
  BigFloat operator-() const {
    BigFloat r(precision());
    mpfr_neg(r.v_, v_, MPFR_RNDN);
    return r;
  }
  BigFloat& operator+=(const BigFloat& b) {
    mpfr_add(v_, v_, b.v_, MPFR_RNDN);
    return *this;
  }

  friend bool operator<(const BigFloat& a, const BigFloat& b) { return mpfr_less_p(a.v_, b.v_); }
  friend bool operator==(const BigFloat& a, const BigFloat& b) { return mpfr_equal_p(a.v_, b.v_); }

  /// Apply a unary MPFR function such as mpfr_sqrt or mpfr_exp.
  template <typename Fn>
  BigFloat apply(Fn fn) const {
    BigFloat r(precision());
    fn(r.v_, v_, MPFR_RNDN);
    return r;
  }

  /// Shortest decimal string with `digits` significant digits.
  std::string to_string(int digits = 20) const {
    char* s = nullptr;
    mpfr_asprintf(&s, "%.*Rg", digits, v_);
    std::string out(s);
    mpfr_free_str(s);
    return out;
  }

 private:
  mpfr_t v_;
};

}  // namespace recurlab
