#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "recurlab/torus_maps.hpp"

using namespace recurlab;

namespace {

MatrixTorusMap sqrt2_map() { return MatrixTorusMap::from_strings({{"3/2", "sqrt(2)"}, {"1", "-2"}}); }
MatrixTorusMap doubling() { return MatrixTorusMap::from_strings({{"2"}}); }

// Independent root oracle: bisection on the characteristic polynomial
// lambda^2 + lambda/2 - (3 + sqrt 2) of the [[3/2, sqrt 2], [1, -2]] matrix.
double bisect_root(double lo, double hi) {
  auto f = [](double x) { return x * x + x / 2 - (3 + std::sqrt(2.0)); };
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if ((f(lo) < 0) == (f(mid) < 0))
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(ValidateExpanding, IdentityFailsWithZeroMargin) {
  auto cert = validate_expanding(MatrixTorusMap::scaled_identity(2, 1));
  EXPECT_FALSE(cert.passes);
  EXPECT_EQ(cert.margin, 0.0);
}

TEST(ValidateExpanding, TwiceIdentity) {
  auto cert = validate_expanding(MatrixTorusMap::scaled_identity(2, 2));
  EXPECT_TRUE(cert.passes);
  ASSERT_EQ(cert.eigen_moduli.size(), 2U);
  EXPECT_EQ(cert.eigen_moduli[0], 2.0);
  EXPECT_EQ(cert.eigen_moduli[1], 2.0);
  EXPECT_TRUE(cert.integer);
  EXPECT_TRUE(cert.diagonal);
  EXPECT_FALSE(cert.exceeds_one_plus_sqrt_d);  // 2 < 1 + sqrt 2
  EXPECT_TRUE(cert.diagonal_golden);
}

TEST(ValidateExpanding, Sqrt2MapMatchesRootOracle) {
  // Frozen from an independent 30-digit polynomial root solve.
  constexpr double kSmall = 1.86582455850505125;
  constexpr double kLarge = 2.36582455850505125;
  EXPECT_NEAR(bisect_root(1, 2), kSmall, 1e-14);
  EXPECT_NEAR(-bisect_root(-3, -2), kLarge, 1e-14);
  auto cert = validate_expanding(sqrt2_map());
  EXPECT_TRUE(cert.passes);
  EXPECT_NEAR(cert.eigen_moduli[0], kSmall, 1e-9 * kSmall);
  EXPECT_NEAR(cert.eigen_moduli[1], kLarge, 1e-9 * kLarge);
  EXPECT_FALSE(cert.integer);
  EXPECT_FALSE(cert.diagonal);
  EXPECT_FALSE(cert.exceeds_one_plus_sqrt_d);
  EXPECT_NEAR(cert.op_norm_2, 2.4505799, 1e-6);
}

TEST(ValidateExpanding, SingularMatrixRejected) {
  EXPECT_THROW(MatrixTorusMap::from_strings({{"1", "2"}, {"2", "4"}}), SingularMatrix);
  EXPECT_THROW(MatrixTorusMap::from_strings({{"0"}}), SingularMatrix);
}

TEST(ValidateExpanding, ScaleConsistencyProperty) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + trial % 4;  // exercises quadratic, cubic and dense paths
    std::vector<std::vector<double>> a(d, std::vector<double>(d));
    for (auto& row : a)
      for (auto& v : row) v = u(rng);
    const double c = 1.5 + trial * 0.1;
    auto scaled = a;
    for (auto& row : scaled)
      for (auto& v : row) v *= c;
    MatrixTorusMap m1 = MatrixTorusMap::from_values(a);
    MatrixTorusMap m2 = MatrixTorusMap::from_values(scaled);
    for (std::size_t i = 0; i < d; ++i) {
      const double expected = static_cast<double>(m1.eigen_moduli()[i]) * c;
      EXPECT_NEAR(static_cast<double>(m2.eigen_moduli()[i]), expected, 1e-9 * expected) << "d=" << d;
    }
  }
}

TEST(ValidateExpanding, DenseSolverForLargerDimensions) {
  // Companion matrix of (x-2)(x+3)(x-1.5)(x+4): roots known.
  const std::vector<double> roots{2, -3, 1.5, -4};
  // coefficients of monic polynomial, c0..c3
  std::vector<double> c{1};
  for (double r : roots) {
    std::vector<double> next(c.size() + 1, 0);
    for (std::size_t i = 0; i < c.size(); ++i) {
      next[i + 1] += c[i];
      next[i] -= r * c[i];
    }
    c = next;
  }
  std::vector<std::vector<double>> comp(4, std::vector<double>(4, 0));
  for (int i = 1; i < 4; ++i) comp[i][i - 1] = 1;
  for (int i = 0; i < 4; ++i) comp[i][3] = -c[i];
  auto cert = validate_expanding(MatrixTorusMap::from_values(comp));
  EXPECT_NEAR(cert.eigen_moduli[0], 1.5, 1e-9);
  EXPECT_NEAR(cert.eigen_moduli[3], 4.0, 1e-9);
  EXPECT_TRUE(cert.passes);
}

TEST(ValidateExpanding, CubicPathAndCorollaryFlag) {
  auto m = MatrixTorusMap::from_strings({{"3", "1", "0"}, {"0", "4", "1"}, {"1", "0", "5"}});
  auto cert = validate_expanding(m);
  EXPECT_TRUE(cert.passes);
  EXPECT_TRUE(cert.integer);
  EXPECT_FALSE(cert.diagonal);
  // product of moduli equals |det| = 61
  double prod = 1;
  for (double v : cert.eigen_moduli) prod *= v;
  EXPECT_NEAR(prod, 61.0, 1e-9);
  EXPECT_TRUE(cert.exceeds_one_plus_sqrt_d == (cert.eigen_moduli[0] > 1 + std::sqrt(3.0)));
}

TEST(Apply, DoublingMap) {
  auto x = TorusPoint::from_doubles({0.3});
  auto y = apply(doubling(), x);
  EXPECT_NEAR(static_cast<double>(y.coord(0)), 0.6, 1e-16);
}

TEST(Apply, OriginIsFixed) {
  for (const auto& m : {doubling(), sqrt2_map(), MatrixTorusMap::scaled_identity(3, 2)}) {
    auto y = apply(m, TorusPoint::from_doubles(std::vector<double>(m.dim(), 0.0)));
    for (std::size_t i = 0; i < m.dim(); ++i) EXPECT_EQ(y.coord(i), 0.0L);
  }
}

TEST(Apply, Sqrt2MapHandComputation) {
  auto y = apply(sqrt2_map(), TorusPoint::from_doubles({0.5, 0.5}, 128));
  EXPECT_EQ(y.as_float().coords[0].to_string(30), "0.25");
  // sqrt(2)/2 to 30 digits; 128-bit arithmetic resolves ~38 digits.
  EXPECT_EQ(y.as_float().coords[1].to_string(30), "0.707106781186547524400844362105");
}

TEST(Apply, LatticeRejectsNonIntegerMatrix) {
  EXPECT_THROW(apply(sqrt2_map(), TorusPoint::lattice({1, 2}, 5)), UnsupportedExactPath);
}

TEST(Apply, ExhaustedBudgetThrowsWithAdmissibleLength) {
  auto x = TorusPoint::from_doubles({0.1}, 128);  // 128 - 64 guard = 64 doubling steps
  for (int i = 0; i < 64; ++i) x = apply(doubling(), x);
  try {
    apply(doubling(), x);
    FAIL() << "expected PrecisionExhausted";
  } catch (const PrecisionExhausted& e) {
    EXPECT_EQ(e.max_admissible_steps(), 0);
  }
}

TEST(Orbit, DoublingThirdIsPeriodTwo) {
  auto orb = orbit(doubling(), TorusPoint::lattice({1}, 3), 4, {});
  ASSERT_EQ(orb.size(), 5U);
  const std::vector<u64> expected{1, 2, 1, 2, 1};
  for (std::size_t n = 0; n < orb.size(); ++n) EXPECT_EQ(orb[n].as_lattice().numerators[0], expected[n]);
}

TEST(Orbit, TwiceIdentityOnFifthsHasPeriodFour) {
  auto orb = orbit(MatrixTorusMap::scaled_identity(2, 2), TorusPoint::lattice({1, 2}, 5), 4, {});
  // ord_5(2) = 4
  EXPECT_EQ(orb[1].as_lattice().numerators, (std::vector<u64>{2, 4}));
  EXPECT_EQ(orb[2].as_lattice().numerators, (std::vector<u64>{4, 3}));
  EXPECT_EQ(orb[3].as_lattice().numerators, (std::vector<u64>{3, 1}));
  EXPECT_EQ(orb[4].as_lattice().numerators, (std::vector<u64>{1, 2}));
}

TEST(Orbit, ZeroLengthIsStartPoint) {
  auto x = TorusPoint::from_doubles({0.25, 0.5});
  auto orb = orbit(sqrt2_map(), x, 0, required_precision(sqrt2_map(), 0));
  ASSERT_EQ(orb.size(), 1U);
  EXPECT_EQ(orb[0].coord(1), 0.5L);
}

TEST(Orbit, RefusesUnderprovisionedPoint) {
  auto budget = required_precision(doubling(), 1000);
  EXPECT_THROW(orbit(doubling(), TorusPoint::from_doubles({0.1}, 256), 1000, budget), PrecisionExhausted);
  EXPECT_THROW(orbit(doubling(), TorusPoint::from_doubles({0.1}, 2000), 1001, budget), PrecisionExhausted);
  EXPECT_NO_THROW(orbit(doubling(), TorusPoint::from_doubles({0.1}, 1064), 1000, budget));
}

TEST(RequiredPrecision, Formula) {
  EXPECT_EQ(required_precision(doubling(), 1000).bits_required, 1064);
  EXPECT_EQ(required_precision(MatrixTorusMap::scaled_identity(2, 2), 100).bits_required, 164);
  // sigma_max = 2.4505799... from an independent SVD; ceil(100 log2 sigma) = 130.
  EXPECT_EQ(required_precision(sqrt2_map(), 100).bits_required, 194);
}

TEST(Orbit, ExactAndFloatPathsAgree) {
  const auto cat = MatrixTorusMap::from_strings({{"2", "1"}, {"1", "1"}});
  const long N = 40;
  const unsigned P = 120;
  auto pts = sample_lattice_points(cat, 5, 61, 99);
  const double growth = std::log2(static_cast<double>(cat.op_norm_2()));
  for (const auto& x : pts) {
    const auto exact = orbit(cat, x, N, {});
    FloatPoint fp;
    fp.precision_bits = P;
    fp.accuracy_bits = P;
    fp.guard_bits = 0;
    for (std::size_t i = 0; i < 2; ++i) fp.coords.push_back(x.coord_big(i, P));
    PrecisionBudget budget{N, P, 0};
    const auto approx = orbit(cat, TorusPoint::from_float(fp), N, budget);
    for (long n = 0; n <= N; ++n) {
      const double tol = std::ldexp(1.0, static_cast<int>(-static_cast<double>(P) + growth * n + 4));
      for (std::size_t i = 0; i < 2; ++i) {
        long double diff = std::abs(exact[n].coord(i) - approx[n].coord(i));
        diff = std::min(diff, 1 - diff);
        EXPECT_LE(static_cast<double>(diff), std::max(tol, 1e-18)) << "n=" << n;
      }
    }
  }
}

TEST(Apply, IntegerMatrixPreservesLebesgue) {
  const auto cat = MatrixTorusMap::from_strings({{"2", "1"}, {"1", "1"}});
  std::mt19937_64 rng(5);
  const int bins = 8, samples = 200000;
  std::vector<int> hist(bins * bins, 0);
  for (int s = 0; s < samples; ++s) {
    double x[2] = {uniform01(rng), uniform01(rng)}, y[2];
    cat.apply_double(x, y);
    ++hist[static_cast<int>(y[0] * bins) * bins + static_cast<int>(y[1] * bins)];
  }
  const double expected = static_cast<double>(samples) / (bins * bins);
  const double sigma = std::sqrt(expected * (1 - 1.0 / (bins * bins)));
  for (int h : hist) EXPECT_LE(std::abs(h - expected), 4.5 * sigma);
}

TEST(Apply, LinearModOneOnLattice) {
  const auto m = MatrixTorusMap::from_strings({{"3", "1"}, {"-2", "5"}});
  std::mt19937_64 rng(3);
  const u64 p = 1000003;
  for (int t = 0; t < 100; ++t) {
    std::vector<u64> a{rng() % p, rng() % p}, b{rng() % p, rng() % p}, s{(a[0] + b[0]) % p, (a[1] + b[1]) % p};
    auto ta = apply(m, TorusPoint::lattice(a, p)).as_lattice().numerators;
    auto tb = apply(m, TorusPoint::lattice(b, p)).as_lattice().numerators;
    auto ts = apply(m, TorusPoint::lattice(s, p)).as_lattice().numerators;
    for (int i = 0; i < 2; ++i) EXPECT_EQ(ts[i], (ta[i] + tb[i]) % p);
  }
}

TEST(SampleLatticePoints, EmptyAndDeterministic) {
  const auto m = MatrixTorusMap::scaled_identity(2, 2);
  EXPECT_TRUE(sample_lattice_points(m, 0, 61, 1).empty());
  auto a = sample_lattice_points(m, 2, 61, 42);
  auto b = sample_lattice_points(m, 2, 61, 42);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(a[i].as_lattice().modulus, b[i].as_lattice().modulus);
    EXPECT_EQ(a[i].as_lattice().numerators, b[i].as_lattice().numerators);
    EXPECT_GE(a[i].as_lattice().modulus, u64{1} << 61);
  }
  EXPECT_THROW(sample_lattice_points(sqrt2_map(), 1, 61, 1), UnsupportedExactPath);
  EXPECT_THROW(sample_lattice_points(m, 1, 30, 1), ConfigError);
}

TEST(SampleLatticePoints, MeanWithinCltBound) {
  const auto pts = sample_lattice_points(doubling(), 10000, 61, 2024);
  long double sum = 0;
  for (const auto& p : pts) sum += p.coord(0);
  const double mean = static_cast<double>(sum / pts.size());
  EXPECT_LE(std::abs(mean - 0.5), 4.0 / std::sqrt(10000.0 * 12.0));
}
