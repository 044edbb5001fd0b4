#include <gtest/gtest.h>

#include <cmath>

#include "recurlab/twists.hpp"

using namespace recurlab;

namespace {

TwistFunction half_shear() { return TwistFunction::affine_from_strings({{"1/2", "1/2"}, {"0", "1"}}); }

}  // namespace

TEST(Evaluate, Identity) {
  auto y = TwistFunction::identity(2).evaluate(TorusPoint::from_doubles({0.3, 0.7}));
  EXPECT_NEAR(static_cast<double>(y.coord(0)), 0.3, 1e-17);
  EXPECT_NEAR(static_cast<double>(y.coord(1)), 0.7, 1e-17);
}

TEST(Evaluate, Swap) {
  auto f = TwistFunction::permute({2, 1});
  auto y = f.evaluate(TorusPoint::from_doubles({0.3, 0.7}));
  EXPECT_NEAR(static_cast<double>(y.coord(0)), 0.7, 1e-17);
  EXPECT_NEAR(static_cast<double>(y.coord(1)), 0.3, 1e-17);
  auto lat = f.evaluate(TorusPoint::lattice({3, 5}, 7));
  EXPECT_EQ(lat.as_lattice().numerators, (std::vector<u64>{5, 3}));
}

TEST(Evaluate, PermutationInverseIsExact) {
  auto f = TwistFunction::permute({2, 3, 1});
  auto g = TwistFunction::permute({3, 1, 2});
  auto x = TorusPoint::lattice({1, 2, 4}, 1000003);
  EXPECT_EQ(g.evaluate(f.evaluate(x)).as_lattice().numerators, x.as_lattice().numerators);
}

TEST(Evaluate, HalfShear) {
  auto f = half_shear();
  EXPECT_NEAR(static_cast<double>(f.declared_p()), 1.5, 1e-18);
  auto y = f.evaluate(TorusPoint::from_doubles({0.5, 0.5}));
  EXPECT_EQ(y.coord_string(0), "0.25");
  EXPECT_EQ(y.coord_string(1), "0.75");
  auto yd = f.evaluate(std::vector<double>{0.5, 0.5});
  EXPECT_EQ(yd[0], 0.25);
  EXPECT_EQ(yd[1], 0.75);
}

TEST(Evaluate, IntegerAffineStaysOnLattice) {
  auto f = TwistFunction::affine_from_strings({{"2", "1"}, {"-1", "1"}});
  auto y = f.evaluate(TorusPoint::lattice({3, 4}, 11));
  ASSERT_TRUE(y.is_lattice());
  // (3,4) A = (6 - 4, 3 + 4) = (2, 7)
  EXPECT_EQ(y.as_lattice().numerators, (std::vector<u64>{2, 7}));
}

TEST(Evaluate, AffineOffsetWraps) {
  auto f = TwistFunction::affine_from_strings({{"1", "0"}, {"0", "1"}}, {"0.75", "0"});
  auto y = f.evaluate(TorusPoint::from_doubles({0.5, 0.25}));
  EXPECT_EQ(y.coord_string(0), "0.25");
}

TEST(Evaluate, CoordinatewiseDemo) {
  auto f = TwistFunction::coordinatewise_demo(6, 0.5);
  const double x = 0.5;
  auto y = f.evaluate(TorusPoint::from_doubles(std::vector<double>(6, x)));
  const double e = std::exp(1.0), pi = std::acos(-1.0);
  const double expect[6] = {1 - x, (std::exp(x) - 1) / (e - 1), std::log(x + 1) / std::log(2.0),
                            0.5 * x, std::tan(pi * x / 4), 4 / pi * std::atan(x)};
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(static_cast<double>(y.coord(i)), expect[i], 1e-15) << i;
  EXPECT_NEAR(static_cast<double>(f.declared_p()), e / (e - 1), 1e-15);
  EXPECT_TRUE(f.coordinatewise());
  // 1 - 0 wraps to 0
  EXPECT_EQ(f.evaluate(TorusPoint::from_doubles(std::vector<double>(6, 0.0))).coord(0), 0.0L);
}

TEST(Evaluate, CustomOutOfRange) {
  auto f = TwistFunction::custom(1, [](const std::vector<double>& x) { return std::vector<double>{x[0] + 1}; }, 1);
  EXPECT_THROW(f.evaluate(TorusPoint::from_doubles({0.2})), RangeError);
}

TEST(Evaluate, OutputsInUnitCube) {
  std::vector<TwistFunction> fs{TwistFunction::identity(3), TwistFunction::permute({3, 1, 2}),
                                TwistFunction::affine_from_strings({{"2", "1", "0"}, {"0.5", "-3", "1"}, {"0", "0", "1"}}),
                                TwistFunction::coordinatewise_demo(3)};
  std::mt19937_64 rng(3);
  for (const auto& f : fs)
    for (int s = 0; s < 2000; ++s) {
      auto y = f.evaluate(std::vector<double>{uniform01(rng), uniform01(rng), uniform01(rng)});
      for (double v : y) {
        EXPECT_GE(v, 0.0);
        EXPECT_LT(v, 1.0);
      }
    }
}

TEST(Evaluate, RejectsBadConfigs) {
  EXPECT_THROW(TwistFunction::permute({1, 1}), ConfigError);
  EXPECT_THROW(TwistFunction::coordinatewise_demo(2, 1.5), ConfigError);
  EXPECT_THROW(TwistFunction::affine_from_strings({{"1", "0"}}), ConfigError);
}

TEST(Lipschitz, Identity) {
  const Real p = estimate_lipschitz(TwistFunction::identity(2), 10000, 1);
  EXPECT_LE(p, 1 + 1e-9L);
  EXPECT_GE(p, 0.99L);
}

TEST(Lipschitz, Constant) {
  EXPECT_EQ(estimate_lipschitz(TwistFunction::constant(TorusPoint::from_doubles({0.4, 0.1})), 1000, 2), 0.0L);
}

TEST(Lipschitz, BuiltinsHonourDeclaredConstant) {
  std::vector<TwistFunction> fs{TwistFunction::affine_from_strings({{"2", "0"}, {"0", "2"}}), half_shear(),
                                TwistFunction::permute({2, 1}), TwistFunction::coordinatewise_demo(6, 1.0),
                                TwistFunction::coordinatewise_demo(6, 0.25)};
  for (const auto& f : fs) {
    const Real p = estimate_lipschitz(f, 20000, 5);
    EXPECT_LE(p, f.declared_p() + 1e-9L);
    EXPECT_GT(p, 0.9L * f.declared_p());
  }
}

TEST(Pushforward, IdentityIsFlat) {
  auto diag = pushforward_diagnostic(TwistFunction::identity(2), 8, 200000, 4);
  EXPECT_EQ(diag.label, "heuristic");
  EXPECT_LT(diag.max_ratio, 1.15L);
  EXPECT_TRUE(diag.flagged_cells.empty());
}

TEST(Pushforward, ConstantIsFlagged) {
  auto diag = pushforward_diagnostic(TwistFunction::constant(TorusPoint::from_doubles({0.3, 0.6})), 8, 100000, 4);
  EXPECT_EQ(diag.max_ratio, 64.0L);
  EXPECT_EQ(diag.flagged_cells.size(), 1U);
}

TEST(Pushforward, AffineBoundedByInverseDeterminant) {
  // |det| = 1/2: pushforward density at most 2
  auto diag = pushforward_diagnostic(half_shear(), 8, 400000, 4);
  EXPECT_LT(diag.max_ratio, 2.0L + 0.2L);
  EXPECT_TRUE(diag.flagged_cells.empty());
  EXPECT_THROW(pushforward_diagnostic(half_shear(), 6, 400000, 4), DomainError);
}
