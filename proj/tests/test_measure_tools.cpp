#include <gtest/gtest.h>

#include <cmath>

#include "recurlab/measure_tools.hpp"

using namespace recurlab;

namespace {

// Three full branches: 2x on [0,1/2), 2x-1 on [1/2,3/4), 4x-3 on [3/4,1).
// Stationary density: 6/5 on [0,1/2), 4/5 on [1/2,1).
struct MarkovFixture {
  std::size_t dim() const { return 1; }
  void apply_double(const double* x, double* y) const {
    const double v = x[0];
    y[0] = v < 0.5 ? 2 * v : (v < 0.75 ? 2 * v - 1 : 4 * v - 3);
    if (y[0] >= 1) y[0] = 0;
  }
};

Box box(std::vector<Real> lo, std::vector<Real> hi) { return Box{std::move(lo), std::move(hi)}; }

}  // namespace

TEST(Ulam, DoublingIsLebesgue) {
  auto g = ulam_density(MatrixTorusMap::from_strings({{"2"}}), 256, 1);
  Real dev = 0, total = 0;
  for (std::size_t c = 0; c < g.cells(); ++c) {
    dev = std::max(dev, std::abs(g.density(c) - 1));
    total += g.masses[c];
  }
  EXPECT_LE(dev, 1e-3L);
  EXPECT_NEAR(static_cast<double>(total), 1.0, 1e-12);
}

TEST(Ulam, TwiceIdentityIsLebesgue) {
  auto g = ulam_density(MatrixTorusMap::scaled_identity(2, 2), 64, 1);
  auto rep = density_bound_check(g);
  EXPECT_LE(*rep.c, 1 + 1e-3L);
}

TEST(Ulam, IntegerShearBoundAtFineResolution) {
  auto g = ulam_density(MatrixTorusMap::from_strings({{"3", "1"}, {"1", "2"}}), 256, 2);
  EXPECT_LE(*density_bound_check(g).c, 1 + 5e-3L);
}

TEST(Ulam, MarkovFixtureMatchesAnalyticDensity) {
  auto g = ulam_density(MarkovFixture{}, 256, 3);
  Real l1 = 0;
  for (std::size_t c = 0; c < g.cells(); ++c) {
    const Real exact = c < 128 ? 1.2L : 0.8L;
    l1 += std::abs(g.density(c) - exact) / 256;
  }
  EXPECT_LT(l1, 1e-2L);
}

TEST(Ulam, Deterministic) {
  auto m = MatrixTorusMap::from_strings({{"3/2", "sqrt(2)"}, {"1", "-2"}});
  auto a = ulam_density(m, 32, 9), b = ulam_density(m, 32, 9);
  EXPECT_EQ(a.masses, b.masses);
}

TEST(Ulam, Preconditions) {
  EXPECT_THROW(ulam_density(MatrixTorusMap::from_strings({{"2"}}), 100, 1), DomainError);
  EXPECT_THROW(ulam_density(MatrixTorusMap::scaled_identity(1, 1), 64, 1), DomainError);
  EXPECT_THROW(ulam_density(MatrixTorusMap::from_strings({{"2"}}), 64, 1, 64, 1e-10L, 0), NumericalFailure);
}

TEST(DensityBound, Cases) {
  auto g = DensityGrid::lebesgue(1, 2);
  EXPECT_EQ(*density_bound_check(g).c, 1.0L);
  g.masses = {0.25L, 0.75L};  // h = {0.5, 1.5}
  EXPECT_NEAR(static_cast<double>(*density_bound_check(g).c), 2.0, 1e-15);
  g.masses = {0, 1};
  auto rep = density_bound_check(g);
  EXPECT_FALSE(rep.bounded);
  EXPECT_FALSE(rep.c.has_value());
}

TEST(ScaledRadius, Closed1d) {
  auto s = solve_scaled_radius(DensityGrid::lebesgue(1, 64), {0.3L}, {0.1L}, 0.1L);
  EXPECT_TRUE(s.converged);
  EXPECT_NEAR(static_cast<double>(s.l), 0.5, 1e-9);
  EXPECT_EQ(solve_scaled_radius(DensityGrid::lebesgue(1, 64), {0.3L}, {0.1L}, 0).l, 0.0L);
  EXPECT_THROW(solve_scaled_radius(DensityGrid::lebesgue(1, 64), {0.3L}, {0.1L}, 1.5L), DomainError);
}

TEST(ScaledRadius, Closed2dWithWrap) {
  auto s = solve_scaled_radius(DensityGrid::lebesgue(2, 32), {0.95L, 0.02L}, {0.1L, 0.2L}, 0.01L);
  EXPECT_NEAR(static_cast<double>(s.l), std::sqrt(0.01 / (4 * 0.02)), 1e-9);
  EXPECT_NEAR(static_cast<double>(s.l), 0.35355339059327373, 1e-9);
}

TEST(ScaledRadius, MonotoneInTarget) {
  DensityGrid g;
  g.dim = 1;
  g.resolution = 2;
  g.masses = {0.6L, 0.4L};
  Real prev = 0;
  for (Real t = 0.05L; t < 1; t += 0.05L) {
    auto s = solve_scaled_radius(g, {0.4L}, {0.05L}, t);
    EXPECT_TRUE(s.converged);
    EXPECT_GT(s.l, prev);
    prev = s.l;
  }
}

TEST(Mixing, DoublingHalfIntervalsIndependent) {
  auto m = MatrixTorusMap::from_strings({{"2"}});
  std::vector<std::pair<Box, Box>> pairs{{box({0}, {0.5L}), box({0}, {0.5L})}};
  auto prof = estimate_mixing(m, pairs, {0, 1, 2, 3}, 200000, 7);
  EXPECT_TRUE(prof.exact_marginals);
  EXPECT_NEAR(static_cast<double>(prof.phi_hat[0]), 0.5, 1e-15);  // 1 - mu(F)
  for (std::size_t i = 1; i < 4; ++i) EXPECT_LT(prof.phi_hat[i], prof.noise_floor);
  EXPECT_FALSE(prof.tau.has_value());
}

TEST(Mixing, DyadicGenerationIndependence) {
  // F = [3/8, 1/2) is dyadic of generation 3: independent of any G for n >= 3.
  auto m = MatrixTorusMap::from_strings({{"2"}});
  std::vector<std::pair<Box, Box>> pairs{{box({0.375L}, {0.5L}), box({0.1L}, {0.35L})}};
  auto prof = estimate_mixing(m, pairs, {3, 4, 5}, 200000, 8);
  for (Real v : prof.phi_hat) EXPECT_LT(v, prof.noise_floor);
  // at lag 1 the pair is far from independent: F maps onto [3/4, 1)
  auto lag1 = estimate_mixing(m, pairs, {1}, 100000, 8);
  EXPECT_NEAR(static_cast<double>(lag1.phi_hat[0]), 0.125, 0.01);
}

TEST(Mixing, SmallBoxDecayFit) {
  auto m = MatrixTorusMap::from_strings({{"2"}});
  std::vector<std::pair<Box, Box>> pairs{{box({0.2L}, {0.3L}), box({0.2L}, {0.3L})}};
  auto prof = estimate_mixing(m, pairs, {1, 2, 3, 4, 5, 6}, 200000, 9);
  // T^-1 G = [0.1, 0.15) u [0.6, 0.65) misses F, so phi(1) = mu(F) = 0.1
  EXPECT_NEAR(static_cast<double>(prof.phi_hat[0]), 0.1, 1e-3);
  EXPECT_GT(prof.phi_hat[0], prof.noise_floor);
}

TEST(Mixing, NonIntegerMapUsesSampledMarginals) {
  auto m = MatrixTorusMap::from_strings({{"3/2", "sqrt(2)"}, {"1", "-2"}});
  auto prof = estimate_mixing(m, default_pair_family(2, 1), {0, 2, 4, 6}, 100000, 10);
  EXPECT_FALSE(prof.exact_marginals);
  ASSERT_EQ(prof.phi_hat.size(), 4U);
  EXPECT_GT(prof.phi_hat[0], 0.3L);
  EXPECT_LT(prof.phi_hat[3], prof.phi_hat[0]);
}

TEST(Mixing, DefaultFamilySize) {
  EXPECT_EQ(default_pair_family(2, 3).size(), 36U);
  EXPECT_EQ(default_pair_family(1, 3).size(), 16U);
}
