#include <gtest/gtest.h>

#include <cmath>

#include "recurlab/experiments.hpp"

using namespace recurlab;

namespace {

MatrixTorusMap doubling() { return MatrixTorusMap::from_strings({{"2"}}); }

Schedule constant_radius(std::size_t d, Real r, long cutoff = 1000000) {
  Schedule::Params p;
  p.family = "rect-const-then-zero";
  p.dim = d;
  p.scale.assign(d, r);
  p.cutoff = cutoff;
  return build_schedule(p);
}

Schedule harmonic() {
  Schedule::Params p;
  p.family = "rect-power";
  p.scale = {0.25L};
  p.exponent = {1};
  return threshold_schedule(build_schedule(p));
}

HitRecord synthetic(std::vector<long> lags, long N) {
  HitRecord r;
  r.hit_lags = std::move(lags);
  r.N = N;
  return r;
}

}  // namespace

TEST(TraceHits, OneThirdUnderDoubling) {
  auto rec = trace_hits(doubling(), TwistFunction::identity(1), constant_radius(1, 0.1L),
                        TorusPoint::lattice({1}, 3), 10);
  EXPECT_EQ(rec.hit_lags, (std::vector<long>{2, 4, 6, 8, 10}));
}

TEST(TraceHits, SwapUnderTwiceIdentity) {
  // Brute-force oracle with exact fifths: orbit of (1,2)/5 under 2I, centre (2,1)/5.
  const int p = 5;
  int k[2] = {1, 2};
  const int c[2] = {2, 1};
  std::vector<long> expect;
  for (long n = 1; n <= 4; ++n) {
    k[0] = 2 * k[0] % p;
    k[1] = 2 * k[1] % p;
    bool hit = true;
    for (int i = 0; i < 2; ++i) {
      const int diff = std::abs(k[i] - c[i]);
      hit = hit && 10 * std::min(diff, p - diff) < 3 * p;  // distance < 0.3
    }
    if (hit) expect.push_back(n);
  }
  EXPECT_EQ(expect, (std::vector<long>{3, 4}));
  auto rec = trace_hits(MatrixTorusMap::scaled_identity(2, 2), TwistFunction::permute({2, 1}),
                        constant_radius(2, 0.3L), TorusPoint::lattice({1, 2}, 5), 4);
  EXPECT_EQ(rec.hit_lags, expect);
}

TEST(RunHits, ZeroScheduleNeverHits) {
  auto recs = run_hit_experiment(doubling(), TwistFunction::identity(1),
                                 threshold_schedule(constant_radius(1, 0.0L)), 50, 100, 1);
  for (const auto& r : recs) EXPECT_EQ(r.Z(), 0U);
  auto rep = hit_statistics(recs, threshold_schedule(constant_radius(1, 0.0L)));
  EXPECT_EQ(rep.empirical, "zero-like");
  EXPECT_EQ(rep.fraction_hit_ge.at(1), 0.0L);
}

TEST(RunHits, MeasureOneTargetsAlwaysHit) {
  auto s = threshold_schedule(constant_radius(2, 0.5L, 20));
  auto recs = run_hit_experiment(MatrixTorusMap::scaled_identity(2, 2), TwistFunction::permute({2, 1}), s, 30, 20, 2);
  // n = 1 is zeroed by thresholding (1/2 is not above 1/1^2); every later lag hits.
  for (const auto& r : recs) EXPECT_EQ(r.Z(), 19U);
  auto rep = hit_statistics(recs, s);
  EXPECT_EQ(rep.mean_Z, 19.0L);
}

TEST(RunHits, DeterministicAcrossThreads) {
  ExperimentOptions one, eight;
  eight.threads = 8;
  auto a = run_hit_experiment(doubling(), TwistFunction::identity(1), harmonic(), 300, 500, 11, one);
  auto b = run_hit_experiment(doubling(), TwistFunction::identity(1), harmonic(), 300, 500, 11, eight);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].hit_lags, b[i].hit_lags);
    EXPECT_EQ(a[i].initial, b[i].initial);
  }
}

TEST(RunHits, MonotoneInN) {
  auto a = run_hit_experiment(doubling(), TwistFunction::identity(1), harmonic(), 100, 200, 5);
  auto b = run_hit_experiment(doubling(), TwistFunction::identity(1), harmonic(), 100, 400, 5);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_LE(a[i].hit_lags.size(), b[i].hit_lags.size());
    EXPECT_TRUE(std::equal(a[i].hit_lags.begin(), a[i].hit_lags.end(), b[i].hit_lags.begin()));
  }
}

TEST(RunHits, ExactAndHighPrecisionAgree) {
  // Same statistic from two arithmetic paths (different samples).
  ExperimentOptions hp;
  hp.mode = ArithmeticMode::HighPrecision;
  auto s = threshold_schedule(constant_radius(1, 0.1L));
  auto exact = hit_statistics(run_hit_experiment(doubling(), TwistFunction::identity(1), s, 2000, 50, 3), s);
  auto hpr = hit_statistics(run_hit_experiment(doubling(), TwistFunction::identity(1), s, 2000, 50, 3, hp), s);
  // E[Z] = 0.2 * 47 (lags 4..50 survive thresholding: 0.1 > 1/n^2 iff n >= 4)
  EXPECT_NEAR(static_cast<double>(exact.measure_sum), 0.2 * 47, 1e-12);
  EXPECT_NEAR(static_cast<double>(exact.mean_Z), 9.4, 0.5);
  EXPECT_NEAR(static_cast<double>(hpr.mean_Z), 9.4, 0.5);
}

TEST(RunHits, Preconditions) {
  Schedule::Params p;
  p.family = "rect-power";
  p.scale = {0.25L};
  p.exponent = {1};
  auto raw = build_schedule(p);
  EXPECT_THROW(run_hit_experiment(doubling(), TwistFunction::identity(1), raw, 1, 10, 1), ConfigError);
  auto fig1 = MatrixTorusMap::from_strings({{"3/2", "sqrt(2)"}, {"1", "-2"}});
  EXPECT_THROW(run_hit_experiment(fig1, TwistFunction::identity(2), threshold_schedule(constant_radius(2, 0.1L)), 1, 10, 1),
               UnsupportedExactPath);
  ExperimentOptions small;
  small.prime_bits = 12;  // guard needs r >= 2^10 / 2^12 = 0.25
  EXPECT_THROW(run_hit_experiment(doubling(), TwistFunction::identity(1), harmonic(), 1, 10, 1, small), ConfigError);
}

TEST(RunHits, HighPrecisionNonIntegerMap) {
  ExperimentOptions hp;
  hp.mode = ArithmeticMode::HighPrecision;
  hp.threads = 4;
  auto fig1 = MatrixTorusMap::from_strings({{"3/2", "sqrt(2)"}, {"1", "-2"}});
  auto s = threshold_schedule(constant_radius(2, 0.25L));
  auto recs = run_hit_experiment(fig1, TwistFunction::identity(2), s, 200, 40, 4, hp);
  auto rep = hit_statistics(recs, s);
  EXPECT_GT(rep.mean_Z, 0);
}

TEST(Statistics, ConservationAndSyntheticAllHits) {
  std::vector<HitRecord> recs;
  for (int i = 0; i < 10; ++i) {
    std::vector<long> lags;
    for (long n = 1; n <= 8; ++n) lags.push_back(n);
    recs.push_back(synthetic(lags, 8));
  }
  auto rep = hit_statistics(recs, threshold_schedule(constant_radius(1, 0.5L, 8)));
  EXPECT_EQ(rep.mean_Z, 8.0L);
  EXPECT_GE(rep.fraction_hit_ge.at(1), rep.fraction_hit_ge.at(2));
  EXPECT_GE(rep.fraction_hit_ge.at(2), rep.fraction_hit_ge.at(5));
}

TEST(Statistics, TailStartDefaultIsHalfN) {
  std::vector<HitRecord> recs{synthetic({3, 70}, 100), synthetic({10}, 100)};
  auto rep = hit_statistics(recs, harmonic());
  EXPECT_EQ(rep.tail_start, 50);
  EXPECT_NEAR(static_cast<double>(rep.tail_fraction), 0.5, 1e-18);
  EXPECT_EQ(rep.mean_Z_curve.back(), 1.5L);
}

TEST(Verdict, Mapping) {
  ExperimentReport r;
  r.predicted = "one";
  r.empirical = "one-like";
  EXPECT_EQ(zero_one_verdict(r).exit_code, 0);
  r.empirical = "zero-like";
  EXPECT_EQ(zero_one_verdict(r).exit_code, 3);
  r.empirical = "inconclusive";
  EXPECT_EQ(zero_one_verdict(r).exit_code, 4);
  r.predicted = "no prediction";
  r.empirical = "one-like";
  auto v = zero_one_verdict(r);
  EXPECT_FALSE(v.agreement.has_value());
  EXPECT_EQ(v.exit_code, 0);
}

TEST(QuasiIndependence, DoublingHalfBall) {
  Box B{{0}, {0.5L}};
  std::vector<long> lags;
  for (long n = 10; n <= 20; ++n) lags.push_back(n);
  auto rows = quasi_independence_check(doubling(), B, TwistFunction::identity(1), constant_radius(1, 0.05L), lags,
                                       100000, 6);
  ASSERT_EQ(rows.size(), lags.size());
  std::size_t tight = 0;
  for (const auto& row : rows) {
    EXPECT_GE(row.ratio, 0.5L);
    EXPECT_LE(row.ratio, 2.0L);
    tight += row.ratio >= 0.8L && row.ratio <= 1.25L;
  }
  EXPECT_GE(tight, static_cast<std::size_t>(std::ceil(0.95 * rows.size())));
}

TEST(QuasiIndependence, ConstantTwistLagZero) {
  const Real r = 0.05L;
  Box B{{0.4L - r}, {0.4L + r}};
  auto rows = quasi_independence_check(doubling(), B, TwistFunction::constant(TorusPoint::from_doubles({0.4})),
                                       constant_radius(1, r), {0}, 100000, 7);
  ASSERT_EQ(rows.size(), 1U);
  EXPECT_NEAR(static_cast<double>(rows[0].ratio), 1 / (2 * 0.05), 0.05);
}

TEST(QuasiIndependence, MeasureOneTargetRatioIsOne) {
  Box B{{0.1L}, {0.6L}};
  auto rows = quasi_independence_check(doubling(), B, TwistFunction::identity(1), constant_radius(1, 0.5L), {3, 7},
                                       20000, 8);
  for (const auto& row : rows) EXPECT_EQ(row.ratio, 1.0L);
}

TEST(PairCorrelation, IndependentSynthetic) {
  std::vector<HitRecord> recs;
  const double pm = 0.3, pn = 0.4;
  for (std::size_t i = 0; i < 200000; ++i) {
    auto rng = make_rng(77, i);
    std::vector<long> lags;
    if (uniform01(rng) < pm) lags.push_back(3);
    if (uniform01(rng) < pn) lags.push_back(9);
    recs.push_back(synthetic(lags, 10));
  }
  auto rep = pair_correlation_check(recs, {{3, 9}, {9, 9}}, [](long) { return Real(0); });
  EXPECT_NEAR(static_cast<double>(*rep.rows[0].implied_C), 1.0, 0.03);
  EXPECT_TRUE(rep.rows[1].degenerate);
  EXPECT_NEAR(static_cast<double>(*rep.rows[1].implied_C), 1 / 0.4, 0.05);
}

TEST(PairCorrelation, DoublingRecurrence) {
  auto s = threshold_schedule(constant_radius(1, 0.05L));
  auto recs = run_hit_experiment(doubling(), TwistFunction::identity(1), s, 100000, 20, 12);
  auto prof = estimate_mixing(doubling(), default_pair_family(1, 1), {10}, 100000, 13);
  const Real phi10 = prof.phi_hat[0];
  auto rep = pair_correlation_check(recs, {{10, 20}}, [&](long) { return phi10; });
  EXPECT_LE(*rep.rows[0].implied_C, 4.0L);
}
