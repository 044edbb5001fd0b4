#pragma once

// Hit-count experiments: for sampled x, record every n <= N with T^n x in the
// target centred at f(x), then compare the counts with the volume series.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "recurlab/errors.hpp"
#include "recurlab/measure_tools.hpp"
#include "recurlab/numeric.hpp"
#include "recurlab/targets.hpp"
#include "recurlab/torus_maps.hpp"
#include "recurlab/twists.hpp"

namespace recurlab {

enum class ArithmeticMode { ExactLattice, HighPrecision };

inline std::string to_string(ArithmeticMode m) {
  return m == ArithmeticMode::ExactLattice ? "exact-lattice" : "high-precision";
}

inline ArithmeticMode parse_arithmetic_mode(const std::string& s) {
  if (s == "exact-lattice") return ArithmeticMode::ExactLattice;
  if (s == "high-precision") return ArithmeticMode::HighPrecision;
  throw ConfigError("arithmetic_mode must be 'exact-lattice' or 'high-precision', got '" + s + "'");
}

struct HitRecord {
  std::size_t sample_index = 0;
  /// Initial point, "k/p" per coordinate on the lattice path.
  std::vector<std::string> initial;
  std::vector<long> hit_lags;
  long N = 0;
  std::size_t Z() const { return hit_lags.size(); }
  long last_hit() const { return hit_lags.empty() ? 0 : hit_lags.back(); }
  bool hit_at(long n) const { return std::binary_search(hit_lags.begin(), hit_lags.end(), n); }
};

struct ExperimentOptions {
  ArithmeticMode mode = ArithmeticMode::ExactLattice;
  /// Lattice primes are drawn from [2^prime_bits, 2^(prime_bits+1)).
  unsigned prime_bits = 61;
  unsigned guard_bits = kDefaultGuardBits;
  unsigned threads = 1;
  /// Optional mu-density for rejection sampling of initial points.
  const DensityGrid* initial_density = nullptr;
};

namespace detail {

/// Run fn(i) for i in [0, count) over up to `threads` workers. Each index is
/// handled by exactly one worker, so results stored by index do not depend on
/// the split.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(1, count))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline Real min_positive_radius(const Schedule& s, long N) {
  Real best = INFINITY;
  for (long n = 1; n <= N; ++n) {
    if (s.kind() == ScheduleKind::Radius) {
      for (Real r : s.radius(n))
        if (r > 0) best = std::min(best, r);
    } else {
      // A hyperboloid of parameter delta contains points at distance delta in every axis.
      const Real dl = s.delta(n);
      if (dl > 0) best = std::min(best, dl);
    }
  }
  return best;
}

/// Hit test on the exact lattice path: integer distances, one division.
struct LatticeTarget {
  std::vector<u64> center;
  u64 p = 0;

  bool hit(const std::vector<u64>& k, const Schedule& s, long n) const {
    const std::size_t d = k.size();
    const Real pr = static_cast<Real>(p);
    if (s.kind() == ScheduleKind::Radius) {
      const auto r = s.radius(n);
      for (std::size_t i = 0; i < d; ++i) {
        if (r[i] >= 0.5L) continue;
        const u64 diff = k[i] >= center[i] ? k[i] - center[i] : center[i] - k[i];
        if (!(static_cast<Real>(std::min(diff, p - diff)) < r[i] * pr)) return false;
      }
      return true;
    }
    const Real delta = s.delta(n);
    Real prod = 1;
    for (std::size_t i = 0; i < d; ++i) {
      const u64 diff = k[i] >= center[i] ? k[i] - center[i] : center[i] - k[i];
      prod *= static_cast<Real>(std::min(diff, p - diff)) / pr;
    }
    return prod < delta;
  }
};

inline bool general_hit(const TorusPoint& y, const TorusPoint& center, const Schedule& s, long n) {
  if (s.kind() == ScheduleKind::Radius) return RectTarget(center, s.radius(n)).contains(y);
  return HyperboloidTarget(center, s.delta(n)).contains(y);
}

}  // namespace detail

/// Hit lags of a single given point (lattice points exact; float points use
/// the precision budget for N).
inline HitRecord trace_hits(const MatrixTorusMap& map, const TwistFunction& twist, const Schedule& schedule,
                            const TorusPoint& x, long N) {
  const TorusPoint fx = twist.evaluate(x);
  const auto path = orbit(map, x, N, required_precision(map, N));
  HitRecord rec;
  rec.N = N;
  for (std::size_t j = 0; j < x.dim(); ++j) rec.initial.push_back(x.coord_string(j));
  for (long n = 1; n <= N; ++n)
    if (detail::general_hit(path[static_cast<std::size_t>(n)], fx, schedule, n)) rec.hit_lags.push_back(n);
  return rec;
}

/// One HitRecord per sample, in sample order.
inline std::vector<HitRecord> run_hit_experiment(const MatrixTorusMap& map, const TwistFunction& twist,
                                                 const Schedule& schedule, std::size_t M, long N, u64 seed,
                                                 const ExperimentOptions& opt = {}) {
  const std::size_t d = map.dim();
  if (twist.dim() != d || schedule.dim() != d) throw ConfigError("map, twist and schedule dimensions differ");
  if (N < 1) throw ConfigError("N must be at least 1");
  if (schedule.kind() == ScheduleKind::Radius && !schedule.thresholded())
    throw ConfigError("radius schedules must be thresholded before running");

  std::vector<HitRecord> records(M);
  if (opt.mode == ArithmeticMode::ExactLattice) {
    if (!map.is_integer()) throw UnsupportedExactPath("exact-lattice mode needs an integer matrix");
    if (opt.initial_density) throw ConfigError("density resampling is only available in high-precision mode");
    const Real guard = std::ldexp(Real(1), 10 - static_cast<int>(opt.prime_bits));
    const Real rmin = detail::min_positive_radius(schedule, N);
    if (rmin < guard)
      throw ConfigError("lattice guard violated: smallest target size " + std::to_string(static_cast<double>(rmin)) +
                        " is below 2^10/2^prime_bits");
    detail::parallel_for(M, opt.threads, [&](std::size_t i) {
      auto rng = make_rng(seed, i, /*stream=*/1);
      const u64 p = random_prime(opt.prime_bits, rng);
      std::uniform_int_distribution<u64> dist(0, p - 1);
      std::vector<u64> k(d);
      for (auto& ki : k) ki = dist(rng);
      const TorusPoint x = TorusPoint::lattice(k, p);
      const TorusPoint fx = twist.evaluate(x);
      HitRecord& rec = records[i];
      rec.sample_index = i;
      rec.N = N;
      for (std::size_t j = 0; j < d; ++j) rec.initial.push_back(x.coord_string(j));
      const auto t = detail::reduced_matrix(map, p);
      std::vector<u64> scratch;
      const bool exact_center = fx.is_lattice() && fx.as_lattice().modulus == p;
      detail::LatticeTarget target;
      if (exact_center) target = {fx.as_lattice().numerators, p};
      for (long n = 1; n <= N; ++n) {
        detail::lattice_step(t, d, p, k, scratch);
        const bool hit = exact_center ? target.hit(k, schedule, n)
                                      : detail::general_hit(TorusPoint::lattice(k, p), fx, schedule, n);
        if (hit) rec.hit_lags.push_back(n);
      }
    });
    return records;
  }

  const PrecisionBudget budget = required_precision(map, N, opt.guard_bits);
  const auto t = map.evaluate(budget.bits_required);
  const double cost = detail::step_cost_bits(map);
  Real h_max = 0;
  if (opt.initial_density) {
    if (opt.initial_density->dim != d) throw ConfigError("density grid has the wrong dimension");
    for (std::size_t c = 0; c < opt.initial_density->cells(); ++c)
      h_max = std::max(h_max, opt.initial_density->density(c));
  }
  detail::parallel_for(M, opt.threads, [&](std::size_t i) {
    auto rng = make_rng(seed, i, /*stream=*/2);
    TorusPoint x = sample_float_point(d, static_cast<unsigned>(budget.bits_required), rng, budget.guard_bits);
    if (opt.initial_density) {
      for (;;) {
        const auto xd = x.to_doubles();
        const Real h = opt.initial_density->density(opt.initial_density->cell_of(xd.data()));
        if (uniform01(rng) * h_max < h) break;
        x = sample_float_point(d, static_cast<unsigned>(budget.bits_required), rng, budget.guard_bits);
      }
    }
    const TorusPoint fx = twist.evaluate(x);
    HitRecord& rec = records[i];
    rec.sample_index = i;
    rec.N = N;
    for (std::size_t j = 0; j < d; ++j) rec.initial.push_back(x.coord_string(j));
    FloatPoint fp = x.as_float();
    for (long n = 1; n <= N; ++n) {
      detail::float_step(t, d, fp, cost);
      if (detail::general_hit(TorusPoint::from_float(fp), fx, schedule, n)) rec.hit_lags.push_back(n);
    }
  });
  return records;
}

// ---------------------------------------------------------------------------
// Aggregates and verdicts

struct VerdictThresholds {
  Real one_like_fraction = 0.95L;
  /// mean_Z must lie in [S_N / window, window * S_N] for one-like.
  Real window = 2;
  Real tail_fraction_max = 0.2L;
  /// Fraction of N used as the tail start when none is given.
  Real tail_start_fraction = 0.5L;
};

struct ExperimentReport {
  std::size_t M = 0;
  long N = 0;
  /// Sum of exact Lebesgue target measures up to N.
  Real measure_sum = 0;
  /// Sum of prod r_i or of delta (-log delta)^(d-1).
  Real volume_sum = 0;
  /// Measure sum extended to infinity; infinite for divergent schedules.
  Real measure_sum_infinite = 0;
  Real mean_Z = 0;
  Real var_Z = 0;
  std::map<int, Real> fraction_hit_ge;  // k in {1, 2, 5}
  long tail_start = 0;
  Real tail_fraction = 0;
  std::string predicted;  // "one", "zero", "no prediction"
  std::string empirical;  // "one-like", "zero-like", "inconclusive"
  std::optional<bool> agreement;
  std::vector<Real> mean_Z_curve;   // index n-1: mean number of hits at lags <= n
  std::vector<Real> measure_curve;  // index n-1: S_n
  std::vector<std::string> notes;
};

namespace detail {

/// Tail of a positive series beyond N, assuming a_n ~ C n^-s near N.
inline Real power_law_tail(const std::vector<Real>& partial) {
  const std::size_t N = partial.size();
  if (N < 4) return 0;
  const auto term = [&](std::size_t n) { return partial[n - 1] - (n >= 2 ? partial[n - 2] : 0); };
  const Real aN = term(N), aH = term(N / 2);
  if (aN <= 0) return 0;
  if (aH <= 0) return INFINITY;
  const Real s = std::log(aH / aN) / std::log(static_cast<Real>(N) / static_cast<Real>(N / 2));
  if (s <= 1) return INFINITY;
  return aN * static_cast<Real>(N) / (s - 1);
}

}  // namespace detail

inline std::string classify_empirical(const ExperimentReport& r, const VerdictThresholds& th) {
  const Real S = r.measure_sum;
  const Real f1 = r.fraction_hit_ge.at(1);
  if (f1 >= th.one_like_fraction && r.mean_Z >= S / th.window && r.mean_Z <= th.window * S) return "one-like";
  // sqrt(N) stands in for o(N).
  const Real cap = std::min(2 * r.measure_sum_infinite, std::sqrt(static_cast<Real>(r.N)));
  if (r.mean_Z <= cap && r.tail_fraction <= th.tail_fraction_max) return "zero-like";
  return "inconclusive";
}

struct VerdictRecord {
  std::string predicted;
  std::string empirical;
  std::optional<bool> agreement;
  /// Process exit status for the run: 0 agree / no prediction, 3 disagree, 4 inconclusive.
  int exit_code = 0;
};

inline VerdictRecord zero_one_verdict(const ExperimentReport& r) {
  VerdictRecord v;
  v.predicted = r.predicted;
  v.empirical = r.empirical;
  if (r.predicted == "no prediction") {
    v.exit_code = r.empirical == "inconclusive" ? 4 : 0;
    return v;
  }
  if (r.empirical == "inconclusive") {
    v.agreement = false;
    v.exit_code = 4;
    return v;
  }
  v.agreement = (r.predicted == "one" && r.empirical == "one-like") || (r.predicted == "zero" && r.empirical == "zero-like");
  v.exit_code = *v.agreement ? 0 : 3;
  return v;
}

inline ExperimentReport hit_statistics(const std::vector<HitRecord>& records, const Schedule& schedule,
                                       const VerdictThresholds& th = {}, std::optional<long> tail_start = std::nullopt) {
  if (records.empty()) throw DomainError("hit_statistics needs at least one record");
  ExperimentReport r;
  r.M = records.size();
  r.N = records.front().N;
  const auto sums = volume_partial_sums(schedule, r.N);
  r.measure_sum = sums.measure.back();
  r.volume_sum = sums.volume.back();
  r.measure_curve = sums.measure;
  switch (schedule.declared_divergence()) {
    case Divergence::Divergent:
      r.measure_sum_infinite = INFINITY;
      r.predicted = "one";
      break;
    case Divergence::Convergent:
      r.measure_sum_infinite = r.measure_sum + detail::power_law_tail(sums.measure);
      r.predicted = "zero";
      break;
    default:
      r.measure_sum_infinite = r.measure_sum + detail::power_law_tail(sums.measure);
      r.predicted = "no prediction";
  }
  r.tail_start = tail_start.value_or(static_cast<long>(std::floor(th.tail_start_fraction * static_cast<Real>(r.N))));

  const Real M = static_cast<Real>(r.M);
  Real sum = 0, sum_sq = 0;
  std::size_t ge1 = 0, ge2 = 0, ge5 = 0, tail = 0;
  std::vector<std::size_t> per_lag(static_cast<std::size_t>(r.N) + 1, 0);
  for (const auto& rec : records) {
    if (rec.N != r.N) throw DomainError("records have different N");
    const Real z = static_cast<Real>(rec.Z());
    sum += z;
    sum_sq += z * z;
    ge1 += rec.Z() >= 1;
    ge2 += rec.Z() >= 2;
    ge5 += rec.Z() >= 5;
    tail += rec.last_hit() > r.tail_start;
    for (long n : rec.hit_lags) ++per_lag[static_cast<std::size_t>(n)];
  }
  r.mean_Z = sum / M;
  r.var_Z = r.M > 1 ? (sum_sq - M * r.mean_Z * r.mean_Z) / (M - 1) : 0;
  r.fraction_hit_ge = {{1, ge1 / M}, {2, ge2 / M}, {5, ge5 / M}};
  r.tail_fraction = tail / M;
  std::size_t running = 0;
  for (long n = 1; n <= r.N; ++n) {
    running += per_lag[static_cast<std::size_t>(n)];
    r.mean_Z_curve.push_back(running / M);
  }
  r.empirical = classify_empirical(r, th);
  const auto v = zero_one_verdict(r);
  r.agreement = v.agreement;
  r.notes.push_back("verdicts are finite-N heuristics for an almost-sure limsup statement");
  r.notes.push_back("the factor-" + std::to_string(static_cast<int>(th.window)) +
                    " window on mean_Z is a heuristic import, not a proven rate");
  return r;
}

// ---------------------------------------------------------------------------

struct QuasiIndependenceRow {
  long lag = 0;
  Real ratio = 0;
  Real sigma = 0;
  Real target_measure = 0;
};

/// P(x in B and T^n x in target(f(x), n)) / (mu(B) * m(target)), where mu(B)
/// is the empirical frequency of B among the samples.
inline std::vector<QuasiIndependenceRow> quasi_independence_check(const MatrixTorusMap& map, const Box& B,
                                                                  const TwistFunction& twist, const Schedule& schedule,
                                                                  const std::vector<long>& lags, std::size_t M,
                                                                  u64 seed, unsigned prime_bits = 61) {
  if (!map.is_integer()) throw UnsupportedExactPath("quasi-independence needs a Lebesgue-preserving integer map");
  const std::size_t d = map.dim();
  if (B.lo.size() != d) throw DomainError("ball has the wrong dimension");
  if (lags.empty()) throw DomainError("no lags given");
  const long max_lag = *std::max_element(lags.begin(), lags.end());
  std::map<long, std::size_t> joint;
  for (long n : lags) joint[n] = 0;
  std::size_t in_b = 0;
  std::vector<double> xd(d);
  for (std::size_t s = 0; s < M; ++s) {
    auto rng = make_rng(seed, s, /*stream=*/3);
    const u64 p = random_prime(prime_bits, rng);
    std::uniform_int_distribution<u64> dist(0, p - 1);
    std::vector<u64> k(d), scratch;
    for (auto& v : k) v = dist(rng);
    for (std::size_t i = 0; i < d; ++i) xd[i] = static_cast<double>(static_cast<Real>(k[i]) / static_cast<Real>(p));
    if (!box_contains(B, xd.data())) continue;
    ++in_b;
    const TorusPoint x = TorusPoint::lattice(k, p);
    const TorusPoint fx = twist.evaluate(x);
    const bool exact_center = fx.is_lattice() && fx.as_lattice().modulus == p;
    detail::LatticeTarget target;
    if (exact_center) target = {fx.as_lattice().numerators, p};
    const auto t = detail::reduced_matrix(map, p);
    for (long n = 0; n <= max_lag; ++n) {
      if (n > 0) detail::lattice_step(t, d, p, k, scratch);
      auto it = joint.find(n);
      if (it == joint.end()) continue;
      // n = 0 is evaluated with the target sizes of lag 1 when the schedule starts at 1
      const long sn = std::max(1L, n);
      const bool hit = exact_center ? target.hit(k, schedule, sn)
                                    : detail::general_hit(TorusPoint::lattice(k, p), fx, schedule, sn);
      it->second += hit;
    }
  }
  std::vector<QuasiIndependenceRow> rows;
  const Real Mr = static_cast<Real>(M);
  const Real mu_b = in_b / Mr;
  for (long n : lags) {
    const Real m = target_measure(schedule, std::max(1L, n));
    if (m <= 0 || mu_b <= 0) continue;
    const Real p = joint[n] / Mr;
    const Real denom = mu_b * m;
    rows.push_back({n, p / denom, std::sqrt(p * (1 - p) / Mr) / denom, m});
  }
  return rows;
}

struct PairCorrelationRow {
  long m = 0, n = 0;
  Real p_m = 0, p_n = 0, joint = 0;
  Real bound = 0;  // (p_m + phi(n - m)) * p_n
  std::optional<Real> implied_C;
  bool degenerate = false;
  std::string note;
};

struct PairCorrelationReport {
  std::vector<PairCorrelationRow> rows;
  Real max_C = 0;
};

inline PairCorrelationReport pair_correlation_check(const std::vector<HitRecord>& records,
                                                    const std::vector<std::pair<long, long>>& lag_pairs,
                                                    const std::function<Real(long)>& phi_hat) {
  if (records.empty()) throw DomainError("pair_correlation_check needs records");
  PairCorrelationReport rep;
  const Real M = static_cast<Real>(records.size());
  for (auto [m, n] : lag_pairs) {
    if (m > n) std::swap(m, n);
    PairCorrelationRow row;
    row.m = m;
    row.n = n;
    std::size_t cm = 0, cn = 0, cj = 0;
    for (const auto& rec : records) {
      const bool hm = rec.hit_at(m), hn = rec.hit_at(n);
      cm += hm;
      cn += hn;
      cj += hm && hn;
    }
    row.p_m = cm / M;
    row.p_n = cn / M;
    row.joint = cj / M;
    row.bound = (row.p_m + phi_hat(n - m)) * row.p_n;
    row.degenerate = m == n;
    if (row.bound > 0) row.implied_C = row.joint / row.bound;
    if (row.degenerate) row.note = "degenerate pair: joint equals marginal";
    else if (cj < 10) row.note = "fewer than 10 joint hits; implied C is a one-sided estimate";
    if (row.implied_C && !row.degenerate) rep.max_C = std::max(rep.max_C, *row.implied_C);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

}  // namespace recurlab
