// recurlab: config-driven front end for the hit-count experiments.
//
//   recurlab validate-map CONFIG
//   recurlab partition CONFIG [--out DIR] [--order N]
//   recurlab volume --d D --deltas a,b,... [--samples S] [--seed S] [--out FILE]
//   recurlab ulam CONFIG [--resolution R] [--samples-per-cell K] [--out DIR]
//   recurlab mixing CONFIG [--lags 1..20] [--samples S] [--F lo:hi,...] [--G lo:hi,...] [--out DIR]
//   recurlab run CONFIG [--out DIR] [--threads T]
//
// Exit codes: 0 success or agreement, 2 config error, 3 verdict disagreement,
// 4 inconclusive, 5 numerical failure.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "recurlab/config.hpp"
#include "recurlab/experiments.hpp"
#include "recurlab/measure_tools.hpp"
#include "recurlab/partition_geometry.hpp"
#include "recurlab/report_io.hpp"

namespace fs = std::filesystem;
using namespace recurlab;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 5;

unsigned resolve_threads(int flag) {
  if (flag > 0) return static_cast<unsigned>(flag);
  if (const char* env = std::getenv("RECURLAB_THREADS")) {
    try {
      const int v = std::stoi(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("RECURLAB_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<Real> parse_reals(const std::string& text) {
  std::vector<Real> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stold(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty number list");
  return out;
}

/// "a..b" or "a,b,c".
std::vector<long> parse_lags(const std::string& text) {
  std::vector<long> out;
  const auto dots = text.find("..");
  try {
    if (dots != std::string::npos) {
      const long a = std::stol(text.substr(0, dots)), b = std::stol(text.substr(dots + 2));
      if (a < 0 || b < a) throw ConfigError("bad lag range '" + text + "'");
      for (long n = a; n <= b; ++n) out.push_back(n);
      return out;
    }
    for (Real v : parse_reals(text)) out.push_back(static_cast<long>(v));
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad lag list '" + text + "'");
  }
  return out;
}

/// "lo:hi,lo:hi" with one pair per coordinate.
Box parse_box(const std::string& text, std::size_t d) {
  Box b;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("box coordinates are written lo:hi, got '" + item + "'");
    const auto lo = parse_reals(item.substr(0, colon)), hi = parse_reals(item.substr(colon + 1));
    b.lo.push_back(lo[0]);
    b.hi.push_back(hi[0]);
  }
  if (b.lo.size() != d) throw ConfigError("box '" + text + "' has the wrong dimension");
  return b;
}

std::string join(const std::vector<double>& v, int digits = 9) {
  std::string out;
  char buf[40];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.*g", digits, v[i]);
    out += (i ? "," : "") + std::string(buf);
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_validate(const std::string& path) {
  const auto cfg = load_config(path);
  const auto map = build_map(cfg.map);
  const auto cert = validate_expanding(map);
  std::cout << "eigen_moduli=" << join(cert.eigen_moduli) << " op_norm_2=" << join({cert.op_norm_2})
            << " passes=" << std::boolalpha << cert.passes << " integer=" << cert.integer
            << " diagonal=" << cert.diagonal << " exceeds_one_plus_sqrt_d=" << cert.exceeds_one_plus_sqrt_d
            << " diagonal_golden=" << cert.diagonal_golden << '\n';
  return cert.passes ? 0 : kExitConfig;
}

int cmd_partition(const std::string& path, const std::string& out_flag, std::size_t order) {
  const auto cfg = load_config(path);
  const auto map = build_map(cfg.map);
  const auto fam = compute_pieces(map);
  const fs::path out = out_flag.empty() ? fs::path(cfg.output_dir) : fs::path(out_flag);
  Json j = partition_json(fam);
  Real area = 0;
  for (const auto& p : fam.pieces) area += p.measure.value_or(0);
  if (order > 1) {
    const auto cyl = refine_cylinders(map, fam, order);
    Real total = 0;
    for (const auto& c : cyl) total += c.measure.value_or(0);
    j["cylinders"] = {{"order", order}, {"count", cyl.size()}, {"measure_sum", static_cast<double>(total)}};
  }
  write_text(out / "partition.json", j.dump(2) + "\n");
  const bool drawable = fam.kind != PartitionKind::IntegerCells;
  if (drawable) write_text(out / "partition.svg", partition_svg(fam));
  std::cout << "Q=" << fam.Q << " area_sum=" << join({static_cast<double>(area)}, 12)
            << " K_bound=" << join({static_cast<double>(fam.K_bound)}) << " wrote " << (out / "partition.json").string()
            << (drawable ? " and partition.svg" : "") << '\n';
  for (const auto& w : fam.warnings) std::cerr << "warning: " << w << '\n';
  return 0;
}

int cmd_volume(std::size_t d, const std::string& deltas, std::size_t samples, std::uint64_t seed,
               const std::string& out) {
  const auto csv = volume_csv(d, parse_reals(deltas), samples, seed);
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
    std::cout << "wrote " << out << '\n';
  }
  return 0;
}

DensityGrid density_for(const MatrixTorusMap& map, std::size_t res, std::uint64_t seed, std::size_t spc) {
  if (res == 0) res = map.dim() == 1 ? 256 : map.dim() == 2 ? 64 : 16;
  return ulam_density(map, res, seed, spc);
}

int cmd_ulam(const std::string& path, std::size_t res, std::size_t spc, const std::string& out_flag) {
  const auto cfg = load_config(path);
  const auto map = build_map(cfg.map);
  const auto grid = density_for(map, res, cfg.seed, spc);
  const auto rep = density_bound_check(grid);
  const fs::path out = (out_flag.empty() ? fs::path(cfg.output_dir) : fs::path(out_flag)) / "ulam.csv";
  write_text(out, ulam_csv(grid));
  std::cout << "resolution=" << grid.resolution << " h_max=" << join({static_cast<double>(rep.h_max)})
            << " h_min=" << join({static_cast<double>(rep.h_min)})
            << " c=" << (rep.c ? join({static_cast<double>(*rep.c)}) : "unbounded") << " iterations=" << grid.iterations
            << " wrote " << out.string() << '\n';
  return 0;
}

int cmd_mixing(const std::string& path, const std::string& lags, std::size_t samples, const std::string& F,
               const std::string& G, const std::string& out_flag) {
  const auto cfg = load_config(path);
  const auto map = build_map(cfg.map);
  std::vector<std::pair<Box, Box>> pairs;
  if (!F.empty() || !G.empty()) {
    if (F.empty() || G.empty()) throw ConfigError("--F and --G go together");
    pairs.push_back({parse_box(F, map.dim()), parse_box(G, map.dim())});
  } else {
    pairs = default_pair_family(map.dim(), cfg.seed);
  }
  const auto prof = estimate_mixing(map, pairs, parse_lags(lags), samples, cfg.seed);
  const fs::path out = (out_flag.empty() ? fs::path(cfg.output_dir) : fs::path(out_flag)) / "mixing.csv";
  write_text(out, mixing_csv(prof));
  std::cout << "lags=" << prof.lags.size() << " noise_floor=" << join({static_cast<double>(prof.noise_floor)})
            << " usable=" << prof.usable_lags << " tau="
            << (prof.tau ? join({static_cast<double>(*prof.tau)}) : "none") << " confidence=" << prof.confidence
            << " wrote " << out.string() << '\n';
  return 0;
}

int cmd_run(const std::string& path, const std::string& out_flag, unsigned threads) {
  const auto cfg = load_config(path);
  const auto map = build_map(cfg.map);
  const auto twist = build_twist(cfg.twist, map.dim(), cfg.seed);
  const auto schedule = build_schedule(cfg.schedule, map.dim());

  ExperimentOptions opt;
  opt.mode = parse_arithmetic_mode(cfg.arithmetic_mode);
  opt.prime_bits = cfg.prime_bits;
  opt.threads = threads;
  std::optional<DensityGrid> grid;
  if (cfg.density_resolution) {
    grid = ulam_density(map, cfg.density_resolution, cfg.seed);
    opt.initial_density = &*grid;
  }

  const auto records = run_hit_experiment(map, twist, schedule, cfg.M, cfg.N, cfg.seed, opt);
  auto report = hit_statistics(records, schedule, cfg.thresholds, cfg.tail_start);
  if (grid) report.notes.push_back("initial points resampled from an Ulam density; S_N still uses Lebesgue measure");
  else if (!map.is_integer())
    report.notes.push_back("initial points are Lebesgue-uniform and S_N uses Lebesgue measure for a non-integer map");

  const fs::path out = out_flag.empty() ? fs::path(cfg.output_dir) : fs::path(out_flag);
  write_text(out / "report.json", report_json(cfg, map, twist, schedule, report).dump(2) + "\n");
  write_text(out / "hits.csv", hits_csv(records, map.dim()));
  write_text(out / "cumulative.svg", cumulative_svg(report));

  const auto verdict = zero_one_verdict(report);
  std::cout << "M=" << report.M << " N=" << report.N << " S_N=" << join({static_cast<double>(report.measure_sum)})
            << " mean_Z=" << join({static_cast<double>(report.mean_Z)})
            << " hit>=1=" << join({static_cast<double>(report.fraction_hit_ge.at(1))})
            << " tail=" << join({static_cast<double>(report.tail_fraction)}) << " predicted=" << report.predicted
            << " empirical=" << report.empirical << " agreement="
            << (verdict.agreement ? (*verdict.agreement ? "true" : "false") : "n/a") << '\n';
  return verdict.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Twisted recurrence experiments for expanding torus maps", "recurlab"};
  app.require_subcommand(1);

  std::string config, out;
  int threads_flag = 0;

  auto* validate = app.add_subcommand("validate-map", "eigenvalue certificate for the configured map");
  validate->add_option("config", config, "TOML config")->required()->check(CLI::ExistingFile);

  std::size_t order = 0;
  auto* partition = app.add_subcommand("partition", "piece family as JSON and SVG");
  partition->add_option("config", config, "TOML config")->required()->check(CLI::ExistingFile);
  partition->add_option("--out", out, "output directory (default: output_dir)");
  partition->add_option("--order", order, "also refine cylinders to this order");

  std::size_t vol_d = 2, vol_samples = 1000000;
  std::uint64_t vol_seed = 1;
  std::string deltas;
  auto* volume = app.add_subcommand("volume", "hyperboloid volume table (CSV)");
  volume->add_option("--d", vol_d, "dimension")->check(CLI::Range(1, 16));
  volume->add_option("--deltas", deltas, "comma-separated delta values")->required();
  volume->add_option("--samples", vol_samples, "Monte Carlo samples per delta");
  volume->add_option("--seed", vol_seed, "Monte Carlo seed");
  volume->add_option("--out", out, "CSV path (default: stdout)");

  std::size_t res = 0, spc = 64;
  auto* ulam = app.add_subcommand("ulam", "invariant density on a grid (CSV)");
  ulam->add_option("config", config, "TOML config")->required()->check(CLI::ExistingFile);
  ulam->add_option("--resolution", res, "cells per axis, a power of two");
  ulam->add_option("--samples-per-cell", spc, "transition samples per cell");
  ulam->add_option("--out", out, "output directory (default: output_dir)");

  std::string lags = "1..20", F, G;
  std::size_t mix_samples = 100000;
  auto* mixing = app.add_subcommand("mixing", "correlation decay profile (CSV)");
  mixing->add_option("config", config, "TOML config")->required()->check(CLI::ExistingFile);
  mixing->add_option("--lags", lags, "a..b or a,b,c");
  mixing->add_option("--samples", mix_samples, "samples per lag");
  mixing->add_option("--F", F, "first box, lo:hi per coordinate");
  mixing->add_option("--G", G, "second box, lo:hi per coordinate");
  mixing->add_option("--out", out, "output directory (default: output_dir)");

  auto* run = app.add_subcommand("run", "hit-count experiment with verdict");
  run->add_option("config", config, "TOML config or a previous report.json")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "output directory (default: output_dir)");
  run->add_option("--threads", threads_flag, "worker cap (default: RECURLAB_THREADS or all cores)");

  if (argc < 2) {
    std::cerr << app.help();
    return kExitConfig;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*validate) return cmd_validate(config);
    if (*partition) return cmd_partition(config, out, order);
    if (*volume) return cmd_volume(vol_d, deltas, vol_samples, vol_seed, out);
    if (*ulam) return cmd_ulam(config, res, spc, out);
    if (*mixing) return cmd_mixing(config, lags, mix_samples, F, G, out);
    if (*run) return cmd_run(config, out, resolve_threads(threads_flag));
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const PrecisionExhausted& e) {
    std::cerr << "precision exhausted: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const RefinementLimit& e) {
    std::cerr << "refinement limit: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const recurlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
