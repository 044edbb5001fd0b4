#pragma once

// File outputs: JSON reports, CSV tables and small SVG charts. Everything is
// a pure function of its inputs so repeated runs give identical bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "recurlab/config.hpp"
#include "recurlab/experiments.hpp"
#include "recurlab/measure_tools.hpp"
#include "recurlab/partition_geometry.hpp"
#include "recurlab/targets.hpp"

namespace recurlab {

/// %.17g, the CSV number format.
inline std::string fmt17(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
  return buf;
}

namespace detail {

inline std::string fmt_svg(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline Json real_or_null(Real v) { return std::isfinite(v) ? Json(static_cast<double>(v)) : Json(nullptr); }

}  // namespace detail

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

// ---------------------------------------------------------------------------
// Maps

inline Json certificate_json(const MatrixTorusMap& map, const ExpansionCertificate& c) {
  return Json{{"matrix", map.describe()},
              {"eigen_moduli", c.eigen_moduli},
              {"passes", c.passes},
              {"margin", c.margin},
              {"op_norm_2", c.op_norm_2},
              {"integer", c.integer},
              {"diagonal", c.diagonal},
              {"exceeds_one_plus_sqrt_d", c.exceeds_one_plus_sqrt_d},
              {"diagonal_golden", c.diagonal_golden}};
}

// ---------------------------------------------------------------------------
// Runs

inline Json report_json(const RunConfig& config, const MatrixTorusMap& map, const TwistFunction& twist,
                        const Schedule& schedule, const ExperimentReport& r) {
  Json j;
  j["config"] = to_json(config);
  j["map"] = certificate_json(map, validate_expanding(map));
  j["twist"] = {{"kind", to_string(twist.kind())},
                {"declared_p", static_cast<double>(twist.declared_p())},
                {"coordinatewise", twist.coordinatewise()}};
  if (twist.constant_point()) {
    std::vector<std::string> y;
    for (std::size_t i = 0; i < twist.dim(); ++i) y.push_back(twist.constant_point()->coord_string(i));
    j["twist"]["point"] = y;
  }
  Json s{{"family", schedule.family()},
         {"declared_divergence", to_string(schedule.declared_divergence())},
         {"thresholded", schedule.thresholded()},
         {"aspect_bounded", schedule.aspect_bounded()}};
  s["aspect_sup"] = schedule.aspect_sup() ? Json(static_cast<double>(*schedule.aspect_sup())) : Json(nullptr);
  j["schedule"] = s;
  j["M"] = r.M;
  j["N"] = r.N;
  j["measure_sum"] = static_cast<double>(r.measure_sum);
  j["volume_sum"] = static_cast<double>(r.volume_sum);
  j["measure_sum_infinite"] = detail::real_or_null(r.measure_sum_infinite);
  j["mean_Z"] = static_cast<double>(r.mean_Z);
  j["var_Z"] = static_cast<double>(r.var_Z);
  Json f = Json::object();
  for (const auto& [k, v] : r.fraction_hit_ge) f[std::to_string(k)] = static_cast<double>(v);
  j["fraction_hit_ge"] = f;
  j["tail_start"] = r.tail_start;
  j["tail_fraction"] = static_cast<double>(r.tail_fraction);
  j["predicted"] = r.predicted;
  j["empirical"] = r.empirical;
  j["agreement"] = r.agreement ? Json(*r.agreement) : Json(nullptr);
  j["heuristic"] = true;
  j["notes"] = r.notes;
  return j;
}

/// One row per hit: sample index, lag, and the sample's initial coordinates.
inline std::string hits_csv(const std::vector<HitRecord>& records, std::size_t dim) {
  std::ostringstream out;
  out << "sample_index,n";
  for (std::size_t i = 1; i <= dim; ++i) out << ",x_" << i;
  out << '\n';
  for (const auto& rec : records)
    for (long n : rec.hit_lags) {
      out << rec.sample_index << ',' << n;
      for (const auto& c : rec.initial) out << ',' << c;
      out << '\n';
    }
  return out.str();
}

/// mean Z_n and S_n against n.
inline std::string cumulative_svg(const ExperimentReport& r) {
  constexpr double W = 640, H = 400, pad = 50;
  const std::size_t N = r.mean_Z_curve.size();
  double ymax = 0;
  for (std::size_t i = 0; i < N; ++i)
    ymax = std::max({ymax, static_cast<double>(r.mean_Z_curve[i]), static_cast<double>(r.measure_curve[i])});
  if (ymax <= 0) ymax = 1;
  const std::size_t stride = std::max<std::size_t>(1, N / 800);
  const auto poly = [&](const std::vector<Real>& ys) {
    std::string pts;
    for (std::size_t i = 0; i < N; i += stride) {
      if (i + stride >= N) i = N - 1;
      const double x = pad + (W - 2 * pad) * (N > 1 ? double(i) / double(N - 1) : 0.0);
      const double y = H - pad - (H - 2 * pad) * static_cast<double>(ys[i]) / ymax;
      pts += detail::fmt_svg(x) + "," + detail::fmt_svg(y) + " ";
    }
    if (!pts.empty()) pts.pop_back();
    return pts;
  };
  char ytop[32];
  std::snprintf(ytop, sizeof ytop, "%.4g", ymax);
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << H - pad << "\" x2=\"" << W - pad << "\" y2=\"" << H - pad
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << pad << "\" x2=\"" << pad << "\" y2=\"" << H - pad
    << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << pad << "\" y=\"" << pad - 8 << "\" font-size=\"12\">" << ytop << "</text>\n"
    << "<text x=\"" << W - pad << "\" y=\"" << H - pad + 20 << "\" font-size=\"12\" text-anchor=\"end\">n = " << N
    << "</text>\n";
  if (N > 0) {
    o << "<polyline fill=\"none\" stroke=\"#888\" stroke-dasharray=\"6,4\" points=\"" << poly(r.measure_curve)
      << "\"/>\n"
      << "<polyline fill=\"none\" stroke=\"#1f5fbf\" stroke-width=\"1.5\" points=\"" << poly(r.mean_Z_curve) << "\"/>\n";
  }
  o << "<text x=\"" << pad + 10 << "\" y=\"" << pad + 14 << "\" font-size=\"12\" fill=\"#1f5fbf\">mean Z_n</text>\n"
    << "<text x=\"" << pad + 10 << "\" y=\"" << pad + 30 << "\" font-size=\"12\" fill=\"#888\">S_n</text>\n"
    << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Partitions

inline Json partition_json(const PartitionFamily& fam) {
  Json j;
  j["dim"] = fam.dim;
  j["Q"] = fam.Q;
  j["kind"] = fam.kind == PartitionKind::Interval ? "interval"
              : fam.kind == PartitionKind::Polygon ? "polygon"
                                                    : "integer-cells";
  j["K_bound"] = static_cast<double>(fam.K_bound);
  Json pieces = Json::array();
  for (const auto& p : fam.pieces) {
    Json pj{{"translate", p.translate}};
    pj["measure"] = p.measure ? Json(static_cast<double>(*p.measure)) : Json(nullptr);
    if (const auto* iv = std::get_if<Interval>(&p.region)) {
      pj["interval"] = {static_cast<double>(iv->lo), static_cast<double>(iv->hi)};
    } else if (const auto* poly = std::get_if<Polygon2>(&p.region)) {
      Json vs = Json::array();
      for (const auto& v : poly->vertices()) vs.push_back({static_cast<double>(v.x), static_cast<double>(v.y)});
      pj["vertices"] = vs;
    } else {
      Json cs = Json::array();
      for (const auto& k : std::get<CellSystem>(p.region).constraints) cs.push_back({{"a", k.a}, {"c", k.c}});
      pj["strict_constraints"] = cs;
    }
    pieces.push_back(pj);
  }
  j["pieces"] = pieces;
  j["warnings"] = fam.warnings;
  return j;
}

/// Tessellation picture; pieces are coloured by index. Only d <= 2 has one.
inline std::string partition_svg(const PartitionFamily& fam) {
  if (fam.kind == PartitionKind::IntegerCells && fam.dim > 2)
    throw UnsupportedDimension("no tessellation picture for d > 2");
  constexpr double S = 500, pad = 20;
  const auto colour = [](std::size_t i) {
    char buf[16];
    // golden-angle hue walk
    const double h = std::fmod(static_cast<double>(i) * 137.508, 360.0);
    std::snprintf(buf, sizeof buf, "hsl(%d,60%%,70%%)", static_cast<int>(h));
    return std::string(buf);
  };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << S + 2 * pad << "\" height=\"" << S + 2 * pad
    << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t i = 0; i < fam.pieces.size(); ++i) {
    const auto& p = fam.pieces[i];
    if (const auto* iv = std::get_if<Interval>(&p.region)) {
      o << "<rect x=\"" << detail::fmt_svg(pad + S * static_cast<double>(iv->lo)) << "\" y=\"" << pad
        << "\" width=\"" << detail::fmt_svg(S * static_cast<double>(iv->length())) << "\" height=\"" << S / 8
        << "\" fill=\"" << colour(i) << "\" stroke=\"black\"/>\n";
    } else if (const auto* poly = std::get_if<Polygon2>(&p.region)) {
      o << "<polygon fill=\"" << colour(i) << "\" stroke=\"black\" stroke-width=\"0.8\" points=\"";
      bool first = true;
      Real cx = 0, cy = 0;
      for (const auto& v : poly->vertices()) {
        // y grows upward in the picture
        o << (first ? "" : " ") << detail::fmt_svg(pad + S * static_cast<double>(v.x)) << ","
          << detail::fmt_svg(pad + S * (1 - static_cast<double>(v.y)));
        first = false;
        cx += v.x;
        cy += v.y;
      }
      const Real k = static_cast<Real>(poly->vertices().size());
      o << "\"/>\n<text x=\"" << detail::fmt_svg(pad + S * static_cast<double>(cx / k)) << "\" y=\""
        << detail::fmt_svg(pad + S * (1 - static_cast<double>(cy / k))) << "\" font-size=\"11\" text-anchor=\"middle\">"
        << i + 1 << "</text>\n";
    } else {
      throw UnsupportedDimension("integer cell systems are drawn only through their polygons");
    }
  }
  o << "</svg>\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Tables

inline std::string volume_csv(std::size_t d, const std::vector<Real>& deltas, std::size_t samples, u64 seed) {
  std::ostringstream out;
  out << "delta,closed_form,mc_estimate,mc_sigma,upper_bound\n";
  for (Real delta : deltas) {
    const auto mc = hyperboloid_volume_mc(d, delta, samples, seed);
    out << fmt17(delta) << ',' << fmt17(hyperboloid_volume(d, delta)) << ',' << fmt17(mc.estimate) << ','
        << fmt17(mc.sigma) << ',';
    // The bound is stated for 0 < delta < 1 only.
    if (delta > 0 && delta < 1) out << fmt17(hyperboloid_volume_bounds(d, delta).upper);
    out << '\n';
  }
  return out.str();
}

/// One row per cell: cell index, lower-corner coordinates, density.
inline std::string ulam_csv(const DensityGrid& g) {
  std::ostringstream out;
  out << "cell";
  for (std::size_t i = 1; i <= g.dim; ++i) out << ",lo_" << i;
  out << ",density\n";
  for (std::size_t c = 0; c < g.cells(); ++c) {
    out << c;
    std::size_t rest = c;
    std::vector<std::size_t> idx(g.dim);
    for (std::size_t i = g.dim; i-- > 0;) {
      idx[i] = rest % g.resolution;
      rest /= g.resolution;
    }
    for (std::size_t i = 0; i < g.dim; ++i)
      out << ',' << fmt17(static_cast<Real>(idx[i]) / static_cast<Real>(g.resolution));
    out << ',' << fmt17(g.density(c)) << '\n';
  }
  return out.str();
}

/// lag, phi_hat and the fit parameters (repeated on every row; empty when no fit).
inline std::string mixing_csv(const MixingProfile& p) {
  std::ostringstream out;
  out << "lag,phi_hat,noise_floor,fit_c,fit_tau,confidence\n";
  for (std::size_t i = 0; i < p.lags.size(); ++i) {
    out << p.lags[i] << ',' << fmt17(p.phi_hat[i]) << ',' << fmt17(p.noise_floor) << ','
        << (p.c ? fmt17(*p.c) : "") << ',' << (p.tau ? fmt17(*p.tau) : "") << ',' << p.confidence << '\n';
  }
  return out.str();
}

}  // namespace recurlab
