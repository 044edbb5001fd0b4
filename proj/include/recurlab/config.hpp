#pragma once

// Run configuration: parsed from TOML, echoed to JSON, and turned into the
// library objects a run needs.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "recurlab/errors.hpp"
#include "recurlab/experiments.hpp"
#include "recurlab/targets.hpp"
#include "recurlab/torus_maps.hpp"
#include "recurlab/twists.hpp"

namespace recurlab {

using Json = nlohmann::ordered_json;

struct MapSpec {
  std::vector<std::vector<std::string>> matrix;
  bool exact = false;
};

struct TwistSpec {
  std::string kind = "identity";
  std::vector<std::size_t> sigma;                  // permute, 1-based
  std::vector<std::vector<std::string>> matrix;    // affine
  std::vector<std::string> offset;                 // affine
  std::optional<std::vector<std::string>> point;   // constant; sampled from the seed when absent
  double k = 0.5;                                  // coordinatewise-demo
};

struct ScheduleSpec {
  std::string kind;
  std::vector<double> scale;
  std::vector<double> exponent;
  double beta = 0;
  long cutoff = 0;
  std::vector<std::vector<double>> radius_table;
  std::vector<double> delta_table;
  bool threshold = true;  // radius schedules only
};

struct RunConfig {
  MapSpec map;
  TwistSpec twist;
  ScheduleSpec schedule;
  std::size_t M = 1000;
  long N = 1000;
  std::uint64_t seed = 0;
  std::string arithmetic_mode = "exact-lattice";
  unsigned prime_bits = 61;
  VerdictThresholds thresholds;
  std::optional<long> tail_start;
  std::string output_dir = "out";
  /// Ulam grid used to resample initial points from mu (high-precision only; 0 = Lebesgue).
  std::size_t density_resolution = 0;
};

namespace detail {

inline Json toml_to_json(const toml::node& node) {
  if (auto t = node.as_table()) {
    Json out = Json::object();
    for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_to_json(v);
    return out;
  }
  if (auto a = node.as_array()) {
    Json out = Json::array();
    for (const auto& v : *a) out.push_back(toml_to_json(v));
    return out;
  }
  if (auto s = node.as_string()) return s->get();
  if (auto i = node.as_integer()) return i->get();
  if (auto f = node.as_floating_point()) return f->get();
  if (auto b = node.as_boolean()) return b->get();
  throw ConfigError("unsupported TOML value (dates and times are not used)");
}

/// Matrix and point entries may be written as numbers or as expression strings.
inline std::string entry_text(const Json& v, const std::string& where) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number_float()) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
    return buf;
  }
  throw ConfigError(where + ": expected a number or an expression string");
}

inline std::vector<std::string> text_row(const Json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + ": expected an array");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(entry_text(e, where));
  return out;
}

inline std::vector<std::vector<std::string>> text_matrix(const Json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
  std::vector<std::vector<std::string>> out;
  for (const auto& row : v) out.push_back(text_row(row, where));
  return out;
}

inline double number(const Json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  return v.get<double>();
}

inline std::vector<double> number_list(const Json& v, const std::string& where) {
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw ConfigError(where + ": expected a number or an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(number(e, where));
  return out;
}

template <typename T>
T integer(const Json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  if constexpr (std::is_unsigned_v<T>) {
    if (v.is_number_unsigned()) return static_cast<T>(v.get<std::uint64_t>());
    if (v.get<long long>() < 0) throw ConfigError(where + ": must be non-negative");
  }
  return static_cast<T>(v.get<long long>());
}

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [k, _] : obj.items()) {
    bool ok = false;
    for (const char* name : known) ok = ok || k == name;
    if (!ok) throw ConfigError(where + ": unknown key '" + k + "'");
  }
}

}  // namespace detail

// JSON form. Keys mirror the TOML layout.

inline Json to_json(const RunConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["M"] = c.M;
  j["N"] = c.N;
  j["arithmetic_mode"] = c.arithmetic_mode;
  j["prime_bits"] = c.prime_bits;
  j["output_dir"] = c.output_dir;
  if (c.density_resolution) j["density_resolution"] = c.density_resolution;
  j["map"] = {{"matrix", c.map.matrix}, {"exact", c.map.exact}};

  Json t{{"kind", c.twist.kind}};
  if (c.twist.kind == "permute") t["sigma"] = c.twist.sigma;
  if (c.twist.kind == "affine") {
    t["matrix"] = c.twist.matrix;
    if (!c.twist.offset.empty()) t["offset"] = c.twist.offset;
  }
  if (c.twist.kind == "constant" && c.twist.point) t["point"] = *c.twist.point;
  if (c.twist.kind == "coordinatewise-demo") t["k"] = c.twist.k;
  j["twist"] = t;

  const auto& s = c.schedule;
  Json sj{{"kind", s.kind}};
  if (!s.scale.empty()) sj["scale"] = s.scale;
  if (!s.exponent.empty()) sj["exponent"] = s.exponent;
  if (s.beta != 0) sj["beta"] = s.beta;
  if (s.cutoff != 0) sj["cutoff"] = s.cutoff;
  if (!s.radius_table.empty()) sj["radius_table"] = s.radius_table;
  if (!s.delta_table.empty()) sj["delta_table"] = s.delta_table;
  if (s.kind.rfind("rect-", 0) == 0) sj["threshold"] = s.threshold;
  j["schedule"] = sj;

  Json th{{"one_like_fraction", static_cast<double>(c.thresholds.one_like_fraction)},
          {"window", static_cast<double>(c.thresholds.window)},
          {"tail_fraction_max", static_cast<double>(c.thresholds.tail_fraction_max)},
          {"tail_start_fraction", static_cast<double>(c.thresholds.tail_start_fraction)}};
  if (c.tail_start) th["tail_start"] = *c.tail_start;
  j["thresholds"] = th;
  return j;
}

inline RunConfig config_from_json(const Json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config must be a table");
  reject_unknown(j, {"seed", "M", "N", "arithmetic_mode", "prime_bits", "output_dir", "map", "twist", "schedule",
                     "thresholds", "density_resolution"},
                 "config");
  RunConfig c;
  if (j.contains("seed")) c.seed = integer<std::uint64_t>(j["seed"], "seed");
  if (j.contains("M")) c.M = integer<std::size_t>(j["M"], "M");
  if (j.contains("N")) c.N = integer<long>(j["N"], "N");
  if (j.contains("arithmetic_mode")) c.arithmetic_mode = j["arithmetic_mode"].get<std::string>();
  parse_arithmetic_mode(c.arithmetic_mode);
  if (j.contains("prime_bits")) c.prime_bits = integer<unsigned>(j["prime_bits"], "prime_bits");
  if (c.prime_bits < 11 || c.prime_bits > 61) throw ConfigError("prime_bits must lie in [11, 61]");
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  if (j.contains("density_resolution"))
    c.density_resolution = integer<std::size_t>(j["density_resolution"], "density_resolution");
  if (c.M == 0) throw ConfigError("M must be positive");
  if (c.N < 1) throw ConfigError("N must be at least 1");

  if (!j.contains("map")) throw ConfigError("missing [map]");
  const auto& m = j["map"];
  reject_unknown(m, {"matrix", "exact"}, "map");
  if (!m.contains("matrix")) throw ConfigError("map: missing matrix");
  c.map.matrix = text_matrix(m["matrix"], "map.matrix");
  if (m.contains("exact")) c.map.exact = m["exact"].get<bool>();

  if (j.contains("twist")) {
    const auto& t = j["twist"];
    reject_unknown(t, {"kind", "sigma", "matrix", "offset", "point", "k"}, "twist");
    if (t.contains("kind")) c.twist.kind = t["kind"].get<std::string>();
    if (t.contains("sigma"))
      for (const auto& v : t["sigma"]) c.twist.sigma.push_back(integer<std::size_t>(v, "twist.sigma"));
    if (t.contains("matrix")) c.twist.matrix = text_matrix(t["matrix"], "twist.matrix");
    if (t.contains("offset")) c.twist.offset = text_row(t["offset"], "twist.offset");
    if (t.contains("point")) c.twist.point = text_row(t["point"], "twist.point");
    if (t.contains("k")) c.twist.k = number(t["k"], "twist.k");
  }

  if (!j.contains("schedule")) throw ConfigError("missing [schedule]");
  const auto& s = j["schedule"];
  reject_unknown(s, {"kind", "scale", "exponent", "beta", "cutoff", "radius_table", "delta_table", "threshold"},
                 "schedule");
  if (!s.contains("kind")) throw ConfigError("schedule: missing kind");
  c.schedule.kind = s["kind"].get<std::string>();
  if (s.contains("scale")) c.schedule.scale = number_list(s["scale"], "schedule.scale");
  if (s.contains("exponent")) c.schedule.exponent = number_list(s["exponent"], "schedule.exponent");
  if (s.contains("beta")) c.schedule.beta = number(s["beta"], "schedule.beta");
  if (s.contains("cutoff")) c.schedule.cutoff = integer<long>(s["cutoff"], "schedule.cutoff");
  if (s.contains("radius_table"))
    for (const auto& row : s["radius_table"]) c.schedule.radius_table.push_back(number_list(row, "schedule.radius_table"));
  if (s.contains("delta_table")) c.schedule.delta_table = number_list(s["delta_table"], "schedule.delta_table");
  if (s.contains("threshold")) c.schedule.threshold = s["threshold"].get<bool>();

  if (j.contains("thresholds")) {
    const auto& th = j["thresholds"];
    reject_unknown(th, {"one_like_fraction", "window", "tail_fraction_max", "tail_start_fraction", "tail_start"},
                   "thresholds");
    if (th.contains("one_like_fraction")) c.thresholds.one_like_fraction = number(th["one_like_fraction"], "thresholds");
    if (th.contains("window")) c.thresholds.window = number(th["window"], "thresholds");
    if (th.contains("tail_fraction_max")) c.thresholds.tail_fraction_max = number(th["tail_fraction_max"], "thresholds");
    if (th.contains("tail_start_fraction"))
      c.thresholds.tail_start_fraction = number(th["tail_start_fraction"], "thresholds");
    if (th.contains("tail_start")) c.tail_start = integer<long>(th["tail_start"], "thresholds.tail_start");
    if (c.thresholds.window < 1) throw ConfigError("thresholds.window must be at least 1");
  }
  return c;
}

inline RunConfig parse_config_toml(std::string_view text, const std::string& source = "config") {
  try {
    return config_from_json(detail::toml_to_json(toml::parse(text, source)));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  } catch (const Json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

/// Reads TOML, or JSON when the file ends in .json (a report or a config echo).
inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  if (path.extension() == ".json") {
    try {
      Json j = Json::parse(buf.str());
      if (j.contains("config")) j = j["config"];
      return config_from_json(j);
    } catch (const Json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
  }
  return parse_config_toml(buf.str(), path.string());
}

// Builders

inline MatrixTorusMap build_map(const MapSpec& spec) {
  auto map = MatrixTorusMap::from_strings(spec.matrix);
  if (spec.exact && !map.is_integer()) throw ConfigError("map.exact requested for a non-integer matrix");
  return map;
}

inline TwistFunction build_twist(const TwistSpec& spec, std::size_t dim, std::uint64_t seed) {
  const auto& k = spec.kind;
  if (k == "identity") return TwistFunction::identity(dim);
  if (k == "permute") {
    if (spec.sigma.size() != dim) throw ConfigError("twist.sigma must have one entry per coordinate");
    return TwistFunction::permute(spec.sigma);
  }
  if (k == "affine") {
    if (spec.matrix.size() != dim) throw ConfigError("twist.matrix has the wrong dimension");
    return TwistFunction::affine_from_strings(spec.matrix, spec.offset);
  }
  if (k == "coordinatewise-demo") return TwistFunction::coordinatewise_demo(dim, spec.k);
  if (k == "constant") {
    constexpr unsigned bits = 192;
    if (!spec.point) {
      auto rng = make_rng(seed, 0, /*stream=*/9);
      return TwistFunction::constant(sample_float_point(dim, bits, rng));
    }
    if (spec.point->size() != dim) throw ConfigError("twist.point has the wrong dimension");
    FloatPoint fp;
    fp.precision_bits = bits;
    fp.accuracy_bits = bits;
    for (const auto& s : *spec.point) fp.coords.push_back(Expr::parse(s).eval(bits));
    return TwistFunction::constant(TorusPoint::from_float(std::move(fp)));
  }
  if (k == "custom") throw ConfigError("custom twists are only available through the library API");
  throw ConfigError("unknown twist kind '" + k + "'");
}

inline Schedule build_schedule(const ScheduleSpec& spec, std::size_t dim) {
  Schedule::Params p;
  p.family = spec.kind;
  p.dim = dim;
  p.scale.assign(spec.scale.begin(), spec.scale.end());
  p.exponent.assign(spec.exponent.begin(), spec.exponent.end());
  p.beta = spec.beta;
  p.cutoff = spec.cutoff;
  for (const auto& row : spec.radius_table) p.radius_table.emplace_back(row.begin(), row.end());
  p.delta_table.assign(spec.delta_table.begin(), spec.delta_table.end());
  auto s = build_schedule(std::move(p));
  if (s.kind() == ScheduleKind::Radius && spec.threshold) s = threshold_schedule(s);
  return s;
}

}  // namespace recurlab
