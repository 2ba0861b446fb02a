#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "colreg/cme.hpp"
#include "colreg/datagen.hpp"

namespace colreg {

// Plain-text configuration: INI sections with `key = value` lines, lists as
// comma-separated values, seed lists also accepting `a..b` ranges.
//
//   [experiment] name, jobs
//   [generator]  kind (simple|general|fixture7), d1, d2, d3, noise, n_train,
//                n_semi, n_validation, n_test, n_oracle_test, seeds,
//                beta_scale, a_scale, b_y_scale, b2_scale, b3_scale, noise_y
//   [models]     enabled, theta_multipliers, lambdas, gammas, n_estimators,
//                max_depths, min_samples_splits, min_samples_leafs,
//                cme_mode (factored|generic)
//   [oracle]     m, n_test, delta_models
//   [output]     directory, formats

inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline const std::vector<std::string>& known_models() {
  static const std::vector<std::string> names = {"rf",          "p-rf",           "krr",          "p-krr",
                                                 "hp-krr",      "general-two-stage", "general-pkrr", "general-hpkrr"};
  return names;
}

/// count values 10^lo .. 10^hi, evenly spaced in the exponent.
inline std::vector<double> logspace(double lo, double hi, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) out.push_back(std::pow(10.0, count == 1 ? lo : lo + (hi - lo) * i / (count - 1)));
  return out;
}

struct GeneratorConfig {
  GeneratorKind kind = GeneratorKind::simple;
  Index d1 = 3, d2 = 3, d3 = 2;
  double noise = 0.1;
  SplitSizes sizes{50, 100, 200, 1000, 500};
  std::vector<std::uint64_t> seeds;
  GeneralScales scales;

  friend bool operator==(const GeneratorConfig& a, const GeneratorConfig& b) {
    const auto sz = [](const SplitSizes& s) { return std::tie(s.train, s.semi, s.validation, s.test, s.oracle_test); };
    const auto sc = [](const GeneralScales& s) { return std::tie(s.beta, s.a, s.b_y, s.b2, s.b3, s.noise_y); };
    return a.kind == b.kind && a.d1 == b.d1 && a.d2 == b.d2 && a.d3 == b.d3 && a.noise == b.noise &&
           sz(a.sizes) == sz(b.sizes) && a.seeds == b.seeds && sc(a.scales) == sc(b.scales);
  }
};

struct ModelConfig {
  std::vector<std::string> enabled{"rf", "p-rf", "krr", "p-krr", "hp-krr"};
  std::vector<double> theta_multipliers{0.1, 0.5, 1, 2, 5, 10};
  std::vector<double> lambdas = logspace(-4.0, 0.0, 7);
  std::vector<double> gammas = logspace(-4.0, 0.0, 7);
  std::vector<int> n_estimators{50};
  std::vector<int> max_depths{2, 4, 8};
  std::vector<int> min_samples_splits{2, 5};
  std::vector<int> min_samples_leafs{1, 3};
  CmeMode cme_mode = CmeMode::factored;

  bool has(const std::string& m) const { return std::find(enabled.begin(), enabled.end(), m) != enabled.end(); }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct OracleConfig {
  Index m = 200;
  Index n_test = 500;
  std::vector<std::string> delta_models{"krr", "rf"};
  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

struct OutputConfig {
  std::string directory = "results";
  std::vector<std::string> formats{"csv", "json"};
  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct ExperimentConfig {
  std::string name = "default";
  int jobs = 0;  // 0: min(#seeds, hardware threads)
  GeneratorConfig generator;
  ModelConfig models;
  OracleConfig oracle;
  OutputConfig output;
  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] inline void config_error(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::config, field + ": " + what);
}

template <typename T>
T parse_number(const std::string& field, const std::string& text) {
  T v{};
  const std::string t = trim(text);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size()) config_error(field, "not a number: '" + t + "'");
  return v;
}

template <typename T>
std::vector<T> parse_numbers(const std::string& field, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : split_list(text)) out.push_back(parse_number<T>(field, item));
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(const std::string& field, const std::string& text) {
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(text)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.push_back(parse_number<std::uint64_t>(field, item));
      continue;
    }
    const auto lo = parse_number<std::uint64_t>(field, item.substr(0, dots));
    const auto hi = parse_number<std::uint64_t>(field, item.substr(dots + 2));
    if (hi < lo) config_error(field, "empty range '" + item + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) out.push_back(s);
  }
  return out;
}

inline std::string format_seeds(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size();) {
    std::size_t j = i;
    while (j + 1 < seeds.size() && seeds[j + 1] == seeds[j] + 1) ++j;
    if (!out.empty()) out += ", ";
    out += std::to_string(seeds[i]);
    if (j > i + 1)
      out += ".." + std::to_string(seeds[j]);
    else if (j == i + 1)
      out += ", " + std::to_string(seeds[j]);
    i = j + 1;
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (const auto& x : v) {
    if (!out.empty()) out += ", ";
    if constexpr (std::is_same_v<T, double>)
      out += format_double(x);
    else if constexpr (std::is_same_v<T, std::string>)
      out += x;
    else
      out += std::to_string(x);
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig default_config() {
  ExperimentConfig c;
  for (std::uint64_t s = 0; s < 100; ++s) c.generator.seeds.push_back(s);
  return c;
}

/// Checks invariants; throws ErrorCode::config naming the offending field.
inline void validate(const ExperimentConfig& c) {
  using detail::config_error;
  const auto& g = c.generator;
  if (g.seeds.empty()) config_error("generator.seeds", "must be non-empty");
  if (g.d1 < 1) config_error("generator.d1", "must be >= 1");
  if (g.d2 < 1) config_error("generator.d2", "must be >= 1");
  if (g.kind == GeneratorKind::general && g.d3 < 1) config_error("generator.d3", "must be >= 1");
  if (g.kind == GeneratorKind::fixture7 && (g.d1 != 1 || g.d2 != 1))
    config_error("generator.d1", "fixture7 requires d1 = d2 = 1");
  if (!(g.noise >= 0.0)) config_error("generator.noise", "must be >= 0");
  if (g.sizes.train < 2) config_error("generator.n_train", "must be >= 2");
  if (g.sizes.semi < 0) config_error("generator.n_semi", "must be >= 0");
  if (g.sizes.validation < 2) config_error("generator.n_validation", "must be >= 2");
  if (g.sizes.test < 2) config_error("generator.n_test", "must be >= 2");
  if (g.sizes.oracle_test < 1) config_error("generator.n_oracle_test", "must be >= 1");
  const auto& m = c.models;
  if (m.enabled.empty()) config_error("models.enabled", "must be non-empty");
  for (const auto& name : m.enabled) {
    const auto& known = known_models();
    if (std::find(known.begin(), known.end(), name) == known.end())
      config_error("models.enabled", "unknown model '" + name + "'");
    if (name.starts_with("general-") && g.kind != GeneratorKind::general)
      config_error("models.enabled", "'" + name + "' requires generator.kind = general");
  }
  const auto positive = [](const std::vector<double>& v) {
    return !v.empty() && std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
  };
  if (!positive(m.theta_multipliers)) config_error("models.theta_multipliers", "must be non-empty and positive");
  if (!positive(m.lambdas)) config_error("models.lambdas", "must be non-empty and positive");
  if (!positive(m.gammas)) config_error("models.gammas", "must be non-empty and positive");
  const auto positive_int = [](const std::vector<int>& v, int lo) {
    return !v.empty() && std::all_of(v.begin(), v.end(), [lo](int x) { return x >= lo; });
  };
  if (!positive_int(m.n_estimators, 1)) config_error("models.n_estimators", "must be non-empty and >= 1");
  if (!positive_int(m.max_depths, 0)) config_error("models.max_depths", "must be non-empty and >= 0");
  if (!positive_int(m.min_samples_splits, 1)) config_error("models.min_samples_splits", "must be >= 1");
  if (!positive_int(m.min_samples_leafs, 1)) config_error("models.min_samples_leafs", "must be >= 1");
  if (c.oracle.m < 2) config_error("oracle.m", "must be >= 2");
  if (c.oracle.n_test < 2 || c.oracle.n_test > g.sizes.oracle_test)
    config_error("oracle.n_test", "must be in [2, generator.n_oracle_test]");
  for (const auto& d : c.oracle.delta_models)
    if (d != "krr" && d != "rf") config_error("oracle.delta_models", "unknown model '" + d + "' (krr, rf)");
  if (c.output.directory.empty()) config_error("output.directory", "must be non-empty");
  for (const auto& f : c.output.formats)
    if (f != "csv" && f != "json") config_error("output.formats", "unknown format '" + f + "'");
  if (c.jobs < 0) config_error("experiment.jobs", "must be >= 0");
}

inline ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  using namespace detail;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(ErrorCode::config, std::string("malformed configuration: ") + e.what());
  }
  ExperimentConfig c = default_config();
  static const std::set<std::string> sections = {"experiment", "generator", "models", "oracle", "output"};
  for (const auto& [section, body] : tree) {
    if (!sections.count(section)) config_error(section, "unknown section");
    if (body.empty() && !body.data().empty()) config_error(section, "keys must be inside a section");
    for (const auto& [key, node] : body) {
      const std::string field = section + "." + key;
      const std::string v = trim(node.data());
      if (section == "experiment") {
        if (key == "name") c.name = v;
        else if (key == "jobs") c.jobs = parse_number<int>(field, v);
        else config_error(field, "unknown key");
      } else if (section == "generator") {
        auto& g = c.generator;
        if (key == "kind") {
          if (v == "simple") g.kind = GeneratorKind::simple;
          else if (v == "general") g.kind = GeneratorKind::general;
          else if (v == "fixture7") g.kind = GeneratorKind::fixture7;
          else config_error(field, "unknown generator '" + v + "'");
        } else if (key == "d1") g.d1 = parse_number<Index>(field, v);
        else if (key == "d2") g.d2 = parse_number<Index>(field, v);
        else if (key == "d3") g.d3 = parse_number<Index>(field, v);
        else if (key == "noise") g.noise = parse_number<double>(field, v);
        else if (key == "n_train") g.sizes.train = parse_number<Index>(field, v);
        else if (key == "n_semi") g.sizes.semi = parse_number<Index>(field, v);
        else if (key == "n_validation") g.sizes.validation = parse_number<Index>(field, v);
        else if (key == "n_test") g.sizes.test = parse_number<Index>(field, v);
        else if (key == "n_oracle_test") g.sizes.oracle_test = parse_number<Index>(field, v);
        else if (key == "seeds") g.seeds = parse_seeds(field, v);
        else if (key == "beta_scale") g.scales.beta = parse_number<double>(field, v);
        else if (key == "a_scale") g.scales.a = parse_number<double>(field, v);
        else if (key == "b_y_scale") g.scales.b_y = parse_number<double>(field, v);
        else if (key == "b2_scale") g.scales.b2 = parse_number<double>(field, v);
        else if (key == "b3_scale") g.scales.b3 = parse_number<double>(field, v);
        else if (key == "noise_y") g.scales.noise_y = parse_number<double>(field, v);
        else config_error(field, "unknown key");
      } else if (section == "models") {
        auto& m = c.models;
        if (key == "enabled") m.enabled = split_list(v);
        else if (key == "theta_multipliers") m.theta_multipliers = parse_numbers<double>(field, v);
        else if (key == "lambdas") m.lambdas = parse_numbers<double>(field, v);
        else if (key == "gammas") m.gammas = parse_numbers<double>(field, v);
        else if (key == "n_estimators") m.n_estimators = parse_numbers<int>(field, v);
        else if (key == "max_depths") m.max_depths = parse_numbers<int>(field, v);
        else if (key == "min_samples_splits") m.min_samples_splits = parse_numbers<int>(field, v);
        else if (key == "min_samples_leafs") m.min_samples_leafs = parse_numbers<int>(field, v);
        else if (key == "cme_mode") {
          if (v == "factored") m.cme_mode = CmeMode::factored;
          else if (v == "generic") m.cme_mode = CmeMode::generic;
          else config_error(field, "unknown mode '" + v + "'");
        } else config_error(field, "unknown key");
      } else if (section == "oracle") {
        if (key == "m") c.oracle.m = parse_number<Index>(field, v);
        else if (key == "n_test") c.oracle.n_test = parse_number<Index>(field, v);
        else if (key == "delta_models") c.oracle.delta_models = split_list(v);
        else config_error(field, "unknown key");
      } else {
        if (key == "directory") c.output.directory = v;
        else if (key == "formats") c.output.formats = split_list(v);
        else config_error(field, "unknown key");
      }
    }
  }
  validate(c);
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline std::string serialize_config(const ExperimentConfig& c) {
  using detail::join;
  const auto& g = c.generator;
  const auto& m = c.models;
  std::ostringstream o;
  o << "[experiment]\n"
    << "name = " << c.name << "\n"
    << "jobs = " << c.jobs << "\n\n"
    << "[generator]\n"
    << "kind = " << to_string(g.kind) << "\n"
    << "d1 = " << g.d1 << "\n"
    << "d2 = " << g.d2 << "\n"
    << "d3 = " << g.d3 << "\n"
    << "noise = " << format_double(g.noise) << "\n"
    << "n_train = " << g.sizes.train << "\n"
    << "n_semi = " << g.sizes.semi << "\n"
    << "n_validation = " << g.sizes.validation << "\n"
    << "n_test = " << g.sizes.test << "\n"
    << "n_oracle_test = " << g.sizes.oracle_test << "\n"
    << "seeds = " << detail::format_seeds(g.seeds) << "\n"
    << "beta_scale = " << format_double(g.scales.beta) << "\n"
    << "a_scale = " << format_double(g.scales.a) << "\n"
    << "b_y_scale = " << format_double(g.scales.b_y) << "\n"
    << "b2_scale = " << format_double(g.scales.b2) << "\n"
    << "b3_scale = " << format_double(g.scales.b3) << "\n"
    << "noise_y = " << format_double(g.scales.noise_y) << "\n\n"
    << "[models]\n"
    << "enabled = " << join(m.enabled) << "\n"
    << "theta_multipliers = " << join(m.theta_multipliers) << "\n"
    << "lambdas = " << join(m.lambdas) << "\n"
    << "gammas = " << join(m.gammas) << "\n"
    << "n_estimators = " << join(m.n_estimators) << "\n"
    << "max_depths = " << join(m.max_depths) << "\n"
    << "min_samples_splits = " << join(m.min_samples_splits) << "\n"
    << "min_samples_leafs = " << join(m.min_samples_leafs) << "\n"
    << "cme_mode = " << (m.cme_mode == CmeMode::factored ? "factored" : "generic") << "\n\n"
    << "[oracle]\n"
    << "m = " << c.oracle.m << "\n"
    << "n_test = " << c.oracle.n_test << "\n"
    << "delta_models = " << join(c.oracle.delta_models) << "\n\n"
    << "[output]\n"
    << "directory = " << c.output.directory << "\n"
    << "formats = " << join(c.output.formats) << "\n";
  return o.str();
}

}  // namespace colreg
