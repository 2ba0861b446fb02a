#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "colreg/experiment.hpp"

namespace colreg {

namespace fs = std::filesystem;

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::io, "write failed for '" + path.string() + "'");
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------- datasets ---

inline const std::vector<std::pair<std::string, const Split SimDataset::*>>& split_members() {
  static const std::vector<std::pair<std::string, const Split SimDataset::*>> members = {
      {"train", &SimDataset::train},
      {"semi", &SimDataset::semi},
      {"validation", &SimDataset::validation},
      {"test", &SimDataset::test},
      {"oracle_test", &SimDataset::oracle_test}};
  return members;
}

inline std::vector<std::string> dataset_files() {
  std::vector<std::string> out;
  for (const auto& [name, _] : split_members()) out.push_back(name + ".csv");
  out.push_back("latents.csv");
  out.push_back("metadata.json");
  return out;
}

namespace detail {

inline void header_block(std::string& out, const std::string& prefix, Index count) {
  for (Index i = 0; i < count; ++i) out += (out.empty() ? "" : ",") + prefix + std::to_string(i);
}

inline void row_block(std::string& out, const Matrix& m, Index row, bool& first) {
  for (Index j = 0; j < m.cols(); ++j) {
    if (!first) out += ',';
    out += format_double(m(row, j));
    first = false;
  }
}

}  // namespace detail

inline std::string split_csv(const Split& s, Index d1, Index d2, Index d3) {
  std::string out;
  detail::header_block(out, "x1_", d1);
  detail::header_block(out, "x2_", d2);
  detail::header_block(out, "x3_", d3);
  if (s.labeled()) out += ",y";
  out += '\n';
  for (Index i = 0; i < s.rows(); ++i) {
    bool first = true;
    detail::row_block(out, s.x1, i, first);
    detail::row_block(out, s.x2, i, first);
    detail::row_block(out, s.x3, i, first);
    if (s.labeled()) out += "," + format_double(s.y(i));
    out += '\n';
  }
  return out;
}

/// Latent sidecar: one row per (split, row) with z1, z2, latent y and eps.
inline std::string latents_csv(const SimDataset& ds) {
  std::string out = "split,row";
  std::string cols;
  detail::header_block(cols, "z1_", ds.d1);
  std::string z2;
  detail::header_block(z2, "z2_", ds.d2);
  std::string eps;
  detail::header_block(eps, "eps_", ds.d1);
  out += "," + cols + "," + z2 + ",y_latent," + eps + "\n";
  for (const auto& [name, member] : split_members()) {
    const Split& s = ds.*member;
    if (!s.has_latents) continue;
    for (Index i = 0; i < s.rows(); ++i) {
      out += name + "," + std::to_string(i);
      bool first = false;
      detail::row_block(out, s.latents.z1, i, first);
      detail::row_block(out, s.latents.z2, i, first);
      out += "," + format_double(s.latents.y(i));
      detail::row_block(out, s.latents.eps, i, first);
      out += '\n';
    }
  }
  return out;
}

inline nlohmann::ordered_json dataset_metadata(const SimDataset& ds) {
  nlohmann::ordered_json j;
  j["generator"] = to_string(ds.kind);
  j["seed"] = ds.seed;
  j["noise"] = ds.noise;
  j["d1"] = ds.d1;
  j["d2"] = ds.d2;
  j["d3"] = ds.d3;
  j["conditioning"] = "latent-conditioned oracle";
  nlohmann::ordered_json sizes;
  for (const auto& [name, member] : split_members()) sizes[name] = (ds.*member).rows();
  j["split_sizes"] = sizes;
  const auto matrix_json = [](const Matrix& m) {
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (Index i = 0; i < m.rows(); ++i) {
      nlohmann::ordered_json r = nlohmann::ordered_json::array();
      for (Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
      rows.push_back(r);
    }
    return rows;
  };
  if (ds.sigma) j["sigma"] = matrix_json(ds.sigma->sigma);
  if (ds.general) {
    const auto& g = *ds.general;
    j["coefficients"] = {{"beta", matrix_json(g.beta.transpose())}, {"a", matrix_json(g.a)},
                         {"b_y", matrix_json(g.b_y.transpose())},   {"b2", matrix_json(g.b2)},
                         {"b3", matrix_json(g.b3)},                 {"noise_y", g.noise_y}};
  }
  return j;
}

inline void write_dataset(const SimDataset& ds, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create '" + dir.string() + "': " + ec.message());
  for (const auto& [name, member] : split_members())
    write_text(dir / (name + ".csv"), split_csv(ds.*member, ds.d1, ds.d2, ds.d3));
  write_text(dir / "latents.csv", latents_csv(ds));
  write_text(dir / "metadata.json", dataset_metadata(ds).dump(2) + "\n");
}

// --------------------------------------------------------------- results ---

inline constexpr const char* kResultsHeader = "seed,model,mse,snr,correlation,delta_hat,theta1,theta2,lambda,gamma,wall_ms";

namespace detail {
inline std::string cell(double v) { return std::isnan(v) ? "" : format_double(v); }
inline double parse_cell(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return parse_number<double>("results", s);
}
}  // namespace detail

inline std::string results_csv(const std::vector<SeedResult>& rows) {
  using detail::cell;
  std::string out = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows) {
    out += std::to_string(r.seed) + "," + r.model + "," + cell(r.metrics.mse) + "," + cell(r.metrics.snr) + "," +
           cell(r.metrics.correlation) + "," + cell(r.delta_hat) + "," + cell(r.hyper.theta1) + "," +
           cell(r.hyper.theta2) + "," + cell(r.hyper.lambda) + "," + cell(r.hyper.gamma) + "," +
           format_double(r.wall_ms) + "\n";
  }
  return out;
}

inline std::vector<SeedResult> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kResultsHeader)
    throw Error(ErrorCode::malformed_input, "results CSV: unexpected header");
  std::vector<SeedResult> rows;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(detail::trim(item));
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 11) throw Error(ErrorCode::malformed_input, "results CSV: expected 11 fields in '" + line + "'");
    SeedResult r;
    r.seed = detail::parse_number<std::uint64_t>("results.seed", f[0]);
    r.model = f[1];
    r.metrics = {detail::parse_cell(f[2]), detail::parse_cell(f[3]), detail::parse_cell(f[4])};
    r.delta_hat = detail::parse_cell(f[5]);
    r.hyper.theta1 = detail::parse_cell(f[6]);
    r.hyper.theta2 = detail::parse_cell(f[7]);
    r.hyper.lambda = detail::parse_cell(f[8]);
    r.hyper.gamma = detail::parse_cell(f[9]);
    r.wall_ms = detail::parse_cell(f[10]);
    rows.push_back(r);
  }
  return rows;
}

inline nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

/// Summary JSON. `config_text` is echoed verbatim when non-empty.
inline nlohmann::ordered_json summary_json(const ExperimentSummary& s, const std::string& config_text) {
  nlohmann::ordered_json j;
  j["library_version"] = kLibraryVersion;
  j["conventions"] = {{"snr", "var(predictions) / mse"},
                      {"delta_hat", "bias-corrected Monte-Carlo estimate of ||E h||^2"},
                      {"conditioning", "latent-conditioned oracle"}};
  j["seeds_attempted"] = s.seeds_attempted;
  nlohmann::ordered_json failed = nlohmann::ordered_json::array();
  for (const auto& f : s.failures) failed.push_back({{"seed", f.seed}, {"error", f.message}});
  j["failed_seeds"] = failed;
  nlohmann::ordered_json models = nlohmann::ordered_json::object();
  for (const auto& m : s.models) {
    nlohmann::ordered_json mj = nlohmann::ordered_json::object();
    for (const auto& [metric, v] : m.metrics)
      mj[metric] = {{"mean", number_or_null(v.mean)}, {"std", number_or_null(v.std)}, {"count", v.count}};
    models[m.model] = mj;
  }
  j["models"] = models;
  nlohmann::ordered_json w;
  w["metric"] = "mse";
  w["test"] = "two-tailed Wilcoxon signed-rank, paired by seed";
  w["models"] = s.wilcoxon_models;
  nlohmann::ordered_json lower = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < s.wilcoxon_models.size(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (std::size_t k = 0; k < i; ++k) row.push_back(number_or_null(s.p_values[i][k]));
    lower.push_back(row);
  }
  w["p_values_lower_triangle"] = lower;
  j["wilcoxon"] = w;
  if (!config_text.empty()) j["config"] = config_text;
  return j;
}

/// Fixed-width table of per-model means and standard deviations.
inline std::string summary_table(const ExperimentSummary& s) {
  std::ostringstream o;
  const auto fmt = [](const ModelSummary& m, const std::string& metric) {
    const auto it = m.metrics.find(metric);
    if (it == m.metrics.end()) return std::string("-");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g +/- %.2g", it->second.mean, std::isnan(it->second.std) ? 0.0 : it->second.std);
    return std::string(buf);
  };
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %-22s %-22s %-22s %-22s\n", "model", "mse", "snr", "correlation", "delta_hat");
  o << line;
  for (const auto& m : s.models) {
    std::snprintf(line, sizeof line, "%-18s %-22s %-22s %-22s %-22s\n", m.model.c_str(), fmt(m, "mse").c_str(),
                  fmt(m, "snr").c_str(), fmt(m, "correlation").c_str(), fmt(m, "delta_hat").c_str());
    o << line;
  }
  if (!s.failures.empty()) o << s.failures.size() << " of " << s.seeds_attempted << " seeds failed\n";
  return o.str();
}

/// Long format: axis_value, model, metric, mean, std.
inline std::string ablation_csv(const std::vector<AblationPoint>& points) {
  std::string out = "axis_value,model,metric,mean,std\n";
  for (const auto& p : points)
    for (const auto& m : p.summary.models)
      for (const auto& [metric, v] : m.metrics)
        out += std::to_string(p.value) + "," + m.model + "," + metric + "," + detail::cell(v.mean) + "," +
               detail::cell(v.std) + "\n";
  return out;
}

}  // namespace colreg
