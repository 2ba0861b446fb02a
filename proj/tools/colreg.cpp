#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "colreg/io.hpp"

namespace {

using namespace colreg;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

struct Globals {
  std::uint64_t seed_offset = 0;
  int jobs = 0;
  bool overwrite = false;
  std::string out;
};

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return default_config();
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::io, "cannot open config '" + path + "'");
  return parse_config(in);
}

fs::path output_dir(const Globals& g, const ExperimentConfig& cfg) {
  if (!g.out.empty()) return g.out;
  fs::path dir = cfg.output.directory;
  if (dir.is_relative()) {
    if (const char* root = std::getenv("COLREG_OUTPUT_ROOT"); root && *root) dir = fs::path(root) / dir;
  }
  return dir;
}

/// Creates `dir` and refuses to clobber existing outputs unless --overwrite.
void prepare_outputs(const Globals& g, const fs::path& dir, const std::vector<std::string>& files) {
  if (!g.overwrite)
    for (const auto& f : files)
      if (fs::exists(dir / f))
        throw Error(ErrorCode::io, "'" + (dir / f).string() + "' exists (use --overwrite)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::io, "cannot create '" + dir.string() + "': " + ec.message());
}

bool wants(const ExperimentConfig& cfg, const std::string& format) {
  return std::find(cfg.output.formats.begin(), cfg.output.formats.end(), format) != cfg.output.formats.end();
}

int cmd_simulate(const Globals& g, const std::string& config_path, std::optional<std::uint64_t> seed) {
  const ExperimentConfig cfg = load_config(config_path);
  const std::uint64_t s = seed.value_or(cfg.generator.seeds.front()) + g.seed_offset;
  const fs::path dir = output_dir(g, cfg);
  prepare_outputs(g, dir, dataset_files());
  write_dataset(make_dataset(cfg.generator, s), dir);
  std::cout << "wrote dataset for seed " << s << " to " << dir.string() << "\n";
  return kExitOk;
}

void write_run_outputs(const ExperimentConfig& cfg, const ExperimentResult& r, const ExperimentSummary& s,
                       const fs::path& dir, const std::string& suffix) {
  if (wants(cfg, "csv")) write_text(dir / ("results" + suffix + ".csv"), results_csv(r.rows));
  if (wants(cfg, "json")) write_text(dir / ("summary" + suffix + ".json"), summary_json(s, serialize_config(cfg)).dump(2) + "\n");
}

std::vector<std::string> run_files(const ExperimentConfig& cfg, const std::string& suffix) {
  std::vector<std::string> files;
  if (wants(cfg, "csv")) files.push_back("results" + suffix + ".csv");
  if (wants(cfg, "json")) files.push_back("summary" + suffix + ".json");
  return files;
}

int cmd_run(const Globals& g, const std::string& config_path) {
  const ExperimentConfig cfg = load_config(config_path);
  const fs::path dir = output_dir(g, cfg);
  prepare_outputs(g, dir, run_files(cfg, ""));
  const ExperimentResult r = run_experiment(cfg, {g.seed_offset, g.jobs});
  const ExperimentSummary s = summarize(r);
  write_run_outputs(cfg, r, s, dir, "");
  std::cout << summary_table(s);
  for (const auto& f : r.failures) std::cerr << "seed " << f.seed << " failed: " << f.message << "\n";
  return r.failures.size() == r.seeds_attempted ? kExitNumerical : kExitOk;
}

int cmd_ablate(const Globals& g, const std::string& config_path, const std::string& axis_name,
               const std::vector<long long>& raw_values) {
  const AblationAxis axis = parse_axis(axis_name);
  const ExperimentConfig cfg = load_config(config_path);
  std::vector<Index> values;
  for (long long v : raw_values) {
    if (v < 0) throw Error(ErrorCode::config, "values: must be non-negative integers");
    values.push_back(static_cast<Index>(v));
  }
  if (values.empty()) throw Error(ErrorCode::config, "values: must be non-empty");
  for (Index v : values) with_axis(cfg, axis, v);  // validate every point before running
  const fs::path dir = output_dir(g, cfg);
  std::vector<std::string> files{"ablation_" + axis_name + ".csv"};
  for (Index v : values)
    for (const auto& f : run_files(cfg, "_" + axis_name + "_" + std::to_string(v))) files.push_back(f);
  prepare_outputs(g, dir, files);

  const auto points = run_ablation(cfg, axis, values, {g.seed_offset, g.jobs});
  bool any_ok = false;
  for (const auto& p : points) {
    write_run_outputs(p.config, p.result, p.summary, dir, "_" + axis_name + "_" + std::to_string(p.value));
    std::cout << axis_name << " = " << p.value << "\n" << summary_table(p.summary) << "\n";
    any_ok = any_ok || p.result.failures.size() < p.result.seeds_attempted;
  }
  write_text(dir / files.front(), ablation_csv(points));
  if (points.size() >= 2) {
    std::cout << "Spearman(" << axis_name << ", mean mse):";
    for (const auto& m : points.front().summary.wilcoxon_models) {
      const double rho = ablation_trend(points, m, "mse");
      std::cout << " " << m << "=" << (std::isnan(rho) ? std::string("n/a") : format_double(rho));
    }
    std::cout << "\n";
  }
  return any_ok ? kExitOk : kExitNumerical;
}

int cmd_report(const Globals& g, const std::vector<std::string>& inputs) {
  std::vector<SeedResult> rows;
  for (const auto& path : inputs) {
    const auto part = parse_results_csv(read_text(path));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  const ExperimentSummary s = summarize(rows);
  const fs::path dir = g.out.empty() ? fs::path(inputs.front()).parent_path() : fs::path(g.out);
  prepare_outputs(g, dir, {"report.json"});
  write_text(dir / "report.json", summary_json(s, "").dump(2) + "\n");
  std::cout << summary_table(s);
  return kExitOk;
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::config:
    case ErrorCode::malformed_input:
    case ErrorCode::invalid_argument: return kExitConfig;
    case ErrorCode::io: return kExitIo;
    default: return kExitNumerical;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collider regression experiments: simulate data, run and ablate the model comparison."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed-offset", g.seed_offset, "Added to every configured seed");
  app.add_option("--jobs", g.jobs, "Seeds run in parallel (default: min(#seeds, cores))")->check(CLI::NonNegativeNumber);
  app.add_flag("--overwrite", g.overwrite, "Replace existing output files");
  app.add_option("--out", g.out, "Output directory (default: output.directory, under $COLREG_OUTPUT_ROOT if relative)");

  std::string config_path;
  std::optional<std::uint64_t> seed;
  auto* sim = app.add_subcommand("simulate", "Write one dataset (split CSVs, latent sidecar, metadata JSON)");
  sim->add_option("config", config_path, "Configuration file (default: built-in)");
  sim->add_option("--seed", seed, "Dataset seed (default: first configured seed)");

  auto* run = app.add_subcommand("run", "Tune and evaluate every enabled model over all seeds");
  run->add_option("config", config_path, "Configuration file (default: built-in)");

  std::string axis;
  std::vector<long long> values;
  auto* ablate = app.add_subcommand("ablate", "Repeat the experiment along one axis");
  ablate->add_option("config", config_path, "Configuration file (default: built-in)");
  ablate->add_option("--axis", axis, "n_train, n_semi or d2")->required();
  ablate->add_option("--values", values, "Axis values")->required()->delimiter(',');

  std::vector<std::string> inputs;
  auto* report = app.add_subcommand("report", "Re-summarise existing results CSVs");
  report->add_option("results", inputs, "results CSV files")->required()->check(CLI::ExistingFile);

  auto* print = app.add_subcommand("config", "Print the built-in default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*sim) return cmd_simulate(g, config_path, seed);
    if (*run) return cmd_run(g, config_path);
    if (*ablate) return cmd_ablate(g, config_path, axis, values);
    if (*report) return cmd_report(g, inputs);
    if (*print) {
      std::cout << serialize_config(default_config());
      return kExitOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
