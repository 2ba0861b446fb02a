#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "colreg/config.hpp"
#include "colreg/evalharness.hpp"

namespace colreg {

inline constexpr const char* kLibraryVersion = "colreg 0.1.0";

struct SeedResult {
  std::uint64_t seed = 0;
  std::string model;
  Metrics metrics{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                  std::numeric_limits<double>::quiet_NaN()};
  double delta_hat = std::numeric_limits<double>::quiet_NaN();
  double delta_se = std::numeric_limits<double>::quiet_NaN();
  Hyper hyper;
  double wall_ms = 0.0;

  bool is_delta() const { return model.starts_with("delta-"); }
};

struct FailedSeed {
  std::uint64_t seed = 0;
  std::string message;
};

struct ExperimentResult {
  std::vector<SeedResult> rows;
  std::vector<FailedSeed> failures;
  std::size_t seeds_attempted = 0;
};

inline SimDataset make_dataset(const GeneratorConfig& g, std::uint64_t seed) {
  switch (g.kind) {
    case GeneratorKind::simple: return simulate_seeded(g.d1, g.d2, g.noise, g.sizes, seed);
    case GeneratorKind::general: return simulate_general(g.d1, g.d2, g.d3, g.scales, g.noise, g.sizes, seed);
    case GeneratorKind::fixture7: return fixture_section7(g.sizes, seed);
  }
  throw Error(ErrorCode::config, "generator.kind: unknown");
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

inline double mse(const Vector& pred, const Vector& y) { return (pred - y).squaredNorm() / static_cast<double>(y.size()); }

/// Per-seed working state: splits as [x1 | x2 | x3] rows plus lengthscale bases.
struct SeedContext {
  const ExperimentConfig* cfg;
  SimDataset ds;
  Matrix train_x, semi_x, val_x, test_x;
  Vector train_y, val_y, test_y;
  Index d1 = 0, dz = 0;
  double med1 = 1.0, med2 = 1.0;

  Matrix unlabeled() const { return semi_x; }
  ColliderKernel kernel(const Hyper& h) const { return ColliderKernel(h.theta1, d1, h.theta2, dz); }
  CmeMode mode() const { return cfg->models.cme_mode; }
};

inline SeedContext make_context(const ExperimentConfig& cfg, std::uint64_t seed) {
  SeedContext c{&cfg, make_dataset(cfg.generator, seed), {}, {}, {}, {}, {}, {}, {}, 0, 0, 1.0, 1.0};
  c.train_x = c.ds.train.features();
  c.semi_x = c.ds.semi.features();
  c.val_x = c.ds.validation.features();
  c.test_x = c.ds.test.features();
  c.train_y = c.ds.train.y;
  c.val_y = c.ds.validation.y;
  c.test_y = c.ds.test.y;
  c.d1 = c.ds.d1;
  c.dz = c.ds.d2 + c.ds.d3;
  const Matrix all = vcat(c.train_x, c.semi_x);
  const double m1 = median_sq_distance(all.leftCols(c.d1));
  const double m2 = median_sq_distance(all.rightCols(c.dz));
  c.med1 = m1 > 0.0 ? m1 : 1.0;
  c.med2 = m2 > 0.0 ? m2 : 1.0;
  return c;
}

/// Candidate grid search over precomputed scores, sharing grid_search_cv's
/// selection rule.
inline GridResult select(const std::vector<Hyper>& grid, const std::vector<double>& scores) {
  return grid_search_cv([&](const Hyper& h) { return scores[static_cast<std::size_t>(&h - grid.data())]; }, grid);
}

inline std::vector<Hyper> forest_grid(const ModelConfig& m, std::uint64_t seed) {
  std::vector<Hyper> grid;
  for (int ne : m.n_estimators)
    for (int md : m.max_depths)
      for (int ms : m.min_samples_splits)
        for (int ml : m.min_samples_leafs) {
          Hyper h;
          h.forest = ForestParams{ne, md, ms, ml, true, seed};
          grid.push_back(h);
        }
  return grid;
}

/// KRR over (theta1, theta2, lambda); Grams computed once per lengthscale pair.
inline GridResult tune_krr(const SeedContext& c) {
  const auto& m = c.cfg->models;
  std::vector<Hyper> grid;
  std::vector<double> scores;
  for (double t1 : m.theta_multipliers)
    for (double t2 : m.theta_multipliers) {
      Hyper base;
      base.theta1 = t1 * c.med1;
      base.theta2 = t2 * c.med2;
      const ColliderKernel k = c.kernel(base);
      const Matrix g = k.gram(c.train_x, c.train_x);
      const Matrix gv = k.gram(c.val_x, c.train_x);
      const double offset = c.train_y.mean();
      for (double lambda : m.lambdas) {
        Hyper h = base;
        h.lambda = lambda;
        grid.push_back(h);
        try {
          Matrix system = g;
          system.diagonal().array() += lambda;
          const Vector alpha = cholesky_psd(system).solve((c.train_y.array() - offset).matrix());
          Vector pred = gv * alpha;
          pred.array() += offset;
          scores.push_back(mse(pred, c.val_y));
        } catch (const Error&) {
          scores.push_back(std::numeric_limits<double>::quiet_NaN());
        }
      }
    }
  return select(grid, scores);
}

/// P-KRR keeps the KRR lengthscales and lambda and tunes gamma.
inline GridResult tune_pkrr(const SeedContext& c, const Hyper& krr_best) {
  std::vector<Hyper> grid;
  for (double gamma : c.cfg->models.gammas) {
    Hyper h = krr_best;
    h.gamma = gamma;
    grid.push_back(h);
  }
  return grid_search_cv(
      [&](const Hyper& h) {
        const auto fit = pkrr_fit(c.train_x, c.train_y, c.semi_x, c.kernel(h), h.lambda, h.gamma, c.mode());
        return mse(fit->predict(c.val_x), c.val_y);
      },
      grid);
}

/// HP-KRR keeps the KRR lengthscales and tunes (lambda, gamma); projected
/// Grams are computed once per gamma.
inline GridResult tune_hpkrr(const SeedContext& c, const Hyper& krr_best) {
  const auto& m = c.cfg->models;
  std::vector<Hyper> grid;
  std::vector<double> scores;
  const double offset = c.train_y.mean();
  for (double gamma : m.gammas) {
    Hyper base = krr_best;
    base.gamma = gamma;
    Matrix g, gv;
    bool ok = true;
    try {
      const ProjectedKernelFit pk(fit_cme(vcat(c.train_x, c.semi_x), c.kernel(base), gamma, c.mode()));
      const auto tr = pk.prepare(c.train_x);
      g = pk.gram(tr);
      gv = pk.gram(pk.prepare(c.val_x), tr);
    } catch (const Error&) {
      ok = false;
    }
    for (double lambda : m.lambdas) {
      Hyper h = base;
      h.lambda = lambda;
      grid.push_back(h);
      if (!ok) {
        scores.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      try {
        Matrix system = g;
        system.diagonal().array() += lambda;
        const Vector beta = cholesky_psd(system).solve((c.train_y.array() - offset).matrix());
        Vector pred = gv * beta;
        pred.array() += offset;
        scores.push_back(mse(pred, c.val_y));
      } catch (const Error&) {
        scores.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
  }
  return select(grid, scores);
}

inline GridResult tune_rf(const SeedContext& c) {
  const auto grid = forest_grid(c.cfg->models, c.ds.seed);
  return grid_search_cv(
      [&](const Hyper& h) { return mse(forest_fit(c.train_x, c.train_y, h.forest)->predict(c.val_x), c.val_y); }, grid);
}

/// P-RF: the tuned forest as stage 1, a forest over the conditioning
/// columns as stage 2 with its own parameters tuned on validation.
inline std::pair<ModelPtr, Hyper> tune_prf(const SeedContext& c, const ModelPtr& base) {
  const Matrix anchors = vcat(c.train_x, c.semi_x);
  const Vector targets = base->predict(anchors);
  const Matrix z = anchors.rightCols(c.dz);
  const auto grid = forest_grid(c.cfg->models, c.ds.seed);
  const auto fit_stage2 = [&](const Hyper& h) -> ModelPtr { return forest_fit(z, targets, h.forest); };
  const auto best = grid_search_cv(
      [&](const Hyper& h) { return mse(ProjectedRegressor(base, fit_stage2(h), c.d1).predict(c.val_x), c.val_y); },
      grid);
  return {std::make_shared<const ProjectedRegressor>(base, fit_stage2(best.best), c.d1), best.best};
}

inline GeneralMethod general_method(const std::string& name) {
  if (name == "general-two-stage") return GeneralMethod::two_stage;
  if (name == "general-pkrr") return GeneralMethod::pkrr;
  return GeneralMethod::hpkrr;
}

/// Gaussian-kernel KRR from x3 to y for the general boundary.
struct F0Hyper {
  double theta3 = 1.0;
  double lambda0 = 1.0;

  Regressor regressor(Index d3) const { return krr_regressor(GaussianKernel(theta3, d3), lambda0); }
};

/// (theta3, lambda0) over the lengthscale multipliers and lambda grid,
/// scored on validation from x3 alone.
inline F0Hyper tune_f0(const SeedContext& c) {
  const auto& m = c.cfg->models;
  const Index d3 = c.ds.d3;
  const Matrix x3 = c.train_x.rightCols(d3), v3 = c.val_x.rightCols(d3);
  const double med = median_sq_distance(vcat(x3, c.semi_x.rightCols(d3)));
  std::vector<Hyper> grid;
  std::vector<double> scores;
  for (double t : m.theta_multipliers)
    for (double lambda : m.lambdas) {
      Hyper h;
      h.theta1 = t * (med > 0.0 ? med : 1.0);
      h.lambda = lambda;
      grid.push_back(h);
      try {
        scores.push_back(mse(krr_fit(GaussianKernel(h.theta1, d3), x3, c.train_y, lambda)->predict(v3), c.val_y));
      } catch (const Error&) {
        scores.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
  const Hyper best = select(grid, scores).best;
  return {best.theta1, best.lambda};
}

inline ModelPtr fit_f0(const SeedContext& c, const F0Hyper& f0) {
  const Index d3 = c.ds.d3;
  return std::make_shared<const ColumnSliceModel>(f0.regressor(d3)(c.train_x.rightCols(d3), c.train_y),
                                                  c.train_x.cols() - d3, d3);
}

inline std::shared_ptr<const GeneralColliderFit> fit_general(const SeedContext& c, GeneralMethod method, const Hyper& h,
                                                             const F0Hyper& f0) {
  GeneralOptions o{method, f0.regressor(c.ds.d3), c.kernel(h), h.lambda, h.gamma, c.mode()};
  return general_fit(c.train_x, c.train_y, c.semi_x, c.ds.d3, o);
}

inline GridResult tune_general(const SeedContext& c, GeneralMethod method, const Hyper& krr_best, const F0Hyper& f0) {
  std::vector<Hyper> grid;
  for (double gamma : c.cfg->models.gammas)
    for (double lambda : c.cfg->models.lambdas) {
      Hyper h = krr_best;
      h.gamma = gamma;
      h.lambda = lambda;
      grid.push_back(h);
    }
  return grid_search_cv(
      [&](const Hyper& h) { return mse(fit_general(c, method, h, f0)->predict(c.val_x), c.val_y); }, grid);
}

}  // namespace detail

/// Tunes and evaluates every enabled model on one seed, then the Monte-Carlo
/// gap rows. Rows come out in the order of known_models(), then delta-krr,
/// delta-rf.
inline std::vector<SeedResult> run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
  using namespace detail;
  const auto& m = cfg.models;
  const SeedContext c = make_context(cfg, seed);
  std::vector<SeedResult> rows;
  const auto emit = [&](const std::string& name, const ModelPtr& model, const Hyper& h, Clock::time_point t0) {
    SeedResult r;
    r.seed = seed;
    r.model = name;
    r.metrics = compute_metrics(model->predict(c.test_x), c.test_y);
    r.hyper = h;
    r.wall_ms = elapsed_ms(t0);
    rows.push_back(r);
  };
  const auto wants_delta = [&](const std::string& d) {
    return std::find(cfg.oracle.delta_models.begin(), cfg.oracle.delta_models.end(), d) != cfg.oracle.delta_models.end();
  };

  ModelPtr rf_model;
  Hyper rf_hyper;
  if (m.has("rf") || m.has("p-rf") || wants_delta("rf")) {
    const auto t0 = Clock::now();
    rf_hyper = tune_rf(c).best;
    rf_model = forest_fit(c.train_x, c.train_y, rf_hyper.forest);
    if (m.has("rf")) emit("rf", rf_model, rf_hyper, t0);
  }
  if (m.has("p-rf")) {
    const auto t0 = Clock::now();
    auto [model, h] = tune_prf(c, rf_model);
    emit("p-rf", model, h, t0);
  }

  const bool need_krr = m.has("krr") || m.has("p-krr") || m.has("hp-krr") || wants_delta("krr") ||
                        std::any_of(m.enabled.begin(), m.enabled.end(), [](const std::string& s) { return s.starts_with("general-"); });
  ModelPtr krr_model;
  Hyper krr_hyper;
  if (need_krr) {
    const auto t0 = Clock::now();
    krr_hyper = tune_krr(c).best;
    krr_model = krr_fit(c.kernel(krr_hyper), c.train_x, c.train_y, krr_hyper.lambda);
    if (m.has("krr")) emit("krr", krr_model, krr_hyper, t0);
  }
  if (m.has("p-krr")) {
    const auto t0 = Clock::now();
    const Hyper h = tune_pkrr(c, krr_hyper).best;
    emit("p-krr", pkrr_fit(c.train_x, c.train_y, c.semi_x, c.kernel(h), h.lambda, h.gamma, c.mode()), h, t0);
  }
  if (m.has("hp-krr")) {
    const auto t0 = Clock::now();
    const Hyper h = tune_hpkrr(c, krr_hyper).best;
    emit("hp-krr", hpkrr_fit(c.train_x, c.train_y, c.semi_x, c.kernel(h), h.lambda, h.gamma, c.mode()), h, t0);
  }
  const F0Hyper f0_hyper = c.ds.kind == GeneratorKind::general ? tune_f0(c) : F0Hyper{};
  for (const char* name : {"general-two-stage", "general-pkrr", "general-hpkrr"}) {
    if (!m.has(name)) continue;
    const auto t0 = Clock::now();
    const GeneralMethod method = general_method(name);
    const Hyper h = tune_general(c, method, krr_hyper, f0_hyper).best;
    emit(name, fit_general(c, method, h, f0_hyper), h, t0);
  }

  const auto delta_row = [&](const std::string& base, const ModelPtr& model, const Hyper& h, std::uint64_t stream) {
    const auto t0 = Clock::now();
    RngStream rng(seed, stream);
    const Predictor pred = [&](const Matrix& x) { return model->predict(x); };
    DeltaEstimate d;
    if (c.ds.kind == GeneratorKind::general) {
      const ModelPtr f0 = fit_f0(c, f0_hyper);
      d = delta_mc_general(pred, [&](const Matrix& x) { return f0->predict(x); }, c.ds, cfg.oracle.m,
                           cfg.oracle.n_test, rng);
    } else {
      d = delta_mc(pred, c.ds, cfg.oracle.m, cfg.oracle.n_test, rng);
    }
    SeedResult r;
    r.seed = seed;
    r.model = "delta-" + base;
    r.delta_hat = d.delta_hat;
    r.delta_se = d.standard_error;
    r.hyper = h;
    r.wall_ms = elapsed_ms(t0);
    rows.push_back(r);
  };
  if (wants_delta("krr")) delta_row("krr", krr_model, krr_hyper, streams::oracle_draws);
  if (wants_delta("rf")) delta_row("rf", rf_model, rf_hyper, streams::oracle_draws_rf);
  return rows;
}

struct RunOptions {
  std::uint64_t seed_offset = 0;
  int jobs = 0;  // overrides cfg.jobs when > 0
};

inline int resolve_jobs(int requested, std::size_t seeds) {
  const int hw = std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
  const int cap = requested > 0 ? requested : hw;
  return std::max(1, std::min(cap, static_cast<int>(seeds)));
}

/// Runs every seed; per-seed failures are recorded and the run continues.
/// Output order follows the configured seed order regardless of `jobs`.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  validate(cfg);
  const auto& seeds = cfg.generator.seeds;
  std::vector<std::vector<SeedResult>> per_seed(seeds.size());
  std::vector<std::optional<FailedSeed>> failed(seeds.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      const std::uint64_t seed = seeds[i] + opts.seed_offset;
      try {
        per_seed[i] = run_seed(cfg, seed);
      } catch (const std::exception& e) {
        failed[i] = FailedSeed{seed, e.what()};
      }
    }
  };
  const int jobs = resolve_jobs(opts.jobs > 0 ? opts.jobs : cfg.jobs, seeds.size());
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  ExperimentResult out;
  out.seeds_attempted = seeds.size();
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (failed[i]) out.failures.push_back(*failed[i]);
    out.rows.insert(out.rows.end(), per_seed[i].begin(), per_seed[i].end());
  }
  return out;
}

// --------------------------------------------------------------- summary ---

struct MetricSummary {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double std = std::numeric_limits<double>::quiet_NaN();
  Index count = 0;
};

struct ModelSummary {
  std::string model;
  std::map<std::string, MetricSummary> metrics;  // mse, snr, correlation, delta_hat, wall_ms
};

struct ExperimentSummary {
  std::vector<ModelSummary> models;
  /// Model names with an MSE, in row order; p_values[i][j] for j < i.
  std::vector<std::string> wilcoxon_models;
  std::vector<std::vector<double>> p_values;
  std::vector<FailedSeed> failures;
  std::size_t seeds_attempted = 0;

  const ModelSummary* find(const std::string& name) const {
    for (const auto& m : models)
      if (m.model == name) return &m;
    return nullptr;
  }
  double mean(const std::string& model, const std::string& metric) const {
    const auto* m = find(model);
    if (!m) return std::numeric_limits<double>::quiet_NaN();
    const auto it = m->metrics.find(metric);
    return it == m->metrics.end() ? std::numeric_limits<double>::quiet_NaN() : it->second.mean;
  }
};

inline const std::vector<std::string>& summary_metrics() {
  static const std::vector<std::string> names = {"mse", "snr", "correlation", "delta_hat", "wall_ms"};
  return names;
}

inline double metric_value(const SeedResult& r, const std::string& metric) {
  if (metric == "mse") return r.metrics.mse;
  if (metric == "snr") return r.metrics.snr;
  if (metric == "correlation") return r.metrics.correlation;
  if (metric == "delta_hat") return r.delta_hat;
  return r.wall_ms;
}

inline ExperimentSummary summarize(const std::vector<SeedResult>& rows, const std::vector<FailedSeed>& failures = {},
                                   std::size_t seeds_attempted = 0) {
  ExperimentSummary s;
  s.failures = failures;
  s.seeds_attempted = seeds_attempted;
  std::vector<std::string> order;
  for (const auto& r : rows)
    if (std::find(order.begin(), order.end(), r.model) == order.end()) order.push_back(r.model);
  for (const auto& name : order) {
    ModelSummary ms{name, {}};
    for (const auto& metric : summary_metrics()) {
      std::vector<double> v;
      for (const auto& r : rows)
        if (r.model == name && !std::isnan(metric_value(r, metric))) v.push_back(metric_value(r, metric));
      MetricSummary m;
      m.count = static_cast<Index>(v.size());
      if (!v.empty()) m.mean = mean_of(v);
      if (v.size() > 1) m.std = stddev_of(v);
      if (m.count > 0) ms.metrics[metric] = m;
    }
    s.models.push_back(ms);
    bool has_mse = false;
    for (const auto& r : rows)
      if (r.model == name && !r.is_delta()) has_mse = true;
    if (has_mse) s.wilcoxon_models.push_back(name);
  }
  const auto& wm = s.wilcoxon_models;
  s.p_values.assign(wm.size(), std::vector<double>(wm.size(), std::numeric_limits<double>::quiet_NaN()));
  for (std::size_t i = 0; i < wm.size(); ++i)
    for (std::size_t j = 0; j < i; ++j) {
      std::map<std::uint64_t, double> a;
      for (const auto& r : rows)
        if (r.model == wm[i]) a[r.seed] = r.metrics.mse;
      std::vector<double> va, vb;
      for (const auto& r : rows)
        if (r.model == wm[j] && a.count(r.seed)) {
          va.push_back(a[r.seed]);
          vb.push_back(r.metrics.mse);
        }
      try {
        s.p_values[i][j] = wilcoxon_signed_rank(Eigen::Map<const Vector>(va.data(), static_cast<Index>(va.size())),
                                                Eigen::Map<const Vector>(vb.data(), static_cast<Index>(vb.size())))
                               .p_value;
      } catch (const Error&) {
      }
    }
  return s;
}

inline ExperimentSummary summarize(const ExperimentResult& r) { return summarize(r.rows, r.failures, r.seeds_attempted); }

// -------------------------------------------------------------- ablation ---

enum class AblationAxis { n_train, n_semi, d2 };

inline AblationAxis parse_axis(const std::string& s) {
  if (s == "n_train") return AblationAxis::n_train;
  if (s == "n_semi") return AblationAxis::n_semi;
  if (s == "d2") return AblationAxis::d2;
  throw Error(ErrorCode::config, "axis: unknown axis '" + s + "' (n_train, n_semi, d2)");
}

inline ExperimentConfig with_axis(ExperimentConfig cfg, AblationAxis axis, Index value) {
  switch (axis) {
    case AblationAxis::n_train: cfg.generator.sizes.train = value; break;
    case AblationAxis::n_semi: cfg.generator.sizes.semi = value; break;
    case AblationAxis::d2: cfg.generator.d2 = value; break;
  }
  validate(cfg);
  return cfg;
}

struct AblationPoint {
  Index value = 0;
  ExperimentConfig config;
  ExperimentResult result;
  ExperimentSummary summary;
};

inline std::vector<AblationPoint> run_ablation(const ExperimentConfig& cfg, AblationAxis axis,
                                               const std::vector<Index>& values, const RunOptions& opts = {}) {
  require(!values.empty(), ErrorCode::config, "values: must be non-empty");
  std::vector<AblationPoint> out;
  for (Index v : values) {
    require(v >= 0, ErrorCode::config, "values: must be non-negative integers");
    AblationPoint p;
    p.value = v;
    p.config = with_axis(cfg, axis, v);
    p.result = run_experiment(p.config, opts);
    p.summary = summarize(p.result);
    out.push_back(std::move(p));
  }
  return out;
}

/// Spearman correlation between axis values and a model's mean metric; NaN
/// when either sequence is constant.
inline double ablation_trend(const std::vector<AblationPoint>& points, const std::string& model,
                             const std::string& metric) {
  std::vector<double> xs, ys;
  for (const auto& p : points) {
    const double v = p.summary.mean(model, metric);
    if (std::isnan(v)) continue;
    xs.push_back(static_cast<double>(p.value));
    ys.push_back(v);
  }
  const auto constant = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
  };
  if (xs.size() < 2 || constant(xs) || constant(ys)) return std::numeric_limits<double>::quiet_NaN();
  return spearman(xs, ys);
}

}  // namespace colreg
