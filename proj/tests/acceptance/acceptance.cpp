// Acceptance runner: one PASS/FAIL line per criterion with the measured
// numbers. Exits 0 once every criterion has been evaluated; `--strict` makes
// any FAIL a non-zero exit. `--only N` runs a single criterion.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "colreg/experiment.hpp"
#include "colreg/graph.hpp"
#include "colreg/projected_kernel.hpp"
#include "support/oracles.hpp"

using namespace colreg;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

ExperimentConfig base_config(std::initializer_list<std::string> models, std::vector<std::string> deltas,
                             std::uint64_t seeds) {
  ExperimentConfig cfg = default_config();
  cfg.models.enabled = models;
  cfg.oracle.delta_models = std::move(deltas);
  cfg.generator.seeds.clear();
  for (std::uint64_t s = 0; s < seeds; ++s) cfg.generator.seeds.push_back(s);
  cfg.jobs = 0;
  return cfg;
}

std::string failures_note(const ExperimentResult& r) {
  return r.failures.empty() ? "" : " failed_seeds=" + std::to_string(r.failures.size());
}

double p_value(const ExperimentSummary& s, const std::string& a, const std::string& b) {
  const auto& m = s.wilcoxon_models;
  const auto ia = std::find(m.begin(), m.end(), a) - m.begin();
  const auto ib = std::find(m.begin(), m.end(), b) - m.begin();
  if (ia == static_cast<long>(m.size()) || ib == static_cast<long>(m.size()) || ia == ib)
    return std::numeric_limits<double>::quiet_NaN();
  return ia > ib ? s.p_values[ia][ib] : s.p_values[ib][ia];
}

// 1: default protocol ordering over 100 seeds.
Verdict ordering() {
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = base_config({"rf", "p-rf", "krr", "p-krr", "hp-krr"}, {}, 100);
  const ExperimentResult r = run_experiment(cfg);
  const ExperimentSummary s = summarize(r);
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  const double krr = s.mean("krr", "mse"), pkrr = s.mean("p-krr", "mse"), hp = s.mean("hp-krr", "mse");
  const double rf = s.mean("rf", "mse"), prf = s.mean("p-rf", "mse");
  const double p1 = p_value(s, "p-krr", "krr"), p2 = p_value(s, "hp-krr", "krr");
  const bool pass = pkrr <= krr && hp <= krr && (p1 < 0.05 || p2 < 0.05) && prf <= rf && r.failures.empty();
  return {pass, "mse krr=" + fmt(krr) + " p-krr=" + fmt(pkrr) + " hp-krr=" + fmt(hp) + " rf=" + fmt(rf) +
                    " p-rf=" + fmt(prf) + " wilcoxon(p-krr,krr)=" + fmt(p1) + " wilcoxon(hp-krr,krr)=" + fmt(p2) +
                    " minutes=" + fmt(minutes) + failures_note(r)};
}

struct KrrOnSeed {
  detail::SeedContext ctx;
  Hyper hyper;
  ModelPtr model;
};

KrrOnSeed tuned_krr(const ExperimentConfig& cfg, std::uint64_t seed) {
  KrrOnSeed out{detail::make_context(cfg, seed), {}, {}};
  out.hyper = detail::tune_krr(out.ctx).best;
  out.model = krr_fit(out.ctx.kernel(out.hyper), out.ctx.train_x, out.ctx.train_y, out.hyper.lambda);
  return out;
}

// 2: positive gap for fitted KRR, exact c^2 for constants.
Verdict oracle_gap() {
  const ExperimentConfig cfg = base_config({"krr"}, {"krr"}, 1);
  const KrrOnSeed k = tuned_krr(cfg, 0);
  RngStream rng(0, streams::oracle_draws);
  const Predictor h = [&](const Matrix& x) { return k.model->predict(x); };
  const DeltaEstimate d = delta_mc(h, k.ctx.ds, 200, 500, rng);
  bool exact = true;
  for (double c : {0.0, 0.5, -1.25, 3.0, 1.0 / 3.0}) {
    const Predictor constant = [c](const Matrix& x) { return Vector(Vector::Constant(x.rows(), c)); };
    exact = exact && delta_mc(constant, k.ctx.ds, 200, 500, rng).delta_hat == c * c;
  }
  const double z = d.delta_hat / d.standard_error;
  return {z >= 3.0 && exact, "delta_hat=" + fmt(d.delta_hat) + " se=" + fmt(d.standard_error) + " z=" + fmt(z) +
                                 " constants_exact=" + (exact ? "yes" : "no")};
}

// 3a: bound below the gap.
Verdict bound_vs_gap() {
  const ExperimentConfig cfg = base_config({"krr"}, {"krr"}, 1);
  const KrrOnSeed k = tuned_krr(cfg, 0);
  RngStream drng(0, streams::oracle_draws), brng(0, streams::bound_draws);
  const Predictor h = [&](const Matrix& x) { return k.model->predict(x); };
  const DeltaEstimate d = delta_mc(h, k.ctx.ds, 200, 500, drng);
  const double eta = latent_conditional_variance(*k.ctx.ds.sigma);
  const BoundEstimate b = theorem_bound(k.ctx.ds, k.ctx.kernel(k.hyper), k.hyper.lambda, eta, 200, 500, brng);
  const double se = std::hypot(d.standard_error, b.standard_error);
  return {b.bound <= d.delta_hat + 3.0 * se, "bound=" + fmt(b.bound) + " delta_hat=" + fmt(d.delta_hat) +
                                                 " combined_se=" + fmt(se) + " eta=" + fmt(eta)};
}

// 3b: gap shrinks with n_train.
Verdict gap_trend() {
  const ExperimentConfig cfg = base_config({"krr"}, {"krr"}, 40);
  const auto points = run_ablation(cfg, AblationAxis::n_train, {25, 50, 100, 200});
  std::string means;
  std::size_t failed = 0;
  for (const auto& p : points) {
    means += " " + std::to_string(p.value) + ":" + fmt(p.summary.mean("delta-krr", "delta_hat"));
    failed += p.result.failures.size();
  }
  const double rho = ablation_trend(points, "delta-krr", "delta_hat");
  return {rho == -1.0 && failed == 0,
          "spearman=" + fmt(rho) + " means" + means + (failed ? " failed_seeds=" + std::to_string(failed) : "")};
}

double rel_gap(const Vector& a, const Vector& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-300);
}

// 4: two-stage projection equals closed-form P-KRR.
Verdict cross_path() {
  const KrrOptions raw{false};
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SimDataset ds = simulate_seeded(3, 3, 0.1, {50, 100, 0, 100, 0}, 1000 + seed);
    const Matrix x = ds.train.features(), u = ds.semi.features(), test = ds.test.features();
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> unif(0.5, 2.0);
    const ColliderKernel k(unif(gen), 3, unif(gen), 3);
    const double lambda = 0.01 * unif(gen), gamma = 0.01 * unif(gen);
    const auto two_stage =
        project_regressor(krr_regressor(k, lambda, raw), krr_regressor(k.ell(), gamma, raw), x, ds.train.y, u, 3);
    const auto closed = pkrr_fit(x, ds.train.y, u, k, lambda, gamma, CmeMode::generic, raw);
    worst = std::max(worst, rel_gap(two_stage->predict(test), closed->predict(test)));
  }
  return {worst <= 1e-8, "max_relative_gap=" + fmt(worst) + " datasets=20 points=100"};
}

// 5: projected Gram matrices are PSD; the minus-sign variant is not.
Verdict kernel_validity() {
  int psd_fail = 0, minus_caught = 0;
  double worst_ratio = std::numeric_limits<double>::infinity();
  const auto floor_of = [](const Matrix& g) { return -1e-6 * g.trace() / static_cast<double>(g.rows()); };
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SimDataset simple = simulate_seeded(3, 3, 0.1, {40, 100, 0, 40, 0}, 2000 + seed);
    const SimDataset general = simulate_general(3, 3, 2, GeneralScales{}, 0.1, {40, 100, 0, 40, 0}, 3000 + seed);
    const std::pair<const SimDataset*, Index> cases[] = {{&simple, 3}, {&general, 5}};
    for (const auto& [ds, dz] : cases) {
      const ColliderKernel k(1.0, 3, 1.0, dz);
      const Matrix anchors = vcat(ds->train.features(), ds->semi.features());
      const Matrix pts = ds->test.features();
      bool minus_fails = false;
      for (CmeMode mode : {CmeMode::factored, CmeMode::generic}) {
        const auto cme = fit_cme(anchors, k, 1e-3, mode);
        const ProjectedKernelFit plus(cme);
        const Matrix g = plus.gram(plus.prepare(pts));
        const double lo = min_eigenvalue(g);
        psd_fail += lo < floor_of(g);
        worst_ratio = std::min(worst_ratio, lo / (g.trace() / static_cast<double>(g.rows())));
        const ProjectedKernelFit minus(cme, FinalTermSign::minus);
        const Matrix gm = minus.gram(minus.prepare(pts));
        minus_fails = minus_fails || min_eigenvalue(gm) < floor_of(gm);
      }
      minus_caught += minus_fails;
    }
  }
  return {psd_fail == 0 && minus_caught == 40,
          "plus_sign_violations=" + std::to_string(psd_fail) + "/80 min_eig_over_mean_diag=" + fmt(worst_ratio) +
              " minus_sign_indefinite=" + std::to_string(minus_caught) + "/40"};
}

// 6: graph suite.
Verdict graph_suite() {
  std::size_t dags = 0;
  const int exhaustive = oracle::exhaustive_graph_failures(5, &dags);
  const int random = oracle::random_graph_failures(200, 2024);
  const Dag d = parse_dag("X2 -> X1\nX2 -> X3\nX1 -> Y\nX3 -> Y\nY -> X6\nX4 -> X6\nX5 -> X6\nX3 -> X5\nX6 -> X7\n");
  const Vertex y = d.index_of("Y");
  const auto v = [&](std::initializer_list<std::string_view> n) { return d.indices_of(n); };
  const bool fixtures = markov_boundary(d, y) == v({"X1", "X3", "X4", "X5", "X6"}) &&
                        d_separated(d, {y}, v({"X4"}), {}) && !d_separated(d, {y}, v({"X4"}), v({"X6"})) &&
                        d_separated(d, {y}, v({"X5"}), v({"X3"}));
  return {exhaustive == 0 && random == 0 && dags == 29281 && fixtures,
          "exhaustive_failures=" + std::to_string(exhaustive) + " five_vertex_dags=" + std::to_string(dags) +
              " random_failures=" + std::to_string(random) + " figure_fixtures=" + (fixtures ? "ok" : "mismatch")};
}

Matrix random_matrix(std::mt19937_64& gen, Index r, Index c) {
  std::normal_distribution<double> nd;
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = nd(gen);
  return m;
}

// 7: numerics against brute-force oracles.
Verdict numerics_oracles() {
  std::mt19937_64 gen(7);
  std::vector<std::string> bad;

  double solve_err = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const Matrix r = random_matrix(gen, 30, 30);
    const Matrix k = r * r.transpose() / 30.0, b = random_matrix(gen, 30, 2);
    Matrix sys = k;
    sys.diagonal().array() += 0.1;
    const auto ref = oracle::gauss_solve(oracle::to_dense(sys), oracle::to_dense(b));
    const Matrix x = solve_regularized(k, 0.1, b);
    for (Index i = 0; i < 30; ++i)
      for (Index j = 0; j < 2; ++j) solve_err = std::max(solve_err, std::abs(x(i, j) - ref[i][j]) / (1.0 + std::abs(ref[i][j])));
  }
  if (solve_err > 1e-8) bad.push_back("solve_regularized");

  const Matrix xo = random_matrix(gen, 50, 3);
  const Vector yo = random_matrix(gen, 50, 1).col(0) + xo * Vector::LinSpaced(3, -1.0, 1.0);
  const Vector beta = oracle::pinv_ols(xo, yo);
  const auto ols = ols_fit(xo, yo);
  const double ols_err = std::max(std::abs(ols->intercept() - beta(0)), (ols->weights() - beta.tail(3)).cwiseAbs().maxCoeff());
  if (ols_err > 1e-6) bad.push_back("ols");

  const ColliderKernel ck(0.7, 2, 1.2, 1);
  const Matrix xk = random_matrix(gen, 10, 3);
  const Vector yk = random_matrix(gen, 10, 1).col(0);
  Matrix sys(10, 10);
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 10; ++j) sys(i, j) = ck(Vector(xk.row(i).transpose()), Vector(xk.row(j).transpose()));
  sys.diagonal().array() += 0.05;
  const double krr_err = (krr_fit(ck, xk, yk, 0.05, {false})->alpha() - oracle::eliminate(sys, yk)).cwiseAbs().maxCoeff();
  if (krr_err > 1e-8) bad.push_back("krr");

  double wil_err = 0.0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const Index n = 5 + static_cast<Index>(seed % 8);
    Vector a = random_matrix(gen, n, 1).col(0), b = random_matrix(gen, n, 1).col(0);
    if (seed % 2) {
      a = (a.array() * 2).round();
      b = (b.array() * 2).round();
    }
    if ((a.array() != b.array()).count() < 5) continue;
    wil_err = std::max(wil_err, std::abs(wilcoxon_signed_rank(a, b).p_value - oracle::wilcoxon_brute(a, b)));
  }
  if (wil_err > 1e-12) bad.push_back("wilcoxon");

  double eig_err = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Matrix r = random_matrix(gen, 15, 15);
    const Matrix a = 0.5 * (r + r.transpose());
    const double radius = Eigen::SelfAdjointEigenSolver<Matrix>(a).eigenvalues().cwiseAbs().maxCoeff();
    eig_err = std::max(eig_err, std::abs(min_eigenvalue(a) - oracle::bisect_min_eigen(oracle::to_dense(a))) / radius);
  }
  if (eig_err > 1e-6) bad.push_back("min_eigenvalue");

  const Matrix r = random_matrix(gen, 5, 5);
  Matrix sigma = r * r.transpose() / 5.0 + 0.2 * Matrix::Identity(5, 5);
  const Vector sd = sigma.diagonal().array().rsqrt();
  sigma = sd.asDiagonal() * sigma * sd.asDiagonal();
  const auto moments = conditional_gaussian(sigma, {2}, Vector::Constant(1, 0.5));
  const auto ref = oracle::rejection_band(sigma, 2, 0.5, 0.05, 60000, gen);
  const double cg_err = std::max((moments.mean - ref.mean).cwiseAbs().maxCoeff(), (moments.cov - ref.cov).cwiseAbs().maxCoeff());
  if (cg_err > 0.02) bad.push_back("conditional_gaussian");

  std::string failed;
  for (const auto& b : bad) failed += (failed.empty() ? "" : ",") + b;
  return {bad.empty(), "solve=" + fmt(solve_err) + " ols=" + fmt(ols_err) + " krr=" + fmt(krr_err) +
                           " wilcoxon=" + fmt(wil_err) + " min_eig=" + fmt(eig_err) + " cond_gauss=" + fmt(cg_err) +
                           (failed.empty() ? "" : " mismatched=" + failed)};
}

// 8: general-DAG estimator and gap.
Verdict general_suite() {
  ExperimentConfig cfg = base_config({"krr", "general-pkrr"}, {"krr"}, 40);
  cfg.generator.kind = GeneratorKind::general;
  const ExperimentResult r = run_experiment(cfg);
  const ExperimentSummary s = summarize(r);
  const double krr = s.mean("krr", "mse"), gp = s.mean("general-pkrr", "mse");
  std::vector<double> deltas;
  for (const auto& row : r.rows)
    if (row.model == "delta-krr") deltas.push_back(row.delta_hat);
  const double mean = deltas.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(deltas);
  const double se = deltas.size() > 1 ? stddev_of(deltas) / std::sqrt(static_cast<double>(deltas.size()))
                                      : std::numeric_limits<double>::quiet_NaN();
  return {gp <= krr && mean + 2.0 * se >= 0.0 && r.failures.empty(),
          "mse krr=" + fmt(krr) + " general-pkrr=" + fmt(gp) + " delta_hat=" + fmt(mean) + " se=" + fmt(se) +
              failures_note(r)};
}

// 9: H_P-KRR error falls with more unlabeled anchors.
Verdict semi_trend() {
  const ExperimentConfig cfg = base_config({"hp-krr"}, {}, 40);
  const auto points = run_ablation(cfg, AblationAxis::n_semi, {0, 50, 100, 200});
  std::string means;
  for (const auto& p : points) means += " " + std::to_string(p.value) + ":" + fmt(p.summary.mean("hp-krr", "mse"));
  const double rho = ablation_trend(points, "hp-krr", "mse");
  return {rho <= -0.8, "spearman=" + fmt(rho) + " means" + means};
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  std::string only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--strict") == 0) strict = true;
    else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = argv[++i];
    else {
      std::fprintf(stderr, "usage: acceptance [--strict] [--only ID]\n");
      return 2;
    }
  }
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"1", ordering},        {"2", oracle_gap},       {"3a", bound_vs_gap},     {"3b", gap_trend},
      {"4", cross_path},      {"5", kernel_validity},  {"6", graph_suite},       {"7", numerics_oracles},
      {"8", general_suite},   {"9", semi_trend}};
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!only.empty() && only != id) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += !v.pass;
    std::printf("%s criterion %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", id.c_str(), v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return strict && failed > 0 ? 1 : 0;
}
