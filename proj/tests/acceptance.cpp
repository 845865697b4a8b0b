#include "cli_fixtures.hpp"
#include "fixtures.hpp"
#include "hspca/inference.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <sstream>

using namespace hspca;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

double max_abs(const Mat<double>& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

/// Random basis on a grid: tensor B-splines or random rows.
BasisSet<double> random_basis(const AmbientSpace<double>& space, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> coin(0, 2);
  const int kind = coin(rng);
  if (kind == 0) return bspline_tensor_basis(space, {std::uniform_int_distribution<int>(0, 3)(rng)}, {2});
  if (kind == 1) return bspline_tensor_basis(space, {1}, {std::uniform_int_distribution<int>(1, 4)(rng)});
  const Index n = std::uniform_int_distribution<Index>(3, space.size())(rng);
  return custom_basis(fixtures::gaussian_rows(n, space.size(), rng), "random");
}

AmbientSpace<double> random_grid(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  std::uniform_int_distribution<std::size_t> side(lo, hi);
  std::uniform_real_distribution<double> h(0.05, 1.5);
  return AmbientSpace<double>::grid({side(rng), side(rng)}, {h(rng), h(rng)});
}

Outcome orthonormality() {
  std::mt19937_64 rng(101);
  double worst_phi = 0, worst_w = 0;
  for (int t = 0; t < 50; ++t) {
    const auto space = random_grid(rng, 4, 12);
    const auto basis = random_basis(space, rng);
    const RowMat<double> sample = fixtures::spread_sample(std::uniform_int_distribution<Index>(5, 80)(rng),
                                                          space.size(), rng);
    const auto model = fit_aspca(space, basis, sample);
    const Index J = model.rank();
    worst_phi = std::max(worst_phi, max_abs(gram(space, model.eigenfunctions) - Mat<double>::Identity(J, J)));
    const Mat<double> L = gram(space, basis.functions);
    const auto w = whiten(L);
    worst_w = std::max(worst_w, max_abs(w.factor * L * w.factor.transpose() - Mat<double>::Identity(w.rank, w.rank)));
  }
  return {worst_phi < 1e-8 && worst_w < 1e-8,
          "max |Gram(phi) - I| = " + num(worst_phi) + ", max |F L F' - I| = " + num(worst_w)};
}

Outcome dense_oracle() {
  std::mt19937_64 rng(202);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const auto space = random_grid(rng, 2, 8);
    const Index v = space.size();
    const RowMat<double> sample = fixtures::spread_sample(v + 10 + t, v, rng);
    const BasisSet<double> basis = t % 2 ? fixtures::standard_basis(space)
                                         : custom_basis(fixtures::gaussian_rows(v, v, rng), "random-full");
    auto model = fit_aspca(space, basis, sample);
    const auto oracle = fixtures::dense_covariance_eig(space, sample);
    align_signs(model, space, oracle.funcs);
    const Index J = model.rank();
    if (J != v) return {false, "case " + std::to_string(t) + ": rank " + std::to_string(J) + " != " + std::to_string(v)};
    worst = std::max(worst, max_abs(model.lambdas - oracle.vals.head(J)) / oracle.vals(0));
    worst = std::max(worst, max_abs(model.eigenfunctions - oracle.funcs.topRows(J)));
  }
  return {worst < 1e-8, "max eigenpair discrepancy " + num(worst)};
}

Outcome delta_identity() {
  std::mt19937_64 rng(303);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const auto space = random_grid(rng, 4, 12);
    const auto basis = random_basis(space, rng);
    const RowMat<double> sample = fixtures::spread_sample(30 + 5 * t, space.size(), rng);
    const auto rep = diagnose_projection(space, basis, sample, 0.05);
    worst = std::max(worst, std::abs(rep.delta_hat - rep.delta_variance_form) / std::max(1.0, rep.delta_hat));
  }
  return {worst < 1e-8, "max |residual form - variance form| = " + num(worst)};
}

Outcome pve_2d() {
  ScenarioConfig cfg = scenario_2d(500, 0);
  cfg.seed = 404;
  const MetricsTable t = run_monte_carlo(cfg, 100);
  const int six = t.m_hist.count(6) ? t.m_hist.at(6) : 0;
  return {six >= 95, "m_hat = 6 in " + std::to_string(six) + "/100 replications"};
}

Outcome eigenvalue_decay() {
  std::vector<double> med, mse;
  for (Index n : {100, 500, 2000}) {
    ScenarioConfig cfg = scenario_2d(n, 0);
    cfg.seed = 505;
    const MetricsTable t = run_monte_carlo(cfg, 100);
    med.push_back(t.param("lambda1").median_sq_error);
    mse.push_back(t.param("lambda1").mse);
  }
  const bool decreasing = med[0] > med[1] && med[1] > med[2] && mse[0] > mse[1] && mse[1] > mse[2];
  const double target = 1.25e-2;
  const bool close = mse[2] > target / 3 && mse[2] < target * 3;
  return {decreasing && close, "median sq error " + num(med[0]) + " > " + num(med[1]) + " > " + num(med[2]) +
                                   "; MSE " + num(mse[0]) + " > " + num(mse[1]) + " > " + num(mse[2]) +
                                   " (target " + num(target) + ")"};
}

Outcome diagnostic() {
  ScenarioConfig span = scenario_2d(500, 0);
  span.seed = 606;
  span.diagnose = true;
  span.basis.kind = "family";
  const double level = run_monte_carlo(span, 100).reject_rate;
  ScenarioConfig spline = span;
  spline.basis.kind = "bspline";
  const double spline_level = run_monte_carlo(spline, 100).reject_rate;
  ScenarioConfig drop = span;
  drop.basis.kind = "family-drop";
  drop.basis.drop = 4;  // lambda = 1.5 of total 13.5, about 11%
  drop.m = 3;           // the truncated basis cannot reach the PVE threshold
  const double power = run_monte_carlo(drop, 100).reject_rate;
  const bool pass = level <= 0.10 && spline_level <= 0.10 && power >= 0.95;
  return {pass, "rejections: spanning family " + num(100 * level) + "/100, cubic spline " +
                    num(100 * spline_level) + "/100, family without an 11% component " + num(100 * power) + "/100"};
}

Outcome oracle_regression() {
  ScenarioConfig cfg = scenario_2d(200, 0.3);
  cfg.noise_sd = 0;
  const auto space = unit_space(cfg.dims);
  const auto fam = make_family(space, cfg.family, cfg.lambdas.size());
  const auto family_basis = custom_basis(fam.phi, "family");
  const Vec<double> gamma0 = fam.element(cfg.gamma0_scores);
  Vec<double> theta0(1 + cfg.d + 6);
  theta0 << cfg.alpha0, cfg.beta0, cfg.gamma0_scores;
  double oracle_err = 0, est_err = 0;
  for (int c = 0; c < 100; ++c) {
    auto rng = stream_rng(707, std::uint64_t(c));
    const SimulatedData d = simulate_data(cfg, space, fam, rng);
    const auto om = oracle_model(space, fam.phi, cfg.lambdas, mean_element(d.sample));
    const auto of = fit_hspcr(RegressionDesign<double>{d.y, d.x, component_scores(om, space, d.sample), std::nullopt});
    oracle_err = std::max(oracle_err, max_abs(of.theta - theta0));

    const auto em = fit_aspca(space, family_basis, d.sample);
    const auto ef = fit_hspcr(RegressionDesign<double>{d.y, d.x, component_scores(em, space, d.sample), std::nullopt});
    est_err = std::max(est_err, max_abs(ef.theta.head(1 + cfg.d) - theta0.head(1 + cfg.d)));
    est_err = std::max(est_err, std::sqrt(squared_norm(space, gamma_element(ef, em) - gamma0)));
  }
  return {oracle_err < 1e-10 && est_err < 1e-6,
          "oracle scores max error " + num(oracle_err) + ", estimated scores max error " + num(est_err)};
}

Outcome bootstrap_coverage() {
  ScenarioConfig cfg = scenario_2d(500, 0);
  cfg.seed = 808;
  cfg.inference = InferenceKind::bootstrap;
  cfg.b_reps = 300;
  const MetricsTable t = run_monte_carlo(cfg, 100);
  double lo = 1, hi = 0;
  std::string worst;
  for (const auto& p : t.params) {
    const bool linear = p.name == "alpha" || p.name.rfind("beta", 0) == 0;
    const bool score = p.name.rfind("gamma", 0) == 0 && p.name != "gamma";
    if (!(linear || score)) continue;
    if (p.coverage < lo) worst = p.name;
    lo = std::min(lo, p.coverage);
    hi = std::max(hi, p.coverage);
  }
  return {lo >= 0.88 && hi <= 1.0, "coverage of alpha, beta, gamma scores in [" + num(lo) + ", " + num(hi) +
                                       "], lowest " + worst + ", " + std::to_string(t.reps - t.failed) +
                                       " replications"};
}

Outcome three_d() {
  ScenarioConfig cfg = scenario_3d(500, 0);
  cfg.seed = 909;
  const MetricsTable t = run_monte_carlo(cfg, 100);
  const int two = t.m_hist.count(2) ? t.m_hist.at(2) : 0;
  const double m1 = t.param("lambda1").mse, m2 = t.param("lambda2").mse;
  const auto within = [](double v, double target) { return v > target / 3 && v < target * 3; };
  return {two >= 95 && within(m1, 1.43e-2) && within(m2, 0.83e-2),
          "m_hat = 2 in " + std::to_string(two) + "/100; MSE lambda1 " + num(m1) + " (target 0.0143), lambda2 " +
              num(m2) + " (target 0.0083)"};
}

Outcome se_agreement() {
  ScenarioConfig cfg = scenario_2d(2000, 0);
  const auto space = unit_space(cfg.dims);
  const auto fam = make_family(space, cfg.family, cfg.lambdas.size());
  const auto basis = scenario_basis(cfg, space, fam);
  const Index d = cfg.d;
  Mat<double> se = Mat<double>::Zero(3, d);  // rows: jackknife, plug-in, bootstrap
  for (int rep = 0; rep < 20; ++rep) {
    auto rng = stream_rng(1010, std::uint64_t(rep));
    const SimulatedData data = simulate_data(cfg, space, fam, rng);
    PipelineInputs<double> in;
    in.y = data.y;
    in.x = data.x;
    const auto pf = fit_pipeline(space, basis, data.sample, in);
    JackknifeSpec js;
    js.r = 40;
    const auto jk = jackknife_pipeline(space, data.sample, pf, js);
    const auto plug = plugin_table(space, data.sample, pf, 0.95);
    BootstrapSpec bs;
    bs.b_reps = 300;
    bs.base_seed = splitmix64(1010 + std::uint64_t(rep));
    const auto boot = bootstrap_pipeline(space, data.sample, pf, bs);
    for (Index k = 0; k < d; ++k) {
      const std::size_t row = std::size_t(1 + k);
      se(0, k) += jk.table.rows[row].se / 20;
      se(1, k) += plug.rows[row].se / 20;
      se(2, k) += boot.table.rows[row].se / 20;
    }
  }
  double worst = 1;
  for (Index k = 0; k < d; ++k)
    for (Index a = 0; a < 3; ++a)
      for (Index b = 0; b < 3; ++b) worst = std::max(worst, se(a, k) / se(b, k));
  std::string detail = "largest pairwise ratio of mean beta SEs " + num(worst) + " (";
  for (Index k = 0; k < d; ++k)
    detail += (k ? "; " : "") + std::string("beta") + std::to_string(k + 1) + " " + num(se(0, k)) + "/" +
              num(se(1, k)) + "/" + num(se(2, k));
  return {worst <= 1.3, detail + " jackknife/plug-in/bootstrap)"};
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path dir = cli::workdir("acceptance_determinism");
  cli::write_study(dir, 200, 11);
  io::atomic_write((dir / "s.json").string(),
                   R"({"preset": "2d", "n": 120, "dims": [10, 12], "seed": 5, "inference": "bootstrap", "B": 30})");
  const std::string data = " --data \"" + (dir / "data.hsg").string() + "\" --spacing 0.1 0.08333333333333333";
  const std::string xy = " --y \"" + (dir / "y.csv").string() + "\" --x \"" + (dir / "x.csv").string() + "\"";
  const std::vector<std::pair<std::string, std::string>> cmds{
      {"fit", "fit" + data + " --knots 3"},
      {"diagnose", "diagnose" + data + " --knots 1 --auto-knots"},
      {"bootstrap", "bootstrap" + data + xy + " --knots 3 --B 60 --seed 21"},
      {"wild", "bootstrap" + data + xy + " --knots 3 --B 60 --seed 21 --kind wild"},
      {"jackknife", "jackknife" + data + xy + " --knots 3 --r 30"},
      {"simulate", "simulate --config \"" + (dir / "s.json").string() + "\" --reps 6"},
  };
  int identical = 0;
  std::string bad;
  for (const auto& [name, args] : cmds) {
    std::vector<std::map<std::string, std::string>> snaps;
    for (const std::string threads : {"1", "1", "3"}) {
      const fs::path out = dir / (name + "_" + threads + "_" + std::to_string(snaps.size()));
      const auto r = cli::run(dir, "--threads " + threads + " " + args + " --out \"" + out.string() + "\"");
      if (r.code != 0) return {false, name + " exited " + std::to_string(r.code) + ": " + r.err};
      snaps.push_back(cli::snapshot(out));
    }
    if (snaps[0] == snaps[1] && snaps[0] == snaps[2])
      ++identical;
    else
      bad += " " + name;
  }
  return {bad.empty(), std::to_string(identical) + "/" + std::to_string(cmds.size()) +
                           " commands byte-identical across repeats and --threads 1/3" +
                           (bad.empty() ? "" : "; differing:" + bad)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> which;
  app.add_option("--criterion", which, "criteria to run (default: all)")->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);
  if (which.empty())
    for (int c = 1; c <= 11; ++c) which.push_back(c);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> all{
      {"orthonormality", orthonormality},
      {"dense oracle", dense_oracle},
      {"delta identity", delta_identity},
      {"PVE selection 2D", pve_2d},
      {"eigenvalue MSE decay", eigenvalue_decay},
      {"diagnostic level and power", diagnostic},
      {"oracle regression", oracle_regression},
      {"bootstrap coverage", bootstrap_coverage},
      {"3D design", three_d},
      {"SE cross-validation", se_agreement},
      {"CLI determinism", determinism},
  };
  bool ok = true;
  for (int c : which) {
    const auto& [name, fn] = all[std::size_t(c - 1)];
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << c << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail
              << "  (" << num(secs) << " s)" << std::endl;
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
