#include "fixtures.hpp"
#include "hspca/simgen.hpp"

#include <doctest.h>

using namespace hspca;

namespace {

bool same_table(const MetricsTable& a, const MetricsTable& b) {
  if (a.reps != b.reps || a.failed != b.failed || a.m_hist != b.m_hist || a.params.size() != b.params.size())
    return false;
  for (std::size_t k = 0; k < a.params.size(); ++k) {
    const auto &p = a.params[k], &q = b.params[k];
    auto eq = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    if (p.name != q.name || !eq(p.mse, q.mse) || !eq(p.median_sq_error, q.median_sq_error) ||
        !eq(p.coverage, q.coverage) || !eq(p.mean_se, q.mean_se))
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("families are orthonormal") {
  const auto s2 = unit_space({20, 24});
  const auto f2 = make_family(s2, FamilyKind::synthetic2d, 6);
  CHECK(f2.size() == 6);
  CHECK((gram(s2, f2.phi) - Mat<double>::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-10);
  const auto s3 = unit_space({12, 14, 10});
  const auto f3 = make_family(s3, FamilyKind::quadratic_gauss3d, 2);
  CHECK((gram(s3, f3.phi) - Mat<double>::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(make_family(s2, FamilyKind::synthetic2d, 7), ConfigError);
  CHECK_THROWS_AS(make_family(s2, FamilyKind::quadratic_gauss3d, 2), ConformanceError);
  CHECK(parse_family_kind(to_string(FamilyKind::quadratic_gauss3d)) == FamilyKind::quadratic_gauss3d);
}

TEST_CASE("unit space cell centers") {
  const auto s = unit_space({4, 5});
  const auto c = s.cell_center(0);
  CHECK(c[0] == doctest::Approx(0.125));
  CHECK(c[1] == doctest::Approx(0.1));
  CHECK(s.weights()(0) == doctest::Approx(0.05));
}

TEST_CASE("KL sample") {
  const auto s = unit_space({10, 12});
  const auto fam = make_family(s, FamilyKind::synthetic2d, 3);
  std::mt19937_64 rng(1);
  CHECK(gen_kl_sample(fam, Vec<double>(Vec<double>::Zero(3)), 5, rng).isZero());
  CHECK_THROWS_AS(gen_kl_sample(fam, Vec<double>(Vec<double>::Ones(2)), 5, rng), ConformanceError);
  Vec<double> lam(3);
  lam << 3, 2, 1;
  const RowMat<double> z = gen_kl_sample(fam, lam, 20000, rng);
  const Mat<double> sc = inner_rows(s, z, fam.phi);
  const Mat<double> cov = sc.transpose() * sc / 20000.0;
  CHECK((cov - Mat<double>(lam.asDiagonal())).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("AR covariates") {
  std::mt19937_64 rng(2);
  const Index n = 40000;
  const Mat<double> x0 = gen_ar_covariates(n, 3, 0.0, rng);
  CHECK((x0.transpose() * x0 / double(n) - Mat<double>::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.03);
  const Mat<double> x = gen_ar_covariates(n, 3, 0.5, rng);
  Mat<double> omega(3, 3);
  omega << 1, .5, .25, .5, 1, .5, .25, .5, 1;
  CHECK((x.transpose() * x / double(n) - omega).cwiseAbs().maxCoeff() < 0.03);
  CHECK_THROWS_AS(gen_ar_covariates(5, 3, 1.0, rng), ConfigError);
}

TEST_CASE("response") {
  const auto s = unit_space({10, 12});
  const auto fam = make_family(s, FamilyKind::synthetic2d, 3);
  std::mt19937_64 rng(3);
  Vec<double> lam(3);
  lam << 3, 2, 1;
  const RowMat<double> z = gen_kl_sample(fam, lam, 50, rng);
  const Mat<double> x = gen_ar_covariates(50, 2, 0.2, rng);
  const Vec<double> zero_beta = Vec<double>::Zero(2);
  const Vec<double> zero_gamma = Vec<double>::Zero(s.size());
  CHECK(gen_response(s, x, z, 0.0, zero_beta, zero_gamma, 0.0, rng).isZero());

  Vec<double> beta(2), gs(3);
  beta << 1, -2;
  gs << 0.5, 1.5, -1;
  const Vec<double> y = gen_response(s, x, z, 0.3, beta, fam.element(gs), 0.0, rng);
  const auto oracle = oracle_model(s, fam.phi, lam, mean_element(z));
  const auto fit = fit_hspcr(RegressionDesign<double>{y, x, component_scores(oracle, s, z), std::nullopt});
  Vec<double> theta(6);
  theta << 0.3, 1, -2, 0.5, 1.5, -1;
  CHECK((fit.theta - theta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("scenario presets and validation") {
  const auto c2 = scenario_2d(500, 0.5);
  CHECK(c2.lambdas.size() == 6);
  CHECK(c2.dims == std::vector<std::size_t>{20, 24});
  CHECK(scenario_2d(100, 0, true).dims == std::vector<std::size_t>{79, 95});
  CHECK_NOTHROW(c2.validate());
  const auto c3 = scenario_3d(500, 0);
  CHECK(c3.lambdas.size() == 2);
  CHECK(c3.basis.knots == 3);
  auto bad = c2;
  bad.lambdas(1) = bad.lambdas(0);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c2;
  bad.beta0 = Vec<double>::Ones(3);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK(parse_inference_kind("jackknife") == InferenceKind::jackknife);
  CHECK_THROWS_AS(parse_inference_kind("none-such"), ConfigError);
}

TEST_CASE("noiseless study recovers the regression exactly") {
  ScenarioConfig cfg = scenario_2d(200, 0.3);
  cfg.dims = {10, 12};
  cfg.noise_sd = 0;
  cfg.basis.kind = "family";
  cfg.m = 6;
  const MetricsTable t = run_monte_carlo(cfg, 3, 1);
  CHECK(t.failed == 0);
  CHECK(t.param("alpha").mse < 1e-12);
  for (int k = 1; k <= 4; ++k) CHECK(t.param("beta" + std::to_string(k)).mse < 1e-12);
  CHECK(t.param("gamma").mse < 1e-12);
}

TEST_CASE("study fails when too many replications fail") {
  ScenarioConfig cfg = scenario_2d(100, 0);
  cfg.dims = {10, 12};
  cfg.basis.kind = "family-drop";
  cfg.basis.drop = 2;
  cfg.m = 6;  // the basis spans only 5 directions
  CHECK_THROWS_AS(run_monte_carlo(cfg, 10, 1), ReplicateFailureError);
}

TEST_CASE("2D design selects six components") {
  ScenarioConfig cfg = scenario_2d(500, 0);
  cfg.seed = 5;
  const MetricsTable t = run_monte_carlo(cfg, 100, 1);
  CHECK(t.m_hist.count(6));
  CHECK(t.m_hist.at(6) >= 95);
}

TEST_CASE("3D design eigenvalue MSE is of the expected order") {
  ScenarioConfig cfg = scenario_3d(500, 0);
  cfg.seed = 6;
  const MetricsTable t = run_monte_carlo(cfg, 100, 1);
  const double mse = t.param("lambda1").mse;
  CHECK(mse > 1.43e-2 / 3);
  CHECK(mse < 1.43e-2 * 3);
}

TEST_CASE("property: studies are reproducible across thread counts") {
  ScenarioConfig cfg = scenario_2d(150, 0.5);
  cfg.dims = {10, 12};
  cfg.seed = 7;
  cfg.inference = InferenceKind::bootstrap;
  cfg.b_reps = 20;
  const MetricsTable a = run_monte_carlo(cfg, 6, 1);
  const MetricsTable b = run_monte_carlo(cfg, 6, 3);
  CHECK(same_table(a, b));
  cfg.seed = 8;
  CHECK_FALSE(same_table(a, run_monte_carlo(cfg, 6, 1)));
}

TEST_CASE("metric names") {
  const auto names = metric_names(scenario_3d(100, 0));
  const std::vector<std::string> want{"lambda1", "lambda2", "phi1", "phi2", "alpha", "beta1", "beta2",
                                      "beta3", "beta4", "gamma1", "gamma2", "gamma"};
  CHECK(names == want);
}
