#include "hspca/simgen.hpp"

#include <algorithm>
#include <cmath>

namespace hspca {

FamilyKind parse_family_kind(const std::string& s) {
  if (s == "synthetic2d") return FamilyKind::synthetic2d;
  if (s == "quadratic_gauss3d") return FamilyKind::quadratic_gauss3d;
  throw ConfigError("unknown family kind '" + s + "' (expected synthetic2d or quadratic_gauss3d)");
}

std::string to_string(FamilyKind k) {
  return k == FamilyKind::synthetic2d ? "synthetic2d" : "quadratic_gauss3d";
}

InferenceKind parse_inference_kind(const std::string& s) {
  if (s == "none") return InferenceKind::none;
  if (s == "bootstrap") return InferenceKind::bootstrap;
  if (s == "plugin") return InferenceKind::plugin;
  if (s == "jackknife") return InferenceKind::jackknife;
  throw ConfigError("unknown inference kind '" + s + "' (expected none, bootstrap, plugin or jackknife)");
}

std::string to_string(InferenceKind k) {
  switch (k) {
    case InferenceKind::bootstrap: return "bootstrap";
    case InferenceKind::plugin: return "plugin";
    case InferenceKind::jackknife: return "jackknife";
    default: return "none";
  }
}

Vec<double> TrueFamily::element(const Vec<double>& coeffs) const {
  if (coeffs.size() != phi.rows())
    throw ConformanceError("family element: " + std::to_string(coeffs.size()) + " coefficients for " +
                           std::to_string(phi.rows()) + " functions");
  return phi.transpose() * coeffs;
}

AmbientSpace<double> unit_space(const std::vector<std::size_t>& dims) {
  std::vector<double> h;
  for (auto d : dims) {
    if (d == 0) throw ConfigError("grid extents must be positive");
    h.push_back(1.0 / double(d));
  }
  return AmbientSpace<double>::grid(dims, h);
}

namespace {

/// Coordinates of cell v mapped to the unit box.
std::vector<double> unit_coords(const AmbientSpace<double>& space, Index v) {
  auto x = space.cell_center(v);
  for (std::size_t a = 0; a < x.size(); ++a) x[a] /= space.extent(a);
  return x;
}

void gram_schmidt(const AmbientSpace<double>& space, RowMat<double>& f) {
  for (Index j = 0; j < f.rows(); ++j) {
    const double original = std::sqrt(squared_norm(space, f.row(j)));
    for (int pass = 0; pass < 2; ++pass)
      for (Index k = 0; k < j; ++k) f.row(j) -= inner(space, f.row(j), f.row(k)) * f.row(k);
    const double norm = std::sqrt(squared_norm(space, f.row(j)));
    if (!(norm > 1e-10 * original) || !(original > 0))
      throw FamilyError("Gram-Schmidt breakdown at function " + std::to_string(j + 1) +
                        " (linearly dependent on the preceding functions on this grid)");
    f.row(j) /= norm;
  }
}

}  // namespace

TrueFamily make_family(const AmbientSpace<double>& space, FamilyKind kind, Index J) {
  TrueFamily fam;
  fam.kind = kind;
  if (J < 1) throw ConfigError("make_family: need at least one function");
  if (kind == FamilyKind::synthetic2d) {
    if (space.ndim() != 2) throw ConformanceError("synthetic2d family needs a 2D grid");
    if (J > 6) throw ConfigError("synthetic2d family has at most 6 functions");
    static constexpr double centers[6][2] = {{0.25, 0.3}, {0.5, 0.3}, {0.75, 0.3},
                                             {0.25, 0.7}, {0.5, 0.7}, {0.75, 0.7}};
    constexpr double width = 0.15;
    fam.phi.resize(J, space.size());
    for (Index v = 0; v < space.size(); ++v) {
      const auto s = unit_coords(space, v);
      for (Index j = 0; j < J; ++j) {
        const double dx = s[0] - centers[j][0], dy = s[1] - centers[j][1];
        fam.phi(j, v) = std::exp(-(dx * dx + dy * dy) / (2 * width * width));
      }
    }
  } else {
    if (space.ndim() != 3) throw ConformanceError("quadratic_gauss3d family needs a 3D grid");
    if (J > 2) throw ConfigError("quadratic_gauss3d family has at most 2 functions");
    fam.phi.resize(J, space.size());
    for (Index v = 0; v < space.size(); ++v) {
      const auto s = unit_coords(space, v);
      double r2 = 0;
      for (double c : s) r2 += (c - 0.5) * (c - 0.5);
      fam.phi(0, v) = 20 * r2;
      if (J > 1) fam.phi(1, v) = std::exp(-15 * r2);
    }
  }
  for (Index v = 0; v < space.size(); ++v)
    if (!space.inside(v)) fam.phi.col(v).setZero();
  gram_schmidt(space, fam.phi);
  return fam;
}

RowMat<double> gen_kl_sample(const TrueFamily& family, const Vec<double>& lambdas, Index n, std::mt19937_64& rng) {
  if (lambdas.size() != family.size())
    throw ConformanceError("gen_kl_sample: " + std::to_string(lambdas.size()) + " eigenvalues for " +
                           std::to_string(family.size()) + " functions");
  if ((lambdas.array() < 0).any()) throw ConfigError("gen_kl_sample: eigenvalues must be nonnegative");
  std::normal_distribution<double> normal;
  Mat<double> u(n, family.size());
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < family.size(); ++j) u(i, j) = normal(rng);
  return u * lambdas.cwiseSqrt().asDiagonal() * family.phi;
}

Mat<double> gen_ar_covariates(Index n, Index d, double r, std::mt19937_64& rng) {
  if (!(r >= 0 && r < 1)) throw ConfigError("gen_ar_covariates: r must lie in [0, 1)");
  Mat<double> omega(d, d);
  for (Index k = 0; k < d; ++k)
    for (Index l = 0; l < d; ++l) omega(k, l) = std::pow(r, double(std::abs(k - l)));
  const Mat<double> L = omega.llt().matrixL();
  std::normal_distribution<double> normal;
  Mat<double> g(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) g(i, k) = normal(rng);
  return g * L.transpose();
}

Vec<double> gen_response(const AmbientSpace<double>& space, const Mat<double>& x, const RowMat<double>& sample,
                         double alpha, const Vec<double>& beta, const Vec<double>& gamma, double noise_sd,
                         std::mt19937_64& rng) {
  if (x.rows() != sample.rows() || x.cols() != beta.size())
    throw ConformanceError("gen_response: x is " + shape_str(x.rows(), x.cols()) + ", beta has " +
                           std::to_string(beta.size()) + " entries, sample has " + std::to_string(sample.rows()) +
                           " rows");
  detail::check_cols(space, gamma.size(), "gen_response(gamma)");
  detail::check_cols(space, sample.cols(), "gen_response(sample)");
  if (!(noise_sd >= 0)) throw ConfigError("gen_response: noise_sd must be nonnegative");
  Vec<double> y = (x * beta).array() + alpha;
  y += sample * space.weights().asDiagonal() * gamma;
  std::normal_distribution<double> normal(0.0, 1.0);
  if (noise_sd > 0)
    for (Index i = 0; i < y.size(); ++i) y(i) += noise_sd * normal(rng);
  return y;
}

// ---------------------------------------------------------------------------

void ScenarioConfig::validate() const {
  if (dims.empty()) throw ConfigError("scenario: dims must be non-empty");
  if (lambdas.size() < 1) throw ConfigError("scenario: need at least one eigenvalue");
  for (Index j = 0; j < lambdas.size(); ++j) {
    if (!(lambdas(j) > 0)) throw ConfigError("scenario: eigenvalues must be positive");
    if (j > 0 && !(lambdas(j) < lambdas(j - 1)))
      throw ConfigError("scenario: eigenvalues must be strictly decreasing (assumption A3)");
  }
  if (gamma0_scores.size() != lambdas.size())
    throw ConfigError("scenario: gamma0 needs one coefficient per eigenfunction");
  if (beta0.size() != d) throw ConfigError("scenario: beta0 length must equal d");
  if (!(r >= 0 && r < 1)) throw ConfigError("scenario: r must lie in [0, 1)");
  if (n < 2) throw ConfigError("scenario: n must be at least 2");
  if (!(noise_sd >= 0)) throw ConfigError("scenario: noise_sd must be nonnegative");
  if (!(tau > 0 && tau < 1)) throw ConfigError("scenario: tau must lie in (0, 1)");
  if (!(level > 0 && level < 1)) throw ConfigError("scenario: level must lie in (0, 1)");
  if (basis.kind != "bspline" && basis.kind != "family" && basis.kind != "family-drop")
    throw ConfigError("scenario: basis kind must be bspline, family or family-drop");
  if (basis.kind == "family-drop" && (basis.drop < 0 || basis.drop >= lambdas.size() || lambdas.size() < 2))
    throw ConfigError("scenario: family-drop needs a valid component index and at least two components");
  if (inference == InferenceKind::bootstrap && b_reps < 2) throw ConfigError("scenario: bootstrap needs B >= 2");
}

ScenarioConfig scenario_2d(Index n, double r, bool paper_scale) {
  ScenarioConfig c;
  c.dims = paper_scale ? std::vector<std::size_t>{79, 95} : std::vector<std::size_t>{20, 24};
  c.family = FamilyKind::synthetic2d;
  c.lambdas = (Vec<double>(6) << 3.5, 3, 2.5, 2, 1.5, 1).finished();
  c.gamma0_scores = (Vec<double>(6) << 1.5, 1, 2, 2.5, 1.5, 3).finished();
  c.d = 4;
  c.beta0 = Vec<double>::Ones(4);
  c.alpha0 = 1;
  c.r = r;
  c.n = n;
  c.basis.degree = 3;
  c.basis.knots = 8;
  return c;
}

ScenarioConfig scenario_3d(Index n, double r, bool paper_scale) {
  ScenarioConfig c;
  c.dims = paper_scale ? std::vector<std::size_t>{79, 95, 66} : std::vector<std::size_t>{12, 14, 10};
  c.family = FamilyKind::quadratic_gauss3d;
  c.lambdas = (Vec<double>(2) << 2, 1).finished();
  c.gamma0_scores = (Vec<double>(2) << 1.5, -1).finished();
  c.d = 4;
  c.beta0 = Vec<double>::Ones(4);
  c.alpha0 = 1;
  c.r = r;
  c.n = n;
  c.basis.degree = 3;
  c.basis.knots = 3;
  return c;
}

SimulatedData simulate_data(const ScenarioConfig& cfg, const AmbientSpace<double>& space, const TrueFamily& family,
                            std::mt19937_64& rng) {
  SimulatedData data;
  data.sample = gen_kl_sample(family, cfg.lambdas, cfg.n, rng);
  data.x = gen_ar_covariates(cfg.n, cfg.d, cfg.r, rng);
  data.y = gen_response(space, data.x, data.sample, cfg.alpha0, cfg.beta0, family.element(cfg.gamma0_scores),
                        cfg.noise_sd, rng);
  return data;
}

BasisSet<double> scenario_basis(const ScenarioConfig& cfg, const AmbientSpace<double>& space,
                                const TrueFamily& family) {
  if (cfg.basis.kind == "bspline") return bspline_tensor_basis(space, {cfg.basis.degree}, {cfg.basis.knots});
  if (cfg.basis.kind == "family") return custom_basis(family.phi, "family");
  RowMat<double> rows(family.size() - 1, space.size());
  for (Index j = 0, k = 0; j < family.size(); ++j)
    if (j != cfg.basis.drop) rows.row(k++) = family.phi.row(j);
  return custom_basis(rows, "family without component " + std::to_string(cfg.basis.drop + 1));
}

std::vector<std::string> metric_names(const ScenarioConfig& cfg) {
  std::vector<std::string> names;
  const Index J = cfg.lambdas.size();
  for (Index j = 0; j < J; ++j) names.push_back("lambda" + std::to_string(j + 1));
  for (Index j = 0; j < J; ++j) names.push_back("phi" + std::to_string(j + 1));
  names.push_back("alpha");
  for (Index k = 0; k < cfg.d; ++k) names.push_back("beta" + std::to_string(k + 1));
  for (Index j = 0; j < J; ++j) names.push_back("gamma" + std::to_string(j + 1));
  names.push_back("gamma");
  return names;
}

namespace {
/// Index of theta for each coefficient metric (alpha, beta, gamma_j); -1 when the
/// fit has no such coefficient.
Index theta_index(Index metric, Index J, Index d, Index m) {
  const Index alpha_at = 2 * J;
  if (metric == alpha_at) return 0;
  if (metric > alpha_at && metric <= alpha_at + d) return metric - alpha_at;
  const Index j = metric - alpha_at - d - 1;
  if (j >= 0 && j < J) return j < m ? 1 + d + j : -1;
  return -1;
}
}  // namespace

ReplicationRecord run_replication(const ScenarioConfig& cfg, const AmbientSpace<double>& space,
                                  const TrueFamily& family, const BasisSet<double>& basis, std::uint64_t rep) {
  ReplicationRecord rec;
  const Index J = cfg.lambdas.size(), d = cfg.d;
  const Index P = Index(metric_names(cfg).size());
  rec.sq_error = Vec<double>::Zero(P);
  rec.covered = Vec<double>::Constant(P, std::numeric_limits<double>::quiet_NaN());
  rec.se = rec.covered;
  try {
    auto rng = stream_rng(cfg.seed, rep);
    const SimulatedData data = simulate_data(cfg, space, family, rng);
    PipelineInputs<double> in;
    in.y = data.y;
    in.x = data.x;
    in.m = cfg.m;
    in.tau = cfg.tau;
    PipelineFit<double> pf = fit_pipeline(space, basis, data.sample, in);
    align_pipeline(pf, space, family.phi);
    rec.m_hat = pf.m;

    if (cfg.diagnose) {
      const auto dr = diagnose_projection(space, pf.frame, data.sample, cfg.alpha_level);
      rec.delta_hat = dr.delta_hat;
      rec.t_stat = dr.t_stat;
      rec.reject = dr.reject;
    }

    std::optional<CiTable> table;
    const std::uint64_t inner_seed = splitmix64(cfg.seed ^ splitmix64(rep ^ 0xB5AD4ECEDA1CE2A9ULL));
    if (cfg.inference == InferenceKind::bootstrap) {
      BootstrapSpec spec;
      spec.kind = cfg.bootstrap_kind;
      spec.b_reps = cfg.b_reps;
      spec.base_seed = inner_seed;
      spec.level = cfg.level;
      spec.threads = 1;
      table = bootstrap_pipeline(space, data.sample, pf, spec).table;
    } else if (cfg.inference == InferenceKind::plugin) {
      table = plugin_table(space, data.sample, pf, cfg.level);
    } else if (cfg.inference == InferenceKind::jackknife) {
      JackknifeSpec spec;
      spec.r = cfg.jackknife_r > 0 ? cfg.jackknife_r : int(pf.fit.p()) + 2;
      spec.level = cfg.level;
      spec.threads = 1;
      table = jackknife_pipeline(space, data.sample, pf, spec).table;
    }

    const Vec<double> gamma0 = family.element(cfg.gamma0_scores);
    for (Index j = 0; j < J; ++j) {
      const double est = j < pf.model.rank() ? pf.model.lambdas(j) : 0.0;
      rec.sq_error(j) = (est - cfg.lambdas(j)) * (est - cfg.lambdas(j));
      rec.sq_error(J + j) = j < pf.model.rank()
                                ? squared_norm(space, pf.model.eigenfunctions.row(j) - family.phi.row(j))
                                : squared_norm(space, family.phi.row(j));
    }
    for (Index k = 2 * J; k < P - 1; ++k) {
      double truth;
      if (k == 2 * J) truth = cfg.alpha0;
      else if (k <= 2 * J + d) truth = cfg.beta0(k - 2 * J - 1);
      else truth = cfg.gamma0_scores(k - 2 * J - d - 1);
      const Index t = theta_index(k, J, d, pf.m);
      const double est = t >= 0 ? pf.theta()(t) : 0.0;
      rec.sq_error(k) = (est - truth) * (est - truth);
      if (table) {
        if (t >= 0) {
          const CiRow& row = table->rows[std::size_t(t)];
          rec.covered(k) = row.lower <= truth && truth <= row.upper ? 1.0 : 0.0;
          rec.se(k) = row.se;
        } else {
          rec.covered(k) = 0.0;
        }
      }
    }
    const Vec<double> ghat = pf.m > 0 ? gamma_element(pf.fit, pf.model) : Vec<double>::Zero(space.size());
    rec.sq_error(P - 1) = squared_norm(space, ghat - gamma0);
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

const ParamMetric& MetricsTable::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw ConfigError("metrics table has no parameter '" + name + "'");
}

MetricsTable run_monte_carlo(const ScenarioConfig& cfg, int reps, int threads) {
  cfg.validate();
  if (reps < 1) throw ConfigError("monte carlo: reps must be at least 1");
  const AmbientSpace<double> space = unit_space(cfg.dims);
  const TrueFamily family = make_family(space, cfg.family, cfg.lambdas.size());
  const BasisSet<double> basis = scenario_basis(cfg, space, family);

  MetricsTable t;
  t.reps = reps;
  t.records.resize(std::size_t(reps));
  parallel_for(std::size_t(reps), threads, [&](std::size_t rep) {
    t.records[rep] = run_replication(cfg, space, family, basis, rep);
  });
  std::vector<const ReplicationRecord*> ok;
  for (const auto& r : t.records) {
    if (r.ok) ok.push_back(&r);
    else ++t.failed;
  }
  if (t.failed * 20 > reps) {
    std::string first;
    for (std::size_t i = 0; i < t.records.size() && first.empty(); ++i)
      if (!t.records[i].ok) first = "replication " + std::to_string(i) + ": " + t.records[i].error;
    throw ReplicateFailureError(std::to_string(t.failed) + " of " + std::to_string(reps) +
                                " replications failed (limit 5%); first failure: " + first);
  }
  const auto names = metric_names(cfg);
  const Index J = cfg.lambdas.size();
  for (std::size_t k = 0; k < names.size(); ++k) {
    ParamMetric pm;
    pm.name = names[k];
    const Index kk = Index(k);
    if (kk < J) pm.truth = cfg.lambdas(kk);
    else if (kk < 2 * J) pm.truth = 0;
    else if (kk == 2 * J) pm.truth = cfg.alpha0;
    else if (kk <= 2 * J + cfg.d) pm.truth = cfg.beta0(kk - 2 * J - 1);
    else if (kk < Index(names.size()) - 1) pm.truth = cfg.gamma0_scores(kk - 2 * J - cfg.d - 1);
    std::vector<double> sq;
    double cov_sum = 0, se_sum = 0;
    int cov_n = 0, se_n = 0;
    for (const auto* r : ok) {
      sq.push_back(r->sq_error(kk));
      if (!std::isnan(r->covered(kk))) {
        cov_sum += r->covered(kk);
        ++cov_n;
      }
      if (!std::isnan(r->se(kk))) {
        se_sum += r->se(kk);
        ++se_n;
      }
    }
    if (!sq.empty()) {
      double s = 0;
      for (double v : sq) s += v;
      pm.mse = s / double(sq.size());
      std::sort(sq.begin(), sq.end());
      const std::size_t h = sq.size() / 2;
      pm.median_sq_error = sq.size() % 2 ? sq[h] : (sq[h - 1] + sq[h]) / 2;
    }
    if (cov_n > 0) pm.coverage = cov_sum / cov_n;
    if (se_n > 0) pm.mean_se = se_sum / se_n;
    t.params.push_back(pm);
  }
  for (const auto* r : ok) ++t.m_hist[r->m_hat];
  if (cfg.diagnose && !ok.empty()) {
    double rej = 0, del = 0;
    for (const auto* r : ok) {
      rej += r->reject ? 1 : 0;
      del += r->delta_hat;
    }
    t.reject_rate = rej / double(ok.size());
    t.mean_delta = del / double(ok.size());
  }
  return t;
}

}  // namespace hspca
