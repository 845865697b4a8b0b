#pragma once

#include "hspca/inference.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace hspca {

enum class FamilyKind { synthetic2d, quadratic_gauss3d };

FamilyKind parse_family_kind(const std::string& s);
std::string to_string(FamilyKind k);

/// Ground-truth orthonormal eigenfunctions, one per row.
struct TrueFamily {
  FamilyKind kind = FamilyKind::synthetic2d;
  RowMat<double> phi;  // J x V

  Index size() const { return phi.rows(); }
  /// sum_j coeffs_j phi_j
  Vec<double> element(const Vec<double>& coeffs) const;
};

/// Grid over the unit square/cube: spacing 1/dims, so cell centers sit at (i + 0.5) / dims.
AmbientSpace<double> unit_space(const std::vector<std::size_t>& dims);

/// synthetic2d: up to 6 Gaussian bumps (width 0.15) on a 3 x 2 lattice in the
/// unit square, Gram-Schmidt orthonormalized in lattice order.
/// quadratic_gauss3d: 20 r^2 and exp(-15 r^2), r the distance to the cube
/// center, orthonormalized in that order (J <= 2).
TrueFamily make_family(const AmbientSpace<double>& space, FamilyKind kind, Index J);

/// Z_i = sum_j sqrt(lambda_j) U_ij phi_j with U_ij iid N(0, 1).
RowMat<double> gen_kl_sample(const TrueFamily& family, const Vec<double>& lambdas, Index n, std::mt19937_64& rng);

/// Rows iid N(0, Omega) with Omega_kl = r^|k - l|.
Mat<double> gen_ar_covariates(Index n, Index d, double r, std::mt19937_64& rng);

/// Y_i = alpha + beta' X_i + <gamma, Z_i> + eps_i, eps_i ~ N(0, noise_sd^2).
Vec<double> gen_response(const AmbientSpace<double>& space, const Mat<double>& x, const RowMat<double>& sample,
                         double alpha, const Vec<double>& beta, const Vec<double>& gamma, double noise_sd,
                         std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Monte Carlo studies

enum class InferenceKind { none, bootstrap, plugin, jackknife };

InferenceKind parse_inference_kind(const std::string& s);
std::string to_string(InferenceKind k);

struct BasisChoice {
  std::string kind = "bspline";  // bspline | family | family-drop
  int degree = 3;
  int knots = 8;                 // interior knots per axis
  int drop = -1;                 // family-drop: zero-based component left out
};

struct ScenarioConfig {
  std::vector<std::size_t> dims{20, 24};
  FamilyKind family = FamilyKind::synthetic2d;
  Vec<double> lambdas;
  double alpha0 = 1;
  Vec<double> beta0;
  Vec<double> gamma0_scores;  // coefficients of gamma_0 on the family
  Index d = 4;
  double r = 0;
  Index n = 500;
  double noise_sd = 1;
  std::uint64_t seed = 1;

  BasisChoice basis;
  Index m = -1;  // fixed component count; -1 selects by PVE
  double tau = 0.95;
  bool diagnose = false;
  double alpha_level = 0.05;

  InferenceKind inference = InferenceKind::none;
  BootstrapKind bootstrap_kind = BootstrapKind::nonparametric;
  int b_reps = 300;
  int jackknife_r = 0;  // 0: smallest valid r
  double level = 0.95;

  void validate() const;
};

/// 2D design: lambda = (3.5, 3, 2.5, 2, 1.5, 1), gamma_0 scores
/// (1.5, 1, 2, 2.5, 1.5, 3), alpha_0 = 1, beta_0 = 1, d = 4.
ScenarioConfig scenario_2d(Index n, double r, bool paper_scale = false);
/// 3D design: lambda = (2, 1), gamma_0 = 1.5 phi_1 - phi_2, cubic splines with 3 interior knots.
ScenarioConfig scenario_3d(Index n, double r, bool paper_scale = false);

/// One replication's generated data.
struct SimulatedData {
  RowMat<double> sample;
  Mat<double> x;
  Vec<double> y;
};

SimulatedData simulate_data(const ScenarioConfig& cfg, const AmbientSpace<double>& space, const TrueFamily& family,
                            std::mt19937_64& rng);

BasisSet<double> scenario_basis(const ScenarioConfig& cfg, const AmbientSpace<double>& space,
                                const TrueFamily& family);

struct ParamMetric {
  std::string name;
  double truth = 0;
  double mse = 0;
  double median_sq_error = 0;
  double coverage = std::numeric_limits<double>::quiet_NaN();  // NaN when no intervals
  double mean_se = std::numeric_limits<double>::quiet_NaN();
};

struct ReplicationRecord {
  bool ok = false;
  std::string error;
  Vec<double> sq_error;  // per parameter
  Vec<double> covered;   // 1/0 per parameter, NaN where not applicable
  Vec<double> se;        // interval-method standard error, NaN where not applicable
  Index m_hat = 0;
  double delta_hat = 0, t_stat = 0;
  bool reject = false;
};

struct MetricsTable {
  int reps = 0;
  int failed = 0;
  std::vector<ParamMetric> params;
  std::map<Index, int> m_hist;
  double reject_rate = std::numeric_limits<double>::quiet_NaN();
  double mean_delta = std::numeric_limits<double>::quiet_NaN();
  std::vector<ReplicationRecord> records;

  const ParamMetric& param(const std::string& name) const;
};

/// Parameter order: lambda_j, phi_j (squared L2 error, sign-aligned), alpha,
/// beta_k, gamma_j (score coefficients), gamma (element, squared L2 error).
std::vector<std::string> metric_names(const ScenarioConfig& cfg);

/// One replication with index `rep` (deterministic in (cfg.seed, rep)).
ReplicationRecord run_replication(const ScenarioConfig& cfg, const AmbientSpace<double>& space,
                                  const TrueFamily& family, const BasisSet<double>& basis, std::uint64_t rep);

/// Seeded replications aggregated in replicate order; more than 5% failed
/// replications raises ReplicateFailureError.
MetricsTable run_monte_carlo(const ScenarioConfig& cfg, int reps, int threads = 0);

}  // namespace hspca
