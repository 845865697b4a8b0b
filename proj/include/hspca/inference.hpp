#pragma once

#include "hspca/aspca.hpp"
#include "hspca/hspcr.hpp"
#include "hspca/parallel.hpp"
#include "hspca/rng.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hspca {

enum class BootstrapKind { nonparametric, wild };

inline BootstrapKind parse_bootstrap_kind(const std::string& s) {
  if (s == "nonparametric") return BootstrapKind::nonparametric;
  if (s == "wild") return BootstrapKind::wild;
  throw ConfigError("unknown bootstrap kind '" + s + "' (expected nonparametric or wild)");
}

inline std::string to_string(BootstrapKind k) { return k == BootstrapKind::wild ? "wild" : "nonparametric"; }

/// Wild multipliers are exponential(1) draws normalized by their replicate mean.
struct BootstrapSpec {
  BootstrapKind kind = BootstrapKind::nonparametric;
  int b_reps = 300;
  std::uint64_t base_seed = 0;
  double level = 0.95;
  int threads = 0;  // 0: default_threads()

  void validate() const {
    if (b_reps < 1) throw ConfigError("bootstrap: B must be at least 1");
    if (!(level > 0 && level < 1)) throw ConfigError("bootstrap: level must lie in (0, 1)");
  }
};

struct JackknifeSpec {
  int r = 0;
  double level = 0.95;
  int threads = 0;
};

/// Observation weights for one replicate. Nonparametric: multinomial(n, 1/n)
/// counts. Wild: xi_i / mean(xi) with xi ~ exponential(1).
template <typename Scalar = double>
Vec<Scalar> gen_weights(const BootstrapSpec& spec, Index n, std::uint64_t replicate) {
  if (n < 1) throw InsufficientDataError("gen_weights: n must be positive");
  auto rng = stream_rng(spec.base_seed, replicate);
  Vec<Scalar> w = Vec<Scalar>::Zero(n);
  if (spec.kind == BootstrapKind::nonparametric) {
    std::uniform_int_distribution<Index> pick(0, n - 1);
    for (Index i = 0; i < n; ++i) w(pick(rng)) += 1;
  } else {
    std::exponential_distribution<double> xi(1.0);
    for (Index i = 0; i < n; ++i) w(i) = Scalar(xi(rng));
    w /= w.mean();
  }
  return w;
}

// ---------------------------------------------------------------------------
// Interval tables

struct CiRow {
  std::string term;
  double estimate = 0, lower = 0, upper = 0, se = 0;
};

struct CiTable {
  std::string method;
  double level = 0.95;
  int requested = 0;
  int completed = 0;
  int failed = 0;
  std::vector<CiRow> rows;
};

/// Quantile of sorted data by linear interpolation at h = (B-1) q + 1 (1-based).
inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
  const double h = double(sorted.size() - 1) * q;
  const auto lo = std::size_t(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - double(lo)) * (sorted[hi] - sorted[lo]);
}

/// Per-column percentile interval (p x 2: lower, upper) of B x p draws.
template <typename Derived>
Mat<double> percentile_ci(const Eigen::MatrixBase<Derived>& draws, double level) {
  if (!(level > 0 && level < 1)) throw ConfigError("percentile_ci: level must lie in (0, 1)");
  if (draws.rows() < 2) throw InsufficientDataError("percentile_ci: need at least 2 draws");
  if (!draws.allFinite()) throw ConformanceError("percentile_ci: draws must be finite");
  Mat<double> out(draws.cols(), 2);
  std::vector<double> col(std::size_t(draws.rows()));
  for (Index c = 0; c < draws.cols(); ++c) {
    for (Index r = 0; r < draws.rows(); ++r) col[std::size_t(r)] = double(draws(r, c));
    std::sort(col.begin(), col.end());
    out(c, 0) = interpolated_quantile(col, (1 - level) / 2);
    out(c, 1) = interpolated_quantile(col, 1 - (1 - level) / 2);
  }
  return out;
}

template <typename Derived>
Vec<double> column_sd(const Eigen::MatrixBase<Derived>& draws) {
  const Index b = draws.rows();
  Vec<double> sd = Vec<double>::Zero(draws.cols());
  if (b < 2) return sd;
  for (Index c = 0; c < draws.cols(); ++c) {
    const double mu = double(draws.col(c).mean());
    double s = 0;
    for (Index r = 0; r < b; ++r) s += (double(draws(r, c)) - mu) * (double(draws(r, c)) - mu);
    sd(c) = std::sqrt(s / double(b - 1));
  }
  return sd;
}

// ---------------------------------------------------------------------------
// Full pipeline: AS-PCA, component selection, scores, least squares

template <typename Scalar>
struct PipelineInputs {
  Vec<Scalar> y;
  Mat<Scalar> x;                             // n x d
  std::vector<std::string> x_names;          // defaults to X1..Xd
  std::optional<std::vector<bool>> treatment;
  Index m = -1;                              // components; -1 selects by PVE
  Scalar tau = Scalar(0.95);
  Scalar drop_tol = Scalar(1e-10);
};

template <typename Scalar>
struct PipelineFit {
  Frame<Scalar> frame;
  Mat<Scalar> coords;  // n x rank, uncentered whitened coordinates
  EigenModel<Scalar> model;
  Index m = 0;
  RegressionDesign<Scalar> design;
  ThetaFit<Scalar> fit;
  std::vector<std::string> terms;

  bool precision() const { return design.treatment.has_value(); }
  const Vec<Scalar>& theta() const { return fit.theta; }
};

template <typename Scalar>
std::vector<std::string> coefficient_terms(const PipelineInputs<Scalar>& in, Index m) {
  std::vector<std::string> base{"Intercept"};
  for (Index k = 0; k < in.x.cols(); ++k)
    base.push_back(std::size_t(k) < in.x_names.size() ? in.x_names[std::size_t(k)] : "X" + std::to_string(k + 1));
  for (Index j = 0; j < m; ++j) base.push_back("Z" + std::to_string(j + 1));
  if (!in.treatment) return base;
  std::vector<std::string> all = base;
  all.push_back("Treatment");
  for (std::size_t k = 1; k < base.size(); ++k) all.push_back("Treatment:" + base[k]);
  return all;
}

namespace detail {
template <typename Scalar>
ThetaFit<Scalar> fit_design(const RegressionDesign<Scalar>& design, const Vec<Scalar>* weights) {
  if (!design.treatment) return fit_hspcr(design, weights);
  return fit_precision(design, weights).joint;
}
}  // namespace detail

template <typename Scalar>
PipelineFit<Scalar> fit_pipeline(const AmbientSpace<Scalar>& space, const BasisSet<Scalar>& basis,
                                 const RowMat<Scalar>& sample, const PipelineInputs<Scalar>& in) {
  detail::check_sample(space, sample, 2);
  const Index n = sample.rows();
  if (in.y.size() != n || in.x.rows() != n)
    throw ConformanceError("pipeline: y has " + std::to_string(in.y.size()) + " rows, x " +
                           std::to_string(in.x.rows()) + ", sample " + std::to_string(n));
  PipelineFit<Scalar> pf;
  pf.frame = make_frame(space, basis, in.drop_tol);
  pf.coords = frame_coords(space, pf.frame, sample);
  pf.model = fit_frame(space, pf.frame, sample, pf.coords);
  if (in.m < 0) {
    pf.m = select_pve(pf.model, in.tau).m;
  } else {
    if (in.m > pf.model.rank())
      throw SelectionInfeasibleError("pipeline: requested " + std::to_string(in.m) + " components, only " +
                                     std::to_string(pf.model.rank()) + " have positive variance");
    pf.m = in.m;
  }
  pf.design.y = in.y;
  pf.design.x = in.x;
  pf.design.scores = component_scores(pf.model, space, sample, pf.m);
  pf.design.treatment = in.treatment;
  pf.fit = detail::fit_design<Scalar>(pf.design, nullptr);
  pf.terms = coefficient_terms(in, pf.m);
  return pf;
}

/// Re-runs AS-PCA and the regression of a point fit under observation weights
/// `w`. The basis frame does not depend on the data, so the replicate starts
/// from the stored coordinates. Replicate eigenvectors are sign-aligned to the point fit.
template <typename Scalar>
Vec<Scalar> replicate_theta(const PipelineFit<Scalar>& pf, const Vec<Scalar>& w) {
  const Vec<Scalar> p = detail::normalized_weights<Scalar>(pf.coords.rows(), &w);
  const Mat<Scalar> M = detail::weighted_covariance(pf.coords, p);
  const Mat<Scalar> start = pf.model.eigvecs.transpose();
  const auto [vals, vecs] = detail::leading_eig<Scalar>(M, start, pf.m);
  const Scalar second = (pf.coords.array().square().matrix().transpose() * p).sum();
  const Scalar floor = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * second;
  Index kept = 0;
  while (kept < pf.m && vals(kept) > Scalar(FitOptions{}.retain_rel) * vals(0) && vals(kept) > floor) ++kept;
  if (kept < pf.m)
    throw NondegeneracyError("replicate retains " + std::to_string(kept) + " components, need " +
                             std::to_string(pf.m));
  Mat<Scalar> omega = vecs.transpose();
  for (Index j = 0; j < pf.m; ++j)
    if (omega.row(j).dot(pf.model.eigvecs.row(j)) < 0) omega.row(j) *= -1;
  RegressionDesign<Scalar> design;
  design.y = pf.design.y;
  design.x = pf.design.x;
  design.scores = pf.coords * omega.transpose();
  design.treatment = pf.design.treatment;
  return detail::fit_design<Scalar>(design, &w).theta;
}

/// Flips estimated components to agree with `reference` rows and carries the
/// flips through scores, coefficients and sigma_hat. Returns per-component signs.
template <typename Scalar, typename Derived>
Vec<Scalar> align_pipeline(PipelineFit<Scalar>& pf, const AmbientSpace<Scalar>& space,
                           const Eigen::MatrixBase<Derived>& reference) {
  const Vec<Scalar> s = align_signs(pf.model, space, reference);
  const Index d = pf.design.d(), base = 1 + d + pf.m;
  Vec<Scalar> t = Vec<Scalar>::Ones(pf.fit.p());
  for (Index j = 0; j < pf.m; ++j) {
    if (s(j) > 0) continue;
    pf.design.scores.col(j) *= -1;
    t(1 + d + j) = -1;
    if (pf.precision()) t(base + 1 + d + j) = -1;
  }
  pf.fit.theta = pf.fit.theta.cwiseProduct(t);
  pf.fit.sigma_hat = t.asDiagonal() * pf.fit.sigma_hat * t.asDiagonal();
  return s;
}

template <typename Scalar>
struct BootstrapResult {
  PipelineFit<Scalar> point;
  Mat<Scalar> draws;  // completed replicates x p, in replicate order
  CiTable table;
};

namespace detail {
/// Runs `one(b)` for b in [0, B) collecting rows; failures are skipped and
/// counted. More than 5% failures aborts the call.
template <typename Scalar, typename Fn>
Mat<Scalar> collect_replicates(int B, Index p, int threads, Fn&& one, int& failed) {
  std::vector<Vec<Scalar>> rows(static_cast<std::size_t>(B));
  std::vector<char> ok(std::size_t(B), 0);
  std::vector<std::string> why(static_cast<std::size_t>(B));
  parallel_for(std::size_t(B), threads, [&](std::size_t b) {
    try {
      rows[b] = one(b);
      ok[b] = 1;
    } catch (const Error& e) {
      why[b] = e.what();
    }
  });
  failed = int(std::count(ok.begin(), ok.end(), 0));
  if (failed * 20 > B) {
    std::string first;
    for (std::size_t b = 0; b < ok.size() && first.empty(); ++b)
      if (!ok[b]) first = "replicate " + std::to_string(b) + ": " + why[b];
    throw ReplicateFailureError(std::to_string(failed) + " of " + std::to_string(B) +
                                " replicates failed (limit 5%); first failure: " + first);
  }
  Mat<Scalar> draws(B - failed, p);
  Index r = 0;
  for (std::size_t b = 0; b < ok.size(); ++b)
    if (ok[b]) draws.row(r++) = rows[b].transpose();
  return draws;
}

template <typename Scalar>
CiTable percentile_table(const std::string& method, double level, const std::vector<std::string>& terms,
                         const Vec<Scalar>& point, const Mat<Scalar>& draws, int requested, int failed) {
  CiTable t;
  t.method = method;
  t.level = level;
  t.requested = requested;
  t.failed = failed;
  t.completed = int(draws.rows());
  const Mat<double> ci = percentile_ci(draws, level);
  const Vec<double> sd = column_sd(draws);
  for (Index k = 0; k < point.size(); ++k)
    t.rows.push_back({terms[std::size_t(k)], double(point(k)), ci(k, 0), ci(k, 1), sd(k)});
  return t;
}
}  // namespace detail

/// Bootstrap draws of theta around an existing point fit (replicates are
/// sign-aligned to `pf`). Every replicate reweights the sample and repeats
/// AS-PCA and the regression with the point-estimate component count.
template <typename Scalar>
BootstrapResult<Scalar> bootstrap_pipeline(const AmbientSpace<Scalar>& space, const RowMat<Scalar>& sample,
                                           PipelineFit<Scalar> pf, const BootstrapSpec& spec) {
  spec.validate();
  detail::check_cols(space, sample.cols(), "sample");
  if (sample.rows() != pf.coords.rows()) throw ConformanceError("sample does not match the point fit");
  if (spec.b_reps < 2) throw ConfigError("bootstrap: percentile intervals need B >= 2");
  BootstrapResult<Scalar> res;
  res.point = std::move(pf);
  const Index n = sample.rows();
  int failed = 0;
  res.draws = detail::collect_replicates<Scalar>(
      spec.b_reps, res.point.fit.p(), spec.threads,
      [&](std::size_t b) { return replicate_theta(res.point, gen_weights<Scalar>(spec, n, b)); },
      failed);
  res.table = detail::percentile_table("bootstrap-" + to_string(spec.kind), spec.level, res.point.terms,
                                       res.point.theta(), res.draws, spec.b_reps, failed);
  return res;
}

template <typename Scalar>
BootstrapResult<Scalar> bootstrap_theta(const AmbientSpace<Scalar>& space, const BasisSet<Scalar>& basis,
                                        const RowMat<Scalar>& sample, const PipelineInputs<Scalar>& in,
                                        const BootstrapSpec& spec) {
  spec.validate();
  return bootstrap_pipeline(space, sample, fit_pipeline(space, basis, sample, in), spec);
}

template <typename Scalar>
struct EigBootstrapResult {
  EigenModel<Scalar> point;
  Mat<Scalar> draws;  // completed replicates x J
  CiTable table;
};

/// Bootstrap of the leading eigenvalues: the subspace covariance is rebuilt
/// around the weighted mean in every replicate. `components` defaults to the
/// point estimate's rank; replicate eigenvalues are reported without the
/// retention threshold (clamped at zero).
template <typename Scalar>
EigBootstrapResult<Scalar> bootstrap_eigs(const AmbientSpace<Scalar>& space, const BasisSet<Scalar>& basis,
                                          const RowMat<Scalar>& sample, const BootstrapSpec& spec,
                                          Index components = -1, Scalar drop_tol = Scalar(1e-10)) {
  spec.validate();
  if (spec.b_reps < 2) throw ConfigError("bootstrap: percentile intervals need B >= 2");
  detail::check_sample(space, sample, 2);
  const Frame<Scalar> frame = make_frame(space, basis, drop_tol);
  const Mat<Scalar> coords = frame_coords(space, frame, sample);
  EigBootstrapResult<Scalar> res;
  res.point = fit_frame(space, frame, sample, coords);
  const Index J = components < 0 ? res.point.rank() : components;
  if (J > frame.rank()) throw ConfigError("bootstrap_eigs: more components than the basis rank");
  const Index n = sample.rows();
  auto eig_draw = [&](const Vec<Scalar>& w) {
    const Vec<Scalar> p = w / w.sum();
    const Mat<Scalar> M = detail::weighted_covariance(coords, p);
    Vec<Scalar> vals = detail::leading_eig<Scalar>(M, res.point.eigvecs.transpose(), J).first;
    return Vec<Scalar>(vals.cwiseMax(Scalar(0)));
  };
  int failed = 0;
  res.draws = detail::collect_replicates<Scalar>(
      spec.b_reps, J, spec.threads, [&](std::size_t b) { return eig_draw(gen_weights<Scalar>(spec, n, b)); },
      failed);
  Vec<Scalar> point = eig_draw(Vec<Scalar>::Ones(n));
  std::vector<std::string> terms;
  for (Index j = 0; j < J; ++j) terms.push_back("lambda" + std::to_string(j + 1));
  res.table = detail::percentile_table("bootstrap-" + to_string(spec.kind), spec.level, terms, point, res.draws,
                                       spec.b_reps, failed);
  return res;
}

// ---------------------------------------------------------------------------
// Block jackknife

/// Zero-based removal sets: block l holds {l, r + l, ..., (k-1) r + l}, k = floor(n / r).
inline std::vector<std::vector<Index>> jackknife_blocks(Index n, int r) {
  if (r < 2) throw ConfigError("jackknife: need at least 2 blocks");
  if (n < 2 * Index(r))
    throw InsufficientDataError("jackknife: n = " + std::to_string(n) + " is below 2r = " + std::to_string(2 * r));
  const Index k = n / r;
  std::vector<std::vector<Index>> blocks(static_cast<std::size_t>(r));
  for (int l = 0; l < r; ++l)
    for (Index t = 0; t < k; ++t) blocks[std::size_t(l)].push_back(t * r + l);
  return blocks;
}

template <typename Scalar>
struct JackknifeResult {
  PipelineFit<Scalar> point;
  Mat<Scalar> replicates;  // r x p
  Mat<Scalar> variance;    // p x p
  CiTable table;
};

/// Leave-one-block-out refits over the first r * floor(n / r) observations;
/// variance (r-1)/r * sum (theta_l - mean)^2 with normal-approximation intervals.
template <typename Scalar>
JackknifeResult<Scalar> jackknife_pipeline(const AmbientSpace<Scalar>& space, const RowMat<Scalar>& sample,
                                           PipelineFit<Scalar> pf, const JackknifeSpec& spec) {
  detail::check_cols(space, sample.cols(), "sample");
  if (sample.rows() != pf.coords.rows()) throw ConformanceError("sample does not match the point fit");
  if (!(spec.level > 0 && spec.level < 1)) throw ConfigError("jackknife: level must lie in (0, 1)");
  JackknifeResult<Scalar> res;
  res.point = std::move(pf);
  const Index p = res.point.fit.p();
  if (Index(spec.r) <= p + 1)
    throw ConfigError("jackknife: r = " + std::to_string(spec.r) + " blocks must exceed p + 1 = " +
                      std::to_string(p + 1) + " for " + std::to_string(p) +
                      " coefficients (assumption (A4) Moment and nondegeneracy needs enough blocks)");
  const Index n = sample.rows();
  const auto blocks = jackknife_blocks(n, spec.r);
  const Index used = Index(spec.r) * (n / spec.r);
  std::vector<Vec<Scalar>> rows(blocks.size());
  parallel_for(blocks.size(), spec.threads, [&](std::size_t l) {
    Vec<Scalar> w = Vec<Scalar>::Zero(n);
    w.head(used).setOnes();
    for (Index i : blocks[l]) w(i) = 0;
    rows[l] = replicate_theta(res.point, w);
  });
  const Index r = spec.r;
  res.replicates.resize(r, p);
  for (Index l = 0; l < r; ++l) res.replicates.row(l) = rows[std::size_t(l)].transpose();
  const Mat<Scalar> cen = res.replicates.rowwise() - res.replicates.colwise().mean();
  res.variance = cen.transpose() * cen * (Scalar(r - 1) / Scalar(r));
  const double z = normal_quantile(1 - (1 - spec.level) / 2);
  res.table.method = "jackknife";
  res.table.level = spec.level;
  res.table.requested = res.table.completed = spec.r;
  for (Index k = 0; k < p; ++k) {
    const double est = double(res.point.theta()(k)), se = std::sqrt(double(res.variance(k, k)));
    res.table.rows.push_back({res.point.terms[std::size_t(k)], est, est - z * se, est + z * se, se});
  }
  return res;
}

template <typename Scalar>
JackknifeResult<Scalar> block_jackknife(const AmbientSpace<Scalar>& space, const BasisSet<Scalar>& basis,
                                        const RowMat<Scalar>& sample, const PipelineInputs<Scalar>& in,
                                        const JackknifeSpec& spec) {
  return jackknife_pipeline(space, sample, fit_pipeline(space, basis, sample, in), spec);
}

/// Normal-approximation table from the plug-in covariance of theta.
template <typename Scalar>
CiTable plugin_table(const AmbientSpace<Scalar>& space, const RowMat<Scalar>& sample, const PipelineFit<Scalar>& pf,
                     double level) {
  const Mat<Scalar> cov = plugin_theta_cov(pf.fit, pf.model, space, sample, pf.design);
  const double z = normal_quantile(1 - (1 - level) / 2);
  CiTable t;
  t.method = "plugin";
  t.level = level;
  for (Index k = 0; k < pf.fit.p(); ++k) {
    const double est = double(pf.theta()(k)), se = std::sqrt(double(cov(k, k)));
    t.rows.push_back({pf.terms[std::size_t(k)], est, est - z * se, est + z * se, se});
  }
  return t;
}

}  // namespace hspca
