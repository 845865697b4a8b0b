#pragma once

#include "hspca/basis.hpp"
#include "hspca/normal.hpp"
#include "hspca/space.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

namespace hspca {

/// Orthonormal frame psi = factor * Psi* spanning the basis, sampled on the grid.
template <typename Scalar>
struct Frame {
  Whitener<Scalar> whitener;
  RowMat<Scalar> psi;  // rank x V

  Index rank() const { return psi.rows(); }
};

template <typename Scalar>
Frame<Scalar> make_frame(const AmbientSpace<Scalar>& space, const BasisSet<Scalar>& basis,
                         Scalar drop_tol = Scalar(1e-10)) {
  detail::check_cols(space, basis.functions.cols(), "basis");
  Frame<Scalar> f;
  f.whitener = whiten(gram(space, basis.functions), drop_tol);
  f.psi = f.whitener.factor * basis.functions;
  return f;
}

/// Output of AS-PCA: eigenpairs of the subspace covariance in descending order.
template <typename Scalar>
struct EigenModel {
  Vec<Scalar> lambdas;             // J, descending
  Mat<Scalar> eigvecs;             // J x rank, omega_j in whitened coordinates (rows)
  RowMat<Scalar> eigenfunctions;   // J x V
  Vec<Scalar> mean;                // sample mean element
  Whitener<Scalar> whitener;
  Scalar total_variance = 0;       // P_n ||Z - mean||^2
  bool oracle = false;             // eigenfunctions treated as known (no estimation error)

  Index rank() const { return lambdas.size(); }
};

/// Wraps known orthonormal functions as a model, flagged as oracle.
template <typename Scalar, typename Derived>
EigenModel<Scalar> oracle_model(const AmbientSpace<Scalar>& space, const Eigen::MatrixBase<Derived>& functions,
                                const Vec<Scalar>& lambdas, const Vec<Scalar>& mean) {
  detail::check_cols(space, functions.cols(), "oracle_model");
  if (lambdas.size() != functions.rows()) throw ConformanceError("oracle_model: lambdas/functions mismatch");
  EigenModel<Scalar> m;
  m.lambdas = lambdas;
  m.eigenfunctions = functions;
  m.eigvecs = Mat<Scalar>::Identity(functions.rows(), functions.rows());
  m.mean = mean;
  m.total_variance = lambdas.sum();
  m.oracle = true;
  return m;
}

struct FitOptions {
  bool assemble_functions = true;  // build phi_j on the grid (and fix signs by largest entry)
  bool compute_mean = true;        // mean element and total variance (O(nV))
  double retain_rel = 1e-12;       // keep lambda_j > retain_rel * lambda_1
};

namespace detail {
template <typename Scalar>
void check_sample(const AmbientSpace<Scalar>& space, const RowMat<Scalar>& sample, Index min_n) {
  check_cols(space, sample.cols(), "sample");
  if (sample.rows() < min_n)
    throw InsufficientDataError("sample has " + std::to_string(sample.rows()) + " rows, need at least " +
                                std::to_string(min_n));
  if (!sample.allFinite()) throw ConformanceError("sample contains non-finite values");
}

template <typename Scalar>
Vec<Scalar> normalized_weights(Index n, const Vec<Scalar>* weights) {
  if (!weights) return Vec<Scalar>::Constant(n, Scalar(1) / Scalar(n));
  if (weights->size() != n) throw ConformanceError("weights length does not match sample size");
  if ((weights->array() < 0).any() || !weights->allFinite())
    throw ConformanceError("weights must be finite and nonnegative");
  const Scalar s = weights->sum();
  if (!(s > 0)) throw InsufficientDataError("weights sum to zero");
  return *weights / s;
}
}  // namespace detail

namespace detail {
/// Covariance of the rows of `coords` under probability weights `p`; rows with
/// zero weight are skipped.
template <typename Scalar>
Mat<Scalar> weighted_covariance(const Mat<Scalar>& coords, const Vec<Scalar>& p) {
  const Vec<Scalar> ybar = coords.transpose() * p;
  const Index n = coords.rows(), r = coords.cols();
  const Index used = (p.array() > 0).count();
  Mat<Scalar> s(used, r);
  for (Index i = 0, k = 0; i < n; ++i)
    if (p(i) > 0) s.row(k++) = std::sqrt(p(i)) * (coords.row(i) - ybar.transpose());
  Mat<Scalar> M = Mat<Scalar>::Zero(r, r);
  M.template selfadjointView<Eigen::Lower>().rankUpdate(s.transpose());
  return M.template selfadjointView<Eigen::Lower>();
}

/// Leading m eigenpairs (descending, eigenvectors as columns) of a symmetric
/// PSD matrix by block subspace iteration with Rayleigh-Ritz, warm-started
/// from the columns of `start`. Falls back to the full decomposition when the
/// residuals do not settle.
template <typename Scalar>
std::pair<Vec<Scalar>, Mat<Scalar>> leading_eig(const Mat<Scalar>& M, const Mat<Scalar>& start, Index m) {
  const Index r = M.rows();
  const Index k = std::min<Index>(r, m + 8);
  auto full = [&] {
    auto [vals, vecs] = descending_eig<Scalar>(M);
    return std::pair<Vec<Scalar>, Mat<Scalar>>{vals.head(m), vecs.leftCols(m)};
  };
  if (m == 0 || 2 * k >= r) return full();
  Mat<Scalar> V(r, k);
  const Index warm = std::min<Index>(start.cols(), k);
  V.leftCols(warm) = start.leftCols(warm);
  if (warm < k) {
    std::vector<Index> order(static_cast<std::size_t>(r));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return M(a, a) > M(b, b); });
    for (Index c = warm; c < k; ++c) V.col(c) = M.col(order[std::size_t(c - warm)]);
  }
  const Scalar scale = M.diagonal().sum();
  if (!(scale > 0)) return full();
  for (int it = 0; it < 200; ++it) {
    const Mat<Scalar> W = M * V;
    Eigen::HouseholderQR<Mat<Scalar>> qr(W);
    V = qr.householderQ() * Mat<Scalar>::Identity(r, k);
    const Mat<Scalar> MV = M * V;
    Mat<Scalar> H = V.transpose() * MV;
    H = (H + H.transpose()) / Scalar(2);
    auto [theta, U] = descending_eig<Scalar>(H);
    V = V * U;
    const Mat<Scalar> R = MV * U - V * theta.asDiagonal();
    if (R.leftCols(m).colwise().norm().maxCoeff() <= Scalar(1e-13) * scale)
      return {theta.head(m), V.leftCols(m)};
  }
  return full();
}
}  // namespace detail

/// AS-PCA on precomputed whitened coordinates `coords` (n x rank, uncentered
/// <psi_l, Z_i>) under the weighted empirical measure p = weights / sum(weights).
/// `sample` is read only when compute_mean is set.
template <typename Scalar>
EigenModel<Scalar> fit_frame(const AmbientSpace<Scalar>& space, const Frame<Scalar>& frame,
                             const RowMat<Scalar>& sample, const Mat<Scalar>& coords,
                             const Vec<Scalar>* weights = nullptr, const FitOptions& opt = {}) {
  const Index n = coords.rows();
  if (coords.cols() != frame.rank()) throw ConformanceError("coords do not match frame rank");
  const Vec<Scalar> p = detail::normalized_weights<Scalar>(n, weights);

  auto [vals, vecs] = detail::descending_eig<Scalar>(detail::weighted_covariance(coords, p));

  // roundoff floor relative to the projected second moment
  const Scalar second = (coords.array().square().matrix().transpose() * p).sum();
  const Scalar floor = Scalar(64) * std::numeric_limits<Scalar>::epsilon() * second;
  Index J = 0;
  while (J < vals.size() && vals(J) > Scalar(opt.retain_rel) * vals(0) && vals(J) > floor) ++J;

  EigenModel<Scalar> model;
  model.whitener = frame.whitener;
  model.lambdas = vals.head(J);
  model.eigvecs = vecs.leftCols(J).transpose();
  if (opt.assemble_functions) {
    model.eigenfunctions = model.eigvecs * frame.psi;
    for (Index j = 0; j < J; ++j) {
      Index arg;
      model.eigenfunctions.row(j).cwiseAbs().maxCoeff(&arg);
      if (model.eigenfunctions(j, arg) < 0) {
        model.eigenfunctions.row(j) *= -1;
        model.eigvecs.row(j) *= -1;
      }
    }
  }
  if (opt.compute_mean) {
    detail::check_cols(space, sample.cols(), "sample");
    if (sample.rows() != n) throw ConformanceError("sample/coords row mismatch");
    model.mean = sample.transpose() * p;
    Scalar tv = 0;
    const auto& w = space.weights();
    for (Index i = 0; i < n; ++i)
      tv += p(i) * ((sample.row(i).transpose() - model.mean).array().square() * w.array()).sum();
    model.total_variance = tv;
  }
  return model;
}

/// Whitened, uncentered coordinates <psi_l, Z_i> (n x rank).
template <typename Scalar>
Mat<Scalar> frame_coords(const AmbientSpace<Scalar>& space, const Frame<Scalar>& frame,
                         const RowMat<Scalar>& sample) {
  detail::check_cols(space, sample.cols(), "sample");
  return sample * space.weights().asDiagonal() * frame.psi.transpose();
}

/// AS-PCA: Gram matrix and whitening of the basis, subspace covariance of the
/// centered sample, and its eigendecomposition.
template <typename Scalar>
EigenModel<Scalar> fit_aspca(const AmbientSpace<Scalar>& space, const BasisSet<Scalar>& basis,
                             const RowMat<Scalar>& sample, Scalar drop_tol = Scalar(1e-10)) {
  detail::check_sample(space, sample, 2);
  const Frame<Scalar> frame = make_frame(space, basis, drop_tol);
  return fit_frame(space, frame, sample, frame_coords(space, frame, sample));
}

/// Uncentered scores <phi_j, Z_i> (n x J).
template <typename Scalar>
Mat<Scalar> component_scores(const EigenModel<Scalar>& model, const AmbientSpace<Scalar>& space,
                             const RowMat<Scalar>& sample, Index m = -1) {
  detail::check_cols(space, sample.cols(), "sample");
  if (m < 0) m = model.rank();
  if (m > model.rank()) throw ConformanceError("requested more components than the model holds");
  return sample * space.weights().asDiagonal() * model.eigenfunctions.topRows(m).transpose();
}

/// Flips eigenfunctions so that <phi_hat_j, reference_j> >= 0; returns the applied signs.
template <typename Scalar, typename Derived>
Vec<Scalar> align_signs(EigenModel<Scalar>& model, const AmbientSpace<Scalar>& space,
                        const Eigen::MatrixBase<Derived>& reference) {
  const Index k = std::min<Index>(model.rank(), reference.rows());
  Vec<Scalar> signs = Vec<Scalar>::Ones(model.rank());
  const Mat<Scalar> ip = inner_rows(space, model.eigenfunctions.topRows(k), reference.topRows(k));
  for (Index j = 0; j < k; ++j)
    if (ip(j, j) < 0) {
      signs(j) = -1;
      model.eigenfunctions.row(j) *= -1;
      if (model.eigvecs.rows() > j) model.eigvecs.row(j) *= -1;
    }
  return signs;
}

// ---------------------------------------------------------------------------
// Component selection

template <typename Scalar>
struct PveSelection {
  Scalar tau = 0.95;
  Index m = 0;
  Vec<Scalar> cumulative_fractions;  // sum_{k<=j} lambda_k / total_variance
};

/// Smallest m whose leading eigenvalues explain strictly more than tau of the
/// total sample variance.
template <typename Scalar>
PveSelection<Scalar> select_pve(const Vec<Scalar>& lambdas, Scalar total_variance, Scalar tau) {
  if (!(tau > 0 && tau < 1)) throw ConfigError("select_pve: tau must lie in (0, 1)");
  if (!(total_variance > 0)) throw SelectionInfeasibleError("select_pve: total variance is zero");
  PveSelection<Scalar> sel;
  sel.tau = tau;
  sel.cumulative_fractions.resize(lambdas.size());
  Scalar cum = 0;
  for (Index j = 0; j < lambdas.size(); ++j) {
    cum += lambdas(j);
    sel.cumulative_fractions(j) = cum / total_variance;
    if (sel.m == 0 && cum > tau * total_variance) sel.m = j + 1;
  }
  if (sel.m == 0)
    throw SelectionInfeasibleError("select_pve: all " + std::to_string(lambdas.size()) +
                                   " components explain only " + std::to_string(double(cum / total_variance)) +
                                   " of the variance (projection accuracy may be inadequate)");
  return sel;
}

template <typename Scalar>
PveSelection<Scalar> select_pve(const EigenModel<Scalar>& model, Scalar tau) {
  return select_pve(model.lambdas, model.total_variance, tau);
}

// ---------------------------------------------------------------------------
// Projection-accuracy diagnostic

template <typename Scalar>
struct DiagnosticReport {
  Scalar delta_hat = 0;            // mean squared projection residual
  Scalar delta_variance_form = 0;  // total variance minus projected variance
  Scalar s2_hat = 0;
  Scalar t_stat = 0;
  Scalar alpha = 0.05;
  Scalar critical = 0;             // z_{1-alpha}
  bool reject = false;
  Index n = 0;
};

template <typename Scalar>
DiagnosticReport<Scalar> diagnose_projection(const AmbientSpace<Scalar>& space, const Frame<Scalar>& frame,
                                             const RowMat<Scalar>& sample, Scalar alpha = Scalar(0.05)) {
  if (!(alpha > 0 && alpha <= Scalar(0.05))) throw ConfigError("diagnose: alpha must lie in (0, 0.05]");
  detail::check_sample(space, sample, 2);
  const Index n = sample.rows();
  const Vec<Scalar> mean = mean_element(sample);
  const RowMat<Scalar> c = sample.rowwise() - mean.transpose();
  const Mat<Scalar> y = c * space.weights().asDiagonal() * frame.psi.transpose();
  const RowMat<Scalar> r = c - y * frame.psi;
  const Vec<Scalar> rnorm = (r.array().square().rowwise() * space.weights().transpose().array()).rowwise().sum();
  const Vec<Scalar> cnorm = (c.array().square().rowwise() * space.weights().transpose().array()).rowwise().sum();

  DiagnosticReport<Scalar> rep;
  rep.n = n;
  rep.alpha = alpha;
  rep.delta_hat = rnorm.mean();
  rep.delta_variance_form = cnorm.mean() - y.array().square().sum() / Scalar(n);
  rep.s2_hat = (rnorm.array() - rep.delta_hat).square().mean();
  rep.t_stat = std::sqrt(Scalar(n)) * rep.delta_hat / std::sqrt(rep.s2_hat + Scalar(1) / Scalar(n));
  rep.critical = Scalar(normal_quantile(1.0 - double(alpha)));
  rep.reject = rep.t_stat > rep.critical;
  return rep;
}

template <typename Scalar>
DiagnosticReport<Scalar> diagnose_projection(const AmbientSpace<Scalar>& space, const BasisSet<Scalar>& basis,
                                             const RowMat<Scalar>& sample, Scalar alpha = Scalar(0.05),
                                             Scalar drop_tol = Scalar(1e-10)) {
  return diagnose_projection(space, make_frame(space, basis, drop_tol), sample, alpha);
}

// ---------------------------------------------------------------------------
// Plug-in uncertainty for eigenpairs

/// Centered scores xi_ij = <Z_i - mean, phi_j>.
template <typename Scalar>
Mat<Scalar> centered_scores(const EigenModel<Scalar>& model, const AmbientSpace<Scalar>& space,
                            const RowMat<Scalar>& sample) {
  Mat<Scalar> s = component_scores(model, space, sample);
  const Vec<Scalar> shift = inner_rows(space, model.eigenfunctions, model.mean.transpose()).col(0);
  s.rowwise() -= shift.transpose();
  return s;
}

/// SE(lambda_j) = sd(xi_j^2) / sqrt(n), from the eigenvalue influence function xi_j^2 - lambda_j.
template <typename Scalar>
Vec<Scalar> eigenvalue_se(const EigenModel<Scalar>& model, const AmbientSpace<Scalar>& space,
                          const RowMat<Scalar>& sample) {
  if (model.rank() < 1) throw ConfigError("eigenvalue_se: model has no components");
  detail::check_sample(space, sample, 2);
  const Mat<Scalar> xi = centered_scores(model, space, sample);
  const Index n = xi.rows();
  const Mat<Scalar> sq = xi.array().square().matrix();
  const Vec<Scalar> mu = sq.colwise().mean().transpose();
  const Vec<Scalar> var = (sq.rowwise() - mu.transpose()).array().square().colwise().sum().transpose() / Scalar(n - 1);
  return (var.array() / Scalar(n)).sqrt().matrix();
}

template <typename Scalar>
struct EigenfunctionCov {
  Index j = 0;
  std::vector<Index> others;  // components j' != j, in order
  Mat<Scalar> product_cov;    // empirical cov of (xi_a xi_j, xi_b xi_j) over a, b in others
  Mat<Scalar> cov;            // cov of <phi_hat_j - phi_j, phi_a>, gap-weighted and divided by n
};

/// Plug-in covariance of phi_hat_j's coordinates along the other retained
/// components, weighted by inverse spectral gaps (truncated at J).
template <typename Scalar>
EigenfunctionCov<Scalar> eigenfunction_cov(const EigenModel<Scalar>& model, const AmbientSpace<Scalar>& space,
                                           const RowMat<Scalar>& sample, Index j,
                                           Scalar gap_tol_rel = Scalar(1e-6)) {
  const Index J = model.rank();
  if (j < 0 || j >= J) throw ConfigError("eigenfunction_cov: component index out of range");
  detail::check_sample(space, sample, 2);
  const Scalar gap_tol = gap_tol_rel * model.lambdas(0);
  EigenfunctionCov<Scalar> out;
  out.j = j;
  for (Index a = 0; a < J; ++a) {
    if (a == j) continue;
    if (std::abs(model.lambdas(j) - model.lambdas(a)) <= gap_tol)
      throw NearMultiplicityError("eigenfunction_cov: eigenvalues " + std::to_string(j + 1) + " and " +
                                  std::to_string(a + 1) + " are not separated (spectral gap assumption A3)");
    out.others.push_back(a);
  }
  const Mat<Scalar> xi = centered_scores(model, space, sample);
  const Index n = xi.rows(), k = Index(out.others.size());
  Mat<Scalar> prod(n, k);
  Vec<Scalar> inv_gap(k);
  for (Index c = 0; c < k; ++c) {
    const Index a = out.others[std::size_t(c)];
    prod.col(c) = xi.col(a).cwiseProduct(xi.col(j));
    inv_gap(c) = Scalar(1) / (model.lambdas(j) - model.lambdas(a));
  }
  const Mat<Scalar> cen = prod.rowwise() - prod.colwise().mean();
  out.product_cov = cen.transpose() * cen / Scalar(n - 1);
  out.cov = inv_gap.asDiagonal() * out.product_cov * inv_gap.asDiagonal() / Scalar(n);
  return out;
}

}  // namespace hspca
