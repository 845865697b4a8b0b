#pragma once

#include "hspca/aspca.hpp"

#include <optional>
#include <vector>

namespace hspca {

/// Response, Euclidean covariates, and principal component scores of Z.
template <typename Scalar>
struct RegressionDesign {
  Vec<Scalar> y;
  Mat<Scalar> x;       // n x d
  Mat<Scalar> scores;  // n x m, uncentered <phi_hat_j, Z_i>
  std::optional<std::vector<bool>> treatment;

  Index n() const { return y.size(); }
  Index d() const { return x.cols(); }
  Index m() const { return scores.cols(); }

  void validate() const {
    if (x.rows() != n() || scores.rows() != n())
      throw ConformanceError("design: y has " + std::to_string(n()) + " rows, x " + std::to_string(x.rows()) +
                             ", scores " + std::to_string(scores.rows()));
    if (treatment && Index(treatment->size()) != n()) throw ConformanceError("design: treatment length mismatch");
    if (!y.allFinite() || !x.allFinite() || !scores.allFinite())
      throw ConformanceError("design contains non-finite entries");
  }
};

/// Least-squares coefficients theta = (alpha, beta, gamma) on U = (1, X, Z*).
template <typename Scalar>
struct ThetaFit {
  Vec<Scalar> theta;         // 1 + d + m
  Mat<Scalar> sigma_hat;     // P_n(U U^T)
  Vec<Scalar> residuals;     // n
  Scalar condition = 1;      // of sigma_hat
  Index d = 0, m = 0;

  Scalar alpha_hat() const { return theta(0); }
  auto beta_hat() const { return theta.segment(1, d); }
  auto gamma_scores() const { return theta.tail(m); }
  Index p() const { return theta.size(); }
};

/// Columns [1, X, S].
template <typename Scalar>
Mat<Scalar> regressor_matrix(const Mat<Scalar>& x, const Mat<Scalar>& scores) {
  Mat<Scalar> U(x.rows(), 1 + x.cols() + scores.cols());
  U.col(0).setOnes();
  U.middleCols(1, x.cols()) = x;
  U.rightCols(scores.cols()) = scores;
  return U;
}

inline constexpr double kConditionLimit = 1e12;

/// Weighted least squares of y on U by column-pivoted QR; sigma_hat is the
/// weighted second-moment matrix. Fails when sigma_hat is numerically singular.
template <typename Scalar>
ThetaFit<Scalar> fit_least_squares(const Mat<Scalar>& U, const Vec<Scalar>& y, const Vec<Scalar>* weights = nullptr,
                                   Index d = 0, Index m = 0) {
  const Index n = U.rows(), p = U.cols();
  if (y.size() != n) throw ConformanceError("least squares: y/U row mismatch");
  const Vec<Scalar> w = detail::normalized_weights<Scalar>(n, weights);
  const Index support = (w.array() > 0).count();
  if (support <= p)
    throw InsufficientDataError("least squares: " + std::to_string(support) + " observations for " +
                                std::to_string(p) + " coefficients");
  ThetaFit<Scalar> fit;
  fit.d = d;
  fit.m = m;
  fit.sigma_hat = U.transpose() * w.asDiagonal() * U;
  fit.sigma_hat = (fit.sigma_hat + fit.sigma_hat.transpose()) / Scalar(2);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(fit.sigma_hat, Eigen::EigenvaluesOnly);
  const Scalar lo = es.eigenvalues()(0), hi = es.eigenvalues()(p - 1);
  fit.condition = lo > 0 ? hi / lo : std::numeric_limits<Scalar>::infinity();
  if (!(fit.condition <= Scalar(kConditionLimit)))
    throw NondegeneracyError("design second-moment matrix is numerically singular (condition " +
                             std::to_string(double(fit.condition)) +
                             "); assumption (A4) Moment and nondegeneracy fails");
  const Vec<Scalar> sw = w.cwiseSqrt();
  const Mat<Scalar> A = sw.asDiagonal() * U;
  const Vec<Scalar> b = sw.asDiagonal() * y;
  fit.theta = A.colPivHouseholderQr().solve(b);
  fit.residuals = y - U * fit.theta;
  return fit;
}

template <typename Scalar>
ThetaFit<Scalar> fit_hspcr(const RegressionDesign<Scalar>& design, const Vec<Scalar>* weights = nullptr) {
  design.validate();
  return fit_least_squares(regressor_matrix(design.x, design.scores), design.y, weights, design.d(), design.m());
}

/// gamma_hat = sum_j gamma_j phi_hat_j.
template <typename Scalar>
Vec<Scalar> gamma_element(const ThetaFit<Scalar>& fit, const EigenModel<Scalar>& model) {
  if (fit.m > model.rank()) throw ConformanceError("gamma_element: fit uses more components than the model has");
  return model.eigenfunctions.topRows(fit.m).transpose() * fit.gamma_scores();
}

template <typename Scalar, typename DX, typename DS>
Scalar predict(const ThetaFit<Scalar>& fit, const Eigen::MatrixBase<DX>& x_new, const Eigen::MatrixBase<DS>& score_new) {
  if (x_new.size() != fit.d || score_new.size() != fit.m)
    throw ConformanceError("predict: expected " + std::to_string(fit.d) + " covariates and " +
                           std::to_string(fit.m) + " scores");
  Scalar v = fit.alpha_hat();
  for (Index k = 0; k < fit.d; ++k) v += fit.theta(1 + k) * x_new(k);
  for (Index k = 0; k < fit.m; ++k) v += fit.theta(1 + fit.d + k) * score_new(k);
  return v;
}

// ---------------------------------------------------------------------------
// Treatment-interaction design

template <typename Scalar>
struct CoefficientBlock {
  Scalar alpha = 0;
  Vec<Scalar> beta;
  Vec<Scalar> gamma;
};

template <typename Scalar>
struct PrecisionFit {
  ThetaFit<Scalar> joint;           // on [U, A*U]
  CoefficientBlock<Scalar> base;    // baseline response
  CoefficientBlock<Scalar> modifier;  // treatment effect and interactions
};

template <typename Scalar>
Mat<Scalar> precision_regressors(const RegressionDesign<Scalar>& design) {
  const Mat<Scalar> U = regressor_matrix(design.x, design.scores);
  Mat<Scalar> full = Mat<Scalar>::Zero(U.rows(), 2 * U.cols());
  full.leftCols(U.cols()) = U;
  for (Index i = 0; i < U.rows(); ++i)
    if ((*design.treatment)[std::size_t(i)]) full.row(i).tail(U.cols()) = U.row(i);
  return full;
}

template <typename Scalar>
PrecisionFit<Scalar> unpack_precision(ThetaFit<Scalar> joint, Index d, Index m) {
  PrecisionFit<Scalar> pf;
  const Index p = 1 + d + m;
  auto block = [&](Index off) {
    CoefficientBlock<Scalar> b;
    b.alpha = joint.theta(off);
    b.beta = joint.theta.segment(off + 1, d);
    b.gamma = joint.theta.segment(off + 1 + d, m);
    return b;
  };
  pf.base = block(0);
  pf.modifier = block(p);
  pf.joint = std::move(joint);
  return pf;
}

template <typename Scalar>
PrecisionFit<Scalar> fit_precision(const RegressionDesign<Scalar>& design, const Vec<Scalar>* weights = nullptr) {
  design.validate();
  if (!design.treatment) throw ConfigError("fit_precision: design has no treatment indicator");
  Index treated = 0;
  for (Index i = 0; i < design.n(); ++i)
    if ((*design.treatment)[std::size_t(i)] && (!weights || (*weights)(i) > 0)) ++treated;
  Index control = 0;
  for (Index i = 0; i < design.n(); ++i)
    if (!(*design.treatment)[std::size_t(i)] && (!weights || (*weights)(i) > 0)) ++control;
  if (treated == 0 || control == 0)
    throw DegenerateDesignError("fit_precision: both treatment arms must be non-empty (treated " +
                                std::to_string(treated) + ", control " + std::to_string(control) + ")");
  ThetaFit<Scalar> joint = fit_least_squares(precision_regressors(design), design.y, weights, design.d(), design.m());
  return unpack_precision(std::move(joint), design.d(), design.m());
}

// ---------------------------------------------------------------------------
// Plug-in covariance from the asymptotic linear representation

/// Per-observation influence vectors Sigma^{-1}[U_i e_i + L0_i] (n x p). The
/// correction L0 propagates eigenfunction estimation error through the
/// inverse-gap expansion truncated to the retained components; it is omitted
/// for oracle models. Expectations are empirical means evaluated at theta_hat.
/// Works for the plain design and for the treatment-interaction design.
template <typename Scalar>
Mat<Scalar> theta_influence(const ThetaFit<Scalar>& fit, const EigenModel<Scalar>& model,
                            const AmbientSpace<Scalar>& space, const RowMat<Scalar>& sample,
                            const RegressionDesign<Scalar>& design, Scalar gap_tol_rel = Scalar(1e-6)) {
  design.validate();
  const Index n = design.n(), d = design.d(), m = design.m(), q = 1 + d + m;
  const bool treat = design.treatment.has_value();
  const Index p = treat ? 2 * q : q;
  if (fit.p() != p) throw ConformanceError("plugin covariance: fit and design dimensions differ");
  if (sample.rows() != n) throw ConformanceError("plugin covariance: sample and design sizes differ");
  const Mat<Scalar> U = treat ? precision_regressors(design) : regressor_matrix(design.x, design.scores);
  const Vec<Scalar>& e = fit.residuals;
  Vec<Scalar> a = Vec<Scalar>::Zero(n);
  if (treat)
    for (Index i = 0; i < n; ++i) a(i) = (*design.treatment)[std::size_t(i)] ? 1 : 0;

  Mat<Scalar> raw = U.array().colwise() * e.array();  // n x p
  if (!model.oracle && m > 0) {
    const Index J = model.rank();
    if (m > J) throw ConformanceError("plugin covariance: design uses more components than the model has");
    const Scalar gap_tol = gap_tol_rel * model.lambdas(0);
    for (Index j = 0; j < m; ++j)
      for (Index k = 0; k < J; ++k)
        if (k != j && std::abs(model.lambdas(j) - model.lambdas(k)) <= gap_tol)
          throw NearMultiplicityError("plugin covariance: eigenvalues " + std::to_string(j + 1) + " and " +
                                      std::to_string(k + 1) + " are not separated (assumption A3)");
    const Mat<Scalar> zhat = component_scores(model, space, sample);  // n x J
    const Mat<Scalar> xi = zhat.rowwise() - zhat.colwise().mean();
    const Vec<Scalar> res_z = zhat.transpose() * e / Scalar(n);                           // E[e z_k]
    const Vec<Scalar> res_az = zhat.transpose() * a.cwiseProduct(e) / Scalar(n);         // E[A e z_k]

    // A perturbation of phi_j moves the score column(s) of component j; the
    // influence of observation i on phi_j along phi_k is c_j(i, k).
    for (Index j = 0; j < m; ++j) {
      Mat<Scalar> c = xi.array().colwise() * xi.col(j).array();
      c.rowwise() -= c.colwise().mean();
      for (Index k = 0; k < J; ++k)
        c.col(k) = k == j ? Vec<Scalar>::Zero(n) : Vec<Scalar>(c.col(k) / (model.lambdas(j) - model.lambdas(k)));
      // kappa_i: coefficient multiplying the perturbed score in observation i's fitted value
      Vec<Scalar> kappa = Vec<Scalar>::Constant(n, fit.theta(1 + d + j));
      if (treat) kappa += fit.theta(q + 1 + d + j) * a;
      Mat<Scalar> V = -(U.transpose() * kappa.asDiagonal() * zhat) / Scalar(n);  // p x J
      V.row(1 + d + j) += res_z.transpose();
      if (treat) V.row(q + 1 + d + j) += res_az.transpose();
      raw.noalias() += c * V.transpose();
    }
  }
  const Mat<Scalar> sigma_inv = fit.sigma_hat.ldlt().solve(Mat<Scalar>::Identity(p, p));
  return raw * sigma_inv;  // rows: (Sigma^{-1} v_i)^T, sigma symmetric
}

/// Estimated covariance of theta_hat: sample covariance of influence vectors / n.
template <typename Scalar>
Mat<Scalar> plugin_theta_cov(const ThetaFit<Scalar>& fit, const EigenModel<Scalar>& model,
                             const AmbientSpace<Scalar>& space, const RowMat<Scalar>& sample,
                             const RegressionDesign<Scalar>& design, Scalar gap_tol_rel = Scalar(1e-6)) {
  const Mat<Scalar> inf = theta_influence(fit, model, space, sample, design, gap_tol_rel);
  const Index n = inf.rows();
  const Mat<Scalar> cen = inf.rowwise() - inf.colwise().mean();
  return cen.transpose() * cen / Scalar(n) / Scalar(n);
}

}  // namespace hspca
