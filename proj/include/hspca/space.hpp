#pragma once

#include "hspca/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

namespace hspca {

/// Discretized Hilbert space: a rectangular grid with a quadrature weight per
/// cell. The inner product is <a, b> = sum_v w_v a_v b_v. Cells outside the
/// optional mask carry weight exactly zero.
template <typename Scalar = double>
class AmbientSpace {
 public:
  /// Uniform grid with cell measure as weights. `spacing` defaults to 1 per axis.
  static AmbientSpace grid(std::vector<std::size_t> dims, std::vector<Scalar> spacing = {}) {
    if (spacing.empty()) spacing.assign(dims.size(), Scalar(1));
    if (spacing.size() != dims.size())
      throw ConfigError("grid: spacing has " + std::to_string(spacing.size()) +
                        " entries for " + std::to_string(dims.size()) + " axes");
    Scalar cell = 1;
    for (Scalar h : spacing) {
      if (!(h > 0)) throw ConfigError("grid: spacing must be positive");
      cell *= h;
    }
    const std::size_t v = count(dims);
    return AmbientSpace(std::move(dims), std::move(spacing), Vec<Scalar>::Constant(Index(v), cell),
                        std::nullopt);
  }

  AmbientSpace(std::vector<std::size_t> dims, std::vector<Scalar> spacing, Vec<Scalar> weights,
               std::optional<std::vector<bool>> mask)
      : dims_(std::move(dims)),
        spacing_(std::move(spacing)),
        weights_(std::move(weights)),
        mask_(std::move(mask)) {
    if (dims_.empty()) throw ConfigError("space needs at least one axis");
    for (auto d : dims_)
      if (d == 0) throw ConfigError("grid extents must be positive");
    if (spacing_.size() != dims_.size()) throw ConfigError("spacing/dims length mismatch");
    const std::size_t v = count(dims_);
    if (std::size_t(weights_.size()) != v)
      throw ConfigError("weights: expected " + std::to_string(v) + " entries, got " +
                        std::to_string(weights_.size()));
    if (!weights_.allFinite() || (weights_.array() < 0).any())
      throw ConfigError("weights must be finite and nonnegative");
    if (mask_) {
      if (mask_->size() != v) throw ConfigError("mask length does not match cell count");
      for (std::size_t i = 0; i < v; ++i)
        if (!(*mask_)[i]) weights_(Index(i)) = 0;
    }
    if (!(weights_.array() > 0).any()) throw EmptyDomainError("space has no cell with positive weight");
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  const std::vector<Scalar>& spacing() const { return spacing_; }
  const Vec<Scalar>& weights() const { return weights_; }
  const std::optional<std::vector<bool>>& mask() const { return mask_; }
  std::size_t ndim() const { return dims_.size(); }
  Index size() const { return weights_.size(); }

  bool inside(Index v) const { return !mask_ || (*mask_)[std::size_t(v)]; }

  /// Physical coordinates of the center of cell `v` (row-major, last axis fastest).
  std::vector<Scalar> cell_center(Index v) const {
    std::vector<Scalar> x(dims_.size());
    auto rem = std::size_t(v);
    for (std::size_t a = dims_.size(); a-- > 0;) {
      const std::size_t i = rem % dims_[a];
      rem /= dims_[a];
      x[a] = (Scalar(i) + Scalar(0.5)) * spacing_[a];
    }
    return x;
  }

  /// Axis length of the grid's bounding box.
  Scalar extent(std::size_t axis) const { return Scalar(dims_[axis]) * spacing_[axis]; }

  static std::size_t count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t(1), std::multiplies<>());
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<Scalar> spacing_;
  Vec<Scalar> weights_;
  std::optional<std::vector<bool>> mask_;
};

/// Restricts a space to the cells where `mask` is true.
template <typename Scalar>
AmbientSpace<Scalar> mask_space(const AmbientSpace<Scalar>& space, const std::vector<bool>& mask) {
  if (Index(mask.size()) != space.size())
    throw ConformanceError("mask has " + std::to_string(mask.size()) + " cells, space has " +
                           std::to_string(space.size()));
  std::vector<bool> combined(mask.size());
  bool any = false;
  for (std::size_t v = 0; v < mask.size(); ++v) {
    combined[v] = mask[v] && space.inside(Index(v));
    any = any || combined[v];
  }
  if (!any) throw EmptyDomainError("mask excludes every cell");
  return AmbientSpace<Scalar>(space.dims(), space.spacing(), space.weights(), std::move(combined));
}

namespace detail {
template <typename Scalar>
void check_cols(const AmbientSpace<Scalar>& space, Index cols, const char* what) {
  if (cols != space.size())
    throw ConformanceError(std::string(what) + ": length " + std::to_string(cols) +
                           " does not match space size " + std::to_string(space.size()));
}
}  // namespace detail

template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar inner(const AmbientSpace<Scalar>& space, const Eigen::MatrixBase<DerivedA>& a,
             const Eigen::MatrixBase<DerivedB>& b) {
  detail::check_cols(space, a.size(), "inner");
  detail::check_cols(space, b.size(), "inner");
  Scalar s = 0;
  const auto& w = space.weights();
  for (Index v = 0; v < w.size(); ++v) s += w(v) * (a(v) * b(v));
  return s;
}

template <typename Scalar, typename Derived>
Scalar squared_norm(const AmbientSpace<Scalar>& space, const Eigen::MatrixBase<Derived>& a) {
  return inner(space, a, a);
}

/// Pairwise inner products of the rows of `a` with the rows of `b` (rows(a) x rows(b)).
template <typename Scalar, typename DerivedA, typename DerivedB>
Mat<Scalar> inner_rows(const AmbientSpace<Scalar>& space, const Eigen::MatrixBase<DerivedA>& a,
                       const Eigen::MatrixBase<DerivedB>& b) {
  detail::check_cols(space, a.cols(), "inner_rows");
  detail::check_cols(space, b.cols(), "inner_rows");
  return a * space.weights().asDiagonal() * b.transpose();
}

/// Gram matrix L of a set of functions stored as rows.
template <typename Scalar, typename Derived>
Mat<Scalar> gram(const AmbientSpace<Scalar>& space, const Eigen::MatrixBase<Derived>& functions) {
  Mat<Scalar> L = inner_rows(space, functions, functions);
  return (L + L.transpose()) / Scalar(2);
}

/// Orthonormalizing factor Lambda^{-1/2} Gamma^T restricted to Gram eigenvalues
/// above drop_tol * (largest eigenvalue). Rows follow descending eigenvalue;
/// each eigenvector's largest-magnitude entry is positive.
template <typename Scalar>
struct Whitener {
  Mat<Scalar> factor;          // rank x N
  Vec<Scalar> eigenvalues;     // kept Gram eigenvalues, descending
  Index rank = 0;
  Scalar drop_tol = Scalar(1e-10);
};

namespace detail {
/// Flips each column so its largest-magnitude entry is positive (first on ties).
template <typename Scalar>
void fix_column_signs(Mat<Scalar>& v) {
  for (Index c = 0; c < v.cols(); ++c) {
    Index arg = 0;
    Scalar best = -1;
    for (Index r = 0; r < v.rows(); ++r) {
      const Scalar a = std::abs(v(r, c));
      if (a > best) {
        best = a;
        arg = r;
      }
    }
    if (v(arg, c) < 0) v.col(c) = -v.col(c);
  }
}

/// Symmetric eigendecomposition with eigenvalues in descending order.
template <typename Scalar, typename Derived>
std::pair<Vec<Scalar>, Mat<Scalar>> descending_eig(const Eigen::MatrixBase<Derived>& sym) {
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(sym);
  if (es.info() != Eigen::Success) throw Error("symmetric eigensolver failed to converge", true);
  const Index n = es.eigenvalues().size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return es.eigenvalues()(a) > es.eigenvalues()(b); });
  Vec<Scalar> vals(n);
  Mat<Scalar> vecs(n, n);
  for (Index k = 0; k < n; ++k) {
    vals(k) = es.eigenvalues()(order[std::size_t(k)]);
    vecs.col(k) = es.eigenvectors().col(order[std::size_t(k)]);
  }
  return {std::move(vals), std::move(vecs)};
}
}  // namespace detail

template <typename Derived>
Whitener<typename Derived::Scalar> whiten(const Eigen::MatrixBase<Derived>& gram_matrix,
                                          typename Derived::Scalar drop_tol = 1e-10) {
  using Scalar = typename Derived::Scalar;
  if (gram_matrix.rows() != gram_matrix.cols() || gram_matrix.rows() == 0)
    throw ConformanceError("whiten: Gram matrix must be square and non-empty, got " +
                           shape_str(gram_matrix.rows(), gram_matrix.cols()));
  if (!(drop_tol > 0 && drop_tol < 1)) throw ConfigError("whiten: drop_tol must lie in (0, 1)");
  auto [vals, vecs] = detail::descending_eig<Scalar>(gram_matrix);
  const Scalar top = vals(0);
  Index keep = 0;
  if (top > 0)
    while (keep < vals.size() && vals(keep) > drop_tol * top) ++keep;
  if (keep == 0) throw EmptyBasisError("whiten: every Gram eigenvalue is below the drop threshold");

  Mat<Scalar> gamma = vecs.leftCols(keep);
  detail::fix_column_signs(gamma);
  Whitener<Scalar> w;
  w.eigenvalues = vals.head(keep);
  w.factor = w.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() * gamma.transpose();
  w.rank = keep;
  w.drop_tol = drop_tol;
  return w;
}

template <typename Derived>
Vec<typename Derived::Scalar> mean_element(const Eigen::MatrixBase<Derived>& sample) {
  if (sample.rows() == 0) throw InsufficientDataError("mean_element: empty sample");
  return sample.colwise().mean().transpose();
}

/// Coefficients <psi_l, Z_i - center> of the centered sample against a set of
/// functions (n x N).
template <typename Scalar, typename DerivedB, typename DerivedS>
Mat<Scalar> project_scores(const AmbientSpace<Scalar>& space,
                           const Eigen::MatrixBase<DerivedB>& functions,
                           const Eigen::MatrixBase<DerivedS>& sample, const Vec<Scalar>& center) {
  detail::check_cols(space, functions.cols(), "project_scores(basis)");
  detail::check_cols(space, sample.cols(), "project_scores(sample)");
  detail::check_cols(space, center.size(), "project_scores(center)");
  Mat<Scalar> raw = sample * space.weights().asDiagonal() * functions.transpose();
  const Vec<Scalar> shift = functions * space.weights().asDiagonal() * center;
  raw.rowwise() -= shift.transpose();
  return raw;
}

}  // namespace hspca
