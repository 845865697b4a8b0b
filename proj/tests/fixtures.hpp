#pragma once

#include "hspca/aspca.hpp"
#include "hspca/basis.hpp"
#include "hspca/space.hpp"

#include <random>

namespace fixtures {

using namespace hspca;

inline RowMat<double> gaussian_rows(Index rows, Index cols, std::mt19937_64& rng, double sd = 1) {
  std::normal_distribution<double> g(0, sd);
  RowMat<double> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

inline Mat<double> gaussian_matrix(Index rows, Index cols, std::mt19937_64& rng) {
  return gaussian_rows(rows, cols, rng);
}

/// Sample with a spread spectrum so eigenvalues are well separated.
inline RowMat<double> spread_sample(Index n, Index v, std::mt19937_64& rng) {
  RowMat<double> s = gaussian_rows(n, v, rng);
  for (Index c = 0; c < v; ++c) s.col(c) *= 1.0 + 0.5 * double(c);
  return s;
}

/// Full standard basis on a space (identity rows).
inline BasisSet<double> standard_basis(const AmbientSpace<double>& space) {
  return custom_basis(RowMat<double>(RowMat<double>::Identity(space.size(), space.size())), "standard");
}

/// Dense oracle: eigenpairs of the weighted sample covariance operator, by
/// diagonalizing W^{1/2} C W^{1/2} with C the centered empirical covariance.
struct DenseEig {
  Vec<double> vals;
  RowMat<double> funcs;  // rows, orthonormal under the weights
};

inline DenseEig dense_covariance_eig(const AmbientSpace<double>& space, const RowMat<double>& sample) {
  const Index n = sample.rows();
  const Vec<double> mean = sample.colwise().mean().transpose();
  Mat<double> C = Mat<double>::Zero(sample.cols(), sample.cols());
  for (Index i = 0; i < n; ++i) {
    const Vec<double> c = sample.row(i).transpose() - mean;
    C += c * c.transpose();
  }
  C /= double(n);
  const Vec<double> sw = space.weights().cwiseSqrt();
  const Mat<double> A = sw.asDiagonal() * C * sw.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat<double>> es(A);
  DenseEig out;
  out.vals = es.eigenvalues().reverse();
  const Mat<double> vecs = es.eigenvectors().rowwise().reverse();
  out.funcs = (sw.cwiseInverse().asDiagonal() * vecs).transpose();
  return out;
}

}  // namespace fixtures
