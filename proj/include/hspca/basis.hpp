#pragma once

#include "hspca/space.hpp"

#include <array>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace hspca {

/// Receives non-fatal diagnostics (e.g. dropped basis rows). Defaults to std::clog.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& msg) {
    std::clog << "warning: " << msg << '\n';
  };
  return sink;
}

/// A projection basis sampled at cell centers, one basis element per row.
template <typename Scalar = double>
struct BasisSet {
  RowMat<Scalar> functions;  // N x V
  std::string kind;          // "bspline", "tri", "custom", ...
  std::string descriptor;    // degree / knots / mesh summary
  Index dropped = 0;         // rows removed as numerically zero after masking

  Index size() const { return functions.rows(); }
};

/// Wraps explicit rows (e.g. a known family) as a basis.
template <typename Derived>
BasisSet<typename Derived::Scalar> custom_basis(const Eigen::MatrixBase<Derived>& rows,
                                                std::string descriptor = "custom") {
  BasisSet<typename Derived::Scalar> b;
  b.functions = rows;
  b.kind = "custom";
  b.descriptor = std::move(descriptor);
  return b;
}

namespace detail {
/// Zeroes rows outside the mask and removes rows whose sup-norm on the domain is below 1e-12.
template <typename Scalar>
void mask_and_prune(const AmbientSpace<Scalar>& space, BasisSet<Scalar>& basis) {
  if (space.mask())
    for (Index v = 0; v < space.size(); ++v)
      if (!space.inside(v)) basis.functions.col(v).setZero();
  std::vector<Index> keep;
  for (Index r = 0; r < basis.functions.rows(); ++r)
    if (basis.functions.row(r).cwiseAbs().maxCoeff() >= Scalar(1e-12)) keep.push_back(r);
  basis.dropped = basis.functions.rows() - Index(keep.size());
  if (basis.dropped > 0) {
    RowMat<Scalar> kept(Index(keep.size()), basis.functions.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) kept.row(Index(i)) = basis.functions.row(keep[i]);
    basis.functions = std::move(kept);
    warning_sink()(basis.kind + " basis: dropped " + std::to_string(basis.dropped) +
                   " rows with no support on the domain");
  }
  if (basis.functions.rows() == 0) throw EmptyBasisError(basis.kind + " basis: no rows remain after masking");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// B-splines

/// Clamped knot sequence: (degree+1)-fold end knots and strictly interior knots.
struct KnotVector {
  int degree = 0;
  std::vector<double> knots;

  static KnotVector uniform(int degree, int interior, double lo, double hi) {
    if (degree < 0 || interior < 0) throw ConfigError("knots: degree and interior count must be >= 0");
    if (!(hi > lo)) throw ConfigError("knots: empty range");
    KnotVector kv;
    kv.degree = degree;
    kv.knots.assign(std::size_t(degree + 1), lo);
    for (int k = 1; k <= interior; ++k) kv.knots.push_back(lo + (hi - lo) * k / (interior + 1));
    kv.knots.insert(kv.knots.end(), std::size_t(degree + 1), hi);
    kv.validate();
    return kv;
  }

  void validate() const {
    const auto p = std::size_t(degree);
    if (degree < 0 || knots.size() < 2 * (p + 1)) throw ConfigError("knots: too few knots for degree");
    for (std::size_t i = 1; i < knots.size(); ++i)
      if (knots[i] < knots[i - 1]) throw ConfigError("knots: sequence must be nondecreasing");
    const double lo = knots.front(), hi = knots.back();
    if (!(hi > lo)) throw ConfigError("knots: empty range");
    for (std::size_t i = 0; i <= p; ++i)
      if (knots[i] != lo || knots[knots.size() - 1 - i] != hi)
        throw ConfigError("knots: ends must be clamped with multiplicity degree+1");
    for (std::size_t i = p + 1; i + p + 1 < knots.size(); ++i)
      if (!(knots[i] > lo && knots[i] < hi)) throw ConfigError("knots: interior knots must lie strictly inside");
  }

  std::size_t count() const { return knots.size() - std::size_t(degree) - 1; }
};

/// Values of all B-splines of `kv` at x (Cox-de Boor triangular scheme).
/// x outside the knot range yields all zeros; the right end is closed.
inline std::vector<double> bspline_values(const KnotVector& kv, double x) {
  const int p = kv.degree;
  const auto& t = kv.knots;
  const std::size_t nb = kv.count();
  std::vector<double> out(nb, 0.0);
  if (x < t.front() || x > t.back()) return out;
  // span s: t[s] <= x < t[s+1], with the last nonempty span closed on the right
  std::size_t s = std::size_t(p);
  if (x >= t[nb]) {
    s = nb - 1;
  } else {
    while (!(x >= t[s] && x < t[s + 1])) ++s;
  }
  std::vector<double> N(std::size_t(p) + 1, 0.0), left(std::size_t(p) + 1), right(std::size_t(p) + 1);
  N[0] = 1.0;
  for (int j = 1; j <= p; ++j) {
    left[std::size_t(j)] = x - t[s + 1 - std::size_t(j)];
    right[std::size_t(j)] = t[s + std::size_t(j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[std::size_t(r) + 1] + left[std::size_t(j - r)];
      const double tmp = denom != 0.0 ? N[std::size_t(r)] / denom : 0.0;
      N[std::size_t(r)] = saved + right[std::size_t(r) + 1] * tmp;
      saved = left[std::size_t(j - r)] * tmp;
    }
    N[std::size_t(j)] = saved;
  }
  for (int r = 0; r <= p; ++r) out[s - std::size_t(p) + std::size_t(r)] = N[std::size_t(r)];
  return out;
}

/// Tensor-product B-spline basis evaluated at cell centers, uniform knots over
/// each axis range. Row index runs over per-axis function indices, last axis fastest.
template <typename Scalar>
BasisSet<Scalar> bspline_tensor_basis(const AmbientSpace<Scalar>& space, std::vector<int> degrees,
                                      std::vector<int> interior_knots) {
  const std::size_t nd = space.ndim();
  if (degrees.size() == 1) degrees.assign(nd, degrees[0]);
  if (interior_knots.size() == 1) interior_knots.assign(nd, interior_knots[0]);
  if (degrees.size() != nd || interior_knots.size() != nd)
    throw ConfigError("bspline: need one degree and one knot count per axis");

  std::vector<std::vector<std::vector<double>>> axis_vals(nd);  // [axis][cell index][function]
  std::vector<std::size_t> nfun(nd);
  std::ostringstream desc;
  for (std::size_t a = 0; a < nd; ++a) {
    if (degrees[a] < 0 || interior_knots[a] < 0)
      throw ConfigError("bspline: degree and interior knots must be nonnegative");
    if (space.dims()[a] < std::size_t(degrees[a] + 1))
      throw ConfigError("bspline: axis " + std::to_string(a) + " has " + std::to_string(space.dims()[a]) +
                        " points, degree " + std::to_string(degrees[a]) + " needs at least " +
                        std::to_string(degrees[a] + 1));
    const auto kv = KnotVector::uniform(degrees[a], interior_knots[a], 0.0, double(space.extent(a)));
    nfun[a] = kv.count();
    for (std::size_t i = 0; i < space.dims()[a]; ++i)
      axis_vals[a].push_back(bspline_values(kv, (double(i) + 0.5) * double(space.spacing()[a])));
    desc << (a ? " x " : "") << "deg" << degrees[a] << "/knots" << interior_knots[a];
  }

  const std::size_t nrows = AmbientSpace<Scalar>::count(nfun);
  BasisSet<Scalar> basis;
  basis.kind = "bspline";
  basis.descriptor = desc.str();
  basis.functions.setZero(Index(nrows), space.size());
  std::vector<std::size_t> cell(nd), fun(nd);
  for (Index v = 0; v < space.size(); ++v) {
    auto rem = std::size_t(v);
    for (std::size_t a = nd; a-- > 0;) {
      cell[a] = rem % space.dims()[a];
      rem /= space.dims()[a];
    }
    for (std::size_t r = 0; r < nrows; ++r) {
      auto rr = r;
      double val = 1.0;
      for (std::size_t a = nd; a-- > 0;) {
        fun[a] = rr % nfun[a];
        rr /= nfun[a];
        val *= axis_vals[a][cell[a]][fun[a]];
        if (val == 0.0) break;
      }
      basis.functions(Index(r), v) = Scalar(val);
    }
  }
  detail::mask_and_prune(space, basis);
  return basis;
}

// ---------------------------------------------------------------------------
// Triangulations

/// Simplicial mesh in 2D (triangles) or 3D (tetrahedra).
struct Triangulation {
  int ndim = 2;
  std::vector<std::array<double, 3>> vertices;
  std::vector<std::array<int, 4>> cells;  // first ndim+1 entries used

  std::size_t cell_size() const { return std::size_t(ndim) + 1; }

  /// Signed simplex measure times ndim! (determinant of edge vectors).
  double orientation(std::size_t c) const {
    const auto& cv = cells[c];
    const auto& v0 = vertices[std::size_t(cv[0])];
    Eigen::Matrix3d T = Eigen::Matrix3d::Identity();
    for (int k = 0; k < ndim; ++k)
      for (int a = 0; a < ndim; ++a) T(a, k) = vertices[std::size_t(cv[std::size_t(k) + 1])][std::size_t(a)] - v0[std::size_t(a)];
    return ndim == 2 ? T.topLeftCorner<2, 2>().determinant() : T.determinant();
  }

  /// Barycentric coordinates of point x in cell c (ndim+1 entries).
  std::array<double, 4> barycentric(std::size_t c, const double* x) const {
    const auto& cv = cells[c];
    const auto& v0 = vertices[std::size_t(cv[0])];
    Eigen::Matrix3d T = Eigen::Matrix3d::Identity();
    Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
    for (int a = 0; a < ndim; ++a) {
      rhs(a) = x[a] - v0[std::size_t(a)];
      for (int k = 0; k < ndim; ++k) T(a, k) = vertices[std::size_t(cv[std::size_t(k) + 1])][std::size_t(a)] - v0[std::size_t(a)];
    }
    const Eigen::Vector3d lam = T.partialPivLu().solve(rhs);
    std::array<double, 4> out{};
    double rest = 1.0;
    for (int k = 0; k < ndim; ++k) {
      out[std::size_t(k) + 1] = lam(k);
      rest -= lam(k);
    }
    out[0] = rest;
    return out;
  }

  /// Checks index ranges, positive orientation, and absence of hanging nodes
  /// (no vertex may lie in a closed cell it does not belong to).
  void validate(double tol = 1e-9) const {
    if (ndim != 2 && ndim != 3) throw MeshError("triangulation must be 2D or 3D");
    if (vertices.empty() || cells.empty()) throw MeshError("triangulation has no vertices or cells");
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (std::size_t k = 0; k < cell_size(); ++k) {
        const int id = cells[c][k];
        if (id < 0 || std::size_t(id) >= vertices.size())
          throw MeshError("cell " + std::to_string(c) + " references vertex " + std::to_string(id));
        for (std::size_t k2 = 0; k2 < k; ++k2)
          if (cells[c][k2] == id) throw MeshError("cell " + std::to_string(c) + " repeats a vertex");
      }
      if (!(orientation(c) > 0))
        throw MeshError("cell " + std::to_string(c) + " does not have positive orientation");
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (std::size_t v = 0; v < vertices.size(); ++v) {
        bool member = false;
        for (std::size_t k = 0; k < cell_size(); ++k) member = member || std::size_t(cells[c][k]) == v;
        if (member) continue;
        const auto b = barycentric(c, vertices[v].data());
        bool inside = true;
        for (std::size_t k = 0; k < cell_size(); ++k) inside = inside && b[k] >= -tol;
        if (inside)
          throw MeshError("vertex " + std::to_string(v) + " lies in cell " + std::to_string(c) +
                          " (hanging node or overlap)");
      }
    }
  }
};

/// Continuous piecewise-linear (hat function) basis: one row per mesh vertex,
/// the barycentric coordinate evaluated at each in-domain cell center.
template <typename Scalar>
BasisSet<Scalar> tri_pl_basis(const AmbientSpace<Scalar>& space, const Triangulation& mesh,
                              double tol = 1e-9) {
  if (std::size_t(mesh.ndim) != space.ndim())
    throw ConformanceError("mesh is " + std::to_string(mesh.ndim) + "D, space is " +
                           std::to_string(space.ndim()) + "D");
  mesh.validate(tol);
  BasisSet<Scalar> basis;
  basis.kind = "tri";
  basis.descriptor = std::to_string(mesh.vertices.size()) + " vertices/" + std::to_string(mesh.cells.size()) +
                     " cells";
  basis.functions.setZero(Index(mesh.vertices.size()), space.size());
  std::vector<Index> uncovered;
  for (Index v = 0; v < space.size(); ++v) {
    if (!space.inside(v)) continue;
    const auto xs = space.cell_center(v);
    double x[3] = {0, 0, 0};
    for (std::size_t a = 0; a < xs.size(); ++a) x[a] = double(xs[a]);
    bool found = false;
    for (std::size_t c = 0; c < mesh.cells.size() && !found; ++c) {
      const auto b = mesh.barycentric(c, x);
      bool inside = true;
      for (std::size_t k = 0; k < mesh.cell_size(); ++k) inside = inside && b[k] >= -tol;
      if (!inside) continue;
      for (std::size_t k = 0; k < mesh.cell_size(); ++k)
        basis.functions(Index(mesh.cells[c][k]), v) = Scalar(b[k]);
      found = true;
    }
    if (!found) uncovered.push_back(v);
  }
  if (!uncovered.empty()) {
    std::ostringstream msg;
    msg << "triangulation does not cover " << uncovered.size() << " in-domain cell centers:";
    for (std::size_t i = 0; i < uncovered.size() && i < 20; ++i) msg << ' ' << uncovered[i];
    if (uncovered.size() > 20) msg << " ...";
    throw CoverageError(msg.str());
  }
  detail::mask_and_prune(space, basis);
  return basis;
}

/// Regular triangulation of the grid's bounding box: each of nx x ny boxes split
/// into 2 triangles (2D), or nx x ny x nz boxes into 6 tetrahedra (3D, Kuhn split).
Triangulation box_triangulation(const std::vector<double>& extent, const std::vector<int>& divisions);

}  // namespace hspca
