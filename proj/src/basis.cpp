#include "hspca/basis.hpp"

#include <algorithm>
#include <numeric>

namespace hspca {

Triangulation box_triangulation(const std::vector<double>& extent, const std::vector<int>& divisions) {
  const std::size_t nd = extent.size();
  if ((nd != 2 && nd != 3) || divisions.size() != nd)
    throw MeshError("box_triangulation: need 2 or 3 axes with one division count each");
  for (std::size_t a = 0; a < nd; ++a)
    if (!(extent[a] > 0) || divisions[a] < 1) throw MeshError("box_triangulation: extents and divisions must be positive");

  Triangulation t;
  t.ndim = int(nd);
  std::vector<int> nv(nd);
  for (std::size_t a = 0; a < nd; ++a) nv[a] = divisions[a] + 1;
  const int nz = nd == 3 ? nv[2] : 1;
  for (int i = 0; i < nv[0]; ++i)
    for (int j = 0; j < nv[1]; ++j)
      for (int k = 0; k < nz; ++k) {
        std::array<double, 3> p{extent[0] * i / divisions[0], extent[1] * j / divisions[1], 0.0};
        if (nd == 3) p[2] = extent[2] * k / divisions[2];
        t.vertices.push_back(p);
      }
  auto id = [&](int i, int j, int k) { return (i * nv[1] + j) * nz + k; };

  if (nd == 2) {
    for (int i = 0; i < divisions[0]; ++i)
      for (int j = 0; j < divisions[1]; ++j) {
        t.cells.push_back({id(i, j, 0), id(i + 1, j, 0), id(i + 1, j + 1, 0), 0});
        t.cells.push_back({id(i, j, 0), id(i + 1, j + 1, 0), id(i, j + 1, 0), 0});
      }
    return t;
  }
  // Kuhn split: one tetrahedron per axis permutation, walking corner to corner.
  std::array<int, 3> perm{0, 1, 2};
  std::vector<std::array<int, 3>> perms;
  do perms.push_back(perm);
  while (std::next_permutation(perm.begin(), perm.end()));
  for (int i = 0; i < divisions[0]; ++i)
    for (int j = 0; j < divisions[1]; ++j)
      for (int k = 0; k < divisions[2]; ++k)
        for (const auto& p : perms) {
          std::array<int, 3> c{i, j, k};
          std::array<int, 4> cell{};
          cell[0] = id(c[0], c[1], c[2]);
          for (int s = 0; s < 3; ++s) {
            ++c[std::size_t(p[std::size_t(s)])];
            cell[std::size_t(s) + 1] = id(c[0], c[1], c[2]);
          }
          t.cells.push_back(cell);
          if (t.orientation(t.cells.size() - 1) < 0) std::swap(t.cells.back()[1], t.cells.back()[2]);
        }
  return t;
}

}  // namespace hspca
