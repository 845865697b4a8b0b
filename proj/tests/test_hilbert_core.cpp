#include "fixtures.hpp"
#include "hspca/normal.hpp"

#include <doctest.h>

using namespace hspca;

namespace {

AmbientSpace<double> flat(std::size_t v, std::vector<double> w = {}) {
  if (w.empty()) return AmbientSpace<double>::grid({v});
  Vec<double> wv = Eigen::Map<Vec<double>>(w.data(), Index(w.size()));
  return AmbientSpace<double>({v}, {1.0}, wv, std::nullopt);
}

Vec<double> vec(std::initializer_list<double> v) {
  Vec<double> out(Index(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("inner product examples") {
  const auto s = flat(2);
  CHECK(inner(s, vec({1, 0}), vec({0, 1})) == 0.0);
  CHECK(inner(s, vec({1, 0}), vec({1, 0})) == 1.0);
  const auto h = flat(2, {0.5, 0.5});
  CHECK(inner(h, vec({2, 0}), vec({2, 2})) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(inner(s, vec({1, 0, 0}), vec({1, 0})), ConformanceError);
}

TEST_CASE("grid weights are the cell measure") {
  const auto s = AmbientSpace<double>::grid({3, 4}, {0.5, 0.25});
  CHECK(s.size() == 12);
  CHECK(s.weights().isConstant(0.125));
  const auto c = s.cell_center(5);  // (1, 1)
  CHECK(c[0] == doctest::Approx(0.75));
  CHECK(c[1] == doctest::Approx(0.375));
  CHECK_THROWS_AS(AmbientSpace<double>::grid({3}, {0.0}), ConfigError);
  CHECK_THROWS_AS(AmbientSpace<double>::grid({0}), ConfigError);
}

TEST_CASE("gram examples") {
  const auto s = flat(2);
  RowMat<double> ortho = RowMat<double>::Identity(2, 2);
  CHECK(gram(s, ortho).isApprox(Mat<double>::Identity(2, 2)));
  RowMat<double> b(2, 2);
  b << 1, 0, 1, 1;
  Mat<double> expect(2, 2);
  expect << 1, 1, 1, 2;
  CHECK((gram(s, b) - expect).norm() == 0.0);
  RowMat<double> zero = RowMat<double>::Zero(1, 2);
  CHECK(gram(s, zero)(0, 0) == 0.0);
}

TEST_CASE("whiten examples") {
  const auto w1 = whiten(Mat<double>(Mat<double>::Identity(2, 2)));
  CHECK(w1.rank == 2);
  CHECK((w1.factor.cwiseAbs() - Mat<double>::Identity(2, 2)).norm() < 1e-14);

  Mat<double> L(2, 2);
  L << 4, 0, 0, 1;
  const auto w2 = whiten(L);
  CHECK(w2.rank == 2);
  Mat<double> expect(2, 2);
  expect << 0.5, 0, 0, 1;
  CHECK((w2.factor.cwiseAbs() - expect).norm() < 1e-14);

  Mat<double> R(2, 2);
  R << 1, 1, 1, 1;
  const auto w3 = whiten(R, 1e-10);
  CHECK(w3.rank == 1);
  CHECK(w3.eigenvalues(0) == doctest::Approx(2.0));

  CHECK_THROWS_AS(whiten(Mat<double>(Mat<double>::Zero(2, 2))), EmptyBasisError);
  CHECK_THROWS_AS(whiten(L, 0.0), ConfigError);
}

TEST_CASE("whitener rows follow descending eigenvalues with positive dominant entries") {
  std::mt19937_64 rng(3);
  const Mat<double> A = fixtures::gaussian_matrix(5, 5, rng);
  const Mat<double> L = A * A.transpose();
  const auto w = whiten(L);
  for (Index k = 1; k < w.rank; ++k) CHECK(w.eigenvalues(k) <= w.eigenvalues(k - 1));
  for (Index k = 0; k < w.rank; ++k) {
    Index arg;
    w.factor.row(k).cwiseAbs().maxCoeff(&arg);
    CHECK(w.factor(k, arg) > 0);
  }
}

TEST_CASE("mean element examples") {
  RowMat<double> a(2, 2);
  a << 0, 0, 2, 2;
  CHECK(mean_element(a).isApprox(vec({1, 1})));
  RowMat<double> one(1, 3);
  one << 4, 5, 6;
  CHECK(mean_element(one) == vec({4, 5, 6}));
  RowMat<double> b(3, 2);
  b << 1, 3, 3, 1, 2, 2;
  CHECK((mean_element(b) - vec({2, 2})).norm() < 1e-15);
  CHECK_THROWS_AS(mean_element(RowMat<double>(0, 2)), InsufficientDataError);
}

TEST_CASE("project_scores examples") {
  std::mt19937_64 rng(11);
  const auto s = flat(4);
  const RowMat<double> sample = fixtures::gaussian_rows(5, 4, rng);
  const Vec<double> mean = mean_element(sample);
  const RowMat<double> id = RowMat<double>::Identity(4, 4);
  const Mat<double> centered = sample.rowwise() - mean.transpose();
  CHECK((project_scores(s, id, sample, mean) - centered).norm() < 1e-14);

  RowMat<double> same(3, 4);
  same.rowwise() = mean.transpose();
  CHECK(project_scores(s, id, same, mean).norm() < 1e-14);

  const auto w = flat(3, {0.2, 0.7, 1.3});
  const RowMat<double> z = fixtures::gaussian_rows(2, 3, rng);
  const RowMat<double> psi = fixtures::gaussian_rows(1, 3, rng);
  const Vec<double> c = Vec<double>::Zero(3);
  const Mat<double> got = project_scores(w, psi, z, c);
  for (Index i = 0; i < 2; ++i) {
    double loop = 0;
    for (Index v = 0; v < 3; ++v) loop += w.weights()(v) * psi(0, v) * z(i, v);
    CHECK(got(i, 0) == doctest::Approx(loop).epsilon(1e-13));
  }
}

TEST_CASE("property: inner product is symmetric") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    std::uniform_real_distribution<double> u(0.01, 2);
    std::vector<double> w(7);
    for (auto& x : w) x = u(rng);
    const auto s = flat(7, w);
    const RowMat<double> ab = fixtures::gaussian_rows(2, 7, rng);
    CHECK(inner(s, ab.row(0), ab.row(1)) == inner(s, ab.row(1), ab.row(0)));
  }
}

TEST_CASE("property: whitener identity on random PSD Gram matrices") {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 30; ++t) {
    std::uniform_int_distribution<int> dim(2, 12);
    const Index N = dim(rng), k = std::max<Index>(1, N - t % 3);
    const Mat<double> A = fixtures::gaussian_matrix(N, k, rng);
    const Mat<double> L = A * A.transpose();
    const auto w = whiten(L);
    CHECK(w.rank == k);
    const Mat<double> I = w.factor * L * w.factor.transpose();
    CHECK((I - Mat<double>::Identity(w.rank, w.rank)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("property: frame scores equal raw scores times factor transpose") {
  std::mt19937_64 rng(9);
  const auto s = AmbientSpace<double>::grid({6, 5}, {0.2, 0.3});
  for (int t = 0; t < 10; ++t) {
    const RowMat<double> raw = fixtures::gaussian_rows(6, 30, rng);
    const RowMat<double> sample = fixtures::gaussian_rows(8, 30, rng);
    const auto w = whiten(gram(s, raw));
    const RowMat<double> psi = w.factor * raw;
    const Vec<double> mean = mean_element(sample);
    const Mat<double> a = project_scores(s, psi, sample, mean);
    const Mat<double> b = project_scores(s, raw, sample, mean) * w.factor.transpose();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("masking") {
  const auto base = AmbientSpace<double>::grid({4, 4});
  const auto all = mask_space(base, std::vector<bool>(16, true));
  CHECK(all.weights() == base.weights());

  std::vector<bool> half(16, false);
  for (int v = 0; v < 8; ++v) half[std::size_t(v)] = true;
  const auto h = mask_space(base, half);
  for (Index v = 0; v < 16; ++v) CHECK(h.weights()(v) == (v < 8 ? 1.0 : 0.0));

  CHECK_THROWS_AS(mask_space(base, std::vector<bool>(16, false)), EmptyDomainError);
  CHECK_THROWS_AS(mask_space(base, std::vector<bool>(3, true)), ConformanceError);
}

TEST_CASE("circular mask: inner products equal the subsetted dot product") {
  const auto base = AmbientSpace<double>::grid({20, 20}, {0.05, 0.05});
  std::vector<bool> disk(400);
  for (Index v = 0; v < 400; ++v) {
    const auto c = base.cell_center(v);
    disk[std::size_t(v)] = std::hypot(c[0] - 0.5, c[1] - 0.5) < 0.4;
  }
  const auto s = mask_space(base, disk);
  std::mt19937_64 rng(13);
  const RowMat<double> ab = fixtures::gaussian_rows(2, 400, rng);
  double sub = 0;
  for (Index v = 0; v < 400; ++v)
    if (disk[std::size_t(v)]) sub += 0.0025 * ab(0, v) * ab(1, v);
  CHECK(inner(s, ab.row(0), ab.row(1)) == doctest::Approx(sub).epsilon(1e-12));
}

TEST_CASE("property: values on masked cells do not affect inner products") {
  const auto base = AmbientSpace<double>::grid({5, 5});
  std::vector<bool> m(25);
  for (std::size_t v = 0; v < 25; ++v) m[v] = v % 3 != 0;
  const auto s = mask_space(base, m);
  std::mt19937_64 rng(17);
  for (int t = 0; t < 10; ++t) {
    RowMat<double> ab = fixtures::gaussian_rows(2, 25, rng);
    const double before = inner(s, ab.row(0), ab.row(1));
    for (Index v = 0; v < 25; ++v)
      if (!m[std::size_t(v)]) ab(0, v) = 0;
    CHECK(inner(s, ab.row(0), ab.row(1)) == before);
  }
}

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(normal_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(1e-6) == doctest::Approx(-4.753424308822899).epsilon(1e-10));
  for (double p : {1e-8, 0.001, 0.02, 0.3, 0.7, 0.99, 0.999999})
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-12));
  CHECK_THROWS_AS(normal_quantile(1.5), ConfigError);
}
