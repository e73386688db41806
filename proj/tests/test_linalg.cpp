#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "s2o/error.hpp"
#include "s2o/linalg.hpp"

using namespace s2o;
using namespace s2o::linalg;

namespace {

double eig_product(const Matrix& m) {
  const auto e = sym_eig(m);
  return std::accumulate(e.eigenvalues.begin(), e.eigenvalues.end(), 1.0, std::multiplies<>());
}

Matrix random_pd(std::size_t n, Rng& rng) {
  const Matrix g = random_gaussian(n, n, rng);
  Matrix m = matmul_nt(g, g);
  for (std::size_t i = 0; i < n; ++i) m(i, i) += 0.5;
  return m;
}

}  // namespace

TEST_CASE("sym_eig: diagonal and equicorrelation closed forms") {
  const auto d = sym_eig(Matrix{{3, 0}, {0, 1}});
  CHECK(d.eigenvalues == std::vector<double>{3.0, 1.0});

  const auto e = sym_eig(equicorrelation(3, 0.5));
  CHECK(e.eigenvalues[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(e.eigenvalues[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(e.eigenvalues[2] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("sym_eig: trace identity and reconstruction") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_symmetric(8, rng);
    const auto e = sym_eig(m, true);
    const double sum = std::accumulate(e.eigenvalues.begin(), e.eigenvalues.end(), 0.0);
    CHECK(std::abs(sum - m.trace()) < 1e-9);
    CHECK(std::is_sorted(e.eigenvalues.rbegin(), e.eigenvalues.rend()));

    const Matrix& v = *e.eigenvectors;
    Matrix vl = v;
    for (std::size_t i = 0; i < 8; ++i)
      for (std::size_t j = 0; j < 8; ++j) vl(i, j) *= e.eigenvalues[j];
    const Matrix recon = matmul_nt(vl, v);
    CHECK(std::sqrt(frobenius_sq(recon - m)) <= 1e-10 * std::sqrt(frobenius_sq(m)));
    CHECK(max_abs_diff(matmul_tn(v, v), Matrix::identity(8)) < 1e-12);
  }
}

TEST_CASE("sym_eig: rejects non-square and asymmetric input") {
  CHECK_THROWS_AS(sym_eig(Matrix(2, 3)), Error);
  try {
    sym_eig(Matrix{{1, 2}, {0, 1}});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidShape);
  }
  // Asymmetry below the tolerance is accepted and symmetrized.
  CHECK_NOTHROW(sym_eig(Matrix{{1, 0.5}, {0.5 + 1e-12, 1}}));
}

TEST_CASE("sym_eig: PSD slack is clamped to zero") {
  // Rank-one PSD matrix: the zero eigenvalues come out as tiny negatives or zeros.
  const Matrix v{{1.0, 2.0, 3.0}};
  const auto e = sym_eig(matmul_tn(v, v));
  for (double lam : e.eigenvalues) CHECK(lam >= 0.0);
  CHECK(e.max() == doctest::Approx(14.0));
}

TEST_CASE("spectral_norm") {
  CHECK(spectral_norm(Matrix{{3, 0}, {0, 1}}) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(spectral_norm(Matrix{{1, 0, 0}, {0, 2, 0}}) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(spectral_norm(Matrix(4, 5)) == 0.0);
  // All-ones start vector orthogonal to the top singular direction.
  CHECK(spectral_norm(Matrix{{1, -1}, {-1, 1}}) == doctest::Approx(2.0).epsilon(1e-12));

  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = random_gaussian(16, 16, rng);
    const double oracle = std::sqrt(sym_eig(matmul_tn(m, m)).max());
    CHECK(std::abs(spectral_norm(m) - oracle) <= 1e-7 * oracle);
  }
}

TEST_CASE("frobenius_sq") {
  CHECK(frobenius_sq(Matrix::identity(3)) == 3.0);
  CHECK(frobenius_sq(Matrix{{1, 2}, {3, 4}}) == 30.0);
  CHECK(frobenius_sq(equicorrelation(9, 0.3)) == doctest::Approx(15.48).epsilon(1e-12));
}

TEST_CASE("logdet_psd and inverse_psd") {
  CHECK(logdet_psd(Matrix::identity(4)) == 0.0);
  CHECK(logdet_psd(2.0 * Matrix::identity(3)) == doctest::Approx(3.0 * std::log(2.0)));
  CHECK(inverse_psd(Matrix{{4, 0}, {0, 1}}) == Matrix{{0.25, 0}, {0, 1}});
  CHECK(inverse_psd(Matrix::identity(5)) == Matrix::identity(5));

  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m6 = random_pd(6, rng);
    const auto e = sym_eig(m6);
    double oracle = 0.0;
    for (double lam : e.eigenvalues) oracle += std::log(lam);
    CHECK(std::abs(logdet_psd(m6) - oracle) < 1e-9);

    const Matrix m8 = random_pd(8, rng);
    const Matrix residual = matmul(m8, inverse_psd(m8)) - Matrix::identity(8);
    CHECK(std::sqrt(frobenius_sq(residual)) < 1e-8);
  }

  try {
    logdet_psd(Matrix{{1, 2}, {2, 1}});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NotPositiveDefinite);
  }
  CHECK_THROWS_AS(inverse_psd(Matrix(3, 3)), Error);
}

TEST_CASE("kronecker") {
  CHECK(kronecker(Matrix::identity(2), Matrix{{5}}) == Matrix{{5, 0}, {0, 5}});
  CHECK(kronecker(Matrix{{1, 2}}, Matrix{{0, 1}}) == Matrix{{0, 1, 0, 2}});

  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_gaussian(3, 3, rng);
    const Matrix b = random_gaussian(2, 2, rng);
    const double lhs = spectral_norm(kronecker(a, b));
    const double rhs = spectral_norm(a) * spectral_norm(b);
    CHECK(std::abs(lhs - rhs) <= 1e-8 * rhs);
  }

  try {
    kronecker(Matrix(1 << 14, 1), Matrix(1 << 13, 1));
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TooLarge);
  }
}

TEST_CASE("normalize_to_correlation") {
  CHECK(normalize_to_correlation(Matrix{{4, 1}, {1, 1}}) == Matrix{{1, 0.5}, {0.5, 1}});
  const std::vector<double> d{2.0, 7.0, 0.1};
  CHECK(normalize_to_correlation(Matrix::diagonal(d)) == Matrix::identity(3));

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix c = normalize_to_correlation(random_pd(5, rng));
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(c(i, i) == 1.0);
      for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(c(i, j)) <= 1.0);
    }
    CHECK(normalize_to_correlation(c) == c);
  }

  try {
    normalize_to_correlation(Matrix{{1, 0}, {0, 0}});
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DegenerateDiagonal);
  }
}

TEST_CASE("det_lower_bound: closed forms and errors") {
  CHECK(det_bound_exponent(0.5, 2.0, 9) == doctest::Approx(6.0).epsilon(1e-14));
  CHECK(det_lower_bound(0.5, 2.0, 9) == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(det_lower_bound(1.0, 1.0, 7) == 1.0);
  CHECK(det_lower_bound(1.0 + 1e-15, 1.0 - 1e-15, 4) == 1.0);

  // Equicorrelation: the bound is attained.
  for (double r : {0.1, 0.4, 0.8}) {
    const double d = 6.0;
    const double exact = std::pow(1.0 - r, d - 1.0) * (1.0 + (d - 1.0) * r);
    CHECK(det_lower_bound(1.0 - r, 1.0 + (d - 1.0) * r, 6) == doctest::Approx(exact).epsilon(1e-12));
  }

  for (auto [lo, hi] : {std::pair{0.0, 2.0}, {1.5, 2.0}, {0.5, 0.9}, {-0.1, 1.0}}) {
    try {
      det_lower_bound(lo, hi, 4);
      FAIL("expected throw");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidEigenRange);
    }
  }
}

TEST_CASE("det_lower_bound never exceeds the determinant of a convex combination") {
  Rng rng(2024);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Matrix a = random_correlation(6, rng);
    const Matrix b = random_correlation(6, rng);
    const double q = rng.uniform();
    const Matrix mix = q * a + (1.0 - q) * b;
    const auto ea = sym_eig(a);
    const auto eb = sym_eig(b);
    const double lam_max = std::max(ea.max(), eb.max());
    const double lam_min = std::min(ea.min(), eb.min());
    if (eig_product(mix) < det_lower_bound(lam_min, lam_max, 6) * (1.0 - 1e-12)) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("matrix lemmas: Weyl subadditivity and convex bracketing") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
    const Matrix a = random_symmetric(n, rng);
    const Matrix b = random_symmetric(n, rng);
    CHECK(sym_eig(a + b).max() <= sym_eig(a).max() + sym_eig(b).max() + 1e-10);

    const Matrix pa = random_correlation(n, rng);
    const Matrix pb = random_correlation(n, rng);
    const double q = rng.uniform();
    const double lo = std::min(sym_eig(pa).min(), sym_eig(pb).min());
    CHECK(sym_eig(q * pa + (1.0 - q) * pb).min() >= lo - 1e-10);
  }
}

TEST_CASE("equicorrelation eigenvalues match the closed form") {
  for (std::size_t d : {2u, 5u, 9u}) {
    for (double r : {-0.1, 0.0, 0.3, 0.9}) {
      if (r <= -1.0 / static_cast<double>(d - 1)) continue;
      const auto e = sym_eig(equicorrelation(d, r));
      const double big = 1.0 + static_cast<double>(d - 1) * r;
      const double small = 1.0 - r;
      std::vector<double> expected(d - 1, small);
      expected.push_back(big);
      std::sort(expected.rbegin(), expected.rend());
      for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(e.eigenvalues[i] - expected[i]) < 1e-9);
    }
  }
}

TEST_CASE("Matrix construction rejects non-finite entries") {
  CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1.0, std::nan("")}), Error);
  CHECK_THROWS_AS(Matrix(1, 2, std::vector<double>{1.0}), Error);
  CHECK_THROWS_AS((Matrix{{1.0, INFINITY}}), Error);
}
