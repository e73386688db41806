#include "s2o/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "s2o/error.hpp"

namespace s2o::linalg {

namespace {

constexpr int kMaxJacobiSweeps = 100;
constexpr int kMaxPowerIterations = 10000;
constexpr double kPowerTol = 1e-13;
constexpr std::size_t kMaxKroneckerEntries = std::size_t{1} << 26;
// Eigenvalue bracketing slack for det_lower_bound; computed spectra of unit-diagonal
// matrices land within a few ulps of 1 in the degenerate case.
constexpr double kBracketSlack = 1e-12;

Matrix checked_symmetric(const Matrix& m, const char* op) {
  if (!m.is_square()) {
    throw Error(ErrorKind::InvalidShape, std::string(op) + ": matrix is " + std::to_string(m.rows()) +
                                             "x" + std::to_string(m.cols()));
  }
  if (asymmetry(m) > kTolSym) {
    throw Error(ErrorKind::InvalidShape, std::string(op) + ": matrix is not symmetric");
  }
  return symmetrize(m);
}

double off_diagonal_sq(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = i + 1; j < a.cols(); ++j) s += a(i, j) * a(i, j);
  return 2.0 * s;
}

}  // namespace

SymEig sym_eig(const Matrix& m, bool with_vectors) {
  Matrix a = checked_symmetric(m, "sym_eig");
  const std::size_t n = a.rows();
  Matrix v = with_vectors ? Matrix::identity(n) : Matrix();

  const double target = std::pow(std::numeric_limits<double>::epsilon(), 2) * frobenius_sq(a);
  for (int sweep = 0; sweep < kMaxJacobiSweeps; ++sweep) {
    if (off_diagonal_sq(a) <= target) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          const double new_kp = c * akp - s * akq;
          const double new_kq = s * akp + c * akq;
          a(k, p) = new_kp;
          a(p, k) = new_kp;
          a(k, q) = new_kq;
          a(q, k) = new_kq;
        }
        if (with_vectors) {
          for (std::size_t k = 0; k < n; ++k) {
            const double vkp = v(k, p);
            const double vkq = v(k, q);
            v(k, p) = c * vkp - s * vkq;
            v(k, q) = s * vkp + c * vkq;
          }
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

  SymEig out;
  out.eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lam = a(order[i], order[i]);
    if (lam < 0.0 && lam >= -kTolPsd) lam = 0.0;
    out.eigenvalues[i] = lam;
  }
  if (with_vectors) {
    Matrix sorted(n, n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i) sorted(k, i) = v(k, order[i]);
    out.eigenvectors = std::move(sorted);
  }
  return out;
}

double spectral_norm(const Matrix& m) {
  if (m.empty()) return 0.0;
  const std::size_t n = m.cols();

  auto apply_gram = [&m](const std::vector<double>& x) {
    std::vector<double> mx(m.rows(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const auto r = m.row(i);
      mx[i] = std::inner_product(r.begin(), r.end(), x.begin(), 0.0);
    }
    std::vector<double> y(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
      const auto r = m.row(i);
      for (std::size_t j = 0; j < r.size(); ++j) y[j] += r[j] * mx[i];
    }
    return y;
  };
  auto norm = [](const std::vector<double>& x) {
    return std::sqrt(std::inner_product(x.begin(), x.end(), x.begin(), 0.0));
  };

  std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
  std::vector<double> y = apply_gram(x);
  if (norm(y) == 0.0) {
    if (frobenius_sq(m) == 0.0) return 0.0;
    Rng rng(derive_seed(0x5eed, "spectral_norm"));
    for (double& xi : x) xi = rng.normal();
    const double nx = norm(x);
    for (double& xi : x) xi /= nx;
    y = apply_gram(x);
  }

  double lambda = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
  for (int it = 0; it < kMaxPowerIterations; ++it) {
    const double ny = norm(y);
    if (ny == 0.0) break;
    for (std::size_t j = 0; j < n; ++j) x[j] = y[j] / ny;
    y = apply_gram(x);
    const double next = std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
    const bool converged = std::abs(next - lambda) <= kPowerTol * std::abs(next);
    lambda = next;
    if (converged) break;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

double frobenius_sq(const Matrix& m) noexcept {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

Matrix cholesky(const Matrix& m) {
  const Matrix a = checked_symmetric(m, "cholesky");
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      throw Error(ErrorKind::NotPositiveDefinite,
                  "non-positive pivot " + std::to_string(d) + " at index " + std::to_string(j));
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

double logdet_psd(const Matrix& m) {
  const Matrix l = cholesky(m);
  double s = 0.0;
  for (std::size_t i = 0; i < l.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Matrix inverse_psd(const Matrix& m) {
  const Matrix l = cholesky(m);
  const std::size_t n = l.rows();
  // L^{-1} by forward substitution, column by column.
  Matrix linv(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    linv(c, c) = 1.0 / l(c, c);
    for (std::size_t i = c + 1; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = c; k < i; ++k) s -= l(i, k) * linv(k, c);
      linv(i, c) = s / l(i, i);
    }
  }
  // m^{-1} = L^{-T} L^{-1}
  return symmetrize(matmul_tn(linv, linv));
}

Matrix kronecker(const Matrix& a, const Matrix& b) {
  const std::size_t rows = a.rows() * b.rows();
  const std::size_t cols = a.cols() * b.cols();
  if ((a.rows() != 0 && rows / a.rows() != b.rows()) ||
      (a.cols() != 0 && cols / a.cols() != b.cols()) ||
      (rows != 0 && cols > kMaxKroneckerEntries / rows)) {
    throw Error(ErrorKind::TooLarge, "kronecker product exceeds " +
                                         std::to_string(kMaxKroneckerEntries) + " entries");
  }
  Matrix k(rows, cols);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = aij * b(p, q);
    }
  return k;
}

Matrix normalize_to_correlation(const Matrix& m) {
  if (!m.is_square()) throw Error(ErrorKind::InvalidShape, "normalize_to_correlation: non-square");
  const std::size_t n = m.rows();
  std::vector<double> d = m.diag();
  for (std::size_t i = 0; i < n; ++i) {
    if (!(d[i] > 0.0)) {
      throw Error(ErrorKind::DegenerateDiagonal,
                  "diagonal entry " + std::to_string(i) + " is " + std::to_string(d[i]));
    }
  }
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    out(i, i) = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = std::clamp(0.5 * (m(i, j) + m(j, i)) / std::sqrt(d[i] * d[j]), -1.0, 1.0);
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

namespace {

struct Bracket {
  double lo;
  double hi;
};

Bracket checked_bracket(double lam_min, double lam_max, std::size_t dim) {
  if (dim == 0) throw Error(ErrorKind::InvalidArgument, "det_lower_bound: dim must be >= 1");
  if (lam_min > 1.0 && lam_min <= 1.0 + kBracketSlack) lam_min = 1.0;
  if (lam_max < 1.0 && lam_max >= 1.0 - kBracketSlack) lam_max = 1.0;
  if (!(lam_min > 0.0) || !(lam_min <= 1.0) || !(lam_max >= 1.0) || !std::isfinite(lam_max)) {
    throw Error(ErrorKind::InvalidEigenRange, "need 0 < lam_min <= 1 <= lam_max, got [" +
                                                  std::to_string(lam_min) + ", " +
                                                  std::to_string(lam_max) + "]");
  }
  return {lam_min, lam_max};
}

}  // namespace

double det_bound_exponent(double lam_min, double lam_max, std::size_t dim) {
  const Bracket b = checked_bracket(lam_min, lam_max, dim);
  if (b.hi == b.lo) return 0.0;
  return static_cast<double>(dim) * (b.hi - 1.0) / (b.hi - b.lo);
}

double log_det_lower_bound(double lam_min, double lam_max, std::size_t dim) {
  const Bracket b = checked_bracket(lam_min, lam_max, dim);
  if (b.hi == b.lo) return static_cast<double>(dim) * std::log(b.lo);
  const double k = static_cast<double>(dim) * (b.hi - 1.0) / (b.hi - b.lo);
  return k * std::log(b.lo) + (static_cast<double>(dim) - k) * std::log(b.hi);
}

double det_lower_bound(double lam_min, double lam_max, std::size_t dim) {
  return std::exp(log_det_lower_bound(lam_min, lam_max, dim));
}

Matrix equicorrelation(std::size_t dim, double r) {
  Matrix m(dim, dim, r);
  for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng, double sigma) {
  Matrix g(rows, cols);
  for (double& v : g.data()) v = sigma * rng.normal();
  return g;
}

Matrix random_correlation(std::size_t dim, Rng& rng) {
  const Matrix g = random_gaussian(dim, 2 * dim, rng);
  return normalize_to_correlation(matmul_nt(g, g));
}

Matrix random_symmetric(std::size_t dim, Rng& rng) {
  Matrix m(dim, dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) {
      const double v = rng.normal();
      m(i, j) = v;
      m(j, i) = v;
    }
  return m;
}

}  // namespace s2o::linalg
