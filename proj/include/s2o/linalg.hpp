#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "s2o/matrix.hpp"
#include "s2o/random.hpp"

namespace s2o::linalg {

/// Relative asymmetry accepted by routines that expect symmetric input.
inline constexpr double kTolSym = 1e-9;
/// Eigenvalues in [-kTolPsd, 0) are reported as 0.
inline constexpr double kTolPsd = 1e-10;

struct SymEig {
  std::vector<double> eigenvalues;   // descending
  std::optional<Matrix> eigenvectors;  // columns, orthonormal, matching eigenvalues

  double max() const { return eigenvalues.front(); }
  double min() const { return eigenvalues.back(); }
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
SymEig sym_eig(const Matrix& m, bool with_vectors = false);

/// Largest singular value by power iteration on m^T m. Returns 0 for the zero matrix.
double spectral_norm(const Matrix& m);

double frobenius_sq(const Matrix& m) noexcept;

/// Lower Cholesky factor of a symmetric positive definite matrix.
Matrix cholesky(const Matrix& m);

double logdet_psd(const Matrix& m);
Matrix inverse_psd(const Matrix& m);

Matrix kronecker(const Matrix& a, const Matrix& b);

/// out(i,j) = m(i,j) / sqrt(m(i,i) m(j,j)), with an exact unit diagonal.
Matrix normalize_to_correlation(const Matrix& m);

/// Lower bound on det R for a trace-dim matrix whose spectrum lies in [lam_min, lam_max]:
/// lam_min^k * lam_max^(dim-k) with k = dim (lam_max - 1) / (lam_max - lam_min).
double det_lower_bound(double lam_min, double lam_max, std::size_t dim);
/// Natural log of det_lower_bound; avoids underflow when dim is large.
double log_det_lower_bound(double lam_min, double lam_max, std::size_t dim);
/// The exponent k used by det_lower_bound.
double det_bound_exponent(double lam_min, double lam_max, std::size_t dim);

/// Unit-diagonal matrix with constant off-diagonal r.
Matrix equicorrelation(std::size_t dim, double r);

/// Normalized-Wishart sample: G (dim x 2 dim, iid N(0,1)), then normalize G G^T.
Matrix random_correlation(std::size_t dim, Rng& rng);

/// Symmetric matrix with iid N(0,1) upper-triangle entries.
Matrix random_symmetric(std::size_t dim, Rng& rng);

Matrix random_gaussian(std::size_t rows, std::size_t cols, Rng& rng, double sigma = 1.0);

}  // namespace s2o::linalg
