#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "s2o/dataset.hpp"
#include "s2o/matrix.hpp"
#include "s2o/network.hpp"

namespace s2o::stats {

enum class Source { Sampling, Laplace };
enum class DataKind { Clean, Adversarial };

std::string to_string(Source s);
std::string to_string(DataKind d);

/// Second-order statistics of one layer's weight perturbation. Rc and Rr are
/// normalized to unit diagonal; lamc_max / lamr_max are square roots of their spectral norms.
struct LayerCorrStats {
  std::size_t layer = 0;
  std::size_t dim = 0;            // number of weights in the layer, out * (in + 1)
  std::optional<Matrix> R;        // only for small layers
  Matrix Rc;                      // (in + 1) x (in + 1)
  Matrix Rr;                      // out x out
  double lam_max = 0.0;
  double lam_min = 0.0;
  double lamc_max = 0.0;
  double lamr_max = 0.0;
  double det_lb = 0.0;
  double log_det_lb = 0.0;        // -inf when lam_min == 0
  std::optional<double> logdet;   // exact ln det R when available
  double frob_sq = 0.0;
  Source source = Source::Sampling;
  DataKind data = DataKind::Clean;
};

/// Largest weight count for which R itself is stored.
inline constexpr std::size_t kMaterializeDim = 1024;

struct SamplingConfig {
  std::size_t num_samples = 100;
  double loss_tolerance = 0.05;
  int refine_epochs = 50;
  double refine_lr = 1e-4;
  std::optional<double> noise_sigma;  // default: 0.01 * RMS of each layer's weights
  std::uint64_t seed = 0;

  void validate() const;
};

using WeightDelta = std::vector<Matrix>;  // one matrix per layer

struct SamplingResult {
  std::vector<WeightDelta> deltas;
  nn::Network refined_base;           // refine(w); refine(w + u) = refined_base + delta
  double base_loss = 0.0;             // L(w)
  std::vector<double> loss_deviation;  // |L(refine(w + u)) - L(w)| per accepted delta
  std::size_t draws = 0;
};

/// Gradient-descent refinement on full-batch cross-entropy.
nn::Network refine(const nn::Network& net, const data::Dataset& ds, int epochs, double lr);

/// Draws u ~ N(0, sigma_l^2) per layer, refines, keeps draws within the loss tolerance.
SamplingResult sample_weight_perturbations(const nn::Network& net, const data::Dataset& ds,
                                           const SamplingConfig& cfg);

/// Centered empirical statistics from per-sample deltas of a single layer.
LayerCorrStats corr_from_samples(const std::vector<Matrix>& layer_deltas, std::size_t layer,
                                 DataKind data = DataKind::Clean);
LayerCorrStats corr_from_samples(const std::vector<WeightDelta>& deltas, std::size_t layer,
                                 DataKind data = DataKind::Clean);

/// Kronecker-factored Laplace statistics from (E[A], E[H]) with a trace-scaled ridge.
LayerCorrStats corr_from_factors(const Matrix& a, const Matrix& h, double damping, std::size_t layer,
                                 DataKind data = DataKind::Clean);
/// Output layer only.
LayerCorrStats corr_from_laplace(const nn::Network& net, const data::Dataset& ds, std::size_t layer,
                                 double damping, DataKind data = DataKind::Clean);

/// Field names and values of a stats record, in CSV column order.
std::vector<std::string> stats_header();
std::vector<std::string> stats_row(const LayerCorrStats& s);

// ---- Monte-Carlo study of the equicorrelation / random-correlation families ----

enum class Family { Equicorrelation, RandomCorrelation };

struct Fig3Row {
  double r = std::numeric_limits<double>::quiet_NaN();  // equicorrelation only
  double frob_sq = 0.0;
  double lamc = 0.0;   // sqrt of the spectral norm of the column partial trace
  double lamr = 0.0;
  double lam_sum = 0.0;  // lamc + lamr
  double lam_min = 0.0;
  double lam_max = 0.0;
  double det_lb = 0.0;
};

struct Fig3Result {
  std::size_t rows = 0, cols = 0;  // dim = rows * cols
  std::vector<Fig3Row> samples;
  double spearman_frob_lam = 0.0;
  double spearman_frob_det = 0.0;
};

/// Partial traces of a (rows*cols)-dim matrix indexed as vec position i*cols + j.
Matrix column_partial_trace(const Matrix& r, std::size_t rows, std::size_t cols);
Matrix row_partial_trace(const Matrix& r, std::size_t rows, std::size_t cols);

Fig3Row fig3_row(const Matrix& r, std::size_t rows, std::size_t cols);
Fig3Result simulate_fig3(std::size_t dim, std::size_t n_samples, Family family, std::uint64_t seed);
/// r = 0, step, 2 step, ... < r_end (r_end may be negative for the r <= 0 regime).
std::vector<Fig3Row> equicorrelation_sweep(std::size_t dim, double r_end, std::size_t points);

std::string fig3_csv(const Fig3Result& res);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

// ---- Random perturbation norm check ----

struct PerturbationReport {
  std::size_t h = 0;
  double sigma = 0.0;
  std::vector<double> ratios;  // ||U||_2 / (2 sqrt(h) sigma)
  double median = 0.0;
  double p95 = 0.0;
};

PerturbationReport check_perturbation_bound(std::size_t h, double sigma, std::size_t trials, std::uint64_t seed);

}  // namespace s2o::stats
