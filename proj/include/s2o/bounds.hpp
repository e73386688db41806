#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "s2o/network.hpp"
#include "s2o/weight_stats.hpp"

namespace s2o::bounds {

enum class BoundKind { Neyshabur22, Xiao24, S2O35, S2O36 };

std::string to_string(BoundKind k);
BoundKind bound_kind_from_string(const std::string& s);

struct BoundInputs {
  double gamma = 1.0;
  double delta = 0.05;
  double m = 1.0;        // training-set size
  double B = 1.0;        // input l2-norm bound
  double epsilon = 0.0;  // attack radius
  double c = 1.0;

  void validate() const;
};

struct LayerTerms {
  double spectral_norm = 0.0;
  double frob_sq = 0.0;
  double lamc = 0.0;
  double lamr = 0.0;
  double lam_min = 0.0;
  double lam_max = 0.0;
  double log_det_lb = 0.0;
};

/// numerator = capacity_term + logdet_term + confidence_term;
/// complexity_term = sqrt(numerator / (gamma^2 m)).
struct BoundReport {
  BoundKind kind = BoundKind::Neyshabur22;
  double phi = 0.0;
  double phi_standard = 0.0;
  double lambda_factor = 1.0;  // (sum_l (lamc_l + lamr_l))^2, 1 for the standard kinds
  double capacity_term = 0.0;
  double logdet_term = 0.0;
  double confidence_term = 0.0;  // ln(n m / delta)
  double kl_proxy = 0.0;         // capacity_term + logdet_term
  double numerator = 0.0;
  double complexity_term = 0.0;
  std::vector<LayerTerms> per_layer;
};

/// prod_l ||W_l||_2^2 * sum_l ||W_l||_F^2 / ||W_l||_2^2 over folded weights.
double phi_standard(const nn::Network& net);
double phi_standard(std::span<const double> spectral, std::span<const double> frob_sq);

/// (sum_l (Lambda^c_l + Lambda^r_l))^2, maxima taken over every stats record of a layer.
double lambda_factor(const nn::Network& net, std::span<const stats::LayerCorrStats> stats);
double phi_s2o(const nn::Network& net, std::span<const stats::LayerCorrStats> stats);

/// `stats` may hold a clean and an adversarial record per layer; S2O kinds need every layer.
BoundReport evaluate_bound(const nn::Network& net, std::span<const stats::LayerCorrStats> stats,
                           const BoundInputs& inputs, BoundKind kind);

std::string report_json(const BoundReport& r, const BoundInputs& inputs);
std::vector<std::string> report_csv_header();
std::vector<std::string> report_csv_row(const BoundReport& r);

}  // namespace s2o::bounds
