#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "s2o/matrix.hpp"
#include "s2o/network.hpp"

namespace s2o::reg {

enum class LayerPolicy { LastOnly, All };

/// Ridge rule: Absolute adds `damping` to the diagonal; TraceScaled adds damping * tr(cov) / h.
enum class DampingMode { Absolute, TraceScaled };

struct S2OConfig {
  double alpha = 0.0;
  double damping = 1e-3;
  DampingMode damping_mode = DampingMode::TraceScaled;
  LayerPolicy layer_policy = LayerPolicy::LastOnly;
  bool per_unit = false;  // objective weighs g / h instead of g for an h-unit layer

  void validate() const;
};

/// Weight layers whose input activations are penalized (never layer 0, which sees the data).
std::vector<std::size_t> penalized_layers(const nn::Network& net, LayerPolicy policy);

/// (1/B) sum a a^T over the activations feeding weight layer `layer` (bias excluded).
Matrix activation_cov(const nn::ForwardTape& tape, std::size_t layer);

struct ActivationCov {
  std::size_t layer = 0;
  Matrix cov_clean;
  Matrix cov_adv;
  std::size_t sample_count = 0;
};
ActivationCov activation_covs(const nn::ForwardTape& clean, const nn::ForwardTape& adv, std::size_t layer);

/// Ridge value for `cov` under the config's damping rule.
double ridge(const Matrix& cov, double damping, DampingMode mode);

/// normalize((cov + ridge I)^-1).
Matrix s2o_matrix(const Matrix& cov, double damping, DampingMode mode = DampingMode::Absolute);

/// ||s2o_matrix(cov)||_F^2 and its exact gradient with respect to cov (symmetric).
struct PenaltyGrad {
  double value = 0.0;
  Matrix d_cov;
};
PenaltyGrad frobenius_penalty_grad(const Matrix& cov, double damping, DampingMode mode);

/// Unweighted penalty: sum over configured layers of ||A_x||_F^2 + ||A_x'||_F^2.
double s2o_penalty(const nn::Network& net, const nn::ForwardTape& clean, const nn::ForwardTape& adv,
                   const S2OConfig& cfg);

/// Penalty of a single tape (divided by h when per_unit) plus alpha-scaled seeds on
/// tape.post, ready for nn::backprop.
struct TapeTerm {
  double value = 0.0;
  std::vector<std::optional<Matrix>> post_seeds;
};
TapeTerm s2o_tape_term(const nn::Network& net, const nn::ForwardTape& tape, const S2OConfig& cfg);

/// alpha * d(penalty)/dw; the adversarial inputs are treated as constants.
nn::Gradients s2o_gradient(const nn::Network& net, const nn::ForwardTape& clean, const nn::ForwardTape& adv,
                           const S2OConfig& cfg);

/// Batch-mean Kronecker factors of the softmax-CE Hessian for the output layer:
/// (E[abar abar^T], E[diag p - p p^T]), abar = layer input with a trailing 1 for the bias.
/// With W vectorized column-major, the per-sample Hessian is kronecker(A, H).
struct KronFactors {
  Matrix a;
  Matrix h;
};
KronFactors kron_hessian_factors(const nn::Network& net, const nn::ForwardTape& tape, std::span<const int> labels,
                                 std::size_t layer);

/// ||E[A (x) H] - E[A] (x) E[H]||_F / ||E[A (x) H]||_F for the output layer.
double kron_factorization_gap(const nn::Network& net, const nn::ForwardTape& tape, std::size_t layer);

}  // namespace s2o::reg
