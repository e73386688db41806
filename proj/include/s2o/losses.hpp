#pragma once

#include <span>

#include "s2o/matrix.hpp"
#include "s2o/network.hpp"

namespace s2o::nn {

/// Row-wise softmax with max subtraction.
Matrix softmax(const Matrix& logits);
Matrix log_softmax(const Matrix& logits);

/// Mean softmax cross-entropy. Throws InvalidLabel for labels outside [0, classes).
double cross_entropy(const Matrix& logits, std::span<const int> labels);

/// Fraction of rows with logit[y] <= gamma + max_{j != y} logit[j].
double margin_loss(const Matrix& logits, std::span<const int> labels, double gamma);

/// Per-row margin max_{j != y} z_j - z_y (positive means misclassified).
std::vector<double> cw_margins(const Matrix& logits, std::span<const int> labels);

/// Mean row-wise KL(softmax(p) || softmax(q)).
double kl_softmax(const Matrix& logits_p, const Matrix& logits_q);

struct KlGrad {
  double value;
  Matrix d_p;  // d/d logits_p
  Matrix d_q;  // d/d logits_q
};
KlGrad kl_softmax_grad(const Matrix& logits_p, const Matrix& logits_q);

enum class LossKind {
  CrossEntropy,
  CWMargin,   // mean of max_{j != y} z_j - z_y
  KLToReference,  // mean KL(softmax(reference) || softmax(z)); reference held fixed
};

struct LossSpec {
  LossKind kind = LossKind::CrossEntropy;
  std::span<const int> labels;
  const Matrix* reference = nullptr;  // KLToReference only
};

struct LossValue {
  double value;
  Matrix dlogits;
};

LossValue loss_with_grad(const Matrix& logits, const LossSpec& spec);
/// Per-row loss values (before averaging); used by attacks to keep the best iterate.
std::vector<double> per_row_loss(const Matrix& logits, const LossSpec& spec);

/// Exact gradient of the scalar loss w.r.t. every weight.
Gradients backward(const Network& net, const ForwardTape& tape, const LossSpec& spec);

/// Gradient of the scalar loss w.r.t. the batch entries.
Matrix input_gradient(const Network& net, const Matrix& batch, const LossSpec& spec);

}  // namespace s2o::nn
