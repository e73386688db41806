#include "s2o/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "s2o/error.hpp"

namespace s2o::nn {

namespace {

void check_labels(const Matrix& logits, std::span<const int> labels) {
  if (labels.size() != logits.rows())
    throw Error(ErrorKind::InvalidShape, "label count does not match logits rows");
  const int classes = static_cast<int>(logits.cols());
  for (int y : labels)
    if (y < 0 || y >= classes) throw Error(ErrorKind::InvalidLabel, "label " + std::to_string(y));
}

double log_sum_exp(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

std::size_t runner_up(std::span<const double> z, int y) {
  std::size_t best = y == 0 ? 1 : 0;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (static_cast<int>(j) != y && z[j] > z[best]) best = j;
  return best;
}

}  // namespace

Matrix log_softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    const double lse = log_sum_exp(z);
    for (std::size_t j = 0; j < z.size(); ++j) out(i, j) = z[j] - lse;
  }
  return out;
}

Matrix softmax(const Matrix& logits) {
  Matrix p = log_softmax(logits);
  for (double& v : p.data()) v = std::exp(v);
  return p;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  if (logits.rows() == 0) throw Error(ErrorKind::EmptyBatch, "cross_entropy");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    total += log_sum_exp(z) - z[static_cast<std::size_t>(labels[i])];
  }
  return total / static_cast<double>(logits.rows());
}

double margin_loss(const Matrix& logits, std::span<const int> labels, double gamma) {
  check_labels(logits, labels);
  if (logits.rows() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    const int y = labels[i];
    const double other = z.size() > 1 ? z[runner_up(z, y)] : -INFINITY;
    if (z[static_cast<std::size_t>(y)] <= gamma + other) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

std::vector<double> cw_margins(const Matrix& logits, std::span<const int> labels) {
  check_labels(logits, labels);
  if (logits.cols() < 2) throw Error(ErrorKind::InvalidShape, "CW margin needs two classes");
  std::vector<double> m(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    m[i] = z[runner_up(z, labels[i])] - z[static_cast<std::size_t>(labels[i])];
  }
  return m;
}

KlGrad kl_softmax_grad(const Matrix& logits_p, const Matrix& logits_q) {
  if (logits_p.rows() != logits_q.rows() || logits_p.cols() != logits_q.cols())
    throw Error(ErrorKind::InvalidShape, "kl_softmax: shape mismatch");
  const std::size_t b = logits_p.rows();
  if (b == 0) throw Error(ErrorKind::EmptyBatch, "kl_softmax");
  const Matrix lp = log_softmax(logits_p);
  const Matrix lq = log_softmax(logits_q);
  const double inv_b = 1.0 / static_cast<double>(b);

  KlGrad g{0.0, Matrix(b, logits_p.cols()), Matrix(b, logits_p.cols())};
  for (std::size_t i = 0; i < b; ++i) {
    double row_kl = 0.0;
    for (std::size_t j = 0; j < logits_p.cols(); ++j) row_kl += std::exp(lp(i, j)) * (lp(i, j) - lq(i, j));
    row_kl = std::max(row_kl, 0.0);
    g.value += row_kl;
    for (std::size_t j = 0; j < logits_p.cols(); ++j) {
      const double p = std::exp(lp(i, j));
      const double q = std::exp(lq(i, j));
      // d KL / d z_p = p (log p - log q - KL);  d KL / d z_q = q - p
      g.d_p(i, j) = inv_b * p * (lp(i, j) - lq(i, j) - row_kl);
      g.d_q(i, j) = inv_b * (q - p);
    }
  }
  g.value *= inv_b;
  return g;
}

double kl_softmax(const Matrix& logits_p, const Matrix& logits_q) {
  return kl_softmax_grad(logits_p, logits_q).value;
}

std::vector<double> per_row_loss(const Matrix& logits, const LossSpec& spec) {
  std::vector<double> out(logits.rows());
  switch (spec.kind) {
    case LossKind::CrossEntropy: {
      check_labels(logits, spec.labels);
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        const auto z = logits.row(i);
        out[i] = log_sum_exp(z) - z[static_cast<std::size_t>(spec.labels[i])];
      }
      break;
    }
    case LossKind::CWMargin:
      out = cw_margins(logits, spec.labels);
      break;
    case LossKind::KLToReference: {
      if (spec.reference == nullptr) throw Error(ErrorKind::InvalidArgument, "KL loss needs reference logits");
      const Matrix lp = log_softmax(*spec.reference);
      const Matrix lq = log_softmax(logits);
      for (std::size_t i = 0; i < logits.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) s += std::exp(lp(i, j)) * (lp(i, j) - lq(i, j));
        out[i] = std::max(s, 0.0);
      }
      break;
    }
  }
  return out;
}

LossValue loss_with_grad(const Matrix& logits, const LossSpec& spec) {
  const std::size_t b = logits.rows();
  if (b == 0) throw Error(ErrorKind::EmptyBatch, "loss on empty batch");
  const double inv_b = 1.0 / static_cast<double>(b);
  switch (spec.kind) {
    case LossKind::CrossEntropy: {
      const double value = cross_entropy(logits, spec.labels);
      Matrix d = softmax(logits);
      for (std::size_t i = 0; i < b; ++i) {
        d(i, static_cast<std::size_t>(spec.labels[i])) -= 1.0;
        for (double& v : d.row(i)) v *= inv_b;
      }
      return {value, std::move(d)};
    }
    case LossKind::CWMargin: {
      const auto m = cw_margins(logits, spec.labels);
      Matrix d(b, logits.cols());
      double value = 0.0;
      for (std::size_t i = 0; i < b; ++i) {
        value += m[i];
        d(i, runner_up(logits.row(i), spec.labels[i])) += inv_b;
        d(i, static_cast<std::size_t>(spec.labels[i])) -= inv_b;
      }
      return {value * inv_b, std::move(d)};
    }
    case LossKind::KLToReference: {
      if (spec.reference == nullptr) throw Error(ErrorKind::InvalidArgument, "KL loss needs reference logits");
      KlGrad g = kl_softmax_grad(*spec.reference, logits);
      return {g.value, std::move(g.d_q)};
    }
  }
  throw Error(ErrorKind::Unsupported, "unknown loss kind");
}

Gradients backward(const Network& net, const ForwardTape& tape, const LossSpec& spec) {
  const LossValue loss = loss_with_grad(tape.logits(), spec);
  return backprop(net, tape, loss.dlogits).grads;
}

Matrix input_gradient(const Network& net, const Matrix& batch, const LossSpec& spec) {
  const ForwardTape tape = forward(net, batch);
  const LossValue loss = loss_with_grad(tape.logits(), spec);
  return backprop(net, tape, loss.dlogits, {}, true).input_grad;
}

}  // namespace s2o::nn
