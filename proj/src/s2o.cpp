#include "s2o/s2o.hpp"

#include <cmath>
#include <string>

#include "s2o/error.hpp"
#include "s2o/linalg.hpp"
#include "s2o/losses.hpp"

namespace s2o::reg {

namespace {

// Floor for the ridge so a batch of all-dead units still inverts.
constexpr double kMinRidge = 1e-8;

void check_tape(const nn::Network& net, const nn::ForwardTape& tape) {
  if (tape.fingerprint != net.fingerprint()) throw Error(ErrorKind::StaleTape, "tape does not match network");
  if (tape.batch_size() == 0) throw Error(ErrorKind::EmptyBatch, "s2o on empty batch");
}

}  // namespace

void S2OConfig::validate() const {
  if (!std::isfinite(alpha) || alpha < 0.0) throw Error(ErrorKind::Config, "s2o alpha must be finite and >= 0");
  if (!(damping >= 1e-8) || !std::isfinite(damping)) throw Error(ErrorKind::Config, "s2o damping must be >= 1e-8");
}

std::vector<std::size_t> penalized_layers(const nn::Network& net, LayerPolicy policy) {
  const std::size_t n = net.num_layers();
  if (n < 2) return {};
  if (policy == LayerPolicy::LastOnly) return {n - 1};
  std::vector<std::size_t> out;
  for (std::size_t l = 1; l < n; ++l) out.push_back(l);
  return out;
}

Matrix activation_cov(const nn::ForwardTape& tape, std::size_t layer) {
  if (layer >= tape.pre.size()) throw Error(ErrorKind::InvalidArgument, "activation_cov: layer out of range");
  const Matrix& a = tape.layer_input(layer);
  if (a.rows() == 0) throw Error(ErrorKind::EmptyBatch, "activation_cov");
  Matrix c = matmul_tn(a, a);
  c *= 1.0 / static_cast<double>(a.rows());
  return symmetrize(c);
}

ActivationCov activation_covs(const nn::ForwardTape& clean, const nn::ForwardTape& adv, std::size_t layer) {
  return {layer, activation_cov(clean, layer), activation_cov(adv, layer), clean.batch_size() + adv.batch_size()};
}

double ridge(const Matrix& cov, double damping, DampingMode mode) {
  if (mode == DampingMode::Absolute) return damping;
  return std::max(damping * cov.trace() / static_cast<double>(cov.rows()), kMinRidge);
}

Matrix s2o_matrix(const Matrix& cov, double damping, DampingMode mode) {
  Matrix c = cov;
  const double rho = ridge(cov, damping, mode);
  for (std::size_t i = 0; i < c.rows(); ++i) c(i, i) += rho;
  return linalg::normalize_to_correlation(linalg::inverse_psd(c));
}

PenaltyGrad frobenius_penalty_grad(const Matrix& cov, double damping, DampingMode mode) {
  const std::size_t h = cov.rows();
  Matrix c = cov;
  const double rho = ridge(cov, damping, mode);
  for (std::size_t i = 0; i < h; ++i) c(i, i) += rho;
  const Matrix m = linalg::inverse_psd(c);
  const Matrix a = linalg::normalize_to_correlation(m);

  // g = sum_ij M_ij^2 / (s_i s_j), s = diag(M)
  std::vector<double> s(h);
  for (std::size_t i = 0; i < h; ++i) s[i] = m(i, i);
  Matrix g_m(h, h);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < h; ++j) g_m(i, j) = 2.0 * m(i, j) / (s[i] * s[j]);
  for (std::size_t k = 0; k < h; ++k) {
    double row = 0.0;
    for (std::size_t j = 0; j < h; ++j) row += a(k, j) * a(k, j);
    g_m(k, k) -= 2.0 * row / s[k];
  }

  // dM = -M dC M
  Matrix g_c = symmetrize(matmul(matmul(m, g_m), m));
  g_c *= -1.0;
  if (mode == DampingMode::TraceScaled && rho > kMinRidge) {
    const double shift = damping / static_cast<double>(h) * g_c.trace();
    for (std::size_t i = 0; i < h; ++i) g_c(i, i) += shift;
  }
  return {linalg::frobenius_sq(a), std::move(g_c)};
}

TapeTerm s2o_tape_term(const nn::Network& net, const nn::ForwardTape& tape, const S2OConfig& cfg) {
  cfg.validate();
  check_tape(net, tape);
  TapeTerm term;
  term.post_seeds.resize(net.num_layers());
  const double inv_b = 1.0 / static_cast<double>(tape.batch_size());
  for (std::size_t l : penalized_layers(net, cfg.layer_policy)) {
    const PenaltyGrad pg = frobenius_penalty_grad(activation_cov(tape, l), cfg.damping, cfg.damping_mode);
    const double scale = cfg.per_unit ? 1.0 / static_cast<double>(pg.d_cov.rows()) : 1.0;
    term.value += scale * pg.value;
    // C = a^T a / B  =>  dg/da = (2/B) a dg/dC
    Matrix seed = matmul(tape.layer_input(l), pg.d_cov);
    seed *= 2.0 * inv_b * cfg.alpha * scale;
    term.post_seeds[l - 1] = std::move(seed);
  }
  return term;
}

double s2o_penalty(const nn::Network& net, const nn::ForwardTape& clean, const nn::ForwardTape& adv,
                   const S2OConfig& cfg) {
  cfg.validate();
  check_tape(net, clean);
  check_tape(net, adv);
  double total = 0.0;
  for (std::size_t l : penalized_layers(net, cfg.layer_policy)) {
    total += linalg::frobenius_sq(s2o_matrix(activation_cov(clean, l), cfg.damping, cfg.damping_mode));
    total += linalg::frobenius_sq(s2o_matrix(activation_cov(adv, l), cfg.damping, cfg.damping_mode));
  }
  return total;
}

nn::Gradients s2o_gradient(const nn::Network& net, const nn::ForwardTape& clean, const nn::ForwardTape& adv,
                           const S2OConfig& cfg) {
  nn::Gradients total = nn::Gradients::zeros_like(net);
  for (const nn::ForwardTape* tape : {&clean, &adv}) {
    const TapeTerm term = s2o_tape_term(net, *tape, cfg);
    const Matrix zero(tape->batch_size(), net.output_dim());
    total.axpy(1.0, nn::backprop(net, *tape, zero, term.post_seeds).grads);
  }
  return total;
}

KronFactors kron_hessian_factors(const nn::Network& net, const nn::ForwardTape& tape, std::span<const int> labels,
                                 std::size_t layer) {
  check_tape(net, tape);
  if (layer + 1 != net.num_layers())
    throw Error(ErrorKind::Unsupported, "Hessian factors are only available for the output layer");
  if (labels.size() != tape.batch_size()) throw Error(ErrorKind::InvalidShape, "label count != batch size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= net.output_dim())
      throw Error(ErrorKind::InvalidLabel, "label " + std::to_string(y));

  const Matrix& a = tape.layer_input(layer);
  const std::size_t b = a.rows();
  const std::size_t in = a.cols();
  const std::size_t k = net.output_dim();
  const Matrix p = nn::softmax(tape.logits());
  KronFactors f{Matrix(in + 1, in + 1), Matrix(k, k)};
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t i = 0; i <= in; ++i) {
      const double ai = i < in ? a(n, i) : 1.0;
      for (std::size_t j = 0; j <= in; ++j) f.a(i, j) += ai * (j < in ? a(n, j) : 1.0);
    }
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t d = 0; d < k; ++d) f.h(c, d) -= p(n, c) * p(n, d);
      f.h(c, c) += p(n, c);
    }
  }
  f.a *= 1.0 / static_cast<double>(b);
  f.h *= 1.0 / static_cast<double>(b);
  return f;
}

double kron_factorization_gap(const nn::Network& net, const nn::ForwardTape& tape, std::size_t layer) {
  const std::vector<int> dummy(tape.batch_size(), 0);
  const KronFactors mean = kron_hessian_factors(net, tape, dummy, layer);
  const Matrix approx = linalg::kronecker(mean.a, mean.h);

  Matrix exact(approx.rows(), approx.cols());
  const double inv_b = 1.0 / static_cast<double>(tape.batch_size());
  for (std::size_t n = 0; n < tape.batch_size(); ++n) {
    // per-sample factors via a one-row tape view
    nn::ForwardTape one;
    one.input = Matrix(1, tape.input.cols(), std::vector<double>(tape.input.row(n).begin(), tape.input.row(n).end()));
    for (std::size_t l = 0; l < tape.pre.size(); ++l) {
      const auto pr = tape.pre[l].row(n);
      const auto po = tape.post[l].row(n);
      one.pre.emplace_back(1, pr.size(), std::vector<double>(pr.begin(), pr.end()));
      one.post.emplace_back(1, po.size(), std::vector<double>(po.begin(), po.end()));
    }
    one.fingerprint = tape.fingerprint;
    const KronFactors f = kron_hessian_factors(net, one, std::span(dummy).first(1), layer);
    exact.axpy(inv_b, linalg::kronecker(f.a, f.h));
  }
  const double denom = std::sqrt(linalg::frobenius_sq(exact));
  if (denom == 0.0) return 0.0;
  return std::sqrt(linalg::frobenius_sq(exact - approx)) / denom;
}

}  // namespace s2o::reg
