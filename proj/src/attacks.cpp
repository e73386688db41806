#include "s2o/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "s2o/error.hpp"
#include "s2o/losses.hpp"
#include "s2o/random.hpp"

namespace s2o::attack {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_batch(const nn::Network& net, const Matrix& batch) {
  if (batch.cols() != net.input_dim()) throw Error(ErrorKind::InvalidShape, "batch width != network input");
  if (batch.rows() == 0) throw Error(ErrorKind::EmptyBatch, "attack on empty batch");
}

Matrix random_start(const Matrix& x, const AttackSpec& spec) {
  Matrix out = x;
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < x.rows(); ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    auto row = out.row(i);
    if (spec.norm == Norm::Linf) {
      for (double& v : row) v += rng.uniform(-spec.epsilon, spec.epsilon);
    } else {
      std::vector<double> dir(d);
      double len = 0.0;
      for (double& v : dir) {
        v = rng.normal();
        len += v * v;
      }
      len = std::sqrt(len);
      const double radius = spec.epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(d));
      if (len > 0.0)
        for (std::size_t j = 0; j < d; ++j) row[j] += radius * dir[j] / len;
    }
  }
  return project(out, x, spec.norm, spec.epsilon);
}

Matrix ascent_step(const Matrix& x, const Matrix& grad, const AttackSpec& spec) {
  Matrix out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = out.row(i);
    const auto g = grad.row(i);
    if (spec.norm == Norm::Linf) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += spec.step_size * sign(g[j]);
    } else {
      double len = 0.0;
      for (double v : g) len += v * v;
      len = std::sqrt(len);
      if (len == 0.0) continue;
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += spec.step_size * g[j] / len;
    }
  }
  return out;
}

// Shared PGD loop: `start` is the first iterate, `loss` decides the objective.
Matrix run_pgd(const nn::Network& net, const Matrix& x, Matrix start, const nn::LossSpec& loss,
               const AttackSpec& spec) {
  Matrix cur = project(start, x, spec.norm, spec.epsilon);
  Matrix best = cur;
  std::vector<double> best_loss = nn::per_row_loss(nn::logits(net, cur), loss);
  for (int t = 0; t < spec.steps; ++t) {
    const Matrix g = nn::input_gradient(net, cur, loss);
    cur = project(ascent_step(cur, g, spec), x, spec.norm, spec.epsilon);
    const std::vector<double> l = nn::per_row_loss(nn::logits(net, cur), loss);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (l[i] > best_loss[i]) {
        best_loss[i] = l[i];
        std::copy_n(cur.row(i).begin(), x.cols(), best.row(i).begin());
      }
    }
  }
  return best;
}

}  // namespace

void AttackSpec::validate() const {
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw Error(ErrorKind::InvalidArgument, "epsilon must be >= 0");
  if (steps < 1) throw Error(ErrorKind::InvalidArgument, "steps must be >= 1");
  if (epsilon > 0.0 && !(step_size > 0.0)) throw Error(ErrorKind::InvalidArgument, "step_size must be > 0");
  if (step_size > 2.0 * epsilon && epsilon > 0.0)
    throw Error(ErrorKind::InvalidArgument, "step_size exceeds 2 * epsilon");
}

AttackSpec pgd20(double epsilon, Norm norm) {
  AttackSpec s;
  s.norm = norm;
  s.epsilon = epsilon;
  s.steps = 20;
  s.step_size = epsilon / 4.0;
  return s;
}

Matrix project(const Matrix& candidate, const Matrix& origin, Norm norm, double epsilon) {
  if (candidate.rows() != origin.rows() || candidate.cols() != origin.cols())
    throw Error(ErrorKind::InvalidShape, "project: shape mismatch");
  Matrix out = candidate;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const auto o = origin.row(i);
    if (norm == Norm::Linf) {
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = std::clamp(row[j], o[j] - epsilon, o[j] + epsilon);
    } else {
      double len = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) len += (row[j] - o[j]) * (row[j] - o[j]);
      len = std::sqrt(len);
      if (len > epsilon) {
        const double s = epsilon / len;
        for (std::size_t j = 0; j < row.size(); ++j) row[j] = o[j] + s * (row[j] - o[j]);
      }
    }
    // the box is convex and contains the origin, so clipping keeps the ball constraint
    for (double& v : row) v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

Matrix fgsm(const nn::Network& net, const Matrix& batch, std::span<const int> labels, double epsilon) {
  check_batch(net, batch);
  if (!(epsilon >= 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be >= 0");
  const Matrix g = nn::input_gradient(net, batch, {nn::LossKind::CrossEntropy, labels});
  Matrix out = batch;
  for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] += epsilon * sign(g.data()[k]);
  return project(out, batch, Norm::Linf, epsilon);
}

Matrix pgd(const nn::Network& net, const Matrix& batch, std::span<const int> labels, const AttackSpec& spec) {
  spec.validate();
  check_batch(net, batch);
  if (spec.epsilon == 0.0) return batch;
  const nn::LossSpec loss{spec.loss == AttackLoss::CE ? nn::LossKind::CrossEntropy : nn::LossKind::CWMargin, labels};
  return run_pgd(net, batch, spec.random_start ? random_start(batch, spec) : batch, loss, spec);
}

Matrix cw_pgd(const nn::Network& net, const Matrix& batch, std::span<const int> labels, const AttackSpec& spec) {
  if (spec.loss != AttackLoss::CWMargin) throw Error(ErrorKind::InvalidArgument, "cw_pgd needs loss = CWMargin");
  return pgd(net, batch, labels, spec);
}

Matrix trades_pgd(const nn::Network& net, const Matrix& batch, const Matrix& reference_logits,
                  const AttackSpec& spec) {
  spec.validate();
  check_batch(net, batch);
  if (spec.epsilon == 0.0) return batch;
  Matrix start = batch;
  for (std::size_t i = 0; i < batch.rows(); ++i) {
    Rng rng(derive_seed(spec.seed, static_cast<std::uint64_t>(i)));
    for (double& v : start.row(i)) v += 1e-3 * rng.normal();
  }
  const nn::LossSpec loss{nn::LossKind::KLToReference, {}, &reference_logits};
  return run_pgd(net, batch, std::move(start), loss, spec);
}

}  // namespace s2o::attack
