#pragma once

#include <cstdint>
#include <span>

#include "s2o/matrix.hpp"
#include "s2o/network.hpp"

namespace s2o::attack {

enum class Norm { Linf, L2 };
enum class AttackLoss { CE, CWMargin };

struct AttackSpec {
  Norm norm = Norm::Linf;
  double epsilon = 8.0 / 255.0;
  int steps = 10;
  double step_size = 2.0 / 255.0;
  bool random_start = false;
  std::uint64_t seed = 0;
  AttackLoss loss = AttackLoss::CE;

  /// Throws InvalidArgument on a broken spec.
  void validate() const;
};

/// PGD-20 evaluation default: step size epsilon / 4.
AttackSpec pgd20(double epsilon, Norm norm = Norm::Linf);

/// Projects `candidate` onto the epsilon-ball around `origin` (row-wise), then onto [0,1].
Matrix project(const Matrix& candidate, const Matrix& origin, Norm norm, double epsilon);

/// Single signed-gradient step on cross-entropy; sign(0) = 0.
Matrix fgsm(const nn::Network& net, const Matrix& batch, std::span<const int> labels, double epsilon);

/// Projected gradient ascent. Each row returns its best iterate under the attack loss,
/// so the loss at the output never falls below the loss at the start point.
Matrix pgd(const nn::Network& net, const Matrix& batch, std::span<const int> labels, const AttackSpec& spec);

/// PGD on the CW margin max_{j != y} z_j - z_y.
Matrix cw_pgd(const nn::Network& net, const Matrix& batch, std::span<const int> labels, const AttackSpec& spec);

/// Inner maximization of TRADES: PGD on KL(softmax(ref) || softmax(f(x'))),
/// started from a small random point (the KL gradient vanishes at x' = x).
Matrix trades_pgd(const nn::Network& net, const Matrix& batch, const Matrix& reference_logits,
                  const AttackSpec& spec);

}  // namespace s2o::attack
