#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "s2o/matrix.hpp"

namespace s2o::nn {

enum class Activation { ReLU, Identity };

/// Affine map with the bias folded in as the last weight column:
/// h = W[:, :in] a + W[:, in].
struct Layer {
  Matrix weight;  // out x (in + 1)
  Activation activation = Activation::ReLU;

  std::size_t in_dim() const noexcept { return weight.cols() - 1; }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

/// Feed-forward ReLU network. The last layer is linear and produces logits.
class Network {
 public:
  explicit Network(std::vector<Layer> layers);

  /// He-style init, N(0, 2 / fan_in) weights and zero bias.
  /// `widths` = {input, hidden..., classes}; at least two entries.
  static Network he_init(std::span<const std::size_t> widths, std::uint64_t seed);

  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::size_t input_dim() const noexcept { return layers_.front().in_dim(); }
  std::size_t output_dim() const noexcept { return layers_.back().out_dim(); }
  std::vector<std::size_t> widths() const;

  const Layer& layer(std::size_t l) const { return layers_.at(l); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  /// Replaces one weight matrix; the shape must match.
  void set_weight(std::size_t l, Matrix w);
  std::vector<Matrix> weights() const;

  /// Hash of the weight bits; tapes remember it to detect staleness.
  std::uint64_t fingerprint() const noexcept;

 private:
  std::vector<Layer> layers_;
};

/// Intermediates of one forward pass. Index l refers to layer l (0-based);
/// pre[l] = h_l, post[l] = act(h_l). The logits are pre.back().
struct ForwardTape {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
  std::uint64_t fingerprint = 0;

  std::size_t batch_size() const noexcept { return input.rows(); }
  const Matrix& logits() const { return pre.back(); }
  /// Activations feeding layer l (the batch itself for l == 0).
  const Matrix& layer_input(std::size_t l) const { return l == 0 ? input : post.at(l - 1); }
};

ForwardTape forward(const Network& net, const Matrix& batch);
Matrix logits(const Network& net, const Matrix& batch);

/// Per-layer weight gradients mirroring the network's weight shapes.
struct Gradients {
  std::vector<Matrix> layers;

  static Gradients zeros_like(const Network& net);
  Gradients& axpy(double s, const Gradients& other);
  double max_abs() const noexcept;
};

struct BackwardResult {
  Gradients grads;
  Matrix input_grad;  // empty unless requested
};

/// Reverse pass seeded with dL/dlogits. `post_seeds[l]`, when present, adds a direct
/// gradient on post[l] (hidden layers only); it lets regularizers on intermediate
/// activations reuse the same pass.
BackwardResult backprop(const Network& net, const ForwardTape& tape, const Matrix& dlogits,
                        std::span<const std::optional<Matrix>> post_seeds = {},
                        bool want_input_grad = false);

/// Flattened view helpers used by optimizers and finite-difference checks.
std::size_t parameter_count(const Network& net);

}  // namespace s2o::nn
