#include "s2o/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "s2o/error.hpp"
#include "s2o/random.hpp"

namespace s2o::nn {

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw Error(ErrorKind::InvalidShape, "network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Matrix& w = layers_[l].weight;
    if (w.rows() == 0 || w.cols() < 2)
      throw Error(ErrorKind::InvalidShape, "layer " + std::to_string(l) + " has empty weight");
    if (!w.all_finite())
      throw Error(ErrorKind::NonFinite, "layer " + std::to_string(l) + " weight is not finite");
    if (l > 0 && layers_[l].in_dim() != layers_[l - 1].out_dim())
      throw Error(ErrorKind::InvalidShape, "layer " + std::to_string(l) + " input width " +
                                               std::to_string(layers_[l].in_dim()) +
                                               " does not match previous output " +
                                               std::to_string(layers_[l - 1].out_dim()));
  }
  if (layers_.back().activation != Activation::Identity)
    throw Error(ErrorKind::InvalidShape, "output layer must be linear");
}

Network Network::he_init(std::span<const std::size_t> widths, std::uint64_t seed) {
  if (widths.size() < 2) throw Error(ErrorKind::InvalidShape, "need input and output widths");
  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l];
    const std::size_t out = widths[l + 1];
    if (in == 0 || out == 0) throw Error(ErrorKind::InvalidShape, "zero layer width");
    const double scale = std::sqrt(2.0 / static_cast<double>(in));
    Matrix w(out, in + 1);
    for (std::size_t i = 0; i < out; ++i)
      for (std::size_t j = 0; j < in; ++j) w(i, j) = scale * rng.normal();
    const bool last = l + 2 == widths.size();
    layers.push_back({std::move(w), last ? Activation::Identity : Activation::ReLU});
  }
  return Network(std::move(layers));
}

std::vector<std::size_t> Network::widths() const {
  std::vector<std::size_t> w{input_dim()};
  for (const Layer& layer : layers_) w.push_back(layer.out_dim());
  return w;
}

void Network::set_weight(std::size_t l, Matrix w) {
  Matrix& cur = layers_.at(l).weight;
  if (w.rows() != cur.rows() || w.cols() != cur.cols())
    throw Error(ErrorKind::InvalidShape, "set_weight: shape mismatch");
  if (!w.all_finite()) throw Error(ErrorKind::NonFinite, "set_weight: non-finite weights");
  cur = std::move(w);
}

std::vector<Matrix> Network::weights() const {
  std::vector<Matrix> out;
  out.reserve(layers_.size());
  for (const Layer& layer : layers_) out.push_back(layer.weight);
  return out;
}

std::uint64_t Network::fingerprint() const noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  for (const Layer& layer : layers_) {
    mix(layer.weight.rows());
    mix(layer.weight.cols());
    for (double v : layer.weight.data()) mix(std::bit_cast<std::uint64_t>(v));
  }
  return h;
}

namespace {

// out = a * W[:, :in]^T + W[:, in]
Matrix affine(const Matrix& a, const Matrix& w) {
  const std::size_t in = w.cols() - 1;
  const std::size_t out_dim = w.rows();
  const Matrix wt = w.transpose();  // (in + 1) x out
  Matrix h(a.rows(), out_dim);
  const double* bias = wt.row(in).data();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* hi = h.row(i).data();
    std::copy_n(bias, out_dim, hi);
    const double* ai = a.row(i).data();
    for (std::size_t k = 0; k < in; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* wk = wt.row(k).data();
      for (std::size_t j = 0; j < out_dim; ++j) hi[j] += aik * wk[j];
    }
  }
  return h;
}

Matrix activate(const Matrix& h, Activation act) {
  if (act == Activation::Identity) return h;
  Matrix a = h;
  for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
  return a;
}

}  // namespace

ForwardTape forward(const Network& net, const Matrix& batch) {
  if (batch.cols() != net.input_dim())
    throw Error(ErrorKind::InvalidShape, "batch has " + std::to_string(batch.cols()) +
                                             " columns, network expects " +
                                             std::to_string(net.input_dim()));
  ForwardTape tape;
  tape.input = batch;
  tape.fingerprint = net.fingerprint();
  tape.pre.reserve(net.num_layers());
  tape.post.reserve(net.num_layers());
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const Layer& layer = net.layer(l);
    tape.pre.push_back(affine(tape.layer_input(l), layer.weight));
    tape.post.push_back(activate(tape.pre.back(), layer.activation));
  }
  if (!tape.logits().all_finite()) throw Error(ErrorKind::NonFinite, "forward produced non-finite logits");
  return tape;
}

Matrix logits(const Network& net, const Matrix& batch) { return forward(net, batch).logits(); }

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const Layer& layer : net.layers()) g.layers.emplace_back(layer.weight.rows(), layer.weight.cols());
  return g;
}

Gradients& Gradients::axpy(double s, const Gradients& other) {
  if (other.layers.size() != layers.size()) throw Error(ErrorKind::InvalidShape, "gradient layer count");
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].axpy(s, other.layers[l]);
  return *this;
}

double Gradients::max_abs() const noexcept {
  double m = 0.0;
  for (const Matrix& g : layers)
    for (double v : g.data()) m = std::max(m, std::abs(v));
  return m;
}

BackwardResult backprop(const Network& net, const ForwardTape& tape, const Matrix& dlogits,
                        std::span<const std::optional<Matrix>> post_seeds, bool want_input_grad) {
  if (tape.fingerprint != net.fingerprint() || tape.pre.size() != net.num_layers())
    throw Error(ErrorKind::StaleTape, "tape was produced by different weights");
  const std::size_t batch = tape.batch_size();
  if (dlogits.rows() != batch || dlogits.cols() != net.output_dim())
    throw Error(ErrorKind::InvalidShape, "dlogits shape does not match the tape");

  BackwardResult result;
  result.grads.layers.resize(net.num_layers());
  Matrix delta = dlogits;  // dL/dh_l
  for (std::size_t l = net.num_layers(); l-- > 0;) {
    const Matrix& w = net.layer(l).weight;
    const Matrix& a = tape.layer_input(l);
    const std::size_t in = w.cols() - 1;

    // dW = delta^T [a, 1]
    Matrix gw(w.rows(), w.cols());
    for (std::size_t i = 0; i < batch; ++i) {
      const double* ai = a.row(i).data();
      const double* di = delta.row(i).data();
      for (std::size_t o = 0; o < w.rows(); ++o) {
        const double d = di[o];
        if (d == 0.0) continue;
        double* go = gw.row(o).data();
        for (std::size_t k = 0; k < in; ++k) go[k] += d * ai[k];
        go[in] += d;
      }
    }
    result.grads.layers[l] = std::move(gw);

    if (l == 0 && !want_input_grad) break;

    // dA = delta W[:, :in]
    Matrix da(batch, in);
    for (std::size_t i = 0; i < batch; ++i) {
      double* dai = da.row(i).data();
      const double* di = delta.row(i).data();
      for (std::size_t o = 0; o < w.rows(); ++o) {
        const double d = di[o];
        if (d == 0.0) continue;
        const double* wo = w.row(o).data();
        for (std::size_t k = 0; k < in; ++k) dai[k] += d * wo[k];
      }
    }
    if (l == 0) {
      result.input_grad = std::move(da);
      break;
    }

    const std::size_t below = l - 1;
    if (below < post_seeds.size() && post_seeds[below].has_value()) {
      const Matrix& seed = *post_seeds[below];
      if (seed.rows() != batch || seed.cols() != in)
        throw Error(ErrorKind::InvalidShape, "post-activation seed shape");
      da += seed;
    }
    if (net.layer(below).activation == Activation::ReLU) {
      const Matrix& h = tape.pre[below];
      // ReLU'(0) := 0
      for (std::size_t idx = 0; idx < da.size(); ++idx)
        if (!(h.data()[idx] > 0.0)) da.data()[idx] = 0.0;
    }
    delta = std::move(da);
  }
  return result;
}

std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const Layer& layer : net.layers()) n += layer.weight.size();
  return n;
}

}  // namespace s2o::nn
