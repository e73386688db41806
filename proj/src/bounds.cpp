#include "s2o/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "json.hpp"
#include "s2o/csv.hpp"
#include "s2o/error.hpp"
#include "s2o/linalg.hpp"

namespace s2o::bounds {

namespace {

struct Merged {
  double lamc = 0.0, lamr = 0.0;
  double lam_min = std::numeric_limits<double>::infinity(), lam_max = 0.0;
  double logdet = std::numeric_limits<double>::infinity();
  std::size_t dim = 0;
  bool seen = false;
  bool has_logdet = true;
};

// Clean/adversarial records of a layer collapse to the bracketing extremes.
std::vector<Merged> merge_stats(const nn::Network& net, std::span<const stats::LayerCorrStats> stats) {
  std::vector<Merged> out(net.num_layers());
  for (const auto& s : stats) {
    if (s.layer >= net.num_layers()) throw Error(ErrorKind::InvalidArgument, "stats for a layer the net lacks");
    Merged& m = out[s.layer];
    m.seen = true;
    m.dim = s.dim;
    m.lamc = std::max(m.lamc, s.lamc_max);
    m.lamr = std::max(m.lamr, s.lamr_max);
    m.lam_min = std::min(m.lam_min, s.lam_min);
    m.lam_max = std::max(m.lam_max, s.lam_max);
    // det is log-concave: the mixture's ln det is at least the smaller of the two
    if (s.logdet)
      m.logdet = std::min(m.logdet, *s.logdet);
    else
      m.has_logdet = false;
  }
  for (std::size_t l = 0; l < out.size(); ++l)
    if (!out[l].seen) throw Error(ErrorKind::IncompleteStats, "no correlation stats for layer " + std::to_string(l));
  return out;
}

double max_width(const nn::Network& net) {
  const auto w = net.widths();
  return static_cast<double>(*std::max_element(w.begin(), w.end()));
}

}  // namespace

std::string to_string(BoundKind k) {
  switch (k) {
    case BoundKind::Neyshabur22: return "neyshabur22";
    case BoundKind::Xiao24: return "xiao24";
    case BoundKind::S2O35: return "s2o35";
    case BoundKind::S2O36: return "s2o36";
  }
  return "?";
}

BoundKind bound_kind_from_string(const std::string& s) {
  for (BoundKind k : {BoundKind::Neyshabur22, BoundKind::Xiao24, BoundKind::S2O35, BoundKind::S2O36})
    if (to_string(k) == s) return k;
  throw Error(ErrorKind::Config, "unknown bound kind " + s);
}

void BoundInputs::validate() const {
  if (!(gamma > 0.0)) throw Error(ErrorKind::InvalidMargin, "gamma must be > 0");
  if (!(delta > 0.0 && delta < 1.0)) throw Error(ErrorKind::InvalidArgument, "delta must lie in (0, 1)");
  if (!(m >= 1.0)) throw Error(ErrorKind::InvalidArgument, "m must be >= 1");
  if (!(B > 0.0) || !(epsilon >= 0.0) || !(c > 0.0))
    throw Error(ErrorKind::InvalidArgument, "B, c must be > 0 and epsilon >= 0");
}

double phi_standard(std::span<const double> spectral, std::span<const double> frob_sq) {
  double prod = 1.0, sum = 0.0;
  for (std::size_t l = 0; l < spectral.size(); ++l) {
    if (!(spectral[l] > 0.0)) throw Error(ErrorKind::DegenerateLayer, "layer " + std::to_string(l) + " has zero norm");
    const double s2 = spectral[l] * spectral[l];
    prod *= s2;
    sum += frob_sq[l] / s2;
  }
  return prod * sum;
}

double phi_standard(const nn::Network& net) {
  std::vector<double> spec, frob;
  for (const auto& layer : net.layers()) {
    spec.push_back(linalg::spectral_norm(layer.weight));
    frob.push_back(linalg::frobenius_sq(layer.weight));
  }
  return phi_standard(spec, frob);
}

double lambda_factor(const nn::Network& net, std::span<const stats::LayerCorrStats> stats) {
  double s = 0.0;
  for (const Merged& m : merge_stats(net, stats)) s += m.lamc + m.lamr;
  return s * s;
}

double phi_s2o(const nn::Network& net, std::span<const stats::LayerCorrStats> stats) {
  return phi_standard(net) * lambda_factor(net, stats);
}

BoundReport evaluate_bound(const nn::Network& net, std::span<const stats::LayerCorrStats> stats,
                           const BoundInputs& in, BoundKind kind) {
  in.validate();
  const double n = static_cast<double>(net.num_layers());
  BoundReport r;
  r.kind = kind;
  for (const auto& layer : net.layers()) {
    LayerTerms t;
    t.spectral_norm = linalg::spectral_norm(layer.weight);
    t.frob_sq = linalg::frobenius_sq(layer.weight);
    r.per_layer.push_back(t);
  }
  std::vector<double> spec, frob;
  for (const auto& t : r.per_layer) {
    spec.push_back(t.spectral_norm);
    frob.push_back(t.frob_sq);
  }
  r.phi_standard = phi_standard(spec, frob);
  r.confidence_term = std::log(n * in.m / in.delta);

  const double radius = in.B + in.epsilon;
  if (kind == BoundKind::Neyshabur22 || kind == BoundKind::Xiao24) {
    const double h = max_width(net);
    const double b = kind == BoundKind::Neyshabur22 ? in.B : radius;
    r.phi = r.phi_standard;
    r.capacity_term = b * b * n * n * h * std::log(n * h) * r.phi;
  } else {
    const auto merged = merge_stats(net, stats);
    double lam_sum = 0.0;
    for (std::size_t l = 0; l < merged.size(); ++l) {
      const Merged& m = merged[l];
      lam_sum += m.lamc + m.lamr;
      LayerTerms& t = r.per_layer[l];
      t.lamc = m.lamc;
      t.lamr = m.lamr;
      t.lam_min = m.lam_min;
      t.lam_max = m.lam_max;
      if (!(m.lam_min > 0.0))
        throw Error(ErrorKind::SingularCorrelation, "layer " + std::to_string(l) + " correlation is singular");
      t.log_det_lb = linalg::log_det_lower_bound(m.lam_min, m.lam_max, m.dim);
      if (kind == BoundKind::S2O35) {
        if (!m.has_logdet) throw Error(ErrorKind::IncompleteStats, "layer " + std::to_string(l) + " lacks ln det R");
        r.logdet_term -= m.logdet;
      } else {
        r.logdet_term -= t.log_det_lb;
      }
    }
    r.lambda_factor = lam_sum * lam_sum;
    r.phi = r.phi_standard * r.lambda_factor;
    r.capacity_term = radius * radius * in.c * in.c * r.phi;
  }
  r.kl_proxy = r.capacity_term + r.logdet_term;
  r.numerator = r.capacity_term + r.logdet_term + r.confidence_term;
  r.complexity_term = std::sqrt(std::max(r.numerator, 0.0) / (in.gamma * in.gamma * in.m));
  return r;
}

std::string report_json(const BoundReport& r, const BoundInputs& in) {
  nlohmann::ordered_json doc;
  doc["bound_kind"] = to_string(r.kind);
  doc["inputs"] = {{"gamma", in.gamma}, {"delta", in.delta}, {"m", in.m},
                   {"B", in.B},         {"epsilon", in.epsilon}, {"c", in.c}};
  doc["phi"] = r.phi;
  doc["phi_standard"] = r.phi_standard;
  doc["lambda_factor"] = r.lambda_factor;
  doc["capacity_term"] = r.capacity_term;
  doc["logdet_term"] = r.logdet_term;
  doc["confidence_term"] = r.confidence_term;
  doc["kl_proxy"] = r.kl_proxy;
  doc["numerator"] = r.numerator;
  doc["complexity_term"] = r.complexity_term;
  nlohmann::ordered_json layers = nlohmann::ordered_json::array();
  for (const auto& t : r.per_layer)
    layers.push_back({{"spectral_norm", t.spectral_norm}, {"frob_sq", t.frob_sq}, {"lamc", t.lamc},
                      {"lamr", t.lamr}, {"lam_min", t.lam_min}, {"lam_max", t.lam_max},
                      {"log_det_lb", t.log_det_lb}});
  doc["per_layer"] = std::move(layers);
  return doc.dump(2) + "\n";
}

std::vector<std::string> report_csv_header() {
  return {"bound_kind", "phi", "phi_standard", "lambda_factor", "capacity_term", "logdet_term",
          "confidence_term", "kl_proxy", "numerator", "complexity_term"};
}

std::vector<std::string> report_csv_row(const BoundReport& r) {
  return {to_string(r.kind),          io::real(r.phi),         io::real(r.phi_standard),
          io::real(r.lambda_factor),  io::real(r.capacity_term), io::real(r.logdet_term),
          io::real(r.confidence_term), io::real(r.kl_proxy),    io::real(r.numerator),
          io::real(r.complexity_term)};
}

}  // namespace s2o::bounds
