#include "s2o/weight_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s2o/csv.hpp"
#include "s2o/error.hpp"
#include "s2o/linalg.hpp"
#include "s2o/losses.hpp"
#include "s2o/random.hpp"
#include "s2o/s2o.hpp"

namespace s2o::stats {

namespace {

double rms(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s / static_cast<double>(m.size()));
}

double ce(const nn::Network& net, const data::Dataset& ds) { return nn::cross_entropy(nn::logits(net, ds.inputs), ds.labels); }

// Eigen extremes, log det and Frobenius norm of R (or of its sample Gram form).
void fill_spectrum(LayerCorrStats& s, const linalg::SymEig& eig, bool full_rank) {
  s.lam_max = eig.max();
  s.lam_min = full_rank ? std::max(eig.min(), 0.0) : 0.0;
  if (s.lam_min > 0.0) {
    s.log_det_lb = linalg::log_det_lower_bound(s.lam_min, s.lam_max, s.dim);
    s.det_lb = std::exp(s.log_det_lb);
  } else {
    s.log_det_lb = -INFINITY;
    s.det_lb = 0.0;
  }
}

double quantile_sorted(const std::vector<double>& v, double q) {
  const std::size_t idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(idx, 1, v.size()) - 1];
}

double median_sorted(const std::vector<double>& v) {
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string to_string(Source s) { return s == Source::Sampling ? "sampling" : "laplace"; }
std::string to_string(DataKind d) { return d == DataKind::Clean ? "clean" : "adversarial"; }

void SamplingConfig::validate() const {
  if (num_samples < 2) throw Error(ErrorKind::Config, "num_samples must be >= 2");
  if (!(loss_tolerance > 0.0)) throw Error(ErrorKind::Config, "loss_tolerance must be > 0");
  if (refine_epochs < 0 || !(refine_lr >= 0.0)) throw Error(ErrorKind::Config, "refine settings must be >= 0");
  if (noise_sigma && !(*noise_sigma >= 0.0)) throw Error(ErrorKind::Config, "noise_sigma must be >= 0");
}

nn::Network refine(const nn::Network& net, const data::Dataset& ds, int epochs, double lr) {
  nn::Network out = net;
  for (int e = 0; e < epochs; ++e) {
    const nn::Gradients g = nn::backward(out, nn::forward(out, ds.inputs), {nn::LossKind::CrossEntropy, ds.labels});
    for (std::size_t l = 0; l < out.num_layers(); ++l) {
      Matrix w = out.layer(l).weight;
      w.axpy(-lr, g.layers[l]);
      out.set_weight(l, std::move(w));
    }
  }
  return out;
}

SamplingResult sample_weight_perturbations(const nn::Network& net, const data::Dataset& ds,
                                           const SamplingConfig& cfg) {
  cfg.validate();
  if (ds.size() == 0) throw Error(ErrorKind::EmptyBatch, "sampling needs data");
  std::vector<double> sigma;
  for (const auto& layer : net.layers()) sigma.push_back(cfg.noise_sigma.value_or(0.01 * rms(layer.weight)));

  SamplingResult res{{}, refine(net, ds, cfg.refine_epochs, cfg.refine_lr), ce(net, ds), {}, 0};
  const std::size_t max_draws = 100 * cfg.num_samples;
  while (res.deltas.size() < cfg.num_samples && res.draws < max_draws) {
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(res.draws)));
    ++res.draws;
    nn::Network noisy = net;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      Matrix w = net.layer(l).weight;
      for (double& v : w.data()) v += sigma[l] * rng.normal();
      noisy.set_weight(l, std::move(w));
    }
    const nn::Network refined = refine(noisy, ds, cfg.refine_epochs, cfg.refine_lr);
    const double dev = std::abs(ce(refined, ds) - res.base_loss);
    if (!(dev <= cfg.loss_tolerance)) continue;
    WeightDelta delta;
    for (std::size_t l = 0; l < net.num_layers(); ++l)
      delta.push_back(refined.layer(l).weight - res.refined_base.layer(l).weight);
    res.deltas.push_back(std::move(delta));
    res.loss_deviation.push_back(dev);
  }
  if (res.deltas.size() < cfg.num_samples)
    throw Error(ErrorKind::SamplingStalled, "accepted " + std::to_string(res.deltas.size()) + " of " +
                                                std::to_string(res.draws) + " draws");
  return res;
}

LayerCorrStats corr_from_samples(const std::vector<Matrix>& deltas, std::size_t layer, DataKind data) {
  const std::size_t s = deltas.size();
  if (s < 2) throw Error(ErrorKind::InvalidArgument, "need at least two deltas");
  const std::size_t rows = deltas[0].rows(), cols = deltas[0].cols();
  const std::size_t dim = rows * cols;
  for (const Matrix& d : deltas)
    if (d.rows() != rows || d.cols() != cols) throw Error(ErrorKind::InvalidShape, "delta shapes differ");

  Matrix mean(rows, cols);
  for (const Matrix& d : deltas) mean.axpy(1.0 / static_cast<double>(s), d);
  std::vector<Matrix> centered;
  for (const Matrix& d : deltas) centered.push_back(d - mean);

  // per-coordinate scaling so that R has unit diagonal
  std::vector<double> var(dim, 0.0);
  for (const Matrix& c : centered)
    for (std::size_t k = 0; k < dim; ++k) var[k] += c.data()[k] * c.data()[k];
  for (std::size_t k = 0; k < dim; ++k)
    if (!(var[k] > 0.0)) throw Error(ErrorKind::DegenerateVariance, "coordinate " + std::to_string(k) + " is constant");
  Matrix z(s, dim);
  for (std::size_t n = 0; n < s; ++n)
    for (std::size_t k = 0; k < dim; ++k) z(n, k) = centered[n].data()[k] / std::sqrt(var[k]);

  LayerCorrStats st;
  st.layer = layer;
  st.dim = dim;
  st.source = Source::Sampling;
  st.data = data;

  Matrix rc(cols, cols), rr(rows, rows);
  for (const Matrix& c : centered) {
    rc += matmul_tn(c, c);
    rr += matmul_nt(c, c);
  }
  st.Rc = linalg::normalize_to_correlation(rc);
  st.Rr = linalg::normalize_to_correlation(rr);
  st.lamc_max = std::sqrt(linalg::sym_eig(st.Rc).max());
  st.lamr_max = std::sqrt(linalg::sym_eig(st.Rr).max());

  // R = z^T z has rank <= s - 1; its nonzero spectrum equals that of z z^T.
  const bool full_rank = s - 1 >= dim;
  if (dim <= kMaterializeDim) st.R = linalg::normalize_to_correlation(matmul_tn(z, z));
  if (full_rank) {
    const Matrix& r = st.R ? *st.R : linalg::normalize_to_correlation(matmul_tn(z, z));
    const linalg::SymEig eig = linalg::sym_eig(r);
    st.frob_sq = linalg::frobenius_sq(r);
    fill_spectrum(st, eig, true);
    if (st.lam_min > 0.0) st.logdet = linalg::logdet_psd(r);
  } else {
    const Matrix gram = symmetrize(matmul_nt(z, z));
    st.frob_sq = linalg::frobenius_sq(gram);
    fill_spectrum(st, linalg::sym_eig(gram), false);
  }
  return st;
}

LayerCorrStats corr_from_samples(const std::vector<WeightDelta>& deltas, std::size_t layer, DataKind data) {
  std::vector<Matrix> one;
  for (const WeightDelta& d : deltas) one.push_back(d.at(layer));
  return corr_from_samples(one, layer, data);
}

LayerCorrStats corr_from_factors(const Matrix& a, const Matrix& h, double damping, std::size_t layer, DataKind data) {
  LayerCorrStats st;
  st.layer = layer;
  st.source = Source::Laplace;
  st.data = data;
  st.dim = a.rows() * h.rows();
  st.Rc = reg::s2o_matrix(a, damping, reg::DampingMode::TraceScaled);
  st.Rr = reg::s2o_matrix(h, damping, reg::DampingMode::TraceScaled);
  const linalg::SymEig ec = linalg::sym_eig(st.Rc);
  const linalg::SymEig er = linalg::sym_eig(st.Rr);
  st.lamc_max = std::sqrt(ec.max());
  st.lamr_max = std::sqrt(er.max());
  // spectrum of Rc (x) Rr is the set of pairwise products
  st.lam_max = ec.max() * er.max();
  st.lam_min = ec.min() * er.min();
  st.frob_sq = linalg::frobenius_sq(st.Rc) * linalg::frobenius_sq(st.Rr);
  st.logdet = static_cast<double>(h.rows()) * linalg::logdet_psd(st.Rc) +
              static_cast<double>(a.rows()) * linalg::logdet_psd(st.Rr);
  if (st.dim <= kMaterializeDim) st.R = linalg::kronecker(st.Rc, st.Rr);
  if (st.lam_min > 0.0) {
    st.log_det_lb = linalg::log_det_lower_bound(st.lam_min, st.lam_max, st.dim);
    st.det_lb = std::exp(st.log_det_lb);
  } else {
    st.log_det_lb = -INFINITY;
  }
  return st;
}

LayerCorrStats corr_from_laplace(const nn::Network& net, const data::Dataset& ds, std::size_t layer, double damping,
                                 DataKind data) {
  if (ds.size() == 0) throw Error(ErrorKind::EmptyBatch, "laplace needs data");
  const nn::ForwardTape tape = nn::forward(net, ds.inputs);
  const reg::KronFactors f = reg::kron_hessian_factors(net, tape, ds.labels, layer);
  return corr_from_factors(f.a, f.h, damping, layer, data);
}

std::vector<std::string> stats_header() {
  return {"layer", "source", "data", "dim", "lam_max", "lam_min", "lamc_max", "lamr_max",
          "det_lb", "log_det_lb", "logdet", "frob_sq", "frob_sq_rc", "frob_sq_rr"};
}

std::vector<std::string> stats_row(const LayerCorrStats& s) {
  return {std::to_string(s.layer),
          to_string(s.source),
          to_string(s.data),
          std::to_string(s.dim),
          io::real(s.lam_max),
          io::real(s.lam_min),
          io::real(s.lamc_max),
          io::real(s.lamr_max),
          io::real(s.det_lb),
          io::real(s.log_det_lb),
          s.logdet ? io::real(*s.logdet) : "nan",
          io::real(s.frob_sq),
          io::real(linalg::frobenius_sq(s.Rc)),
          io::real(linalg::frobenius_sq(s.Rr))};
}

Matrix column_partial_trace(const Matrix& r, std::size_t rows, std::size_t cols) {
  if (r.rows() != rows * cols || !r.is_square()) throw Error(ErrorKind::InvalidShape, "partial trace shape");
  Matrix out(cols, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      for (std::size_t k = 0; k < cols; ++k) out(j, k) += r(i * cols + j, i * cols + k);
  return out;
}

Matrix row_partial_trace(const Matrix& r, std::size_t rows, std::size_t cols) {
  if (r.rows() != rows * cols || !r.is_square()) throw Error(ErrorKind::InvalidShape, "partial trace shape");
  Matrix out(rows, rows);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < rows; ++k)
      for (std::size_t j = 0; j < cols; ++j) out(i, k) += r(i * cols + j, k * cols + j);
  return out;
}

Fig3Row fig3_row(const Matrix& r, std::size_t rows, std::size_t cols) {
  Fig3Row row;
  const linalg::SymEig eig = linalg::sym_eig(r);
  row.frob_sq = linalg::frobenius_sq(r);
  row.lamc = std::sqrt(linalg::sym_eig(column_partial_trace(r, rows, cols)).max());
  row.lamr = std::sqrt(linalg::sym_eig(row_partial_trace(r, rows, cols)).max());
  row.lam_sum = row.lamc + row.lamr;
  row.lam_max = eig.max();
  row.lam_min = eig.min();
  row.det_lb = row.lam_min > 0.0 ? linalg::det_lower_bound(row.lam_min, row.lam_max, r.rows()) : 0.0;
  return row;
}

namespace {

std::pair<std::size_t, std::size_t> factor_dim(std::size_t dim) {
  std::size_t rows = 1;
  for (std::size_t d = 1; d * d <= dim; ++d)
    if (dim % d == 0) rows = d;
  return {rows, dim / rows};
}

}  // namespace

Fig3Result simulate_fig3(std::size_t dim, std::size_t n_samples, Family family, std::uint64_t seed) {
  if (dim < 2) throw Error(ErrorKind::InvalidArgument, "dim must be >= 2");
  Fig3Result res;
  std::tie(res.rows, res.cols) = factor_dim(dim);
  const double r_lo = -1.0 / static_cast<double>(dim - 1);
  for (std::size_t t = 0; t < n_samples; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    if (family == Family::Equicorrelation) {
      double r = r_lo;
      while (r <= r_lo) r = rng.uniform(r_lo, 1.0);  // open interval keeps R positive definite
      Fig3Row row = fig3_row(linalg::equicorrelation(dim, r), res.rows, res.cols);
      row.r = r;
      res.samples.push_back(row);
    } else {
      res.samples.push_back(fig3_row(linalg::random_correlation(dim, rng), res.rows, res.cols));
    }
  }
  std::vector<double> frob, lam, det;
  for (const Fig3Row& r : res.samples) {
    frob.push_back(r.frob_sq);
    lam.push_back(r.lam_sum);
    det.push_back(r.det_lb);
  }
  res.spearman_frob_lam = spearman(frob, lam);
  res.spearman_frob_det = spearman(frob, det);
  return res;
}

std::vector<Fig3Row> equicorrelation_sweep(std::size_t dim, double r_end, std::size_t points) {
  const auto [rows, cols] = factor_dim(dim);
  std::vector<Fig3Row> out;
  for (std::size_t i = 0; i < points; ++i) {
    const double r = r_end * static_cast<double>(i) / static_cast<double>(points);
    Fig3Row row = fig3_row(linalg::equicorrelation(dim, r), rows, cols);
    row.r = r;
    out.push_back(row);
  }
  return out;
}

std::string fig3_csv(const Fig3Result& res) {
  std::vector<io::Row> rows;
  for (std::size_t i = 0; i < res.samples.size(); ++i) {
    const Fig3Row& r = res.samples[i];
    rows.push_back({std::to_string(i), io::real(r.r), io::real(r.frob_sq), io::real(r.lamc), io::real(r.lamr),
                    io::real(r.lam_sum), io::real(r.lam_min), io::real(r.lam_max), io::real(r.det_lb)});
  }
  return io::to_csv({"sample", "r", "frob_sq", "lamc", "lamr", "lam_sum", "lam_min", "lam_max", "det_lb"}, rows);
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw Error(ErrorKind::InvalidArgument, "spearman needs paired samples");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * static_cast<double>(i + j) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

PerturbationReport check_perturbation_bound(std::size_t h, double sigma, std::size_t trials, std::uint64_t seed) {
  if (trials < 30) throw Error(ErrorKind::InvalidArgument, "need at least 30 trials");
  if (h < 1 || !(sigma > 0.0)) throw Error(ErrorKind::InvalidArgument, "need h >= 1 and sigma > 0");
  PerturbationReport rep{h, sigma, {}, 0.0, 0.0};
  const double denom = 2.0 * std::sqrt(static_cast<double>(h)) * sigma;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    rep.ratios.push_back(linalg::spectral_norm(linalg::random_gaussian(h, h, rng, sigma)) / denom);
  }
  std::vector<double> sorted = rep.ratios;
  std::sort(sorted.begin(), sorted.end());
  rep.median = median_sorted(sorted);
  rep.p95 = quantile_sorted(sorted, 0.95);
  return rep;
}

}  // namespace s2o::stats
