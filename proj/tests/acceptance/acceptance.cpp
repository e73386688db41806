// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Usage: acceptance [criterion ids...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "oracles.hpp"
#include "s2o/bounds.hpp"
#include "s2o/harness.hpp"
#include "s2o/linalg.hpp"
#include "s2o/losses.hpp"
#include "s2o/random.hpp"
#include "s2o/s2o.hpp"
#include "s2o/weight_stats.hpp"

using namespace s2o;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void info(const std::string& s) { std::cout << "    " << s << '\n'; }

// ---------- 1: gradients of the training objectives ----------

double naive_kl(const Matrix& zp, const Matrix& zq) {
  double total = 0.0;
  for (std::size_t i = 0; i < zp.rows(); ++i) {
    auto logsm = [&](const Matrix& z) {
      double m = -1e300;
      for (std::size_t j = 0; j < z.cols(); ++j) m = std::max(m, z(i, j));
      double s = 0.0;
      for (std::size_t j = 0; j < z.cols(); ++j) s += std::exp(z(i, j) - m);
      std::vector<double> out(z.cols());
      for (std::size_t j = 0; j < z.cols(); ++j) out[j] = z(i, j) - m - std::log(s);
      return out;
    };
    const auto lp = logsm(zp), lq = logsm(zq);
    for (std::size_t j = 0; j < lp.size(); ++j) total += std::exp(lp[j]) * (lp[j] - lq[j]);
  }
  return total / static_cast<double>(zp.rows());
}

double naive_reg(const nn::Network& n, const Matrix& x, const reg::S2OConfig& c) {
  double g = 0.0;
  const std::size_t layers = n.num_layers();
  const std::size_t first = c.layer_policy == reg::LayerPolicy::All ? 1 : layers - 1;
  for (std::size_t l = first; l < layers; ++l) {
    const Matrix a = oracle::naive_hidden(n, x, l - 1);
    const double v = oracle::naive_s2o_penalty(a, c.damping, c.damping_mode == reg::DampingMode::TraceScaled);
    g += c.per_unit ? v / static_cast<double>(a.cols()) : v;
  }
  return g;
}

Outcome criterion1() {
  using harness::Method;
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
  std::vector<std::string> parts;
  struct Case {
    const char* name;
    Method method;
    bool per_unit;
  };
  const Case cases[] = {{"CE", Method::Standard, false},
                        {"TRADES", Method::TRADES, false},
                        {"AT+S2O", Method::AT_S2O, false},
                        {"AT+S2O/h", Method::AT_S2O, true},
                        {"TRADES+S2O", Method::TRADES_S2O, false}};
  for (const Case& c : cases) {
    double case_worst = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s) {
      const std::vector<std::size_t> widths{6, 12, 10, 4};
      const nn::Network net = nn::Network::he_init(widths, 100 + s);
      Rng rng(200 + s);
      data::Batch b{Matrix(16, 6), {}};
      for (double& v : b.inputs.data()) v = rng.uniform(0.05, 0.95);
      for (int i = 0; i < 16; ++i) b.labels.push_back(static_cast<int>(rng.uniform(0, 4)) % 4);

      harness::RunConfig cfg;
      cfg.train.method = c.method;
      cfg.attack_train = attack::AttackSpec{attack::Norm::Linf, 0.1, 3, 0.03};
      cfg.s2o = reg::S2OConfig{0.3, 1e-2, reg::DampingMode::TraceScaled, reg::LayerPolicy::All, c.per_unit};
      const harness::StepResult step = harness::step_objective(net, b, cfg, 300 + s);
      const Matrix& xa = step.adversarial;
      const double beta = 1.0 / cfg.trades_lambda;

      std::function<double(const nn::Network&)> objective = [&](const nn::Network& n) -> double {
        switch (c.method) {
          case Method::Standard: return oracle::naive_cross_entropy(oracle::naive_forward(n, b.inputs), b.labels);
          case Method::TRADES:
          case Method::TRADES_S2O: {
            const Matrix zc = oracle::naive_forward(n, b.inputs);
            double v = oracle::naive_cross_entropy(zc, b.labels) + beta * naive_kl(zc, oracle::naive_forward(n, xa));
            if (c.method == Method::TRADES_S2O) v += cfg.s2o.alpha * (naive_reg(n, b.inputs, cfg.s2o) + naive_reg(n, xa, cfg.s2o));
            return v;
          }
          default:
            return oracle::naive_cross_entropy(oracle::naive_forward(n, xa), b.labels) +
                   cfg.s2o.alpha * (naive_reg(n, b.inputs, cfg.s2o) + naive_reg(n, xa, cfg.s2o));
        }
      };
      if (std::abs(objective(net) - step.loss) > 1e-9 * std::max(1.0, std::abs(step.loss))) {
        return {false, std::string(c.name) + ": objective value disagrees with the oracle"};
      }
      std::vector<Matrix> kinks{b.inputs};
      if (!xa.empty()) kinks.push_back(xa);
      const auto fd = oracle::check_weight_gradient(net, step.grads.layers, objective, kinks);
      case_worst = std::max(case_worst, fd.max_rel_err);
      checked += fd.checked;
      skipped += fd.skipped_kinks;
    }
    worst = std::max(worst, case_worst);
    parts.push_back(std::string(c.name) + " " + fmt("%.1e", case_worst));
  }
  std::string d = "max rel err " + fmt("%.2e", worst) + " over " + std::to_string(checked) + " weights (" +
                  std::to_string(skipped) + " kink-adjacent skipped):";
  for (const auto& p : parts) d += " " + p;
  return {worst < 1e-4 && checked > 1000, d};
}

// ---------- 2: matrix lemmas ----------

double naive_det(Matrix m) {
  const std::size_t n = m.rows();
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(m(r, c)) > std::abs(m(p, c))) p = r;
    if (m(p, c) == 0.0) return 0.0;
    if (p != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(m(p, k), m(c, k));
      det = -det;
    }
    det *= m(c, c);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = m(r, c) / m(c, c);
      for (std::size_t k = c; k < n; ++k) m(r, k) -= f * m(c, k);
    }
  }
  return det;
}

Outcome criterion2() {
  Rng rng(2);
  const int instances = 1200;
  int weyl = 0, bracket = 0, equi = 0, det = 0;
  double equi_err = 0.0;
  for (int t = 0; t < instances; ++t) {
    const std::size_t d = 2 + static_cast<std::size_t>(t % 8);
    const Matrix a = linalg::random_symmetric(d, rng), b = linalg::random_symmetric(d, rng);
    const double lhs = linalg::sym_eig(a + b).max();
    if (lhs > linalg::sym_eig(a).max() + linalg::sym_eig(b).max() + 1e-12 * (1 + std::abs(lhs))) ++weyl;

    const Matrix p = linalg::random_correlation(d, rng), q = linalg::random_correlation(d, rng);
    const double w = rng.uniform();
    const auto ep = linalg::sym_eig(p), eq = linalg::sym_eig(q);
    const double mix = linalg::sym_eig(w * p + (1 - w) * q).min();
    if (mix < w * ep.min() + (1 - w) * eq.min() - 1e-12 || mix > w * ep.min() + (1 - w) * eq.max() + 1e-12) ++bracket;

    const double r = rng.uniform(-1.0 / static_cast<double>(d - 1), 1.0);
    auto got = linalg::sym_eig(linalg::equicorrelation(d, r)).eigenvalues;
    std::vector<double> want(d, 1.0 - r);
    want[0] = 1.0 + static_cast<double>(d - 1) * r;
    std::sort(got.begin(), got.end());
    std::sort(want.begin(), want.end());
    for (std::size_t i = 0; i < d; ++i) {
      const double e = std::abs(got[i] - want[i]);
      equi_err = std::max(equi_err, e);
      if (e > 1e-9) ++equi;
    }

    for (const Matrix& m : {p, linalg::equicorrelation(d, r)}) {
      const auto e = linalg::sym_eig(m);
      const double exact = naive_det(m);
      const double bound = linalg::det_lower_bound(e.min(), e.max(), d);
      if (exact < bound * (1 - 1e-10) - 1e-300) ++det;
    }
  }
  return {weyl + bracket + equi + det == 0,
          std::to_string(instances) + " instances, d in 2..9; violations: Weyl " + std::to_string(weyl) +
              ", lambda_min bracketing " + std::to_string(bracket) + ", equicorrelation eigenvalues " +
              std::to_string(equi) + " (max err " + fmt("%.1e", equi_err) + "), det lower bound " + std::to_string(det)};
}

// ---------- 3: correlation-family simulation ----------

Outcome criterion3() {
  const auto eq = stats::simulate_fig3(9, 10000, stats::Family::Equicorrelation, 2024);
  const auto rnd = stats::simulate_fig3(9, 10000, stats::Family::RandomCorrelation, 2024);
  info("random-correlation family (normalized Wishart): rho(frob, Lambda) = " + fmt("%+.3f", rnd.spearman_frob_lam) +
       ", rho(frob, det bound) = " + fmt("%+.3f", rnd.spearman_frob_det));

  // sweep against closed forms: ||R||_F^2 = d + d(d-1) r^2, det R = (1+(d-1)r)(1-r)^(d-1)
  const double d = 9.0;
  bool monotone = true;
  double closed_err = 0.0;
  for (double r_end : {0.95, -1.0 / 8.0}) {
    const auto sweep = stats::equicorrelation_sweep(9, r_end, 60);
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      const double r = sweep[i].r;
      closed_err = std::max(closed_err, std::abs(sweep[i].frob_sq - (d + d * (d - 1) * r * r)) / d);
      const double det = (1 + (d - 1) * r) * std::pow(1 - r, d - 1);
      if (sweep[i].det_lb > det * (1 + 1e-10)) monotone = false;
      if (i > 0)
        monotone = monotone && sweep[i].frob_sq > sweep[i - 1].frob_sq && sweep[i].lam_sum > sweep[i - 1].lam_sum &&
                   sweep[i].det_lb < sweep[i - 1].det_lb;
    }
  }
  const bool pass = eq.spearman_frob_lam > 0.5 && eq.spearman_frob_det < -0.5 && monotone && closed_err < 1e-9;
  return {pass, "equicorrelation family, 10000 x 9-dim: rho(frob, Lambda) = " + fmt("%+.4f", eq.spearman_frob_lam) +
                    ", rho(frob, det bound) = " + fmt("%+.4f", eq.spearman_frob_det) + "; sweeps " +
                    (monotone ? "strictly monotone" : "NOT monotone") + ", closed-form err " + fmt("%.1e", closed_err)};
}

// ---------- 4: random perturbation norm ----------

Outcome criterion4() {
  bool pass = true;
  std::string d;
  for (std::size_t h : {16, 64}) {
    const auto rep = stats::check_perturbation_bound(h, 1.0, 200, derive_seed(4, h));
    pass = pass && rep.p95 < 1.3;
    d += "h=" + std::to_string(h) + ": median " + fmt("%.3f", rep.median) + ", p95 " + fmt("%.3f", rep.p95) + "; ";
  }
  return {pass, d + "threshold p95 < 1.3"};
}

// ---------- 5: Kronecker-factored Hessian ----------

Outcome criterion5() {
  const std::vector<std::size_t> widths{3, 5, 4};
  const nn::Network net = nn::Network::he_init(widths, 5);
  const Matrix x{{0.3, 0.8, 0.5}};
  const std::vector<int> y{1};
  const auto f = reg::kron_hessian_factors(net, nn::forward(net, x), y, 1);
  const Matrix k = linalg::kronecker(f.a, f.h);

  const std::size_t out = 4, n = out * 6;
  auto loss = [&](std::size_t i, double di, std::size_t j, double dj) {
    nn::Network m = net;
    Matrix w = net.layer(1).weight;
    w(i % out, i / out) += di;  // column-major vec
    w(j % out, j / out) += dj;
    m.set_weight(1, w);
    return oracle::naive_cross_entropy(oracle::naive_forward(m, x), y);
  };
  const double h = 1e-4;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double fd =
          (loss(i, h, j, h) - loss(i, h, j, -h) - loss(i, -h, j, h) + loss(i, -h, j, -h)) / (4 * h * h);
      num += (k(i, j) - fd) * (k(i, j) - fd);
      den += fd * fd;
    }
  const double rel = std::sqrt(num / den);

  Rng rng(55);
  Matrix batch(16, 3);
  for (double& v : batch.data()) v = rng.uniform();
  const double gap = reg::kron_factorization_gap(net, nn::forward(net, batch), 1);
  return {rel < 1e-6, "batch-1 relative Frobenius error " + fmt("%.2e", rel) +
                          "; 16-sample factorization gap " + fmt("%.4f", gap) + " (informational)"};
}

// ---------- 6: bound calculator ----------

std::vector<stats::LayerCorrStats> stats_for(const nn::Network& net, Rng& rng, bool identity) {
  std::vector<stats::LayerCorrStats> out;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    stats::LayerCorrStats s;
    s.layer = l;
    s.dim = net.layer(l).weight.size();
    if (identity) {
      s.lam_min = s.lam_max = s.lamc_max = s.lamr_max = 1.0;
      s.logdet = 0.0;
    } else {
      const Matrix r = linalg::random_correlation(6, rng);
      const auto e = linalg::sym_eig(r);
      s.lam_min = e.min();
      s.lam_max = e.max();
      s.lamc_max = rng.uniform(1.0, 2.0);
      s.lamr_max = rng.uniform(1.0, 2.0);
      s.logdet = linalg::logdet_psd(r);
    }
    out.push_back(s);
  }
  return out;
}

Outcome criterion6() {
  using bounds::BoundKind;
  double inv_err = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::vector<std::size_t> widths{5, 7, 6, 3};
    const nn::Network net = nn::Network::he_init(widths, 600 + s);
    const double base = bounds::phi_standard(net);
    for (double a : {0.01, 0.5, 3.0, 100.0}) {
      nn::Network m = net;
      m.set_weight(0, a * net.layer(0).weight);
      m.set_weight(2, (1.0 / a) * net.layer(2).weight);
      inv_err = std::max(inv_err, std::abs(bounds::phi_standard(m) - base) / base);
    }
  }

  // identity correlations with c^2 = n^2 h ln(nh) make the S2O-3.5 KL part (2n)^2 times Xiao's
  double red_err = 0.0;
  Rng rng(6);
  for (const std::vector<std::size_t>& widths :
       {std::vector<std::size_t>{4, 5, 3}, std::vector<std::size_t>{6, 9, 7, 4}, std::vector<std::size_t>{3, 8, 8, 8, 2}}) {
    const nn::Network net = nn::Network::he_init(widths, 61);
    const double n = static_cast<double>(net.num_layers());
    const double h = static_cast<double>(*std::max_element(widths.begin(), widths.end()));
    const bounds::BoundInputs in{0.7, 0.05, 2000, 2.5, 0.2, n * std::sqrt(h * std::log(n * h))};
    const auto xiao = bounds::evaluate_bound(net, {}, in, BoundKind::Xiao24);
    const auto s35 = bounds::evaluate_bound(net, stats_for(net, rng, true), in, BoundKind::S2O35);
    red_err = std::max(red_err, std::abs(s35.kl_proxy - 4 * n * n * xiao.kl_proxy) / s35.kl_proxy);
  }

  int violations = 0;
  for (int t = 0; t < 100; ++t) {
    const std::vector<std::size_t> widths{4, 5, 3};
    const nn::Network net = nn::Network::he_init(widths, 700 + static_cast<std::uint64_t>(t));
    const auto st = stats_for(net, rng, false);
    const bounds::BoundInputs in{rng.uniform(0.1, 2.0), 0.05, std::floor(rng.uniform(10, 1e4)), rng.uniform(0.5, 5.0),
                                 rng.uniform(0.0, 0.5), rng.uniform(0.5, 2.0)};
    for (BoundKind k : {BoundKind::Neyshabur22, BoundKind::Xiao24, BoundKind::S2O35, BoundKind::S2O36}) {
      const double base = bounds::evaluate_bound(net, st, in, k).complexity_term;
      auto e = in, g = in, m = in;
      e.epsilon *= 1.5;
      e.epsilon += 0.05;
      g.gamma *= 1.3;
      m.m *= 2;
      auto lam = st;
      for (auto& s : lam) s.lamc_max *= 1.25;
      violations += bounds::evaluate_bound(net, st, e, k).complexity_term < base;
      violations += bounds::evaluate_bound(net, st, g, k).complexity_term > base;
      violations += bounds::evaluate_bound(net, st, m, k).complexity_term > base;
      violations += bounds::evaluate_bound(net, lam, in, k).complexity_term < base;
    }
  }
  return {inv_err < 1e-10 && red_err < 1e-12 && violations == 0,
          "Phi rescaling err " + fmt("%.1e", inv_err) + "; identity reduction err " + fmt("%.1e", red_err) +
              "; monotonicity violations " + std::to_string(violations) + " / 1600 checks"};
}

// ---------- 7: desk-scale training ----------

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  const harness::RunConfig base = harness::load_config(fs::path(S2O_SOURCE_DIR) / "configs" / "desk_digits.json");
  const harness::Splits data = harness::load_data(base.dataset);
  const fs::path root = fs::current_path() / "acceptance_out" / "desk";

  std::vector<double> adv_gain, frob_at, frob_reg, gap_at, gap_reg, time_ratio, clean_at, clean_reg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto run = [&](harness::Method m) {
      harness::RunConfig cfg = base;
      cfg.train.method = m;
      cfg.train.seed = seed;
      return harness::train(cfg, data, root / (harness::to_string(m) + "_" + std::to_string(seed)));
    };
    const auto std_run = run(harness::Method::Standard);
    const auto at = run(harness::Method::AT);
    const auto reg = run(harness::Method::AT_S2O);
    const auto& ms = std_run.metrics.back();
    const auto& ma = at.metrics.back();
    const auto& mr = reg.metrics.back();
    adv_gain.push_back(ma.pgd_test - ms.pgd_test);
    frob_at.push_back(at.final_frob_clean);
    frob_reg.push_back(reg.final_frob_clean);
    gap_at.push_back(ma.pgd_train - ma.pgd_test);
    gap_reg.push_back(mr.pgd_train - mr.pgd_test);
    clean_at.push_back(ma.clean_test);
    clean_reg.push_back(mr.clean_test);
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    };
    time_ratio.push_back(mean(reg.epoch_seconds) / mean(at.epoch_seconds));
    info("seed " + std::to_string(seed) + ": PGD-20 test std/AT/AT+S2O " + fmt("%.3f", ms.pgd_test) + "/" +
         fmt("%.3f", ma.pgd_test) + "/" + fmt("%.3f", mr.pgd_test) + ", gap AT " + fmt("%+.3f", gap_at.back()) +
         " S2O " + fmt("%+.3f", gap_reg.back()) + ", ||A_x||^2 AT " + fmt("%.1f", frob_at.back()) + " S2O " +
         fmt("%.1f", frob_reg.back()) + ", time ratio " + fmt("%.2f", time_ratio.back()));
  }
  {
    // the unscaled objective at the same alpha, for the record (not part of the verdict)
    harness::RunConfig cfg = base;
    cfg.train.method = harness::Method::AT_S2O;
    cfg.s2o.per_unit = false;
    const auto raw = harness::train(cfg, data, root / "AT_S2O_raw_0");
    info("unscaled penalty, alpha 0.3, seed 0: clean test " + fmt("%.3f", raw.metrics.back().clean_test) +
         ", PGD-20 test " + fmt("%.3f", raw.metrics.back().pgd_test) + ", ||A_x||^2 " + fmt("%.1f", raw.final_frob_clean));
  }
  const double minutes = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60.0;
  info("median clean test accuracy AT " + fmt("%.3f", median(clean_at)) + ", AT+S2O " + fmt("%.3f", median(clean_reg)));

  const bool a = median(adv_gain) >= 0.20;
  const bool b = median(frob_reg) < median(frob_at);
  const bool c = median(gap_reg) < median(gap_at);
  const bool d = median(time_ratio) <= 1.6;
  const bool t = minutes < 30.0;
  auto mark = [](bool ok) { return ok ? "ok" : "FAILED"; };
  return {a && b && c && d && t,
          std::string("(a) AT - Standard PGD-20 test ") + fmt("%+.3f", median(adv_gain)) + " " + mark(a) +
              "; (b) ||A_x||_F^2 " + fmt("%.1f", median(frob_reg)) + " vs " + fmt("%.1f", median(frob_at)) + " " +
              mark(b) + "; (c) gap " + fmt("%+.4f", median(gap_reg)) + " vs " + fmt("%+.4f", median(gap_at)) + " " +
              mark(c) + "; (d) epoch time x" + fmt("%.2f", median(time_ratio)) + " " + mark(d) + "; total " +
              fmt("%.1f", minutes) + " min " + mark(t)};
}

// ---------- 8: byte-identical reruns ----------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion8() {
  const fs::path root = fs::current_path() / "acceptance_out" / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cfg = (fs::path(S2O_SOURCE_DIR) / "configs" / "blobs_quick.json").string();
  int failures = 0;
  for (const char* run : {"a", "b"})
    for (const char* cmd : {"train", "evaluate", "stats", "bound", "simulate"}) {
      const std::string line = std::string(S2O_CLI_PATH) + " " + cmd + " --config " + cfg + " --seed 11 --out " +
                               (root / run).string() + " > " + (root.parent_path() / "cli.log").string() + " 2>&1";
      const int rc = std::system(line.c_str());
      if (!WIFEXITED(rc) || WEXITSTATUS(rc) != 0) {
        ++failures;
        info(std::string("command failed: ") + cmd);
      }
    }
  std::size_t compared = 0;
  std::vector<std::string> differing;
  std::set<std::string> names_a, names_b;
  for (const auto& e : fs::directory_iterator(root / "a"))
    if (e.path().extension() == ".csv" || e.path().extension() == ".json") names_a.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(root / "b"))
    if (e.path().extension() == ".csv" || e.path().extension() == ".json") names_b.insert(e.path().filename().string());
  for (const auto& n : names_a) {
    ++compared;
    if (!names_b.count(n) || slurp(root / "a" / n) != slurp(root / "b" / n)) differing.push_back(n);
  }
  std::string d = std::to_string(compared) + " CSV/JSON outputs of train/evaluate/stats/bound/simulate compared, " +
                  std::to_string(differing.size()) + " differ";
  for (const auto& n : differing) d += " " + n;
  return {failures == 0 && differing.empty() && names_a == names_b && compared >= 10, d};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    Outcome (*run)();
  };
  const Criterion all[] = {{1, "gradient suite", 60, criterion1},
                           {2, "matrix lemmas", 120, criterion2},
                           {3, "correlation-family simulation", 300, criterion3},
                           {4, "random perturbation bound", 120, criterion4},
                           {5, "Kronecker Hessian", 1e9, criterion5},
                           {6, "bound calculator", 1e9, criterion6},
                           {7, "desk-scale training directions", 1800, criterion7},
                           {8, "determinism", 1e9, criterion8}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const Criterion& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_s) {
      o.pass = false;
      o.detail += "; over the time limit";
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail << " ["
              << fmt("%.1f", secs) << " s]" << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
