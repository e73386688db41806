#include "s2o/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "s2o/checkpoint.hpp"
#include "s2o/csv.hpp"
#include "s2o/error.hpp"
#include "s2o/linalg.hpp"
#include "s2o/losses.hpp"
#include "s2o/random.hpp"

namespace s2o::harness {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::Config, what); }

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) config_error(section + " must be an object");
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) config_error("unknown key '" + item.key() + "' in " + section);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

Method method_from_string(const std::string& s) {
  for (Method m : {Method::Standard, Method::AT, Method::TRADES, Method::AT_S2O, Method::TRADES_S2O})
    if (to_string(m) == s) return m;
  config_error("unknown method " + s);
}

attack::Norm norm_from_string(const std::string& s) {
  if (s == "linf") return attack::Norm::Linf;
  if (s == "l2") return attack::Norm::L2;
  config_error("unknown norm " + s);
}

std::string to_string(AttackType t) {
  switch (t) {
    case AttackType::FGSM: return "fgsm";
    case AttackType::PGD: return "pgd";
    case AttackType::CW: return "cw";
  }
  return "?";
}

attack::AttackSpec parse_attack(const json& j, const std::string& section, attack::AttackSpec a) {
  check_keys(j, section, {"name", "type", "norm", "epsilon", "steps", "step_size", "random_start", "seed", "loss"});
  if (j.contains("norm")) a.norm = norm_from_string(j.at("norm").get<std::string>());
  read(j, "epsilon", a.epsilon);
  read(j, "steps", a.steps);
  if (j.contains("step_size"))
    a.step_size = j.at("step_size").get<double>();
  else if (j.contains("epsilon") || j.contains("steps"))
    a.step_size = a.epsilon / 4.0;
  read(j, "random_start", a.random_start);
  read(j, "seed", a.seed);
  if (j.contains("loss")) {
    const auto l = j.at("loss").get<std::string>();
    if (l == "ce")
      a.loss = attack::AttackLoss::CE;
    else if (l == "cw")
      a.loss = attack::AttackLoss::CWMargin;
    else
      config_error("unknown attack loss " + l);
  }
  try {
    a.validate();
  } catch (const Error& e) {
    config_error(section + ": " + e.what());
  }
  return a;
}

std::uint64_t batch_seed(std::uint64_t seed, int epoch, std::size_t batch) {
  return derive_seed(derive_seed(seed, "attack"), static_cast<std::uint64_t>(epoch) * 1000003ULL + batch);
}

double lr_at(const TrainSpec& t, int epoch) {
  // step decay: /10 at 50% and again at 75% of the schedule
  double lr = t.lr;
  if (epoch >= t.epochs / 2) lr *= 0.1;
  if (epoch >= (3 * t.epochs) / 4) lr *= 0.1;
  return lr;
}

bool grads_finite(const nn::Gradients& g) {
  for (const auto& m : g.layers)
    if (!m.all_finite()) return false;
  return true;
}

}  // namespace

StepResult step_objective(const nn::Network& net, const data::Batch& b, const RunConfig& cfg, std::uint64_t seed) {
  const Method m = cfg.train.method;
  const bool reg_on = uses_s2o(m) && cfg.s2o.alpha > 0.0;
  nn::LossSpec ce{nn::LossKind::CrossEntropy, b.labels, nullptr};
  StepResult out;

  if (m == Method::Standard) {
    const auto tape = nn::forward(net, b.inputs);
    const auto lv = nn::loss_with_grad(tape.logits(), ce);
    out.loss = lv.value;
    out.grads = nn::backprop(net, tape, lv.dlogits).grads;
    return out;
  }

  attack::AttackSpec spec = cfg.attack_train;
  spec.seed = seed;

  if (!uses_trades(m)) {
    out.adversarial = attack::pgd(net, b.inputs, b.labels, spec);
    const auto tape_a = nn::forward(net, out.adversarial);
    const auto lv = nn::loss_with_grad(tape_a.logits(), ce);
    out.loss = lv.value;
    if (!reg_on) {
      out.grads = nn::backprop(net, tape_a, lv.dlogits).grads;
      return out;
    }
    const auto term_a = reg::s2o_tape_term(net, tape_a, cfg.s2o);
    out.grads = nn::backprop(net, tape_a, lv.dlogits, term_a.post_seeds).grads;
    const auto tape_c = nn::forward(net, b.inputs);
    const auto term_c = reg::s2o_tape_term(net, tape_c, cfg.s2o);
    const Matrix zero(tape_c.logits().rows(), tape_c.logits().cols());
    out.grads.axpy(1.0, nn::backprop(net, tape_c, zero, term_c.post_seeds).grads);
    out.loss += cfg.s2o.alpha * (term_a.value + term_c.value);
    return out;
  }

  // TRADES: CE(f(x)) + KL(f(x) || f(x')) / lambda, gradient through both passes
  const auto tape_c = nn::forward(net, b.inputs);
  out.adversarial = attack::trades_pgd(net, b.inputs, tape_c.logits(), spec);
  const auto tape_a = nn::forward(net, out.adversarial);
  const auto lv = nn::loss_with_grad(tape_c.logits(), ce);
  const auto kl = nn::kl_softmax_grad(tape_c.logits(), tape_a.logits());
  const double beta = 1.0 / cfg.trades_lambda;
  Matrix d_clean = lv.dlogits;
  d_clean.axpy(beta, kl.d_p);
  Matrix d_adv = beta * kl.d_q;
  out.loss = lv.value + beta * kl.value;
  std::vector<std::optional<Matrix>> seeds_c, seeds_a;
  if (reg_on) {
    auto tc = reg::s2o_tape_term(net, tape_c, cfg.s2o);
    auto ta = reg::s2o_tape_term(net, tape_a, cfg.s2o);
    out.loss += cfg.s2o.alpha * (tc.value + ta.value);
    seeds_c = std::move(tc.post_seeds);
    seeds_a = std::move(ta.post_seeds);
  }
  out.grads = nn::backprop(net, tape_c, d_clean, seeds_c).grads;
  out.grads.axpy(1.0, nn::backprop(net, tape_a, d_adv, seeds_a).grads);
  return out;
}

namespace {

struct EvalSnapshot {
  double clean_train, clean_test, pgd_train, pgd_test, penalty, frob_clean;
};

EvalSnapshot snapshot(const nn::Network& net, const data::Dataset& train_eval, const data::Dataset& test,
                      const RunConfig& cfg, std::uint64_t seed) {
  EvalAttack a{"pgd20", AttackType::PGD, cfg.metrics_attack.value_or(default_metrics_attack(cfg))};
  a.spec.seed = derive_seed(seed, "metrics");
  EvalSnapshot s{};
  const auto tape_c = nn::forward(net, train_eval.inputs);
  const Matrix adv_train = run_attack(net, train_eval.inputs, train_eval.labels, a);
  const auto tape_a = nn::forward(net, adv_train);
  s.clean_train = accuracy(net, train_eval.inputs, train_eval.labels);
  s.pgd_train = accuracy(net, adv_train, train_eval.labels);
  s.clean_test = accuracy(net, test.inputs, test.labels);
  s.pgd_test = accuracy(net, run_attack(net, test.inputs, test.labels, a), test.labels);
  reg::S2OConfig probe = cfg.s2o;
  probe.alpha = 0.0;
  probe.per_unit = false;
  const double fc = reg::s2o_tape_term(net, tape_c, probe).value;
  s.frob_clean = fc;
  s.penalty = fc + reg::s2o_tape_term(net, tape_a, probe).value;
  return s;
}

io::Row metrics_row(const EpochMetrics& m) {
  return {std::to_string(m.epoch), io::real(m.train_loss), io::real(m.clean_train), io::real(m.clean_test),
          io::real(m.pgd_train),   io::real(m.pgd_test),   io::real(m.penalty)};
}

const io::Row kMetricsHeader{"epoch", "train_loss", "clean_train", "clean_test", "pgd_train", "pgd_test", "penalty"};

void write_metrics(const fs::path& out, const std::vector<EpochMetrics>& rows) {
  std::vector<io::Row> r;
  for (const auto& m : rows) r.push_back(metrics_row(m));
  io::write_text(out / "metrics.csv", io::to_csv(kMetricsHeader, r));
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + p.string() + ": " + ec.message());
}

data::Dataset with_inputs(const data::Dataset& ds, Matrix x) {
  data::Dataset out = ds;
  out.inputs = std::move(x);
  return out;
}

double input_l2_bound(const data::Dataset& ds) {
  double best = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    double s = 0.0;
    for (double v : ds.inputs.row(i)) s += v * v;
    best = std::max(best, std::sqrt(s));
  }
  return best;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  return out;
}

double parse_real(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw Error(ErrorKind::Parse, "not a number: " + s);
  return v;
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::Standard: return "Standard";
    case Method::AT: return "AT";
    case Method::TRADES: return "TRADES";
    case Method::AT_S2O: return "AT_S2O";
    case Method::TRADES_S2O: return "TRADES_S2O";
  }
  return "?";
}

bool uses_attack(Method m) { return m != Method::Standard; }
bool uses_s2o(Method m) { return m == Method::AT_S2O || m == Method::TRADES_S2O; }
bool uses_trades(Method m) { return m == Method::TRADES || m == Method::TRADES_S2O; }

void RunConfig::validate() const {
  if (train.epochs < 0) config_error("epochs must be >= 0");
  if (train.batch_size < 1) config_error("batch_size must be >= 1");
  if (!(train.lr > 0.0) || !std::isfinite(train.lr)) config_error("lr must be > 0");
  if (!(train.momentum >= 0.0 && train.momentum < 1.0)) config_error("momentum must lie in [0, 1)");
  if (!(train.weight_decay >= 0.0)) config_error("weight_decay must be >= 0");
  if (train.metrics_every < 1) config_error("metrics_every must be >= 1");
  if (!(trades_lambda > 0.0)) config_error("trades lambda must be > 0");
  if (hidden.empty()) config_error("network needs at least one hidden layer");
  for (std::size_t h : hidden)
    if (h < 1) config_error("hidden widths must be >= 1");
  if (dataset.kind != "idx" && dataset.kind != "blobs") config_error("dataset kind must be idx or blobs");
  s2o.validate();
  try {
    attack_train.validate();
  } catch (const Error& e) {
    config_error(std::string("attack_train: ") + e.what());
  }
  stats.sampling.validate();
}

fs::path RunConfig::checkpoint_path() const { return checkpoint.value_or(output_dir / "checkpoint.json"); }

RunConfig parse_config(const std::string& text, const fs::path& base_dir) {
  RunConfig cfg;
  try {
    const json root = json::parse(text, nullptr, true, true);
    check_keys(root, "config", {"dataset", "network", "train", "attack_train", "attack_eval", "metrics_attack", "s2o",
                                "trades", "stats", "bound", "simulate", "output_dir", "checkpoint"});
    if (root.contains("dataset")) {
      const json& d = root.at("dataset");
      check_keys(d, "dataset", {"kind", "train_images", "train_labels", "test_images", "test_labels", "num_classes",
                                "train_limit", "test_limit", "per_class", "test_per_class", "dim", "spread", "seed"});
      auto& ds = cfg.dataset;
      read(d, "kind", ds.kind);
      for (auto [key, field] : {std::pair{"train_images", &ds.train_images}, std::pair{"train_labels", &ds.train_labels},
                                std::pair{"test_images", &ds.test_images}, std::pair{"test_labels", &ds.test_labels}})
        if (d.contains(key)) *field = resolve(base_dir, d.at(key).get<std::string>());
      read(d, "num_classes", ds.num_classes);
      read(d, "train_limit", ds.train_limit);
      read(d, "test_limit", ds.test_limit);
      read(d, "per_class", ds.per_class);
      read(d, "test_per_class", ds.test_per_class);
      read(d, "dim", ds.dim);
      read(d, "spread", ds.spread);
      read(d, "seed", ds.data_seed);
    }
    if (root.contains("network")) {
      check_keys(root.at("network"), "network", {"hidden"});
      read(root.at("network"), "hidden", cfg.hidden);
    }
    if (root.contains("train")) {
      const json& t = root.at("train");
      check_keys(t, "train", {"method", "epochs", "batch_size", "lr", "momentum", "weight_decay", "seed",
                              "metrics_every", "eval_train_limit"});
      if (t.contains("method")) cfg.train.method = method_from_string(t.at("method").get<std::string>());
      read(t, "epochs", cfg.train.epochs);
      read(t, "batch_size", cfg.train.batch_size);
      read(t, "lr", cfg.train.lr);
      read(t, "momentum", cfg.train.momentum);
      read(t, "weight_decay", cfg.train.weight_decay);
      read(t, "seed", cfg.train.seed);
      read(t, "metrics_every", cfg.train.metrics_every);
      read(t, "eval_train_limit", cfg.eval_train_limit);
    }
    if (root.contains("attack_train")) cfg.attack_train = parse_attack(root.at("attack_train"), "attack_train", {});
    if (root.contains("metrics_attack"))
      cfg.metrics_attack = parse_attack(root.at("metrics_attack"), "metrics_attack", attack::pgd20(8.0 / 255.0));
    if (root.contains("attack_eval")) {
      const json& list = root.at("attack_eval");
      if (!list.is_array()) config_error("attack_eval must be an array");
      for (const json& e : list) {
        EvalAttack a;
        a.type = AttackType::PGD;
        if (e.contains("type")) {
          const auto t = e.at("type").get<std::string>();
          if (t == "fgsm")
            a.type = AttackType::FGSM;
          else if (t == "pgd")
            a.type = AttackType::PGD;
          else if (t == "cw")
            a.type = AttackType::CW;
          else
            config_error("unknown attack type " + t);
        }
        attack::AttackSpec base = attack::pgd20(8.0 / 255.0);
        if (a.type == AttackType::CW) base.loss = attack::AttackLoss::CWMargin;
        a.spec = parse_attack(e, "attack_eval", base);
        if (a.type == AttackType::FGSM) a.spec.steps = 1;
        a.name = e.value("name", to_string(a.type));
        cfg.attack_eval.push_back(a);
      }
    }
    if (root.contains("s2o")) {
      const json& s = root.at("s2o");
      check_keys(s, "s2o", {"alpha", "per_unit", "damping", "damping_mode", "layer_policy"});
      read(s, "alpha", cfg.s2o.alpha);
      read(s, "per_unit", cfg.s2o.per_unit);
      read(s, "damping", cfg.s2o.damping);
      if (s.contains("damping_mode")) {
        const auto v = s.at("damping_mode").get<std::string>();
        if (v == "trace_scaled")
          cfg.s2o.damping_mode = reg::DampingMode::TraceScaled;
        else if (v == "absolute")
          cfg.s2o.damping_mode = reg::DampingMode::Absolute;
        else
          config_error("unknown damping_mode " + v);
      }
      if (s.contains("layer_policy")) {
        const auto v = s.at("layer_policy").get<std::string>();
        if (v == "last_only")
          cfg.s2o.layer_policy = reg::LayerPolicy::LastOnly;
        else if (v == "all")
          cfg.s2o.layer_policy = reg::LayerPolicy::All;
        else
          config_error("unknown layer_policy " + v);
      }
    }
    if (root.contains("trades")) {
      check_keys(root.at("trades"), "trades", {"lambda"});
      read(root.at("trades"), "lambda", cfg.trades_lambda);
    }
    if (root.contains("stats")) {
      const json& s = root.at("stats");
      check_keys(s, "stats", {"sources", "data", "layers", "num_points", "laplace_damping", "sampling"});
      if (s.contains("sources")) {
        cfg.stats.sources.clear();
        for (const auto& v : s.at("sources")) {
          const auto name = v.get<std::string>();
          if (name == "sampling")
            cfg.stats.sources.push_back(stats::Source::Sampling);
          else if (name == "laplace")
            cfg.stats.sources.push_back(stats::Source::Laplace);
          else
            config_error("unknown stats source " + name);
        }
      }
      if (s.contains("data")) {
        cfg.stats.data.clear();
        for (const auto& v : s.at("data")) {
          const auto name = v.get<std::string>();
          if (name == "clean")
            cfg.stats.data.push_back(stats::DataKind::Clean);
          else if (name == "adversarial")
            cfg.stats.data.push_back(stats::DataKind::Adversarial);
          else
            config_error("unknown stats data kind " + name);
        }
      }
      read(s, "layers", cfg.stats.layers);
      read(s, "num_points", cfg.stats.num_points);
      read(s, "laplace_damping", cfg.stats.laplace_damping);
      if (s.contains("sampling")) {
        const json& p = s.at("sampling");
        check_keys(p, "stats.sampling", {"num_samples", "loss_tolerance", "refine_epochs", "refine_lr", "noise_sigma"});
        read(p, "num_samples", cfg.stats.sampling.num_samples);
        read(p, "loss_tolerance", cfg.stats.sampling.loss_tolerance);
        read(p, "refine_epochs", cfg.stats.sampling.refine_epochs);
        read(p, "refine_lr", cfg.stats.sampling.refine_lr);
        if (p.contains("noise_sigma")) cfg.stats.sampling.noise_sigma = p.at("noise_sigma").get<double>();
      }
    }
    if (root.contains("bound")) {
      const json& b = root.at("bound");
      check_keys(b, "bound", {"kinds", "gamma", "delta", "c", "epsilon", "stats_files"});
      if (b.contains("kinds")) {
        cfg.bound.kinds.clear();
        for (const auto& v : b.at("kinds")) cfg.bound.kinds.push_back(bounds::bound_kind_from_string(v.get<std::string>()));
      }
      read(b, "gamma", cfg.bound.gamma);
      read(b, "delta", cfg.bound.delta);
      read(b, "c", cfg.bound.c);
      if (b.contains("epsilon") && !b.at("epsilon").is_null()) cfg.bound.epsilon = b.at("epsilon").get<double>();
      if (b.contains("stats_files"))
        for (const auto& v : b.at("stats_files")) cfg.bound.stats_files.push_back(resolve(base_dir, v.get<std::string>()));
    }
    if (root.contains("simulate")) {
      const json& s = root.at("simulate");
      check_keys(s, "simulate", {"families", "dim", "n_samples", "sweep_points", "perturbation_h",
                                 "perturbation_trials", "perturbation_sigma"});
      if (s.contains("families")) {
        cfg.simulate.families.clear();
        for (const auto& v : s.at("families")) {
          const auto name = v.get<std::string>();
          if (name == "equicorrelation")
            cfg.simulate.families.push_back(stats::Family::Equicorrelation);
          else if (name == "random")
            cfg.simulate.families.push_back(stats::Family::RandomCorrelation);
          else
            config_error("unknown family " + name);
        }
      }
      read(s, "dim", cfg.simulate.dim);
      read(s, "n_samples", cfg.simulate.n_samples);
      read(s, "sweep_points", cfg.simulate.sweep_points);
      read(s, "perturbation_h", cfg.simulate.perturbation_h);
      read(s, "perturbation_trials", cfg.simulate.perturbation_trials);
      read(s, "perturbation_sigma", cfg.simulate.perturbation_sigma);
    }
    if (root.contains("output_dir")) cfg.output_dir = resolve(base_dir, root.at("output_dir").get<std::string>());
    if (root.contains("checkpoint")) cfg.checkpoint = resolve(base_dir, root.at("checkpoint").get<std::string>());
  } catch (const json::exception& e) {
    config_error(e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Config) throw;
    config_error(e.what());
  }
  cfg.validate();
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error&) {
    config_error("cannot read config " + path.string());
  }
  return parse_config(text, path.parent_path());
}

Splits load_data(const DatasetSpec& spec) {
  Splits s;
  if (spec.kind == "blobs") {
    if (spec.num_classes < 2) config_error("blobs need num_classes >= 2");
    // one draw split per class so train and test share cluster centers
    const data::Dataset all =
        data::synth_blobs(spec.num_classes, spec.per_class + spec.test_per_class, spec.dim, spec.spread, spec.data_seed);
    std::vector<std::size_t> tr, te;
    std::vector<std::size_t> seen(static_cast<std::size_t>(spec.num_classes), 0);
    for (std::size_t i = 0; i < all.size(); ++i) {
      auto& k = seen[static_cast<std::size_t>(all.labels[i])];
      (k++ < spec.per_class ? tr : te).push_back(i);
    }
    s.train = data::subset(all, tr);
    s.test = data::subset(all, te);
  } else {
    s.train = data::load_idx(spec.train_images, spec.train_labels, spec.num_classes);
    s.test = data::load_idx(spec.test_images, spec.test_labels, spec.num_classes);
    const int k = std::max(s.train.num_classes, s.test.num_classes);
    s.train.num_classes = s.test.num_classes = k;
  }
  if (spec.train_limit > 0 && spec.train_limit < s.train.size())
    s.train = data::sample(s.train, spec.train_limit, derive_seed(spec.data_seed, "train_limit"));
  if (spec.test_limit > 0 && spec.test_limit < s.test.size())
    s.test = data::sample(s.test, spec.test_limit, derive_seed(spec.data_seed, "test_limit"));
  return s;
}

double accuracy(const nn::Network& net, const Matrix& x, std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const Matrix z = nn::logits(net, x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto row = z.row(i);
    const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    correct += best == labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Matrix run_attack(const nn::Network& net, const Matrix& x, std::span<const int> labels, const EvalAttack& a) {
  switch (a.type) {
    case AttackType::FGSM:
      if (a.spec.norm != attack::Norm::Linf) throw Error(ErrorKind::Unsupported, "FGSM is l-inf only");
      return attack::fgsm(net, x, labels, a.spec.epsilon);
    case AttackType::CW: return attack::cw_pgd(net, x, labels, a.spec);
    case AttackType::PGD: break;
  }
  return attack::pgd(net, x, labels, a.spec);
}

attack::AttackSpec default_metrics_attack(const RunConfig& cfg) {
  return attack::pgd20(cfg.attack_train.epsilon, cfg.attack_train.norm);
}

RunRecord train(const RunConfig& cfg, const fs::path& out) { return train(cfg, load_data(cfg.dataset), out); }

RunRecord train(const RunConfig& cfg, const Splits& data, const fs::path& out) {
  cfg.validate();
  ensure_dir(out);
  const TrainSpec& t = cfg.train;
  std::vector<std::size_t> widths{data.train.dim()};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(static_cast<std::size_t>(data.train.num_classes));
  nn::Network net = nn::Network::he_init(widths, derive_seed(t.seed, "init"));

  const data::Dataset train_eval =
      cfg.eval_train_limit > 0 && cfg.eval_train_limit < data.train.size()
          ? data::sample(data.train, cfg.eval_train_limit, derive_seed(t.seed, "eval_subset"))
          : data.train;

  std::vector<EpochMetrics> rows;
  std::vector<double> seconds;
  double frob_clean = 0.0;
  auto record = [&](int epoch, double loss, bool evaluate) {
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss;
    if (evaluate) {
      const EvalSnapshot s = snapshot(net, train_eval, data.test, cfg, t.seed);
      m.clean_train = s.clean_train;
      m.clean_test = s.clean_test;
      m.pgd_train = s.pgd_train;
      m.pgd_test = s.pgd_test;
      m.penalty = s.penalty;
      frob_clean = s.frob_clean;
    } else {
      m.clean_train = m.clean_test = m.pgd_train = m.pgd_test = m.penalty = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(m);
  };

  {
    const auto lv = nn::cross_entropy(nn::logits(net, data.train.inputs), data.train.labels);
    record(0, lv, true);
  }

  std::vector<Matrix> velocity;
  for (const auto& l : net.layers()) velocity.emplace_back(l.weight.rows(), l.weight.cols());

  std::ofstream timing(out / "timing.log");
  for (int epoch = 1; epoch <= t.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = lr_at(t, epoch - 1);
    const auto batches = data::batches(data.train, t.batch_size, derive_seed(derive_seed(t.seed, "shuffle"), epoch));
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& b = batches[bi];
      StepResult step = step_objective(net, b, cfg, batch_seed(t.seed, epoch, bi));
      if (!std::isfinite(step.loss) || !grads_finite(step.grads)) {
        nn::save_checkpoint(net, out / "checkpoint.json");
        write_metrics(out, rows);
        throw Error(ErrorKind::DivergedTraining, "non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                                     std::to_string(bi) + "; last good checkpoint kept");
      }
      loss_sum += step.loss * static_cast<double>(b.labels.size());
      seen += b.labels.size();
      for (std::size_t l = 0; l < net.num_layers(); ++l) {
        Matrix g = step.grads.layers[l];
        if (t.weight_decay > 0.0) g.axpy(t.weight_decay, net.layer(l).weight);
        velocity[l] *= t.momentum;
        velocity[l] += g;
        Matrix w = net.layer(l).weight;
        w.axpy(-lr, velocity[l]);
        if (!w.all_finite()) {
          nn::save_checkpoint(net, out / "checkpoint.json");
          write_metrics(out, rows);
          throw Error(ErrorKind::DivergedTraining, "non-finite weights at epoch " + std::to_string(epoch));
        }
        net.set_weight(l, std::move(w));
      }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    seconds.push_back(secs);
    timing << epoch << ' ' << secs << '\n';
    const bool eval = epoch == t.epochs || epoch % t.metrics_every == 0;
    record(epoch, loss_sum / static_cast<double>(std::max<std::size_t>(seen, 1)), eval);
  }

  write_metrics(out, rows);
  const fs::path ckpt = out / "checkpoint.json";
  nn::save_checkpoint(net, ckpt);

  json summary;
  summary["method"] = to_string(t.method);
  summary["seed"] = t.seed;
  summary["epochs"] = t.epochs;
  summary["widths"] = widths;
  summary["parameters"] = nn::parameter_count(net);
  summary["train_size"] = data.train.size();
  summary["test_size"] = data.test.size();
  summary["attack_epsilon"] = cfg.attack_train.epsilon;
  summary["s2o_alpha"] = cfg.s2o.alpha;
  const EpochMetrics& last = rows.back();
  summary["final"] = {{"clean_train", last.clean_train}, {"clean_test", last.clean_test},
                      {"pgd_train", last.pgd_train},     {"pgd_test", last.pgd_test},
                      {"penalty", last.penalty},         {"frob_sq_clean", frob_clean}};
  io::write_text(out / "summary.json", summary.dump(2) + "\n");

  return RunRecord{std::move(rows), std::move(seconds), frob_clean, std::move(net), ckpt};
}

std::vector<EvalRow> evaluate(const nn::Network& net, const data::Dataset& ds, const RunConfig& cfg) {
  std::vector<EvalRow> out;
  out.push_back({"clean", "none", 0.0, 0, accuracy(net, ds.inputs, ds.labels)});
  std::vector<EvalAttack> attacks = cfg.attack_eval;
  if (attacks.empty()) attacks.push_back({"pgd20", AttackType::PGD, default_metrics_attack(cfg)});
  for (std::size_t i = 0; i < attacks.size(); ++i) {
    EvalAttack a = attacks[i];
    if (a.spec.random_start) a.spec.seed = derive_seed(derive_seed(cfg.train.seed, "eval"), i);
    const Matrix adv = run_attack(net, ds.inputs, ds.labels, a);
    out.push_back({a.name, to_string(a.type), a.spec.epsilon, a.spec.steps, accuracy(net, adv, ds.labels)});
  }
  return out;
}

void evaluate_cmd(const RunConfig& cfg, const fs::path& out) {
  ensure_dir(out);
  const nn::Network net = nn::load_checkpoint(cfg.checkpoint_path());
  const Splits data = load_data(cfg.dataset);
  std::vector<io::Row> rows;
  for (const auto& r : evaluate(net, data.test, cfg))
    rows.push_back({r.name, r.type, io::real(r.epsilon), std::to_string(r.steps), io::real(r.accuracy)});
  io::write_text(out / "eval.csv", io::to_csv({"attack", "type", "epsilon", "steps", "accuracy"}, rows));
}

std::vector<stats::LayerCorrStats> stats_cmd(const RunConfig& cfg, const fs::path& out) {
  ensure_dir(out);
  const nn::Network net = nn::load_checkpoint(cfg.checkpoint_path());
  const Splits data = load_data(cfg.dataset);
  const data::Dataset clean = data::sample(data.train, cfg.stats.num_points, derive_seed(cfg.train.seed, "stats"));
  const std::size_t last = net.num_layers() - 1;

  std::vector<stats::LayerCorrStats> all;
  auto emit = [&](stats::LayerCorrStats s) {
    const std::string name = "stats_" + std::to_string(s.layer) + "_" + stats::to_string(s.source) + "_" +
                             stats::to_string(s.data) + ".csv";
    io::write_text(out / name, io::to_csv(stats::stats_header(), {stats::stats_row(s)}));
    all.push_back(std::move(s));
  };

  for (stats::DataKind kind : cfg.stats.data) {
    data::Dataset ds = clean;
    if (kind == stats::DataKind::Adversarial) {
      attack::AttackSpec spec = cfg.attack_train;
      spec.seed = derive_seed(cfg.train.seed, "stats_attack");
      ds = with_inputs(clean, attack::pgd(net, clean.inputs, clean.labels, spec));
    }
    for (stats::Source src : cfg.stats.sources) {
      if (src == stats::Source::Laplace) {
        std::vector<std::size_t> layers = cfg.stats.layers.empty() ? std::vector<std::size_t>{last} : cfg.stats.layers;
        for (std::size_t l : layers) emit(stats::corr_from_laplace(net, ds, l, cfg.stats.laplace_damping, kind));
      } else {
        stats::SamplingConfig sc = cfg.stats.sampling;
        sc.seed = derive_seed(cfg.train.seed, kind == stats::DataKind::Clean ? "sampling_clean" : "sampling_adv");
        const auto res = stats::sample_weight_perturbations(net, ds, sc);
        std::vector<std::size_t> layers = cfg.stats.layers;
        if (layers.empty())
          for (std::size_t l = 0; l < net.num_layers(); ++l) layers.push_back(l);
        for (std::size_t l : layers) {
          if (l >= net.num_layers()) throw Error(ErrorKind::Config, "stats layer out of range");
          emit(stats::corr_from_samples(res.deltas, l, kind));
        }
      }
    }
  }
  return all;
}

stats::LayerCorrStats stats_from_csv(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string head, line;
  if (!std::getline(in, head) || !std::getline(in, line)) throw Error(ErrorKind::Parse, path.string() + " is empty");
  const auto keys = split_csv_line(head);
  const auto vals = split_csv_line(line);
  if (keys.size() != vals.size()) throw Error(ErrorKind::Parse, path.string() + ": column count mismatch");
  std::map<std::string, std::string> f;
  for (std::size_t i = 0; i < keys.size(); ++i) f[keys[i]] = vals[i];
  auto need = [&](const char* k) -> const std::string& {
    const auto it = f.find(k);
    if (it == f.end()) throw Error(ErrorKind::Parse, path.string() + ": missing column " + k);
    return it->second;
  };
  stats::LayerCorrStats s;
  s.layer = static_cast<std::size_t>(std::stoull(need("layer")));
  s.dim = static_cast<std::size_t>(std::stoull(need("dim")));
  s.source = need("source") == "laplace" ? stats::Source::Laplace : stats::Source::Sampling;
  s.data = need("data") == "adversarial" ? stats::DataKind::Adversarial : stats::DataKind::Clean;
  s.lam_max = parse_real(need("lam_max"));
  s.lam_min = parse_real(need("lam_min"));
  s.lamc_max = parse_real(need("lamc_max"));
  s.lamr_max = parse_real(need("lamr_max"));
  s.det_lb = parse_real(need("det_lb"));
  s.log_det_lb = parse_real(need("log_det_lb"));
  const double ld = parse_real(need("logdet"));
  if (!std::isnan(ld)) s.logdet = ld;
  s.frob_sq = parse_real(need("frob_sq"));
  return s;
}

void bound_cmd(const RunConfig& cfg, const fs::path& out) {
  ensure_dir(out);
  const nn::Network net = nn::load_checkpoint(cfg.checkpoint_path());
  const Splits data = load_data(cfg.dataset);

  std::vector<fs::path> files = cfg.bound.stats_files;
  if (files.empty() && fs::is_directory(out)) {
    for (const auto& e : fs::directory_iterator(out)) {
      const auto name = e.path().filename().string();
      if (name.rfind("stats_", 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
  }
  std::vector<stats::LayerCorrStats> st;
  for (const auto& f : files) st.push_back(stats_from_csv(f));

  bounds::BoundInputs in;
  in.gamma = cfg.bound.gamma;
  in.delta = cfg.bound.delta;
  in.c = cfg.bound.c;
  in.m = static_cast<double>(data.train.size());
  in.B = input_l2_bound(data.train);
  // an l-inf ball of radius eps sits inside the l2 ball of radius eps sqrt(d)
  in.epsilon = cfg.bound.epsilon.value_or(cfg.attack_train.norm == attack::Norm::Linf
                                              ? cfg.attack_train.epsilon * std::sqrt(static_cast<double>(net.input_dim()))
                                              : cfg.attack_train.epsilon);
  in.validate();

  json doc;
  doc["note"] = "relative complexity measures for comparing models, not calibrated risk bounds";
  doc["stats_files"] = json::array();
  for (const auto& f : files) doc["stats_files"].push_back(f.filename().string());
  doc["reports"] = json::array();
  doc["skipped"] = json::array();
  std::vector<io::Row> rows;
  for (bounds::BoundKind k : cfg.bound.kinds) {
    try {
      const auto r = bounds::evaluate_bound(net, st, in, k);
      doc["reports"].push_back(json::parse(bounds::report_json(r, in)));
      rows.push_back(bounds::report_csv_row(r));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::IncompleteStats && e.kind() != ErrorKind::SingularCorrelation) throw;
      doc["skipped"].push_back({{"bound_kind", bounds::to_string(k)}, {"reason", e.what()}});
    }
  }
  io::write_text(out / "bound.json", doc.dump(2) + "\n");
  io::write_text(out / "bound.csv", io::to_csv(bounds::report_csv_header(), rows));
}

void simulate_cmd(const RunConfig& cfg, const fs::path& out) {
  ensure_dir(out);
  const auto& sim = cfg.simulate;
  json doc;
  doc["dim"] = sim.dim;
  doc["n_samples"] = sim.n_samples;
  doc["families"] = json::object();
  for (stats::Family f : sim.families) {
    const std::string name = f == stats::Family::Equicorrelation ? "equicorrelation" : "random";
    const auto res = stats::simulate_fig3(sim.dim, sim.n_samples, f, derive_seed(cfg.train.seed, name));
    io::write_text(out / ("fig3_" + name + ".csv"), stats::fig3_csv(res));
    doc["families"][name] = {{"rows", res.rows},
                             {"cols", res.cols},
                             {"spearman_frob_lam", res.spearman_frob_lam},
                             {"spearman_frob_det", res.spearman_frob_det}};
  }

  const io::Row sweep_head{"r", "frob_sq", "lamc", "lamr", "lam_sum", "lam_min", "lam_max", "det_lb"};
  const double r_neg = sim.dim > 1 ? -1.0 / static_cast<double>(sim.dim - 1) : 0.0;
  for (auto [tag, r_end] : {std::pair{"pos", 1.0}, std::pair{"neg", r_neg}}) {
    std::vector<io::Row> rows;
    for (const auto& r : stats::equicorrelation_sweep(sim.dim, r_end, sim.sweep_points))
      rows.push_back({io::real(r.r), io::real(r.frob_sq), io::real(r.lamc), io::real(r.lamr), io::real(r.lam_sum),
                      io::real(r.lam_min), io::real(r.lam_max), io::real(r.det_lb)});
    io::write_text(out / (std::string("fig3_sweep_") + tag + ".csv"), io::to_csv(sweep_head, rows));
  }

  std::vector<io::Row> prow;
  doc["perturbation"] = json::array();
  for (std::size_t h : sim.perturbation_h) {
    const auto rep = stats::check_perturbation_bound(h, sim.perturbation_sigma, sim.perturbation_trials,
                                                     derive_seed(derive_seed(cfg.train.seed, "perturbation"), h));
    prow.push_back({std::to_string(h), io::real(rep.sigma), io::real(rep.median), io::real(rep.p95)});
    doc["perturbation"].push_back({{"h", h}, {"sigma", rep.sigma}, {"median", rep.median}, {"p95", rep.p95}});
  }
  io::write_text(out / "perturbation.csv", io::to_csv({"h", "sigma", "median_ratio", "p95_ratio"}, prow));
  io::write_text(out / "simulate.json", doc.dump(2) + "\n");
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::DivergedTraining: return 3;
    case ErrorKind::Io:
    case ErrorKind::BadMagic:
    case ErrorKind::Truncated:
    case ErrorKind::CountMismatch:
    case ErrorKind::Parse: return 4;
    default: return 1;
  }
}

}  // namespace s2o::harness
