#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "s2o/attacks.hpp"
#include "s2o/bounds.hpp"
#include "s2o/dataset.hpp"
#include "s2o/error.hpp"
#include "s2o/network.hpp"
#include "s2o/s2o.hpp"
#include "s2o/weight_stats.hpp"

namespace s2o::harness {

enum class Method { Standard, AT, TRADES, AT_S2O, TRADES_S2O };

std::string to_string(Method m);
bool uses_attack(Method m);
bool uses_s2o(Method m);
bool uses_trades(Method m);

struct DatasetSpec {
  std::string kind = "idx";  // "idx" or "blobs"
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  int num_classes = 0;
  std::size_t train_limit = 0;  // 0 = all
  std::size_t test_limit = 0;
  // blobs
  std::size_t per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t dim = 16;
  double spread = 0.1;
  std::uint64_t data_seed = 0;
};

struct TrainSpec {
  Method method = Method::Standard;
  int epochs = 30;
  std::size_t batch_size = 128;
  double lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  int metrics_every = 1;  // evaluation cadence in epochs; epoch 0 and the last are always evaluated
};

enum class AttackType { FGSM, PGD, CW };

struct EvalAttack {
  std::string name;
  AttackType type = AttackType::PGD;
  attack::AttackSpec spec;
};

struct StatsSpec {
  std::vector<stats::Source> sources{stats::Source::Laplace};
  std::vector<stats::DataKind> data{stats::DataKind::Clean, stats::DataKind::Adversarial};
  std::vector<std::size_t> layers;  // empty = every layer the source supports
  std::size_t num_points = 512;     // data points used for estimation
  double laplace_damping = 1e-3;
  stats::SamplingConfig sampling;
};

struct BoundSpec {
  std::vector<bounds::BoundKind> kinds{bounds::BoundKind::Neyshabur22, bounds::BoundKind::Xiao24,
                                       bounds::BoundKind::S2O35, bounds::BoundKind::S2O36};
  double gamma = 1.0;
  double delta = 0.05;
  double c = 1.0;
  std::optional<double> epsilon;  // default: training radius, converted to l2
  std::vector<std::filesystem::path> stats_files;  // default: every stats_*.csv in the output dir
};

struct SimulateSpec {
  std::vector<stats::Family> families{stats::Family::Equicorrelation, stats::Family::RandomCorrelation};
  std::size_t dim = 9;
  std::size_t n_samples = 10000;
  std::size_t sweep_points = 50;
  std::vector<std::size_t> perturbation_h{16, 64};
  std::size_t perturbation_trials = 200;
  double perturbation_sigma = 1.0;
};

struct RunConfig {
  DatasetSpec dataset;
  std::vector<std::size_t> hidden{256, 256};
  TrainSpec train;
  attack::AttackSpec attack_train;
  std::vector<EvalAttack> attack_eval;  // default: PGD-20 at the training radius
  std::optional<attack::AttackSpec> metrics_attack;  // default: PGD-20 at the training radius
  std::size_t eval_train_limit = 0;                  // 0 = whole train split for per-epoch metrics
  reg::S2OConfig s2o;
  double trades_lambda = 1.0 / 6.0;
  StatsSpec stats;
  BoundSpec bound;
  SimulateSpec simulate;
  std::filesystem::path output_dir = "out";
  std::optional<std::filesystem::path> checkpoint;  // evaluate/stats/bound input

  /// Throws Config on inconsistent settings.
  void validate() const;
  std::filesystem::path checkpoint_path() const;
};

/// Parses a JSON-syntax config; relative paths resolve against `base_dir`. Throws Config.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = ".");
RunConfig load_config(const std::filesystem::path& path);

struct Splits {
  data::Dataset train;
  data::Dataset test;
};
Splits load_data(const DatasetSpec& spec);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double clean_train = 0.0, clean_test = 0.0;
  double pgd_train = 0.0, pgd_test = 0.0;
  double penalty = 0.0;  // ||A_x||_F^2 + ||A_x'||_F^2 on the metrics subset
};

struct RunRecord {
  std::vector<EpochMetrics> metrics;
  std::vector<double> epoch_seconds;  // wall clock of the optimization phase only
  double final_frob_clean = 0.0;      // ||A_x||_F^2 at the end, metrics subset
  nn::Network net;
  std::filesystem::path checkpoint;
};

double accuracy(const nn::Network& net, const Matrix& x, std::span<const int> labels);
Matrix run_attack(const nn::Network& net, const Matrix& x, std::span<const int> labels, const EvalAttack& a);
attack::AttackSpec default_metrics_attack(const RunConfig& cfg);

/// Objective value and weight gradient of one training step for cfg.train.method; the
/// adversarial batch (empty for Standard) is returned so callers can hold it fixed.
struct StepResult {
  double loss = 0.0;
  nn::Gradients grads;
  Matrix adversarial;
};
StepResult step_objective(const nn::Network& net, const data::Batch& b, const RunConfig& cfg, std::uint64_t seed);

/// Trains per config; writes metrics.csv, summary.json and checkpoint.json to `out`
/// (timing goes to timing.log so the CSV/JSON outputs stay byte-reproducible).
RunRecord train(const RunConfig& cfg, const std::filesystem::path& out);
RunRecord train(const RunConfig& cfg, const Splits& data, const std::filesystem::path& out);

struct EvalRow {
  std::string name;
  std::string type;
  double epsilon = 0.0;
  int steps = 0;
  double accuracy = 0.0;
};
std::vector<EvalRow> evaluate(const nn::Network& net, const data::Dataset& ds, const RunConfig& cfg);
void evaluate_cmd(const RunConfig& cfg, const std::filesystem::path& out);

std::vector<stats::LayerCorrStats> stats_cmd(const RunConfig& cfg, const std::filesystem::path& out);
stats::LayerCorrStats stats_from_csv(const std::filesystem::path& path);

void bound_cmd(const RunConfig& cfg, const std::filesystem::path& out);
void simulate_cmd(const RunConfig& cfg, const std::filesystem::path& out);

/// Process exit code for an error kind: 2 config, 3 diverged, 4 IO, 1 otherwise.
int exit_code(ErrorKind kind);

}  // namespace s2o::harness
