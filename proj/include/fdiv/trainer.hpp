#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdiv/dataset.hpp"
#include "fdiv/divergence.hpp"
#include "fdiv/noise.hpp"
#include "fdiv/rng.hpp"
#include "fdiv/table.hpp"

namespace fdivergence {

/// softmax(W x + b), W is K x d.
class SoftmaxLinearModel {
 public:
  SoftmaxLinearModel(std::size_t num_classes, std::size_t dim);

  /// Weights uniform in (-0.01, 0.01), biases zero.
  static SoftmaxLinearModel initialized(std::size_t num_classes, std::size_t dim, Rng& rng);

  std::size_t num_classes() const noexcept { return weights_.rows(); }
  std::size_t dim() const noexcept { return weights_.cols(); }
  Table& weights() noexcept { return weights_; }
  const Table& weights() const noexcept { return weights_; }
  std::vector<double>& biases() noexcept { return biases_; }
  const std::vector<double>& biases() const noexcept { return biases_; }

  /// Flat view: weights row-major, then biases.
  std::size_t num_parameters() const noexcept { return weights_.size() + biases_.size(); }
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> theta);

  bool operator==(const SoftmaxLinearModel&) const = default;

 private:
  Table weights_;
  std::vector<double> biases_;
};

/// Max-subtracted softmax. Throws std::invalid_argument on dimension mismatch.
std::vector<double> forward(const SoftmaxLinearModel& model, std::span<const double> x);

/// Argmax of forward, ties to the lowest class.
std::size_t predict(const SoftmaxLinearModel& model, std::span<const double> x);

enum class ScoreMode { Probability, LogitRatio };
enum class Objective { FDivergence, CrossEntropyBaseline };

std::string to_string(ScoreMode m);
std::string to_string(Objective o);
ScoreMode parse_score_mode(const std::string& s);
Objective parse_objective(const std::string& s);

/// eta_t = initial * decay^floor(epoch / decay_every); decay_every = 0 keeps
/// the rate constant.
struct LearningRateSchedule {
  double initial = 0.5;
  double decay = 1.0;
  std::size_t decay_every = 0;

  double at(std::size_t epoch) const;
};

struct TrainConfig {
  DivergenceSpec divergence{Divergence::TotalVariation};
  std::size_t batch_size = 64;
  std::size_t epochs = 50;
  LearningRateSchedule learning_rate;
  std::uint64_t seed = 0;
  bool bias_correction = false;
  /// Noise model whose bias is subtracted; required when bias_correction is
  /// set and must have a supported structure.
  std::optional<TransitionMatrix> correction_noise;
  ScoreMode score_mode = ScoreMode::Probability;
  Objective objective = Objective::FDivergence;

  /// Throws ConstraintError when B < 2, eta_0 <= 0 or correction is
  /// requested without a supported noise model.
  void validate() const;
};

/// Indices of the three mini-batches of one step. `product_x[n]` is paired
/// with the label of `product_y[n]` to simulate the product distribution.
struct Batches {
  std::vector<std::size_t> joint;
  std::vector<std::size_t> product_x;
  std::vector<std::size_t> product_y;
};

/// Three independent draws of B indices, each without replacement.
Batches sample_batches(std::size_t n, std::size_t batch_size, Rng& rng);

struct ObjectiveValue {
  double value;
  std::vector<double> gradient;  // d value / d parameters
  std::size_t clamp_events;
};

/// Mini-batch objective to be maximized:
///   mean_n g_f(s(x_n, y_n)) - mean_n f*(g_f(s(x'_n, y''_n)))
/// minus the empirical bias term when correction is on.
ObjectiveValue f_objective(const SoftmaxLinearModel& model, const Dataset& data, const Batches& batches,
                           const TrainConfig& config);

/// Mean negative log-likelihood on the joint batch (to be minimized).
ObjectiveValue cross_entropy_objective(const SoftmaxLinearModel& model, const Dataset& data,
                                       std::span<const std::size_t> batch);

struct StepDiagnostics {
  double objective;
  double gradient_norm;
  std::size_t clamp_events;
};

/// Draws three batches and takes one ascent step with rate `eta`.
StepDiagnostics train_step(SoftmaxLinearModel& model, const Dataset& data, const TrainConfig& config, double eta,
                           Rng& rng);

/// One descent step of the cross-entropy baseline on a given batch.
StepDiagnostics cross_entropy_baseline_step(SoftmaxLinearModel& model, const Dataset& data,
                                            std::span<const std::size_t> batch, double eta);

struct EpochRecord {
  std::size_t epoch;
  double learning_rate;
  double train_objective;  // mean step objective over the epoch
  std::optional<double> test_accuracy;
  std::optional<double> test_divergence;
  std::size_t clamp_events;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

struct Evaluation {
  double accuracy;
  double divergence;  // D_f of the hard-prediction joint against clean labels
};

Evaluation evaluate(const SoftmaxLinearModel& model, const Dataset& test_set, DivergenceSpec spec);

struct TrainResult {
  SoftmaxLinearModel model;
  TrainHistory history;
};

/// Deterministic for a fixed config. Epoch length is ceil(N / B) steps.
TrainResult train(const Dataset& train_set, const std::optional<Dataset>& test_set, const TrainConfig& config);

nlohmann::json to_json(const TrainHistory& history);
nlohmann::json to_json(const TrainConfig& config);

}  // namespace fdivergence
