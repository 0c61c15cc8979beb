#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdiv/dataset.hpp"
#include "fdiv/decoupling.hpp"
#include "fdiv/metrics_io.hpp"
#include "fdiv/trainer.hpp"

namespace fdivergence {

/// Everything a `train` run needs. The run seed (train.seed) also derives
/// the data, split and noise streams, so one seed fixes the whole run.
struct ExperimentConfig {
  TrainConfig train;
  std::string noise = "none";
  /// Synthetic mixture, used unless `csv_path` is set. Its seed field is
  /// replaced by one derived from the run seed.
  GaussianMixtureSpec synthetic = GaussianMixtureSpec::standard(4000, 0);
  std::optional<std::filesystem::path> csv_path;
  std::optional<std::string> label_column;
  double test_fraction = 0.5;
  std::optional<std::filesystem::path> output_dir;

  /// Config errors (bad fraction, missing file, inadmissible noise) are
  /// raised here before any compute. Throws ConstraintError / ParseError.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys keep their defaults.
ExperimentConfig experiment_from_json(const nlohmann::json& j);

struct TrainOutcome {
  Evaluation final;
  TrainHistory history;
  std::size_t clamp_events;
  MetricRecord metrics;     // one CSV row, config fields included
  nlohmann::json document;  // config, history, final metrics
};

TrainOutcome run_train(const ExperimentConfig& config);

struct SweepRequest {
  ExperimentConfig base;
  std::vector<double> rates;
  /// Divergence tokens; "ce" selects the cross-entropy baseline.
  std::vector<std::string> divergences;
  std::vector<std::uint64_t> seeds;
  /// symmetric (symmetric:RATE) or binary (binary:RATE,RATE).
  std::string noise_family = "symmetric";
  std::size_t threads = 0;  // 0 = hardware concurrency
};

struct SweepRow {
  std::string objective;
  std::string divergence;
  double rate;
  std::uint64_t seed;
  double accuracy;
  double test_divergence;
  std::string status;  // "ok" or the error message
};

/// Cross product in (divergence, rate, seed) order. Cells run in parallel;
/// failures are recorded in `status` and do not stop the sweep.
std::vector<SweepRow> run_sweep(const SweepRequest& request);
std::vector<MetricRecord> sweep_records(const std::vector<SweepRow>& rows);
nlohmann::json to_json(const SweepRequest& request);

enum class GSource { OptimalClean, OptimalNoisy, Random };

/// "optimal_clean", "optimal_noisy", "random".
GSource parse_g_source(const std::string& s);

/// Decoupling report for a joint and noise; zero cells of the optimal
/// tables receive f'(1).
nlohmann::json decouple(DivergenceSpec spec, const JointDistribution& clean_joint, const TransitionMatrix& t,
                        GSource source, std::uint64_t seed);

/// Random valid table: activation of a standard normal draw per cell.
VariationalTable random_variational_table(DivergenceSpec spec, std::size_t rows, std::size_t cols, Rng& rng);

nlohmann::json catalog_json();
std::string catalog_text();

/// Wraps a payload with a metadata block holding the timestamp; the
/// timestamp lives only there.
nlohmann::json with_metadata(nlohmann::json payload);

}  // namespace fdivergence
