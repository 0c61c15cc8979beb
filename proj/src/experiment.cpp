#include "fdiv/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <thread>

#include "fdiv/errors.hpp"

namespace fdivergence {

namespace {

std::size_t num_classes_hint(const ExperimentConfig& c) { return c.synthetic.num_classes; }

Dataset shuffled(const Dataset& d, Rng& rng) {
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  Table f(d.size(), d.dim());
  std::vector<std::size_t> labels(d.size());
  for (std::size_t n = 0; n < d.size(); ++n) {
    std::copy_n(d.x(order[n]).begin(), d.dim(), f.row(n).begin());
    labels[n] = d.y(order[n]);
  }
  return Dataset(std::move(f), std::move(labels), d.num_classes(), d.provenance());
}

std::string iso_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConstraintError("test fraction must lie in (0, 1), got " + std::to_string(test_fraction));
  }
  if (csv_path) {
    if (!std::filesystem::exists(*csv_path)) throw ConstraintError("dataset file not found: " + csv_path->string());
  } else {
    synthetic.validate();
    const TransitionMatrix t = parse_noise_spec(noise, num_classes_hint(*this));
    TrainConfig tc = train;
    if (tc.bias_correction) tc.correction_noise = t;
    tc.validate();
    return;
  }
  TrainConfig tc = train;
  tc.bias_correction = false;
  tc.validate();
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {{"train", to_json(c.train)}, {"noise", c.noise}, {"test_fraction", c.test_fraction}};
  j["train"].erase("correction_noise");
  if (c.csv_path) {
    j["dataset"] = {{"csv", c.csv_path->string()}};
    if (c.label_column) j["dataset"]["label_column"] = *c.label_column;
  } else {
    j["dataset"] = {{"synthetic", to_json(c.synthetic)}};
  }
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  try {
    if (j.contains("train")) {
      const auto& t = j.at("train");
      if (t.contains("divergence")) c.train.divergence = parse_divergence(t.at("divergence").get<std::string>());
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.seed = t.value("seed", c.train.seed);
      c.train.bias_correction = t.value("bias_correction", c.train.bias_correction);
      if (t.contains("score_mode")) c.train.score_mode = parse_score_mode(t.at("score_mode").get<std::string>());
      if (t.contains("objective")) c.train.objective = parse_objective(t.at("objective").get<std::string>());
      if (t.contains("learning_rate")) {
        const auto& lr = t.at("learning_rate");
        if (lr.is_number()) {
          c.train.learning_rate.initial = lr.get<double>();
        } else {
          c.train.learning_rate.initial = lr.value("initial", c.train.learning_rate.initial);
          c.train.learning_rate.decay = lr.value("decay", c.train.learning_rate.decay);
          c.train.learning_rate.decay_every = lr.value("decay_every", c.train.learning_rate.decay_every);
        }
      }
    }
    c.noise = j.value("noise", c.noise);
    c.test_fraction = j.value("test_fraction", c.test_fraction);
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      if (d.contains("csv")) {
        c.csv_path = d.at("csv").get<std::string>();
        if (d.contains("label_column")) c.label_column = d.at("label_column").get<std::string>();
      } else if (d.contains("synthetic")) {
        c.synthetic = mixture_from_json(d.at("synthetic"));
      }
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return c;
}

TrainOutcome run_train(const ExperimentConfig& config) {
  config.validate();
  Rng root(config.train.seed);
  Dataset all = [&] {
    if (config.csv_path) return load_csv(*config.csv_path, config.label_column);
    GaussianMixtureSpec spec = config.synthetic;
    spec.seed = root.split("data").seed();
    return generate_gaussian_mixture(spec).dataset;
  }();
  Rng split_rng = root.split("split");
  all = shuffled(all, split_rng);
  const auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction * static_cast<double>(all.size())));
  if (n_test == 0 || n_test >= all.size()) throw ConstraintError("test split leaves an empty part");
  auto [train_part, test_part] = all.split(all.size() - n_test);

  const TransitionMatrix t = parse_noise_spec(config.noise, all.num_classes());
  std::vector<std::size_t> noisy = apply_noise(train_part.labels(), t, root.split("noise").seed());
  std::size_t flipped = 0;
  for (std::size_t n = 0; n < noisy.size(); ++n) flipped += noisy[n] != train_part.y(n);
  const Dataset noisy_train = train_part.with_labels(std::move(noisy));

  TrainConfig tc = config.train;
  if (tc.bias_correction) tc.correction_noise = t;
  TrainResult result = train(noisy_train, test_part, tc);
  const Evaluation final = evaluate(result.model, test_part, tc.divergence);
  std::size_t clamps = 0;
  for (const EpochRecord& r : result.history.epochs) clamps += r.clamp_events;

  TrainOutcome out{final, result.history, clamps, {}, {}};
  const double flip_rate = static_cast<double>(flipped) / static_cast<double>(noisy_train.size());
  out.metrics = {
      {"objective", to_string(tc.objective)},
      {"divergence", std::string(tc.divergence.token())},
      {"noise", config.noise},
      {"seed", static_cast<std::int64_t>(tc.seed)},
      {"epochs", static_cast<std::int64_t>(tc.epochs)},
      {"batch_size", static_cast<std::int64_t>(tc.batch_size)},
      {"learning_rate", tc.learning_rate.initial},
      {"lr_decay", tc.learning_rate.decay},
      {"lr_decay_every", static_cast<std::int64_t>(tc.learning_rate.decay_every)},
      {"bias_correction", static_cast<std::int64_t>(tc.bias_correction)},
      {"score_mode", to_string(tc.score_mode)},
      {"dataset", config.csv_path ? config.csv_path->string() : std::string("synthetic")},
      {"n_train", static_cast<std::int64_t>(noisy_train.size())},
      {"n_test", static_cast<std::int64_t>(test_part.size())},
      {"observed_flip_rate", flip_rate},
      {"accuracy", final.accuracy},
      {"test_D_f", final.divergence},
      {"clamp_events", static_cast<std::int64_t>(clamps)},
  };
  out.document = {{"config", to_json(config)},
                  {"transition_matrix", to_json(t)},
                  {"history", to_json(result.history)},
                  {"final",
                   {{"accuracy", json_number(final.accuracy)},
                    {"test_D_f", json_number(final.divergence)},
                    {"observed_flip_rate", json_number(flip_rate)},
                    {"clamp_events", clamps}}}};
  return out;
}

std::vector<SweepRow> run_sweep(const SweepRequest& request) {
  if (request.noise_family != "symmetric" && request.noise_family != "binary") {
    throw ConstraintError("noise family must be symmetric or binary, got " + request.noise_family);
  }
  struct Cell {
    std::string divergence;
    double rate;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (const std::string& d : request.divergences) {
    if (d != "ce") parse_divergence(d);
    for (double r : request.rates)
      for (std::uint64_t s : request.seeds) cells.push_back({d, r, s});
  }
  std::vector<SweepRow> rows(cells.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const Cell& c = cells[i];
      ExperimentConfig cfg = request.base;
      cfg.train.seed = c.seed;
      std::ostringstream noise;
      noise.precision(17);
      if (request.noise_family == "symmetric") {
        noise << "symmetric:" << c.rate;
      } else {
        noise << "binary:" << c.rate << "," << c.rate;
      }
      cfg.noise = noise.str();
      if (c.divergence == "ce") {
        cfg.train.objective = Objective::CrossEntropyBaseline;
      } else {
        cfg.train.objective = Objective::FDivergence;
        cfg.train.divergence = parse_divergence(c.divergence);
      }
      SweepRow row{to_string(cfg.train.objective), c.divergence, c.rate, c.seed, NAN, NAN, "ok"};
      try {
        const TrainOutcome o = run_train(cfg);
        row.accuracy = o.final.accuracy;
        row.test_divergence = o.final.divergence;
      } catch (const std::exception& e) {
        row.status = e.what();
      }
      rows[i] = std::move(row);
    }
  };
  const std::size_t hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t workers = std::min(cells.size(), request.threads ? request.threads : hw);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return rows;
}

std::vector<MetricRecord> sweep_records(const std::vector<SweepRow>& rows) {
  std::vector<MetricRecord> out;
  for (const SweepRow& r : rows) {
    out.push_back({{"objective", r.objective},
                   {"divergence", r.divergence},
                   {"rate", r.rate},
                   {"seed", static_cast<std::int64_t>(r.seed)},
                   {"accuracy", r.accuracy},
                   {"test_D_f", r.test_divergence},
                   {"status", r.status}});
  }
  return out;
}

nlohmann::json to_json(const SweepRequest& request) {
  return {{"base", to_json(request.base)},
          {"rates", request.rates},
          {"divergences", request.divergences},
          {"seeds", request.seeds},
          {"noise_family", request.noise_family}};
}

GSource parse_g_source(const std::string& s) {
  if (s == "optimal_clean") return GSource::OptimalClean;
  if (s == "optimal_noisy") return GSource::OptimalNoisy;
  if (s == "random") return GSource::Random;
  throw std::invalid_argument("unknown g source '" + s + "'; valid: optimal_clean, optimal_noisy, random");
}

VariationalTable random_variational_table(DivergenceSpec spec, std::size_t rows, std::size_t cols, Rng& rng) {
  Table v(rows, cols);
  for (double& x : v.flat()) x = spec.activation(rng.normal());
  return VariationalTable(spec, std::move(v));
}

nlohmann::json decouple(DivergenceSpec spec, const JointDistribution& clean_joint, const TransitionMatrix& t,
                        GSource source, std::uint64_t seed) {
  const JointDistribution noisy = corrupt_joint(clean_joint, t);
  Rng rng(seed);
  const VariationalTable g = [&] {
    switch (source) {
      case GSource::OptimalClean: return optimal_table(spec, clean_joint, true);
      case GSource::OptimalNoisy: return optimal_table(spec, noisy, true);
      case GSource::Random: break;
    }
    return random_variational_table(spec, clean_joint.rows(), clean_joint.cols(), rng);
  }();
  const DecouplingReport r = decoupling_check(spec, clean_joint, t, g);
  return {{"divergence", std::string(spec.token())},
          {"noise", to_json(t)},
          {"clean_difference", json_number(r.clean_difference)},
          {"noisy_difference", json_number(r.noisy_difference)},
          {"shrink_factor", json_number(r.shrink_factor)},
          {"bias", json_number(r.bias)},
          {"residual", json_number(r.residual)}};
}

nlohmann::json catalog_json() {
  nlohmann::json list = nlohmann::json::array();
  for (Divergence d : kAllDivergences) {
    const DivergenceSpec s(d);
    const DivergenceFormulas f = s.formulas();
    list.push_back({{"name", std::string(s.name())},
                    {"token", std::string(s.token())},
                    {"generator", std::string(f.generator)},
                    {"conjugate", std::string(f.conjugate)},
                    {"conjugate_domain", std::string(f.domain)},
                    {"activation", std::string(f.activation)},
                    {"optimal_variational", std::string(f.optimal_variational)},
                    {"recession_slope", json_number(s.recession_slope())}});
  }
  return {{"divergences", list}};
}

std::string catalog_text() {
  std::ostringstream os;
  for (Divergence d : kAllDivergences) {
    const DivergenceSpec s(d);
    const DivergenceFormulas f = s.formulas();
    os << s.name() << " (" << s.token() << ")\n"
       << "  f(v)     = " << f.generator << "\n"
       << "  f*(u)    = " << f.conjugate << "\n"
       << "  dom(f*)  : " << f.domain << "\n"
       << "  g_f(v)   = " << f.activation << "\n"
       << "  g*(p,q)  = " << f.optimal_variational << "\n";
  }
  return os.str();
}

nlohmann::json with_metadata(nlohmann::json payload) {
  payload["metadata"] = {{"created_utc", iso_timestamp()}, {"tool", "fdiv"}};
  return payload;
}

}  // namespace fdivergence
