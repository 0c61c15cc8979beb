#include "fdiv/trainer.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "fdiv/decoupling.hpp"
#include "fdiv/distribution.hpp"
#include "fdiv/errors.hpp"
#include "fdiv/metrics_io.hpp"

namespace fdivergence {

namespace {

const double kJsClamp = std::log(2.0) - 1e-9;

// f*(u) and f*'(u), with the JS argument held below log 2.
struct Conjugate {
  double value;
  double derivative;
  bool clamped;
};

Conjugate guarded_conjugate(DivergenceSpec spec, double u) {
  bool clamped = false;
  if (spec.kind() == Divergence::JensenShannon && u > kJsClamp) {
    u = kJsClamp;
    clamped = true;
  }
  assert(spec.conjugate_domain().contains(u));
  return {spec.conjugate(u), clamped ? 0.0 : spec.conjugate_derivative(u), clamped};
}

double score_of(ScoreMode mode, double p, std::size_t k) {
  return mode == ScoreMode::Probability ? p : std::log(static_cast<double>(k) * p);
}

// Accumulates d(term)/dz into the flat gradient, given a[c] = d(term)/d s_c.
void backprop(const SoftmaxLinearModel& model, ScoreMode mode, std::span<const double> x,
              std::span<const double> p, std::span<const double> a, std::vector<double>& grad) {
  const std::size_t k = model.num_classes();
  const std::size_t d = model.dim();
  double mix = 0.0;
  for (std::size_t c = 0; c < k; ++c) mix += mode == ScoreMode::Probability ? a[c] * p[c] : a[c];
  for (std::size_t c = 0; c < k; ++c) {
    const double dz = mode == ScoreMode::Probability ? p[c] * a[c] - p[c] * mix : a[c] - p[c] * mix;
    if (dz == 0.0) continue;
    for (std::size_t j = 0; j < d; ++j) grad[c * d + j] += dz * x[j];
    grad[k * d + c] += dz;
  }
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

SoftmaxLinearModel::SoftmaxLinearModel(std::size_t num_classes, std::size_t dim)
    : weights_(num_classes, dim), biases_(num_classes, 0.0) {
  if (num_classes < 2 || dim < 1) throw std::invalid_argument("model needs K >= 2 and d >= 1");
}

SoftmaxLinearModel SoftmaxLinearModel::initialized(std::size_t num_classes, std::size_t dim, Rng& rng) {
  SoftmaxLinearModel m(num_classes, dim);
  for (double& w : m.weights_.flat()) w = rng.uniform(-0.01, 0.01);
  return m;
}

std::vector<double> SoftmaxLinearModel::parameters() const {
  std::vector<double> theta(weights_.flat().begin(), weights_.flat().end());
  theta.insert(theta.end(), biases_.begin(), biases_.end());
  return theta;
}

void SoftmaxLinearModel::set_parameters(std::span<const double> theta) {
  if (theta.size() != num_parameters()) throw std::invalid_argument("set_parameters: size mismatch");
  std::copy_n(theta.begin(), weights_.size(), weights_.flat().begin());
  std::copy(theta.begin() + static_cast<std::ptrdiff_t>(weights_.size()), theta.end(), biases_.begin());
}

std::vector<double> forward(const SoftmaxLinearModel& model, std::span<const double> x) {
  if (x.size() != model.dim()) {
    throw std::invalid_argument("forward: feature dimension " + std::to_string(x.size()) + ", model expects " +
                                std::to_string(model.dim()));
  }
  const std::size_t k = model.num_classes();
  std::vector<double> z(k);
  for (std::size_t c = 0; c < k; ++c) {
    double s = model.biases()[c];
    const auto w = model.weights().row(c);
    for (std::size_t j = 0; j < x.size(); ++j) s += w[j] * x[j];
    z[c] = s;
  }
  const double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double& v : z) total += (v = std::exp(v - m));
  for (double& v : z) v /= total;
  return z;
}

std::size_t predict(const SoftmaxLinearModel& model, std::span<const double> x) {
  const auto p = forward(model, x);
  return static_cast<std::size_t>(std::distance(p.begin(), std::max_element(p.begin(), p.end())));
}

std::string to_string(ScoreMode m) { return m == ScoreMode::Probability ? "probability" : "logit_ratio"; }
std::string to_string(Objective o) { return o == Objective::FDivergence ? "f_divergence" : "cross_entropy"; }

ScoreMode parse_score_mode(const std::string& s) {
  if (s == "probability") return ScoreMode::Probability;
  if (s == "logit_ratio" || s == "logit-ratio") return ScoreMode::LogitRatio;
  throw std::invalid_argument("unknown score mode '" + s + "'; valid: probability, logit_ratio");
}

Objective parse_objective(const std::string& s) {
  if (s == "f_divergence" || s == "fdiv" || s == "f-divergence") return Objective::FDivergence;
  if (s == "cross_entropy" || s == "ce") return Objective::CrossEntropyBaseline;
  throw std::invalid_argument("unknown objective '" + s + "'; valid: f_divergence, cross_entropy");
}

double LearningRateSchedule::at(std::size_t epoch) const {
  if (decay_every == 0) return initial;
  return initial * std::pow(decay, static_cast<double>(epoch / decay_every));
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConstraintError("batch size must be at least 2");
  if (!(learning_rate.initial > 0.0)) throw ConstraintError("initial learning rate must be positive");
  if (!(learning_rate.decay > 0.0)) throw ConstraintError("learning-rate decay must be positive");
  if (bias_correction) {
    if (!correction_noise) throw ConstraintError("bias correction requires a noise model");
    decompose(*correction_noise);
  }
}

Batches sample_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size > n) {
    throw ConstraintError("batch size " + std::to_string(batch_size) + " exceeds dataset size " + std::to_string(n));
  }
  Batches b;
  b.joint = rng.sample_without_replacement(n, batch_size);
  b.product_x = rng.sample_without_replacement(n, batch_size);
  b.product_y = rng.sample_without_replacement(n, batch_size);
  return b;
}

ObjectiveValue f_objective(const SoftmaxLinearModel& model, const Dataset& data, const Batches& batches,
                           const TrainConfig& config) {
  const DivergenceSpec spec = config.divergence;
  const std::size_t k = model.num_classes();
  const ScoreMode mode = config.score_mode;
  ObjectiveValue out{0.0, std::vector<double>(model.num_parameters(), 0.0), 0};
  std::vector<double> a(k);

  const double wj = 1.0 / static_cast<double>(batches.joint.size());
  for (std::size_t n : batches.joint) {
    const auto x = data.x(n);
    const auto p = forward(model, x);
    const std::size_t y = data.y(n);
    const double s = score_of(mode, p[y], k);
    out.value += wj * spec.activation(s);
    std::fill(a.begin(), a.end(), 0.0);
    a[y] = wj * spec.activation_derivative(s);
    backprop(model, mode, x, p, a, out.gradient);
  }

  const double wp = 1.0 / static_cast<double>(batches.product_x.size());
  for (std::size_t m = 0; m < batches.product_x.size(); ++m) {
    const auto x = data.x(batches.product_x[m]);
    const auto p = forward(model, x);
    const std::size_t y = data.y(batches.product_y.at(m));
    const double s = score_of(mode, p[y], k);
    const Conjugate c = guarded_conjugate(spec, spec.activation(s));
    out.clamp_events += c.clamped;
    out.value -= wp * c.value;
    std::fill(a.begin(), a.end(), 0.0);
    a[y] = -wp * c.derivative * spec.activation_derivative(s);
    backprop(model, mode, x, p, a, out.gradient);
  }

  if (config.bias_correction && config.correction_noise) {
    const NoiseDecomposition d = decompose(*config.correction_noise);
    // Label-group frequencies on the joint batch.
    std::vector<double> in_group(d.groups.size(), 0.0);
    std::vector<std::size_t> group_of(k, 0);
    for (std::size_t gi = 0; gi < d.groups.size(); ++gi)
      for (std::size_t c : d.groups[gi].classes) group_of.at(c) = gi;
    for (std::size_t n : batches.joint) in_group[group_of[data.y(n)]] += 1.0;
    for (double& m : in_group) m /= static_cast<double>(batches.joint.size());

    for (std::size_t n : batches.joint) {
      const auto x = data.x(n);
      const auto p = forward(model, x);
      const std::size_t gy = group_of[data.y(n)];
      std::fill(a.begin(), a.end(), 0.0);
      bool any = false;
      for (std::size_t gi = 0; gi < d.groups.size(); ++gi) {
        const NoiseGroup& g = d.groups[gi];
        const double member = gi == gy ? 1.0 : 0.0;
        for (std::size_t t = 0; t < g.classes.size(); ++t) {
          const double r = g.rates[t];
          if (r == 0.0) continue;
          const std::size_t j = g.classes[t];
          const double s = score_of(mode, p[j], k);
          const double u = spec.activation(s);
          const Conjugate c = guarded_conjugate(spec, u);
          out.clamp_events += c.clamped;
          // Delta-hat contribution: member * u - mass * f*(u).
          const double coef_u = member;
          const double coef_f = in_group[gi];
          out.value -= wj * r * (coef_u * u - coef_f * c.value);
          const double du = coef_u - coef_f * c.derivative;
          if (du == 0.0) continue;
          a[j] -= wj * r * du * spec.activation_derivative(s);
          any = true;
        }
      }
      if (any) backprop(model, mode, x, p, a, out.gradient);
    }
  }
  return out;
}

ObjectiveValue cross_entropy_objective(const SoftmaxLinearModel& model, const Dataset& data,
                                       std::span<const std::size_t> batch) {
  ObjectiveValue out{0.0, std::vector<double>(model.num_parameters(), 0.0), 0};
  const std::size_t k = model.num_classes();
  const std::size_t d = model.dim();
  const double w = 1.0 / static_cast<double>(batch.size());
  for (std::size_t n : batch) {
    const auto x = data.x(n);
    const auto p = forward(model, x);
    const std::size_t y = data.y(n);
    out.value -= w * std::log(std::max(p[y], 1e-300));
    for (std::size_t c = 0; c < k; ++c) {
      const double dz = w * (p[c] - (c == y ? 1.0 : 0.0));
      for (std::size_t j = 0; j < d; ++j) out.gradient[c * d + j] += dz * x[j];
      out.gradient[k * d + c] += dz;
    }
  }
  return out;
}

StepDiagnostics train_step(SoftmaxLinearModel& model, const Dataset& data, const TrainConfig& config, double eta,
                           Rng& rng) {
  const Batches batches = sample_batches(data.size(), config.batch_size, rng);
  if (config.objective == Objective::CrossEntropyBaseline) {
    return cross_entropy_baseline_step(model, data, batches.joint, eta);
  }
  const ObjectiveValue obj = f_objective(model, data, batches, config);
  if (!std::isfinite(obj.value)) throw std::runtime_error("non-finite training objective");
  if (eta != 0.0) {
    std::vector<double> theta = model.parameters();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += eta * obj.gradient[i];
    model.set_parameters(theta);
  }
  return {obj.value, norm(obj.gradient), obj.clamp_events};
}

StepDiagnostics cross_entropy_baseline_step(SoftmaxLinearModel& model, const Dataset& data,
                                            std::span<const std::size_t> batch, double eta) {
  const ObjectiveValue obj = cross_entropy_objective(model, data, batch);
  if (eta != 0.0) {
    std::vector<double> theta = model.parameters();
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * obj.gradient[i];
    model.set_parameters(theta);
  }
  return {obj.value, norm(obj.gradient), 0};
}

Evaluation evaluate(const SoftmaxLinearModel& model, const Dataset& test_set, DivergenceSpec spec) {
  std::vector<std::size_t> pred(test_set.size());
  std::size_t correct = 0;
  for (std::size_t n = 0; n < test_set.size(); ++n) {
    pred[n] = predict(model, test_set.x(n));
    correct += pred[n] == test_set.y(n);
  }
  const std::size_t k = std::max(model.num_classes(), test_set.num_classes());
  const JointDistribution joint = estimate_joint(pred, test_set.labels(), k);
  return {static_cast<double>(correct) / static_cast<double>(test_set.size()), f_mutual_information(spec, joint)};
}

TrainResult train(const Dataset& train_set, const std::optional<Dataset>& test_set, const TrainConfig& config) {
  config.validate();
  if (config.batch_size > train_set.size()) {
    throw ConstraintError("batch size exceeds training set size " + std::to_string(train_set.size()));
  }
  Rng root(config.seed);
  Rng init_rng = root.split("init");
  Rng batch_rng = root.split("batches");
  TrainResult result{SoftmaxLinearModel::initialized(train_set.num_classes(), train_set.dim(), init_rng), {}};
  const std::size_t steps = (train_set.size() + config.batch_size - 1) / config.batch_size;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double eta = config.learning_rate.at(epoch);
    EpochRecord rec{epoch, eta, 0.0, std::nullopt, std::nullopt, 0};
    for (std::size_t s = 0; s < steps; ++s) {
      const StepDiagnostics diag = train_step(result.model, train_set, config, eta, batch_rng);
      rec.train_objective += diag.objective / static_cast<double>(steps);
      rec.clamp_events += diag.clamp_events;
    }
    if (test_set) {
      const Evaluation ev = evaluate(result.model, *test_set, config.divergence);
      rec.test_accuracy = ev.accuracy;
      rec.test_divergence = ev.divergence;
    }
    result.history.epochs.push_back(rec);
  }
  return result;
}

nlohmann::json to_json(const TrainHistory& history) {
  nlohmann::json out = nlohmann::json::array();
  for (const EpochRecord& r : history.epochs) {
    nlohmann::json j = {{"epoch", r.epoch},
                        {"learning_rate", json_number(r.learning_rate)},
                        {"train_objective", json_number(r.train_objective)},
                        {"clamp_events", r.clamp_events}};
    j["test_accuracy"] = r.test_accuracy ? json_number(*r.test_accuracy) : nlohmann::json(nullptr);
    j["test_divergence"] = r.test_divergence ? json_number(*r.test_divergence) : nlohmann::json(nullptr);
    out.push_back(std::move(j));
  }
  return out;
}

nlohmann::json to_json(const TrainConfig& config) {
  nlohmann::json j = {{"divergence", std::string(config.divergence.token())},
                      {"batch_size", config.batch_size},
                      {"epochs", config.epochs},
                      {"learning_rate",
                       {{"initial", config.learning_rate.initial},
                        {"decay", config.learning_rate.decay},
                        {"decay_every", config.learning_rate.decay_every}}},
                      {"seed", config.seed},
                      {"bias_correction", config.bias_correction},
                      {"score_mode", to_string(config.score_mode)},
                      {"objective", to_string(config.objective)}};
  j["correction_noise"] = config.correction_noise ? to_json(*config.correction_noise) : nlohmann::json(nullptr);
  return j;
}

}  // namespace fdivergence
