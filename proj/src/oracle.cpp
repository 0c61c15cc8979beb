#include "fdiv/oracle.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include "fdiv/decoupling.hpp"
#include "fdiv/errors.hpp"

namespace fdivergence {

namespace {

constexpr double kTie = 1e-12;
constexpr double kMassTolerance = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kChunk = 1 << 14;

using Scorer = std::function<double(const TabularClassifier&)>;

// Argmax set over the full enumeration, chunked across worker threads.
std::vector<TabularClassifier> argmax_set(const FiniteInstance& instance, const Scorer& score) {
  const ClassifierEnumerator en(instance);
  const std::uint64_t chunks = (en.count() + kChunk - 1) / kChunk;
  struct Partial {
    double best = -kInf;
    std::vector<std::pair<std::uint64_t, double>> near;
  };
  std::vector<Partial> partials(chunks);
  std::atomic<std::uint64_t> next{0};
  auto work = [&] {
    for (std::uint64_t c = next++; c < chunks; c = next++) {
      Partial& p = partials[c];
      const std::uint64_t end = std::min(en.count(), (c + 1) * kChunk);
      for (std::uint64_t idx = c * kChunk; idx < end; ++idx) {
        const double s = score(en.at(idx));
        if (s > p.best) {
          p.best = s;
          std::erase_if(p.near, [&](const auto& e) { return e.second < p.best - kTie; });
        }
        if (s >= p.best - kTie) p.near.emplace_back(idx, s);
      }
    }
  };
  const unsigned workers =
      static_cast<unsigned>(std::min<std::uint64_t>(chunks, std::max(1u, std::thread::hardware_concurrency())));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  double best = -kInf;
  for (const Partial& p : partials) best = std::max(best, p.best);
  std::vector<TabularClassifier> out;
  for (const Partial& p : partials)
    for (const auto& [idx, s] : p.near)
      if (s >= best - kTie) out.push_back(en.at(idx));
  std::sort(out.begin(), out.end());
  return out;
}

// Upper bound on a concave function's supremum over [a, b] from the tangent
// lines at the ends, given values and slopes with da >= 0 >= db.
double tangent_bound(double a, double fa, double da, double b, double fb, double db) {
  if (da - db <= 0.0) return std::max(fa, fb);
  const double v = (fb - fa + da * a - db * b) / (da - db);
  return std::max({fa + da * (v - a), fa, fb});
}

// Grid maximum of a concave function with a tangent-line bound on the gap.
// `closed_lo`/`closed_hi` mark grid ends that coincide with the boundary of
// the feasible set, where the supremum cannot lie beyond the grid.
OracleValue concave_grid_max(std::span<const double> xs, const std::function<double(double)>& value,
                             const std::function<double(double)>& slope, bool closed_lo, bool closed_hi) {
  std::size_t best = 0;
  double best_value = -kInf;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double v = value(xs[k]);
    if (v > best_value) {
      best_value = v;
      best = k;
    }
  }
  const double d = slope(xs[best]);
  double bound = best_value;
  if (d > 0.0) {
    if (best + 1 == xs.size()) return {best_value, closed_hi ? 0.0 : kInf};
    const double b = xs[best + 1];
    bound = tangent_bound(xs[best], best_value, d, b, value(b), slope(b));
  } else if (d < 0.0) {
    if (best == 0) return {best_value, closed_lo ? 0.0 : kInf};
    const double a = xs[best - 1];
    bound = tangent_bound(a, value(a), slope(a), xs[best], best_value, d);
  }
  return {best_value, std::max(0.0, bound - best_value)};
}

void check_distribution(std::span<const double> p, const std::string& what) {
  double s = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw ConstraintError(what + " has a negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > kMassTolerance) throw ConstraintError(what + " sums to " + std::to_string(s));
}

}  // namespace

FiniteInstance::FiniteInstance(std::vector<Atom> atoms, std::size_t num_classes)
    : atoms_(std::move(atoms)), num_classes_(num_classes) {
  if (atoms_.empty()) throw ConstraintError("finite instance: no atoms");
  if (atoms_.size() > kMaxAtoms) {
    throw EnumerationBoundError("finite instance: " + std::to_string(atoms_.size()) + " atoms exceeds " +
                                std::to_string(kMaxAtoms));
  }
  if (num_classes_ < 2) throw ConstraintError("finite instance: need at least two classes");
  std::vector<double> priors;
  for (std::size_t a = 0; a < atoms_.size(); ++a) {
    if (atoms_[a].posterior.size() != num_classes_) {
      throw ConstraintError("finite instance: atom " + std::to_string(a) + " posterior has wrong length");
    }
    check_distribution(atoms_[a].posterior, "finite instance: atom " + std::to_string(a) + " posterior");
    priors.push_back(atoms_[a].prior);
  }
  check_distribution(priors, "finite instance: priors");
}

std::vector<double> FiniteInstance::label_prior() const {
  std::vector<double> out(num_classes_, 0.0);
  for (const Atom& a : atoms_)
    for (std::size_t k = 0; k < num_classes_; ++k) out[k] += a.prior * a.posterior[k];
  return out;
}

ClassifierEnumerator::ClassifierEnumerator(const FiniteInstance& instance)
    : num_atoms_(instance.num_atoms()), num_classes_(instance.num_classes()), count_(1) {
  for (std::size_t a = 0; a < num_atoms_; ++a) {
    if (count_ > kMaxClassifiers / num_classes_) {
      throw EnumerationBoundError("enumeration of " + std::to_string(num_classes_) + "^" +
                                  std::to_string(num_atoms_) + " classifiers exceeds 2^24");
    }
    count_ *= num_classes_;
  }
}

TabularClassifier ClassifierEnumerator::at(std::uint64_t index) const {
  TabularClassifier h;
  h.labels.resize(num_atoms_);
  for (std::size_t a = 0; a < num_atoms_; ++a) {
    h.labels[a] = static_cast<std::size_t>(index % num_classes_);
    index /= num_classes_;
  }
  return h;
}

std::optional<TabularClassifier> ClassifierEnumerator::next() {
  if (cursor_ >= count_) return std::nullopt;
  return at(cursor_++);
}

std::vector<TabularClassifier> enumerate_classifiers(const FiniteInstance& instance) {
  ClassifierEnumerator en(instance);
  std::vector<TabularClassifier> out;
  out.reserve(en.count());
  while (auto h = en.next()) out.push_back(std::move(*h));
  return out;
}

JointDistribution induced_joint(const FiniteInstance& instance, const TabularClassifier& h) {
  if (h.labels.size() != instance.num_atoms()) throw std::invalid_argument("induced_joint: classifier size mismatch");
  const std::size_t k = instance.num_classes();
  Table cells(k, k);
  for (std::size_t a = 0; a < instance.num_atoms(); ++a) {
    const Atom& atom = instance.atoms()[a];
    if (h.labels[a] >= k) throw std::out_of_range("induced_joint: predicted class out of range");
    for (std::size_t j = 0; j < k; ++j) cells(h.labels[a], j) += atom.prior * atom.posterior[j];
  }
  return JointDistribution(std::move(cells));
}

TabularClassifier bayes_optimal(const FiniteInstance& instance) {
  TabularClassifier h;
  for (const Atom& a : instance.atoms()) {
    h.labels.push_back(static_cast<std::size_t>(
        std::distance(a.posterior.begin(), std::max_element(a.posterior.begin(), a.posterior.end()))));
  }
  return h;
}

double accuracy(const FiniteInstance& instance, const TabularClassifier& h) {
  double acc = 0.0;
  for (std::size_t a = 0; a < instance.num_atoms(); ++a) {
    const Atom& atom = instance.atoms()[a];
    acc += atom.prior * atom.posterior.at(h.labels.at(a));
  }
  return acc;
}

FiniteInstance with_bayes_labels(const FiniteInstance& instance) {
  const TabularClassifier bayes = bayes_optimal(instance);
  std::vector<Atom> atoms = instance.atoms();
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    std::fill(atoms[a].posterior.begin(), atoms[a].posterior.end(), 0.0);
    atoms[a].posterior[bayes.labels[a]] = 1.0;
  }
  return FiniteInstance(std::move(atoms), instance.num_classes());
}

std::vector<TabularClassifier> df_maximizer(DivergenceSpec spec, const FiniteInstance& instance,
                                            const std::optional<TransitionMatrix>& t) {
  if (t && t->size() != instance.num_classes()) throw std::invalid_argument("df_maximizer: noise size mismatch");
  return argmax_set(instance, [&](const TabularClassifier& h) {
    const JointDistribution joint = induced_joint(instance, h);
    return divergence_closed_form(spec, t ? corrupt_joint(joint, *t) : joint);
  });
}

std::vector<TabularClassifier> bias_corrected_maximizer(DivergenceSpec spec, const FiniteInstance& instance,
                                                        const TransitionMatrix& t) {
  decompose(t);  // reject unsupported structures before enumerating
  return argmax_set(instance, [&](const TabularClassifier& h) {
    return bias_corrected_divergence(spec, corrupt_joint(induced_joint(instance, h), t), t);
  });
}

bool robustness_verdict(DivergenceSpec spec, const FiniteInstance& instance, const TransitionMatrix& t) {
  return df_maximizer(spec, instance, t) == df_maximizer(spec, instance);
}

bool is_confident(const JointDistribution& joint) {
  for (std::size_t k = 0; k < joint.cols(); ++k) {
    int positive = 0;
    for (std::size_t i = 0; i < joint.rows(); ++i)
      if (joint(i, k) - joint.product(i, k) > kTie) ++positive;
    if (positive > 1) return false;
  }
  return true;
}

std::vector<double> geometric_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0) || !(hi > lo) || n < 2) throw std::invalid_argument("geometric_grid: need 0 < lo < hi, n >= 2");
  std::vector<double> out(n);
  const double span = std::log(hi / lo);
  for (std::size_t k = 0; k < n; ++k) {
    out[k] = lo * std::exp(span * static_cast<double>(k) / static_cast<double>(n - 1));
  }
  out.back() = hi;
  return out;
}

std::vector<double> standard_v_grid() { return geometric_grid(1e-6, 1e3, 10000); }

OracleValue conjugate_oracle(DivergenceSpec spec, double u, std::span<const double> v_grid) {
  if (v_grid.empty()) throw std::invalid_argument("conjugate_oracle: empty grid");
  if (!spec.conjugate_domain().contains(u)) {
    throw DomainError("conjugate_oracle: u outside dom(f*) = " + spec.conjugate_domain().to_string());
  }
  return concave_grid_max(
      v_grid, [&](double v) { return u * v - spec.f(v); },
      [&](double v) { return u - spec.generator_derivative(v); }, false, false);
}

std::vector<double> conjugate_test_points(DivergenceSpec spec, std::size_t n) {
  std::vector<double> out;
  if (spec.kind() == Divergence::TotalVariation) {
    for (std::size_t k = 0; k < n; ++k) {
      out.push_back(-0.5 + static_cast<double>(k) / static_cast<double>(n - 1));
    }
    return out;
  }
  for (double v : geometric_grid(1e-2, 10.0, n)) out.push_back(spec.generator_derivative(v));
  return out;
}

std::vector<double> variational_grid(DivergenceSpec spec, std::span<const double> v_grid) {
  std::vector<double> out;
  out.reserve(v_grid.size());
  if (spec.kind() == Divergence::TotalVariation) {
    const std::size_t n = v_grid.size();
    for (std::size_t k = 0; k < n; ++k) out.push_back(-0.5 + static_cast<double>(k) / static_cast<double>(n - 1));
    return out;
  }
  for (double v : v_grid) out.push_back(spec.generator_derivative(v));
  return out;
}

OracleValue variational_sup_oracle(DivergenceSpec spec, const JointDistribution& joint,
                                   std::span<const double> g_grid) {
  if (g_grid.empty()) throw std::invalid_argument("variational_sup_oracle: empty grid");
  std::vector<double> g(g_grid.begin(), g_grid.end());
  std::sort(g.begin(), g.end());
  const Interval dom = spec.conjugate_domain();
  const bool closed_lo = dom.lo_closed && g.front() == dom.lo;
  const bool closed_hi = dom.hi_closed && g.back() == dom.hi;
  // f* and its slope are cell-independent; tabulate them once.
  std::vector<double> fs(g.size());
  std::vector<double> dfs(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    fs[k] = spec.conjugate(g[k]);
    dfs[k] = spec.conjugate_derivative(g[k]);
  }
  OracleValue total{0.0, 0.0};
  for (std::size_t i = 0; i < joint.rows(); ++i) {
    for (std::size_t j = 0; j < joint.cols(); ++j) {
      const double p = joint(i, j);
      const double q = joint.product(i, j);
      if (!(p > 0.0) || !(q > 0.0)) throw DomainError("variational_sup_oracle: joint must be strictly positive");
      std::size_t best = 0;
      double best_value = -kInf;
      for (std::size_t k = 0; k < g.size(); ++k) {
        const double v = p * g[k] - q * fs[k];
        if (v > best_value) {
          best_value = v;
          best = k;
        }
      }
      auto value = [&](std::size_t k) { return p * g[k] - q * fs[k]; };
      auto slope = [&](std::size_t k) { return p - q * dfs[k]; };
      const double d = slope(best);
      double tau = 0.0;
      if (d > 0.0) {
        tau = best + 1 == g.size()
                  ? (closed_hi ? 0.0 : kInf)
                  : tangent_bound(g[best], best_value, d, g[best + 1], value(best + 1), slope(best + 1)) - best_value;
      } else if (d < 0.0) {
        tau = best == 0 ? (closed_lo ? 0.0 : kInf)
                        : tangent_bound(g[best - 1], value(best - 1), slope(best - 1), g[best], best_value, d) -
                              best_value;
      }
      total.value += best_value;
      total.tau += std::max(0.0, tau);
    }
  }
  return total;
}

FiniteInstance random_balanced_binary_instance(std::size_t num_atoms, Rng& rng) {
  if (num_atoms < 2) throw std::invalid_argument("balanced instance needs at least two atoms");
  const std::size_t half = num_atoms / 2;
  std::vector<double> w(half);
  for (double& x : w) x = rng.uniform(0.1, 1.0);
  const double middle = num_atoms % 2 == 1 ? rng.uniform(0.1, 1.0) : 0.0;
  const double total = 2.0 * std::accumulate(w.begin(), w.end(), 0.0) + middle;
  std::vector<Atom> atoms;
  for (std::size_t a = 0; a < half; ++a) {
    double p = rng.uniform(0.05, 0.95);
    atoms.push_back({w[a] / total, {p, 1.0 - p}});
    atoms.push_back({w[a] / total, {1.0 - p, p}});
  }
  if (middle > 0.0) atoms.push_back({middle / total, {0.5, 0.5}});
  // Renormalize priors exactly against rounding.
  double s = 0.0;
  for (const Atom& a : atoms) s += a.prior;
  for (Atom& a : atoms) a.prior /= s;
  return FiniteInstance(std::move(atoms), 2);
}

FiniteInstance random_instance(std::size_t num_atoms, std::size_t num_classes, Rng& rng) {
  std::vector<Atom> atoms(num_atoms);
  double prior_total = 0.0;
  for (Atom& a : atoms) {
    a.prior = rng.uniform(0.1, 1.0);
    prior_total += a.prior;
    double s = 0.0;
    a.posterior.resize(num_classes);
    for (double& p : a.posterior) {
      p = -std::log(rng.uniform(1e-3, 1.0));
      s += p;
    }
    for (double& p : a.posterior) p /= s;
  }
  for (Atom& a : atoms) a.prior /= prior_total;
  return FiniteInstance(std::move(atoms), num_classes);
}

}  // namespace fdivergence
