#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fdiv/distribution.hpp"
#include "fdiv/divergence.hpp"
#include "fdiv/noise.hpp"
#include "fdiv/rng.hpp"

namespace fdivergence {

struct Atom {
  double prior;                  // P(X = x)
  std::vector<double> posterior; // P(Y = . | X = x)
};

/// Finite feature space with known posteriors. Priors and each posterior
/// sum to one (1e-9); at most kMaxAtoms atoms.
class FiniteInstance {
 public:
  static constexpr std::size_t kMaxAtoms = 12;

  FiniteInstance(std::vector<Atom> atoms, std::size_t num_classes);

  std::size_t num_classes() const noexcept { return num_classes_; }
  std::size_t num_atoms() const noexcept { return atoms_.size(); }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  std::vector<double> label_prior() const;

 private:
  std::vector<Atom> atoms_;
  std::size_t num_classes_;
};

/// Predicted class per atom.
struct TabularClassifier {
  std::vector<std::size_t> labels;
  auto operator<=>(const TabularClassifier&) const = default;
};

/// Visits all K^|atoms| classifiers in base-K counting order (atom 0 is the
/// least significant digit).
class ClassifierEnumerator {
 public:
  static constexpr std::uint64_t kMaxClassifiers = std::uint64_t{1} << 24;

  /// Throws EnumerationBoundError beyond kMaxClassifiers.
  explicit ClassifierEnumerator(const FiniteInstance& instance);

  std::uint64_t count() const noexcept { return count_; }
  TabularClassifier at(std::uint64_t index) const;
  /// Next classifier, or nullopt once all have been produced.
  std::optional<TabularClassifier> next();

 private:
  std::size_t num_atoms_;
  std::size_t num_classes_;
  std::uint64_t count_;
  std::uint64_t cursor_ = 0;
};

std::vector<TabularClassifier> enumerate_classifiers(const FiniteInstance& instance);

JointDistribution induced_joint(const FiniteInstance& instance, const TabularClassifier& h);

/// Per-atom posterior argmax, ties to the lowest class.
TabularClassifier bayes_optimal(const FiniteInstance& instance);
double accuracy(const FiniteInstance& instance, const TabularClassifier& h);

/// Same atoms, posteriors replaced by point masses on the Bayes label.
FiniteInstance with_bayes_labels(const FiniteInstance& instance);

/// Classifiers within 1e-12 of the maximal D_f of (h, label), on the
/// corrupted joint when `t` is given. Sorted.
std::vector<TabularClassifier> df_maximizer(DivergenceSpec spec, const FiniteInstance& instance,
                                            const std::optional<TransitionMatrix>& t = std::nullopt);

/// Maximizers of the bias-corrected noisy divergence.
std::vector<TabularClassifier> bias_corrected_maximizer(DivergenceSpec spec, const FiniteInstance& instance,
                                                        const TransitionMatrix& t);

/// Noisy and clean maximizer sets coincide.
bool robustness_verdict(DivergenceSpec spec, const FiniteInstance& instance, const TransitionMatrix& t);

/// For every label k, at most one predicted class has positive covariance
/// P(h=i, Y=k) - P(h=i) P(Y=k) (beyond 1e-12).
bool is_confident(const JointDistribution& joint);

/// Grid maximum and a rigorous bound on its gap to the true supremum.
struct OracleValue {
  double value;
  double tau;
};

/// v_k = lo * (hi/lo)^(k/(n-1)), k = 0..n-1. The standard grid is
/// geometric_grid(1e-6, 1e3, 10000).
std::vector<double> geometric_grid(double lo, double hi, std::size_t n);
std::vector<double> standard_v_grid();

/// max over the grid of u*v - f(v). tau bounds sup - value via the tangent
/// lines at the ends of the grid cell holding the maximizer; it is +inf
/// when the maximizer lies beyond the grid.
OracleValue conjugate_oracle(DivergenceSpec spec, double u, std::span<const double> v_grid);

/// Test points u = f'(v) for v geometric in [1e-2, 10] (TV: uniform in
/// [-1/2, 1/2]); their maximizers lie well inside the standard grid.
std::vector<double> conjugate_test_points(DivergenceSpec spec, std::size_t n);

/// Candidate g values f'(v) over `v_grid` (TV: n evenly spaced values
/// spanning [-1/2, 1/2]).
std::vector<double> variational_grid(DivergenceSpec spec, std::span<const double> v_grid);

/// Sum over cells of max over `g_grid` of p*g - q*f*(g), with summed
/// per-cell tangent-line bounds. Joint must be strictly positive.
OracleValue variational_sup_oracle(DivergenceSpec spec, const JointDistribution& joint,
                                   std::span<const double> g_grid);

/// Random instances. Atom priors and posteriors are drawn from the rng;
/// the balanced form mirrors each atom (p, 1-p) so P(Y=0) = P(Y=1) = 1/2.
FiniteInstance random_balanced_binary_instance(std::size_t num_atoms, Rng& rng);
FiniteInstance random_instance(std::size_t num_atoms, std::size_t num_classes, Rng& rng);

}  // namespace fdivergence
