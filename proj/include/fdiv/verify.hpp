#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fdiv/distribution.hpp"
#include "fdiv/noise.hpp"
#include "fdiv/oracle.hpp"
#include "fdiv/rng.hpp"

namespace fdivergence {

/// Deliberate defects for mutation checks of the verify suites.
enum class Fault { None, BiasSignFlip };

struct Check {
  std::string name;
  bool passed;
  double measured;
  double tolerance;
  std::string detail;
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;

  bool passed() const;
  nlohmann::json to_json() const;
};

/// Strictly positive rows x cols joint with exponential cell weights.
JointDistribution random_positive_joint(std::size_t rows, std::size_t cols, Rng& rng);

/// Noise families of the decoupling battery with random admissible rates:
/// "binary", "uniform_k3", "uniform_k4", "uniform_k10", "sparse_k4",
/// "sparse_k10".
std::vector<std::string> decoupling_families();
TransitionMatrix random_family_noise(const std::string& family, Rng& rng);

struct FamilyStats {
  std::size_t cases = 0;
  double max_residual = 0.0;
  double max_corrected_gap = 0.0;  // |corrected noisy - shrink * clean|
  double max_abs_tv_bias = 0.0;
};

/// Every divergence x family x `trials` random (joint, g) pairs.
std::map<std::string, FamilyStats> decoupling_battery(std::size_t trials, std::uint64_t seed,
                                                      Fault fault = Fault::None);

struct ConjugateStats {
  double max_excess = 0.0;  // max over u of |oracle - f*(u)| - tau
  double max_tau = 0.0;
  double max_above = 0.0;   // max over u of oracle - f*(u) (must stay <= 0)
  std::size_t points = 0;
};
ConjugateStats conjugate_battery(DivergenceSpec spec, std::size_t points);

struct SandwichStats {
  double max_oracle_above = 0.0;    // max of oracle - closed form
  double max_closed_excess = 0.0;   // max of closed - (oracle + tau)
  double max_tau = 0.0;
  std::size_t joints = 0;
};
SandwichStats duality_sandwich(DivergenceSpec spec, std::size_t joints, std::uint64_t seed);

/// Max over trials of ||analytic - finite difference||_inf / ||fd||_inf on
/// random d=3, K=2, B=10 problems (step 1e-5).
double gradient_check(DivergenceSpec spec, std::size_t trials, std::uint64_t seed, bool bias_correction,
                      bool logit_ratio);
double cross_entropy_gradient_check(std::size_t trials, std::uint64_t seed);

/// Standard clean joints for the scaling check.
std::vector<JointDistribution> scaling_joint_family();

SuiteReport verify_conjugates();
SuiteReport verify_decoupling(Fault fault = Fault::None);
SuiteReport verify_oracle();
SuiteReport verify_gradients();

}  // namespace fdivergence
