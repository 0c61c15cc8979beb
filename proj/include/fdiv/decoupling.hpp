#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fdiv/distribution.hpp"
#include "fdiv/divergence.hpp"
#include "fdiv/noise.hpp"

namespace fdivergence {

/// Block of label classes that noise only mixes among themselves. Within a
/// block, T - shrink*I has identical rows, whose entries are `rates`.
struct NoiseGroup {
  std::vector<std::size_t> classes;
  std::vector<double> rates;  // aligned with `classes`
};

/// T = shrink*I + sum over groups of 1_G r_G^T.
struct NoiseDecomposition {
  double shrink;
  std::vector<NoiseGroup> groups;
};

/// Binary and uniform noise form one group over all classes. Each sparse
/// pair is its own group; classes outside every pair become singleton
/// groups. Sparse pairs must share e_p1 + e_p2 so that the shrink factor is
/// a scalar. Throws UnsupportedStructure otherwise, and for General noise.
NoiseDecomposition decompose(const TransitionMatrix& t);

/// sum_i h[i] * (g(i, label) - f*(g(i, label))).
double delta_term(DivergenceSpec spec, const VariationalTable& g, std::span<const double> h_marginal,
                  std::size_t label_class);

/// Group-localized delta:
/// sum_i [P(h=i, Y in G) g(i, label) - P(h=i) P(Y in G) f*(g(i, label))].
/// Equals delta_term when the group covers every class.
double group_delta_term(DivergenceSpec spec, const VariationalTable& g, const JointDistribution& joint,
                        std::span<const std::size_t> group, std::size_t label_class);

/// sum over groups and their classes j of r_j * group_delta_term(G, j).
/// `joint` may be the clean or the noisy joint: group masses are invariant
/// under within-group flips.
double bias_term(DivergenceSpec spec, const VariationalTable& g, const JointDistribution& joint,
                 const TransitionMatrix& t);

struct DecouplingReport {
  double clean_difference;
  double noisy_difference;
  double shrink_factor;
  double bias;
  double residual;
};

DecouplingReport decoupling_check(DivergenceSpec spec, const JointDistribution& clean_joint,
                                  const TransitionMatrix& t, const VariationalTable& g);

/// Noisy variational difference minus the bias term.
double bias_corrected_difference(DivergenceSpec spec, const JointDistribution& noisy_joint,
                                 const TransitionMatrix& t, const VariationalTable& g);

/// Supremum over g of bias_corrected_difference, computed cellwise from the
/// noisy joint alone. Equals shrink * D_f of the clean joint.
double bias_corrected_divergence(DivergenceSpec spec, const JointDistribution& noisy_joint,
                                 const TransitionMatrix& t);

struct ScalingPoint {
  double epsilon;  // 1 - 2e
  double abs_bias;
};

/// |Bias| at the noisy-optimal table under binary(e, e), for each e < 1/2.
std::vector<ScalingPoint> bias_scaling_probe(DivergenceSpec spec, const JointDistribution& clean_joint,
                                             std::span<const double> rates);

/// Least-squares slope of log(abs_bias) against log(epsilon). NaN when any
/// bias is zero.
double loglog_slope(std::span<const ScalingPoint> points);

/// min over y of FIT(h=y, label=y) >= reference_fit. Joint must be square.
bool hstar_membership(const JointDistribution& joint, double reference_fit);

/// True iff t is non-increasing in |x - 1| on each side of 1 over the grid.
bool monotone_t_condition(const std::function<double(double)>& t, std::span<const double> grid);

/// Per-divergence t with Delta^y at the noisy-optimal table equal to
/// sum_i h_i t(FIT(i, y)). Empty for Jeffrey, which has no closed form.
std::optional<std::function<double(double)>> t_function(DivergenceSpec spec);

}  // namespace fdivergence
