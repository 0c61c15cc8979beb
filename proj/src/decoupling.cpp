#include "fdiv/decoupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fdiv/errors.hpp"

namespace fdivergence {

namespace {

constexpr double kShrinkMatch = 1e-12;

NoiseDecomposition single_group(std::vector<double> e) {
  NoiseGroup g;
  g.classes.resize(e.size());
  std::iota(g.classes.begin(), g.classes.end(), std::size_t{0});
  const double total = std::accumulate(e.begin(), e.end(), 0.0);
  g.rates = std::move(e);
  return {1.0 - total, {std::move(g)}};
}

void require_shape(const VariationalTable& g, const JointDistribution& joint) {
  if (g.rows() != joint.rows() || g.cols() != joint.cols()) {
    throw std::invalid_argument("variational table is " + std::to_string(g.rows()) + "x" +
                                std::to_string(g.cols()) + ", joint is " + std::to_string(joint.rows()) + "x" +
                                std::to_string(joint.cols()));
  }
}

}  // namespace

NoiseDecomposition decompose(const TransitionMatrix& t) {
  const std::size_t k = t.size();
  if (const auto* b = std::get_if<BinaryNoise>(&t.structure())) {
    // Class 0 is +1: T(1, 0) = e_minus, T(0, 1) = e_plus.
    return single_group({b->e_minus, b->e_plus});
  }
  if (const auto* u = std::get_if<UniformOffDiagonalNoise>(&t.structure())) {
    return single_group(u->e);
  }
  if (const auto* s = std::get_if<SparsePairsNoise>(&t.structure())) {
    if (s->pairs.empty()) return single_group(std::vector<double>(k, 0.0));
    const double flip = s->pairs.front().e_p1 + s->pairs.front().e_p2;
    NoiseDecomposition d{1.0 - flip, {}};
    std::vector<bool> covered(k, false);
    for (const SparsePair& p : s->pairs) {
      if (std::abs(p.e_p1 + p.e_p2 - flip) > kShrinkMatch) {
        throw UnsupportedStructure("sparse pairs with different e_p1 + e_p2 totals have no scalar shrink factor");
      }
      d.groups.push_back({{p.i, p.j}, {p.e_p2, p.e_p1}});
      covered[p.i] = covered[p.j] = true;
    }
    for (std::size_t c = 0; c < k; ++c)
      if (!covered[c]) d.groups.push_back({{c}, {flip}});
    return d;
  }
  throw UnsupportedStructure("decoupling identities are defined for binary, uniform off-diagonal and sparse-pair "
                             "noise only; got " + t.structure_name());
}

double delta_term(DivergenceSpec spec, const VariationalTable& g, std::span<const double> h_marginal,
                  std::size_t label_class) {
  if (h_marginal.size() != g.rows()) throw std::invalid_argument("delta_term: marginal length mismatch");
  if (label_class >= g.cols()) throw std::out_of_range("delta_term: label class out of range");
  double total = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    const double u = g(i, label_class);
    total += h_marginal[i] * (u - spec.conjugate(u));
  }
  return total;
}

double group_delta_term(DivergenceSpec spec, const VariationalTable& g, const JointDistribution& joint,
                        std::span<const std::size_t> group, std::size_t label_class) {
  require_shape(g, joint);
  // A group spanning every class has label mass exactly one and joint mass
  // exactly the h-marginal; using them verbatim keeps TV's bias at exact zero.
  const bool full = group.size() == joint.cols();
  double label_mass = 0.0;
  for (std::size_t c : group) label_mass += joint.y_marginal()[c];
  if (full) label_mass = 1.0;
  double total = 0.0;
  for (std::size_t i = 0; i < g.rows(); ++i) {
    double joint_mass = 0.0;
    for (std::size_t c : group) joint_mass += joint(i, c);
    if (full) joint_mass = joint.h_marginal()[i];
    const double u = g(i, label_class);
    total += joint_mass * u - joint.h_marginal()[i] * label_mass * spec.conjugate(u);
  }
  return total;
}

double bias_term(DivergenceSpec spec, const VariationalTable& g, const JointDistribution& joint,
                 const TransitionMatrix& t) {
  require_shape(g, joint);
  if (t.size() != joint.cols()) throw std::invalid_argument("bias_term: transition matrix size mismatch");
  const NoiseDecomposition d = decompose(t);
  double bias = 0.0;
  for (const NoiseGroup& group : d.groups) {
    for (std::size_t n = 0; n < group.classes.size(); ++n) {
      if (group.rates[n] == 0.0) continue;
      bias += group.rates[n] * group_delta_term(spec, g, joint, group.classes, group.classes[n]);
    }
  }
  return bias;
}

DecouplingReport decoupling_check(DivergenceSpec spec, const JointDistribution& clean_joint,
                                  const TransitionMatrix& t, const VariationalTable& g) {
  const NoiseDecomposition d = decompose(t);
  const JointDistribution noisy = corrupt_joint(clean_joint, t);
  DecouplingReport r{};
  r.clean_difference = variational_difference(spec, clean_joint, g);
  r.noisy_difference = variational_difference(spec, noisy, g);
  r.shrink_factor = d.shrink;
  r.bias = bias_term(spec, g, clean_joint, t);
  r.residual = std::abs(r.noisy_difference - (r.shrink_factor * r.clean_difference + r.bias));
  return r;
}

double bias_corrected_difference(DivergenceSpec spec, const JointDistribution& noisy_joint,
                                 const TransitionMatrix& t, const VariationalTable& g) {
  return variational_difference(spec, noisy_joint, g) - bias_term(spec, g, noisy_joint, t);
}

double bias_corrected_divergence(DivergenceSpec spec, const JointDistribution& noisy_joint,
                                 const TransitionMatrix& t) {
  const NoiseDecomposition d = decompose(t);
  const std::size_t rows = noisy_joint.rows();
  const std::size_t cols = noisy_joint.cols();
  // Cellwise, the corrected objective is A g - B f*(g) with A = shrink*P and
  // B = shrink*Q of the clean joint, recovered from the noisy one.
  Table a(rows, cols);
  Table b(rows, cols);
  for (const NoiseGroup& group : d.groups) {
    double label_mass = 0.0;
    for (std::size_t c : group.classes) label_mass += noisy_joint.y_marginal()[c];
    for (std::size_t i = 0; i < rows; ++i) {
      double joint_mass = 0.0;
      for (std::size_t c : group.classes) joint_mass += noisy_joint(i, c);
      for (std::size_t n = 0; n < group.classes.size(); ++n) {
        const std::size_t j = group.classes[n];
        const double r = group.rates[n];
        a(i, j) = std::max(0.0, noisy_joint(i, j) - r * joint_mass);
        b(i, j) = std::max(0.0, noisy_joint.h_marginal()[i] * (noisy_joint.y_marginal()[j] - r * label_mass));
      }
    }
  }
  return divergence(spec, a, b);
}

std::vector<ScalingPoint> bias_scaling_probe(DivergenceSpec spec, const JointDistribution& clean_joint,
                                             std::span<const double> rates) {
  if (clean_joint.rows() != 2 || clean_joint.cols() != 2) {
    throw std::invalid_argument("bias_scaling_probe: expects a binary joint");
  }
  std::vector<ScalingPoint> out;
  for (double e : rates) {
    if (!(e >= 0.0 && e < 0.5)) {
      throw ConstraintError("bias_scaling_probe: rate " + std::to_string(e) + " must lie in [0, 1/2)");
    }
    const TransitionMatrix t = binary(e, e);
    const JointDistribution noisy = corrupt_joint(clean_joint, t);
    const VariationalTable g = optimal_table(spec, noisy);
    out.push_back({1.0 - 2.0 * e, std::abs(bias_term(spec, g, noisy, t))});
  }
  return out;
}

double loglog_slope(std::span<const ScalingPoint> points) {
  if (points.size() < 2) throw std::invalid_argument("loglog_slope: needs at least two points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const ScalingPoint& p : points) {
    if (p.abs_bias <= 0.0 || p.epsilon <= 0.0) return std::numeric_limits<double>::quiet_NaN();
    const double x = std::log(p.epsilon);
    const double y = std::log(p.abs_bias);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double n = static_cast<double>(points.size());
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

bool hstar_membership(const JointDistribution& joint, double reference_fit) {
  if (joint.rows() != joint.cols()) throw std::invalid_argument("hstar_membership: joint must be square");
  double lowest = std::numeric_limits<double>::infinity();
  for (std::size_t y = 0; y < joint.rows(); ++y) lowest = std::min(lowest, fit_measure(joint, y, y));
  return lowest >= reference_fit;
}

bool monotone_t_condition(const std::function<double(double)>& t, std::span<const double> grid) {
  std::vector<double> xs(grid.begin(), grid.end());
  std::sort(xs.begin(), xs.end());
  auto slack = [](double a) { return 1e-12 * std::max(1.0, std::abs(a)); };
  // Left of 1, moving right shrinks |x - 1|: t must not decrease.
  // Right of 1, moving right grows |x - 1|: t must not increase.
  for (std::size_t n = 1; n < xs.size(); ++n) {
    const double a = xs[n - 1];
    const double b = xs[n];
    const double ta = t(a);
    const double tb = t(b);
    if (b < 1.0 && tb < ta - slack(ta)) return false;
    if (a >= 1.0 && tb > ta + slack(ta)) return false;
  }
  return true;
}

std::optional<std::function<double(double)>> t_function(DivergenceSpec spec) {
  switch (spec.kind()) {
    case Divergence::TotalVariation: return [](double) { return 0.0; };
    case Divergence::JensenShannon: return [](double x) { return std::log(4.0 * x / ((1.0 + x) * (1.0 + x))); };
    case Divergence::SquaredHellinger: return [](double x) { return 2.0 - std::sqrt(x) - 1.0 / std::sqrt(x); };
    case Divergence::PearsonChi2: return [](double x) { return -(x - 1.0) * (x - 1.0); };
    case Divergence::NeymanChi2: return [](double x) { return -(1.0 / x - 1.0) * (1.0 / x - 1.0); };
    case Divergence::KL: return [](double x) { return 1.0 + std::log(x) - x; };
    case Divergence::ReverseKL: return [](double x) { return 1.0 - std::log(x) - 1.0 / x; };
    case Divergence::Jeffrey: return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace fdivergence
