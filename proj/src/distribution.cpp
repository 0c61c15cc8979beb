#include "fdiv/distribution.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fdiv/errors.hpp"

namespace fdivergence {

namespace {
constexpr double kRenormalizeGate = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

JointDistribution::JointDistribution(Table cells) : cells_(std::move(cells)) {
  if (cells_.rows() == 0 || cells_.cols() == 0) throw ConstraintError("joint distribution: empty table");
  double total = 0.0;
  for (std::size_t i = 0; i < cells_.rows(); ++i) {
    for (std::size_t j = 0; j < cells_.cols(); ++j) {
      const double c = cells_(i, j);
      if (!std::isfinite(c) || c < 0.0) {
        throw ConstraintError("joint distribution: cell (" + std::to_string(i) + "," +
                              std::to_string(j) + ") = " + std::to_string(c) +
                              " is not a probability");
      }
      total += c;
    }
  }
  if (std::abs(total - 1.0) > kRenormalizeGate) {
    throw ConstraintError("joint distribution: cells sum to " + std::to_string(total) +
                          ", expected 1");
  }
  if (total != 1.0) {
    for (double& c : cells_.flat()) c /= total;
  }
  h_marginal_ = cells_.row_sums();
  y_marginal_ = cells_.col_sums();
}

VariationalTable::VariationalTable(DivergenceSpec spec, Table values)
    : spec_(spec), values_(std::move(values)) {
  const Interval dom = spec_.conjugate_domain();
  for (std::size_t i = 0; i < values_.rows(); ++i) {
    for (std::size_t j = 0; j < values_.cols(); ++j) {
      if (!dom.contains(values_(i, j))) {
        throw DomainError(std::string(spec_.name()) + ": variational entry (" + std::to_string(i) +
                          "," + std::to_string(j) + ") = " + std::to_string(values_(i, j)) +
                          " outside dom(f*) = " + dom.to_string());
      }
    }
  }
}

JointDistribution estimate_joint(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> labels, std::size_t num_classes) {
  return estimate_joint(predictions, labels, num_classes, num_classes);
}

JointDistribution estimate_joint(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> labels, std::size_t num_predicted,
                                 std::size_t num_labels) {
  if (predictions.empty()) throw std::invalid_argument("estimate_joint: no samples");
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("estimate_joint: predictions and labels differ in length");
  }
  std::vector<std::size_t> counts(num_predicted * num_labels, 0);
  for (std::size_t n = 0; n < predictions.size(); ++n) {
    if (predictions[n] >= num_predicted || labels[n] >= num_labels) {
      throw std::out_of_range("estimate_joint: class index out of range at sample " +
                              std::to_string(n));
    }
    ++counts[predictions[n] * num_labels + labels[n]];
  }
  const double total = static_cast<double>(predictions.size());
  Table cells(num_predicted, num_labels);
  for (std::size_t k = 0; k < counts.size(); ++k) cells.flat()[k] = static_cast<double>(counts[k]) / total;
  return JointDistribution(std::move(cells));
}

JointDistribution product_of_marginals(const JointDistribution& joint) {
  Table cells(joint.rows(), joint.cols());
  for (std::size_t i = 0; i < joint.rows(); ++i)
    for (std::size_t j = 0; j < joint.cols(); ++j) cells(i, j) = joint.product(i, j);
  return JointDistribution(std::move(cells));
}

double divergence(DivergenceSpec spec, const Table& p, const Table& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw std::invalid_argument("divergence: table shapes differ");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double pk = p.flat()[k];
    const double qk = q.flat()[k];
    double term = 0.0;
    if (pk == 0.0 && qk == 0.0) {
      term = 0.0;
    } else if (pk == 0.0) {
      term = qk * spec.f(0.0);
    } else if (qk == 0.0) {
      term = pk * spec.recession_slope();
    } else {
      term = qk * spec.f(pk / qk);
    }
    total += term;
  }
  if (std::isinf(total)) return kInf;
  // Rounding can leave tiny negatives for (near-)independent joints.
  return total < 0.0 ? 0.0 : total;
}

double divergence_closed_form(DivergenceSpec spec, const JointDistribution& joint) {
  Table q(joint.rows(), joint.cols());
  for (std::size_t i = 0; i < joint.rows(); ++i)
    for (std::size_t j = 0; j < joint.cols(); ++j) q(i, j) = joint.product(i, j);
  return divergence(spec, joint.cells(), q);
}

double f_mutual_information(DivergenceSpec spec, const JointDistribution& joint) {
  return divergence_closed_form(spec, joint);
}

double variational_difference(DivergenceSpec spec, const JointDistribution& joint,
                              const VariationalTable& g) {
  if (g.rows() != joint.rows() || g.cols() != joint.cols()) {
    throw std::invalid_argument("variational_difference: table shape mismatch");
  }
  double expect_p = 0.0;
  double expect_q = 0.0;
  for (std::size_t i = 0; i < joint.rows(); ++i) {
    for (std::size_t j = 0; j < joint.cols(); ++j) {
      const double u = g(i, j);
      expect_p += joint(i, j) * u;
      expect_q += joint.product(i, j) * spec.conjugate(u);
    }
  }
  return expect_p - expect_q;
}

double fit_measure(const JointDistribution& joint, std::size_t h_class, std::size_t label_class) {
  if (h_class >= joint.rows() || label_class >= joint.cols()) {
    throw std::out_of_range("fit_measure: class index out of range");
  }
  const double ph = joint.h_marginal()[h_class];
  const double py = joint.y_marginal()[label_class];
  if (ph <= 0.0 || py <= 0.0) {
    throw DomainError("fit_measure: zero marginal for h=" + std::to_string(h_class) +
                      " or label=" + std::to_string(label_class));
  }
  return joint(h_class, label_class) / (ph * py);
}

VariationalTable optimal_table(DivergenceSpec spec, const JointDistribution& joint, bool neutral_fill) {
  Table values(joint.rows(), joint.cols());
  const double neutral = spec.generator_derivative(1.0);
  for (std::size_t i = 0; i < joint.rows(); ++i) {
    for (std::size_t j = 0; j < joint.cols(); ++j) {
      const double p = joint(i, j);
      const double q = joint.product(i, j);
      if (neutral_fill && (p <= 0.0 || q <= 0.0)) {
        values(i, j) = neutral;
      } else {
        values(i, j) = spec.optimal_variational(p, q);
      }
    }
  }
  return VariationalTable(spec, std::move(values));
}

nlohmann::json to_json(const JointDistribution& joint) {
  const auto flat = joint.cells().flat();
  return {{"rows", joint.rows()},
          {"cols", joint.cols()},
          {"cells", std::vector<double>(flat.begin(), flat.end())}};
}

JointDistribution joint_from_json(const nlohmann::json& j) {
  if (!j.contains("cells")) throw ParseError("joint JSON: missing 'cells'");
  const auto& cells = j.at("cells");
  if (!cells.is_array() || cells.empty()) throw ParseError("joint JSON: 'cells' must be a non-empty array");
  if (cells.front().is_array()) {
    const std::size_t rows = cells.size();
    const std::size_t cols = cells.front().size();
    Table t(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      if (cells[i].size() != cols) throw ParseError("joint JSON: ragged rows");
      for (std::size_t k = 0; k < cols; ++k) t(i, k) = cells[i][k].get<double>();
    }
    return JointDistribution(std::move(t));
  }
  if (!j.contains("rows") || !j.contains("cols")) {
    throw ParseError("joint JSON: flat 'cells' requires 'rows' and 'cols'");
  }
  return JointDistribution(Table::from_flat(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                                            cells.get<std::vector<double>>()));
}

}  // namespace fdivergence
