#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "fdiv/divergence.hpp"
#include "fdiv/table.hpp"

namespace fdivergence {

/// Joint distribution of (classifier output, label) over a K_h x K_y grid.
/// Rows index the predicted class, columns the label. The same type holds
/// clean and noisy joints.
///
/// Cells must be non-negative and sum to one; a total within 1e-9 of one
/// is renormalized at construction, anything further is rejected.
class JointDistribution {
 public:
  explicit JointDistribution(Table cells);

  std::size_t rows() const noexcept { return cells_.rows(); }
  std::size_t cols() const noexcept { return cells_.cols(); }
  double operator()(std::size_t i, std::size_t j) const { return cells_(i, j); }
  const Table& cells() const noexcept { return cells_; }
  std::span<const double> h_marginal() const noexcept { return h_marginal_; }
  std::span<const double> y_marginal() const noexcept { return y_marginal_; }

  /// Product-of-marginals mass of cell (i, j).
  double product(std::size_t i, std::size_t j) const { return h_marginal_[i] * y_marginal_[j]; }

  bool operator==(const JointDistribution& o) const { return cells_ == o.cells_; }

 private:
  Table cells_;
  std::vector<double> h_marginal_;
  std::vector<double> y_marginal_;
};

/// Table of variational values g(i, j), validated against dom(f*) of the
/// divergence it was built for.
class VariationalTable {
 public:
  VariationalTable(DivergenceSpec spec, Table values);

  DivergenceSpec spec() const noexcept { return spec_; }
  std::size_t rows() const noexcept { return values_.rows(); }
  std::size_t cols() const noexcept { return values_.cols(); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const Table& values() const noexcept { return values_; }

 private:
  DivergenceSpec spec_;
  Table values_;
};

JointDistribution estimate_joint(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> labels, std::size_t num_classes);
JointDistribution estimate_joint(std::span<const std::size_t> predictions,
                                 std::span<const std::size_t> labels, std::size_t num_predicted,
                                 std::size_t num_labels);

JointDistribution product_of_marginals(const JointDistribution& joint);

/// D_f(P || Q) = sum q f(p/q) over matching cells, with the usual
/// conventions: (p=0, q=0) contributes 0; (p=0, q>0) contributes q f(0);
/// (p>0, q=0) contributes p lim f(v)/v. Returns +inf when a term diverges.
double divergence(DivergenceSpec spec, const Table& p, const Table& q);

/// D_f between a joint and the product of its own marginals.
double divergence_closed_form(DivergenceSpec spec, const JointDistribution& joint);

/// f-mutual information between prediction and label; same value as
/// divergence_closed_form.
double f_mutual_information(DivergenceSpec spec, const JointDistribution& joint);

/// E_P[g] - E_Q[f*(g)] with Q the product of the joint's marginals.
double variational_difference(DivergenceSpec spec, const JointDistribution& joint,
                              const VariationalTable& g);

/// P(h = h_class | R = label_class) / P(h = h_class).
double fit_measure(const JointDistribution& joint, std::size_t h_class, std::size_t label_class);

/// Per-cell g* of the joint against its product. Cells where p or q is zero
/// throw ZeroCellError unless `neutral_fill` is set, in which case they get
/// f'(1), the optimal value at ratio one.
VariationalTable optimal_table(DivergenceSpec spec, const JointDistribution& joint,
                               bool neutral_fill = false);

nlohmann::json to_json(const JointDistribution& joint);
/// Accepts {"rows": R, "cols": C, "cells": [row-major values]} or
/// {"cells": [[...], ...]}.
JointDistribution joint_from_json(const nlohmann::json& j);

}  // namespace fdivergence
