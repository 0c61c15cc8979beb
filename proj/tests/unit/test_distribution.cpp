#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fdiv/distribution.hpp"
#include "fdiv/errors.hpp"
#include "generators.hpp"

using namespace fdivergence;
using Catch::Matchers::WithinAbs;

namespace {

const DivergenceSpec kTV{Divergence::TotalVariation};
const DivergenceSpec kKL{Divergence::KL};

void check_cells(const JointDistribution& j, const Table& expected, double tol = 1e-15) {
  REQUIRE(j.rows() == expected.rows());
  REQUIRE(j.cols() == expected.cols());
  for (std::size_t i = 0; i < j.rows(); ++i)
    for (std::size_t k = 0; k < j.cols(); ++k) CHECK_THAT(j(i, k), WithinAbs(expected(i, k), tol));
}

VariationalTable random_table(DivergenceSpec spec, std::size_t rows, std::size_t cols, Rng& rng) {
  Table t(rows, cols);
  for (double& v : t.flat()) v = spec.activation(2.0 * rng.normal());
  return VariationalTable(spec, std::move(t));
}

}  // namespace

TEST_CASE("estimate_joint counts cells") {
  const std::vector<std::size_t> p1{0, 1}, l1{0, 1};
  check_cells(estimate_joint(p1, l1, 2), Table{{0.5, 0.0}, {0.0, 0.5}});
  const std::vector<std::size_t> p2{0, 0, 0, 0}, l2{0, 1, 0, 1};
  check_cells(estimate_joint(p2, l2, 2), Table{{0.5, 0.5}, {0.0, 0.0}});
}

TEST_CASE("estimate_joint rejects bad input") {
  const std::vector<std::size_t> empty;
  CHECK_THROWS_AS(estimate_joint(empty, empty, 2), std::invalid_argument);
  const std::vector<std::size_t> p{0, 2}, l{0, 1};
  CHECK_THROWS_AS(estimate_joint(p, l, 2), std::out_of_range);
  const std::vector<std::size_t> shorter{0};
  CHECK_THROWS_AS(estimate_joint(shorter, l, 2), std::invalid_argument);
}

TEST_CASE("joint construction validates cells") {
  CHECK_THROWS_AS(JointDistribution(Table{{0.5, -0.1}, {0.3, 0.3}}), ConstraintError);
  CHECK_THROWS_AS(JointDistribution(Table{{0.5, 0.1}, {0.3, 0.3}}), ConstraintError);
  CHECK_THROWS_AS(JointDistribution(Table{{0.5, NAN}, {0.3, 0.2}}), ConstraintError);
  const JointDistribution nearly(Table{{0.25 + 4e-10, 0.25}, {0.25, 0.25}});
  CHECK_THAT(nearly.cells().sum(), WithinAbs(1.0, 1e-15));
}

TEST_CASE("marginals equal row and column sums") {
  Rng rng(31);
  for (int n = 0; n < 200; ++n) {
    const auto j = gen::sparse_joint(gen::size_between(1, 6, rng), gen::size_between(1, 6, rng), rng);
    const auto rs = j.cells().row_sums(), cs = j.cells().col_sums();
    for (std::size_t i = 0; i < j.rows(); ++i) CHECK_THAT(j.h_marginal()[i], WithinAbs(rs[i], 1e-12));
    for (std::size_t k = 0; k < j.cols(); ++k) CHECK_THAT(j.y_marginal()[k], WithinAbs(cs[k], 1e-12));
  }
}

TEST_CASE("product of marginals") {
  check_cells(product_of_marginals(JointDistribution(Table{{0.4, 0.1}, {0.1, 0.4}})),
              Table{{0.25, 0.25}, {0.25, 0.25}});
  check_cells(product_of_marginals(JointDistribution(Table{{1.0, 0.0}, {0.0, 0.0}})), Table{{1.0, 0.0}, {0.0, 0.0}});
  const JointDistribution independent(Table{{0.12, 0.28}, {0.18, 0.42}});
  check_cells(product_of_marginals(independent), independent.cells(), 1e-15);
}

TEST_CASE("product of marginals keeps the marginals") {
  Rng rng(32);
  for (int n = 0; n < 200; ++n) {
    const auto j = gen::sparse_joint(gen::size_between(1, 5, rng), gen::size_between(1, 5, rng), rng);
    const auto q = product_of_marginals(j);
    for (std::size_t i = 0; i < j.rows(); ++i) CHECK_THAT(q.h_marginal()[i], WithinAbs(j.h_marginal()[i], 1e-12));
    for (std::size_t k = 0; k < j.cols(); ++k) CHECK_THAT(q.y_marginal()[k], WithinAbs(j.y_marginal()[k], 1e-12));
  }
}

TEST_CASE("variational difference on documented tables") {
  const JointDistribution j(Table{{0.4, 0.1}, {0.1, 0.4}});
  const VariationalTable tv_star(kTV, Table{{0.5, -0.5}, {-0.5, 0.5}});
  CHECK_THAT(variational_difference(kTV, j, tv_star), WithinAbs(0.3, 1e-15));
  CHECK(variational_difference(kTV, j, VariationalTable(kTV, Table(2, 2, 0.0))) == 0.0);
  const JointDistribution independent(Table{{0.12, 0.28}, {0.18, 0.42}});
  CHECK_THAT(variational_difference(kKL, independent, VariationalTable(kKL, Table(2, 2, 1.0))), WithinAbs(0.0, 1e-15));
}

TEST_CASE("variational table rejects entries outside the conjugate domain") {
  CHECK_THROWS_AS(VariationalTable(kTV, Table{{0.6, 0.0}}), DomainError);
  CHECK_THROWS_AS(VariationalTable(DivergenceSpec(Divergence::ReverseKL), Table{{0.0}}), DomainError);
}

TEST_CASE("variational difference is a lower bound") {
  Rng rng(33);
  int cases = 0;
  for (int n = 0; n < 125; ++n) {
    const std::size_t rows = gen::size_between(2, 4, rng), cols = gen::size_between(2, 4, rng);
    const auto j = gen::positive_joint(rows, cols, rng);
    for (Divergence d : kAllDivergences) {
      const DivergenceSpec s(d);
      const auto g = random_table(s, rows, cols, rng);
      CAPTURE(s.name(), n);
      CHECK(variational_difference(s, j, g) <= f_mutual_information(s, j) + 1e-9);
      ++cases;
    }
  }
  CHECK(cases == 1000);
}

TEST_CASE("f-mutual information on documented joints") {
  const JointDistribution independent(Table{{0.12, 0.28}, {0.18, 0.42}});
  CHECK_THAT(f_mutual_information(kKL, independent), WithinAbs(0.0, 1e-15));
  CHECK_THAT(f_mutual_information(kTV, JointDistribution(Table{{0.4, 0.1}, {0.1, 0.4}})), WithinAbs(0.3, 1e-15));
  CHECK_THAT(f_mutual_information(kTV, JointDistribution(Table{{0.5, 0.0}, {0.0, 0.5}})), WithinAbs(0.5, 1e-15));
}

TEST_CASE("f-mutual information uses the zero-cell conventions") {
  // Perfect classifier: off-diagonal cells have p = 0, q = 0.25.
  const JointDistribution perfect(Table{{0.5, 0.0}, {0.0, 0.5}});
  const double kl = 2 * 0.5 * std::log(0.5 / 0.25);
  CHECK_THAT(f_mutual_information(kKL, perfect), WithinAbs(kl, 1e-15));
  CHECK(f_mutual_information(DivergenceSpec(Divergence::ReverseKL), perfect) == INFINITY);
}

TEST_CASE("fit measure") {
  const JointDistribution independent(Table{{0.12, 0.28}, {0.18, 0.42}});
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 2; ++k) CHECK_THAT(fit_measure(independent, i, k), WithinAbs(1.0, 1e-14));
  const JointDistribution perfect(Table{{0.5, 0.0}, {0.0, 0.5}});
  CHECK_THAT(fit_measure(perfect, 0, 0), WithinAbs(2.0, 1e-15));
  CHECK(fit_measure(perfect, 0, 1) == 0.0);
  CHECK_THROWS_AS(fit_measure(JointDistribution(Table{{0.5, 0.5}, {0.0, 0.0}}), 1, 0), DomainError);
}

TEST_CASE("fit measure satisfies total probability") {
  Rng rng(34);
  for (int n = 0; n < 300; ++n) {
    const auto j = gen::positive_joint(gen::size_between(1, 6, rng), gen::size_between(1, 6, rng), rng);
    for (std::size_t i = 0; i < j.rows(); ++i) {
      double total = 0.0;
      for (std::size_t k = 0; k < j.cols(); ++k) total += fit_measure(j, i, k) * j.y_marginal()[k];
      CHECK_THAT(total, WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("estimate_joint converges to the sampling joint") {
  Rng rng(35);
  const auto truth = gen::positive_joint(3, 3, rng);
  const std::size_t n = 100000;
  // Counted per (trial, cell): each check fails with probability about 0.27%.
  int good = 0, total = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Rng draw = rng.split("trial", trial);
    std::vector<std::size_t> preds(n), labels(n);
    for (std::size_t s = 0; s < n; ++s) {
      const std::size_t k = draw.categorical(truth.cells().flat());
      preds[s] = k / 3;
      labels[s] = k % 3;
    }
    const auto est = estimate_joint(preds, labels, 3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        const double p = truth(i, k);
        good += std::abs(est(i, k) - p) <= 3.0 * std::sqrt(p * (1.0 - p) / double(n));
        ++total;
      }
  }
  CHECK(good >= 0.99 * total);
}

TEST_CASE("joint JSON round trip") {
  Rng rng(36);
  const auto j = gen::sparse_joint(3, 4, rng);
  CHECK(joint_from_json(to_json(j)) == j);
  CHECK(joint_from_json(nlohmann::json::parse(R"({"cells": [[0.4, 0.1], [0.1, 0.4]]})")) ==
        JointDistribution(Table{{0.4, 0.1}, {0.1, 0.4}}));
  CHECK_THROWS_AS(joint_from_json(nlohmann::json::parse(R"({"cells": [[0.4, 0.1], [0.5]]})")), ParseError);
  CHECK_THROWS_AS(joint_from_json(nlohmann::json::parse(R"({"rows": 2})")), ParseError);
}
