#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "fdiv/errors.hpp"
#include "fdiv/noise.hpp"
#include "generators.hpp"

using namespace fdivergence;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace fs = std::filesystem;

namespace {

void check_matrix(const TransitionMatrix& t, const Table& expected, double tol = 1e-15) {
  REQUIRE(t.size() == expected.rows());
  for (std::size_t i = 0; i < expected.rows(); ++i)
    for (std::size_t j = 0; j < expected.cols(); ++j) {
      CAPTURE(i, j);
      CHECK_THAT(t(i, j), WithinAbs(expected(i, j), tol));
    }
}

void check_stochastic(const TransitionMatrix& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    double total = 0.0;
    for (double x : t.row(i)) {
      CHECK(x >= 0.0);
      CHECK(x <= 1.0);
      total += x;
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-12));
  }
}

fs::path scratch(const std::string& name, const std::string& text) {
  const fs::path dir = fs::temp_directory_path() / "fdiv_noise_test";
  fs::create_directories(dir);
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

TransitionMatrix random_structured(std::size_t k, Rng& rng) {
  switch (rng.uniform_index(3)) {
    case 0: {
      auto e = gen::simplex(k + 1, rng);
      e.pop_back();  // strictly below one in total
      return uniform_offdiagonal(e);
    }
    case 1: {
      std::vector<SparsePair> pairs;
      for (std::size_t i = 0; i + 1 < k; i += 2) {
        const double a = rng.uniform(0.0, 0.6);
        pairs.push_back({i, i + 1, a, rng.uniform(0.0, 0.99 - a)});
      }
      return sparse_pairs(pairs, k);
    }
    default: {
      Table m(k, k);
      for (std::size_t i = 0; i < k; ++i) {
        const auto row = gen::simplex(k, rng);
        for (std::size_t j = 0; j < k; ++j) m(i, j) = row[j];
      }
      return general_matrix(m);
    }
  }
}

}  // namespace

TEST_CASE("binary noise") {
  CHECK(binary(0.0, 0.0).is_identity());
  check_matrix(binary(0.2, 0.2), Table{{0.8, 0.2}, {0.2, 0.8}});
  check_matrix(binary(0.3, 0.1), Table{{0.7, 0.3}, {0.1, 0.9}});
  CHECK_THROWS_AS(binary(0.6, 0.5), ConstraintError);
  CHECK_THROWS_AS(binary(0.5, 0.5), ConstraintError);
  CHECK_THROWS_AS(binary(-0.1, 0.2), ConstraintError);
}

TEST_CASE("uniform off-diagonal noise") {
  check_matrix(uniform_offdiagonal({0.2, 0.2}), Table{{0.8, 0.2}, {0.2, 0.8}});
  const auto t3 = uniform_offdiagonal({0.1, 0.1, 0.1});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK_THAT(t3(i, j), WithinAbs(i == j ? 0.8 : 0.1, 1e-15));
  CHECK_THROWS_AS(uniform_offdiagonal(std::vector<double>(10, 0.1)), ConstraintError);
  CHECK_THROWS_AS(uniform_offdiagonal({0.2, -0.1}), ConstraintError);
}

TEST_CASE("binary and uniform constructions coincide") {
  Rng rng(41);
  for (int n = 0; n < 500; ++n) {
    const double ep = rng.uniform(0.0, 0.99), em = rng.uniform(0.0, 0.99 - ep);
    CHECK(binary(ep, em).matrix() == uniform_offdiagonal({em, ep}).matrix());
  }
}

TEST_CASE("symmetric noise spreads the flip rate") {
  const auto t = symmetric_noise(5, 0.4);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK_THAT(t(i, j), WithinAbs(i == j ? 0.6 : 0.1, 1e-15));
  check_matrix(symmetric_noise(2, 0.3), Table{{0.7, 0.3}, {0.3, 0.7}});
}

TEST_CASE("sparse pair noise") {
  check_matrix(sparse_pairs({{0, 1, 0.3, 0.2}}, 2), Table{{0.7, 0.3}, {0.2, 0.8}});
  const auto t4 = sparse_pairs({{0, 1, 0.3, 0.2}, {2, 3, 0.3, 0.2}}, 4);
  check_matrix(t4, Table{{0.7, 0.3, 0, 0}, {0.2, 0.8, 0, 0}, {0, 0, 0.7, 0.3}, {0, 0, 0.2, 0.8}});
  CHECK_THROWS_AS(sparse_pairs({{0, 1, 0.6, 0.5}}, 2), ConstraintError);
  CHECK_THROWS_AS(sparse_pairs({{0, 1, 0.1, 0.1}, {1, 2, 0.1, 0.1}}, 4), ConstraintError);
  CHECK_THROWS_AS(sparse_pairs({{1, 0, 0.1, 0.1}}, 2), ConstraintError);
  CHECK_THROWS_AS(sparse_pairs({{0, 4, 0.1, 0.1}}, 4), ConstraintError);
}

TEST_CASE("incomplete pairings keep identity rows") {
  const auto t = sparse_pairs({{1, 2, 0.2, 0.1}}, 4);
  CHECK(t(0, 0) == 1.0);
  CHECK(t(3, 3) == 1.0);
  CHECK_THAT(t(1, 2), WithinAbs(0.2, 1e-15));
  CHECK_THAT(t(2, 1), WithinAbs(0.1, 1e-15));
}

TEST_CASE("random sparse pairs cover every class") {
  Rng rng(42);
  const std::vector<std::pair<double, double>> options{{0.1, 0.3}, {0.2, 0.4}};
  const auto t = random_sparse_pairs(10, options, rng);
  check_stochastic(t);
  const auto& s = std::get<SparsePairsNoise>(t.structure());
  CHECK(s.pairs.size() == 5);
  std::vector<int> seen(10, 0);
  for (const auto& p : s.pairs) {
    ++seen[p.i];
    ++seen[p.j];
  }
  CHECK(std::ranges::all_of(seen, [](int c) { return c == 1; }));
}

TEST_CASE("constructors are row-stochastic") {
  Rng rng(43);
  for (int n = 0; n < 300; ++n) check_stochastic(random_structured(gen::size_between(2, 10, rng), rng));
}

TEST_CASE("bundled matrices") {
  CHECK(bundled_matrix_names().size() == 10);
  const auto t = bundled_matrix("cifar10_sparse_high");
  REQUIRE(t.size() == 10);
  for (std::size_t c = 0; c < 10; c += 2) {
    for (std::size_t j = 0; j < 10; ++j) {
      CHECK(t(c, j) == (j == c ? 0.4 : j == c + 1 ? 0.6 : 0.0));
      CHECK(t(c + 1, j) == (j == c ? 0.2 : j == c + 1 ? 0.8 : 0.0));
    }
  }
  const auto low = bundled_matrix("mnist_sparse_low");
  CHECK(low(0, 0) == 0.7);
  CHECK(low(0, 1) == 0.3);
  CHECK(low(1, 0) == 0.2);
  CHECK(low(1, 1) == 0.8);
  for (const auto& name : bundled_matrix_names()) {
    CAPTURE(name);
    check_stochastic(bundled_matrix(name));
  }
  CHECK_THROWS(bundled_matrix("no_such_matrix"));
}

TEST_CASE("sparse bundled matrices are recognized as sparse pairs") {
  const auto t = infer_structure(bundled_matrix("cifar10_sparse_high"));
  REQUIRE(std::holds_alternative<SparsePairsNoise>(t.structure()));
  CHECK(std::get<SparsePairsNoise>(t.structure()).pairs.size() == 5);
}

TEST_CASE("matrix files") {
  const auto identity = from_file(scratch("identity.csv", "1,0,0\n0,1,0\n0,0,1\n"));
  CHECK(identity.is_identity());
  CHECK(std::holds_alternative<GeneralNoise>(identity.structure()));
  const auto json = from_file(scratch("m.json", R"({"matrix": [[0.9, 0.1], [0.25, 0.75]]})"));
  check_matrix(json, Table{{0.9, 0.1}, {0.25, 0.75}});
  CHECK_THROWS_WITH(from_file(scratch("bad.csv", "1,0\n0.5,0.4\n")), ContainsSubstring("row 1"));
  CHECK_THROWS(from_file(scratch("ragged.csv", "1,0\n0.5\n")));
  CHECK_THROWS(from_file(scratch("missing.csv", "")));
}

TEST_CASE("slightly off rows are renormalized") {
  const auto t = general_matrix(Table{{0.82, 0.17}, {0.3, 0.7}});
  check_stochastic(t);
  CHECK_THROWS_AS(general_matrix(Table{{0.8, 0.1}, {0.3, 0.7}}), ConstraintError);
}

TEST_CASE("apply_noise") {
  std::vector<std::size_t> labels(1000);
  for (std::size_t n = 0; n < labels.size(); ++n) labels[n] = n % 3;
  CHECK(apply_noise(labels, symmetric_noise(3, 0.0), 5) == labels);
  const auto t = symmetric_noise(3, 0.3);
  CHECK(apply_noise(labels, t, 5) == apply_noise(labels, t, 5));
  CHECK(apply_noise(labels, t, 5) != apply_noise(labels, t, 6));
  const std::vector<std::size_t> bad{0, 3};
  CHECK_THROWS_AS(apply_noise(bad, t, 1), std::out_of_range);
}

TEST_CASE("binary flip fraction concentrates") {
  const std::vector<std::size_t> zeros(100000, 0);
  const auto noisy = apply_noise(zeros, binary(0.2, 0.2), 2024);
  const double flipped = std::count(noisy.begin(), noisy.end(), std::size_t{1}) / 1e5;
  CHECK_THAT(flipped, WithinAbs(0.2, 3.0 * std::sqrt(0.2 * 0.8 / 1e5)));
}

TEST_CASE("corrupt_joint") {
  const JointDistribution clean(Table{{0.5, 0.0}, {0.0, 0.5}});
  const auto t = general_matrix(Table{{0.8, 0.2}, {0.3, 0.7}});
  const auto noisy = corrupt_joint(clean, t);
  CHECK_THAT(noisy(0, 0), WithinAbs(0.4, 1e-15));
  CHECK_THAT(noisy(0, 1), WithinAbs(0.1, 1e-15));
  CHECK_THAT(noisy(1, 0), WithinAbs(0.15, 1e-15));
  CHECK_THAT(noisy(1, 1), WithinAbs(0.35, 1e-15));
  CHECK(corrupt_joint(clean, symmetric_noise(2, 0.0)) == clean);
  CHECK_THROWS(corrupt_joint(clean, symmetric_noise(3, 0.1)));
}

TEST_CASE("corrupt_joint keeps the prediction marginal") {
  Rng rng(44);
  for (int n = 0; n < 200; ++n) {
    const std::size_t k = gen::size_between(2, 6, rng);
    const auto clean = gen::sparse_joint(gen::size_between(1, 6, rng), k, rng);
    const auto noisy = corrupt_joint(clean, random_structured(k, rng));
    for (std::size_t i = 0; i < clean.rows(); ++i) CHECK_THAT(noisy.h_marginal()[i], WithinAbs(clean.h_marginal()[i], 1e-12));
  }
}

TEST_CASE("corrupting twice equals corrupting by the composition") {
  Rng rng(45);
  for (int n = 0; n < 200; ++n) {
    const std::size_t k = gen::size_between(2, 6, rng);
    const auto clean = gen::positive_joint(gen::size_between(1, 6, rng), k, rng);
    const auto t1 = random_structured(k, rng), t2 = random_structured(k, rng);
    const auto once = corrupt_joint(clean, compose(t1, t2));
    const auto twice = corrupt_joint(corrupt_joint(clean, t1), t2);
    for (std::size_t i = 0; i < clean.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) CHECK_THAT(once(i, j), WithinAbs(twice(i, j), 1e-12));
  }
}

TEST_CASE("sampled noisy joint converges to the analytic one") {
  Rng rng(46);
  const std::size_t n = 100000, k = 3;
  std::vector<std::size_t> preds(n), labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    labels[s] = rng.uniform_index(k);
    preds[s] = rng.uniform() < 0.7 ? labels[s] : rng.uniform_index(k);
  }
  const auto t = uniform_offdiagonal({0.1, 0.15, 0.2});
  const auto expected = corrupt_joint(estimate_joint(preds, labels, k), t);
  // Counted per (seed, cell).
  int good = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto observed = estimate_joint(preds, apply_noise(labels, t, seed), k);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double p = expected(i, j);
        good += std::abs(observed(i, j) - p) <= 3.0 * std::sqrt(p * (1.0 - p) / double(n));
        ++total;
      }
  }
  CHECK(good >= 0.99 * total);
}

TEST_CASE("noise spec strings") {
  check_matrix(parse_noise_spec("binary:0.2,0.1", 2), Table{{0.8, 0.2}, {0.1, 0.9}});
  check_matrix(parse_noise_spec("symmetric:0.2", 2), Table{{0.8, 0.2}, {0.2, 0.8}});
  check_matrix(parse_noise_spec("sparse:0-1:0.3:0.2", 2), Table{{0.7, 0.3}, {0.2, 0.8}});
  CHECK(parse_noise_spec("none", 4).is_identity());
  CHECK(parse_noise_spec("uniform:0.1,0.1,0.1", 3).size() == 3);
  CHECK(parse_noise_spec("bundled:mnist_uniform_low", 10).size() == 10);
  CHECK_THROWS_AS(parse_noise_spec("binary:0.6,0.5", 2), ConstraintError);
  CHECK_THROWS_AS(parse_noise_spec("symmetric:1.0", 2), ConstraintError);
  CHECK_THROWS_AS(parse_noise_spec("gaussian:0.1", 2), ParseError);
  CHECK_THROWS_AS(parse_noise_spec("sparse:0-1:0.3", 2), ParseError);
}

TEST_CASE("transition matrix JSON names its structure") {
  const auto j = to_json(binary(0.2, 0.1));
  CHECK(j.dump().find("binary") != std::string::npos);
}
