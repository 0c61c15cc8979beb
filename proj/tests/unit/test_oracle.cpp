#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "fdiv/errors.hpp"
#include "fdiv/oracle.hpp"
#include "generators.hpp"

using namespace fdivergence;
using Catch::Matchers::WithinAbs;

namespace {

const DivergenceSpec kTV{Divergence::TotalVariation};
const DivergenceSpec kKL{Divergence::KL};
const DivergenceSpec kPearson{Divergence::PearsonChi2};

FiniteInstance two_atom() { return FiniteInstance({{0.5, {0.8, 0.2}}, {0.5, {0.2, 0.8}}}, 2); }

// Recursive enumeration and a plain linear scan for the maximum, kept apart
// from the library's counting enumerator and parallel scan.
void all_labelings(std::size_t atoms, std::size_t k, std::vector<std::size_t>& cur,
                   std::vector<TabularClassifier>& out) {
  if (cur.size() == atoms) {
    out.push_back({cur});
    return;
  }
  for (std::size_t c = 0; c < k; ++c) {
    cur.push_back(c);
    all_labelings(atoms, k, cur, out);
    cur.pop_back();
  }
}

std::vector<TabularClassifier> reference_argmax(DivergenceSpec spec, const FiniteInstance& inst,
                                                const std::optional<TransitionMatrix>& t) {
  std::vector<TabularClassifier> all;
  std::vector<std::size_t> cur;
  all_labelings(inst.num_atoms(), inst.num_classes(), cur, all);
  std::vector<double> values;
  for (const auto& h : all) {
    auto j = induced_joint(inst, h);
    values.push_back(divergence_closed_form(spec, t ? corrupt_joint(j, *t) : j));
  }
  const double best = *std::max_element(values.begin(), values.end());
  std::vector<TabularClassifier> out;
  for (std::size_t n = 0; n < all.size(); ++n)
    if (values[n] >= best - 1e-12) out.push_back(all[n]);
  std::sort(out.begin(), out.end());
  return out;
}

bool contains(const std::vector<TabularClassifier>& set, const TabularClassifier& h) {
  return std::binary_search(set.begin(), set.end(), h);
}

}  // namespace

TEST_CASE("instance validation") {
  CHECK_THROWS(FiniteInstance({{0.5, {0.8, 0.2}}, {0.4, {0.2, 0.8}}}, 2));
  CHECK_THROWS(FiniteInstance({{1.0, {0.8, 0.3}}}, 2));
  CHECK_THROWS(FiniteInstance({{1.0, {0.5, 0.5}}}, 3));
  std::vector<Atom> many(13, Atom{1.0 / 13.0, {1.0, 0.0}});
  CHECK_THROWS(FiniteInstance(many, 2));
  CHECK_THAT(two_atom().label_prior()[0], WithinAbs(0.5, 1e-15));
}

TEST_CASE("classifier enumeration counts") {
  CHECK(enumerate_classifiers(two_atom()).size() == 4);
  const FiniteInstance three({{0.2, {1, 0, 0}}, {0.3, {0, 1, 0}}, {0.5, {0, 0, 1}}}, 3);
  const auto all = enumerate_classifiers(three);
  CHECK(all.size() == 27);
  CHECK(std::set<TabularClassifier>(all.begin(), all.end()).size() == 27);
  // 12 atoms at K = 5 is 5^12 > 2^24.
  std::vector<Atom> atoms(12, Atom{1.0 / 12.0, {0.2, 0.2, 0.2, 0.2, 0.2}});
  CHECK_THROWS_AS(ClassifierEnumerator(FiniteInstance(atoms, 5)), EnumerationBoundError);
}

TEST_CASE("thirty atoms exceed the enumeration bound") {
  // The instance type itself refuses more than twelve atoms.
  std::vector<Atom> atoms(30, Atom{1.0 / 30.0, {0.5, 0.5}});
  CHECK_THROWS(FiniteInstance(atoms, 2));
}

TEST_CASE("enumerator visits every classifier once in order") {
  Rng rng(71);
  for (int n = 0; n < 20; ++n) {
    const auto inst = random_instance(gen::size_between(1, 5, rng), gen::size_between(2, 3, rng), rng);
    std::vector<TabularClassifier> expected;
    std::vector<std::size_t> cur;
    all_labelings(inst.num_atoms(), inst.num_classes(), cur, expected);
    auto listed = enumerate_classifiers(inst);
    CHECK(listed.size() == expected.size());
    std::sort(listed.begin(), listed.end());
    std::sort(expected.begin(), expected.end());
    CHECK(listed == expected);
    ClassifierEnumerator e(inst);
    std::size_t seen = 0;
    while (auto h = e.next()) CHECK(*h == e.at(seen++));
    CHECK(seen == e.count());
  }
}

TEST_CASE("induced joint") {
  const auto inst = two_atom();
  const auto j = induced_joint(inst, {{0, 1}});
  CHECK_THAT(j(0, 0), WithinAbs(0.4, 1e-15));
  CHECK_THAT(j(0, 1), WithinAbs(0.1, 1e-15));
  CHECK_THAT(j(1, 0), WithinAbs(0.1, 1e-15));
  CHECK_THAT(j(1, 1), WithinAbs(0.4, 1e-15));
  const auto constant = induced_joint(inst, {{1, 1}});
  CHECK(constant(0, 0) == 0.0);
  CHECK(constant(0, 1) == 0.0);
  CHECK_THAT(constant(1, 0), WithinAbs(0.5, 1e-15));
  CHECK_THAT(constant(1, 1), WithinAbs(0.5, 1e-15));
  const FiniteInstance point({{0.3, {1, 0}}, {0.7, {0, 1}}}, 2);
  const auto diag = induced_joint(point, bayes_optimal(point));
  CHECK(diag(0, 1) == 0.0);
  CHECK(diag(1, 0) == 0.0);
}

TEST_CASE("Bayes optimal classifier") {
  const auto inst = two_atom();
  CHECK(bayes_optimal(inst).labels == std::vector<std::size_t>{0, 1});
  CHECK_THAT(accuracy(inst, bayes_optimal(inst)), WithinAbs(0.8, 1e-15));
  const FiniteInstance uniform({{0.5, {0.5, 0.5}}, {0.5, {0.5, 0.5}}}, 2);
  CHECK(bayes_optimal(uniform).labels == std::vector<std::size_t>{0, 0});
  const FiniteInstance point({{0.3, {1, 0}}, {0.7, {0, 1}}}, 2);
  CHECK(accuracy(point, bayes_optimal(point)) == 1.0);
}

TEST_CASE("Bayes classifier has maximal accuracy") {
  Rng rng(72);
  for (int n = 0; n < 30; ++n) {
    const auto inst = random_instance(gen::size_between(1, 5, rng), gen::size_between(2, 3, rng), rng);
    const double best = accuracy(inst, bayes_optimal(inst));
    for (const auto& h : enumerate_classifiers(inst)) CHECK(accuracy(inst, h) <= best + 1e-15);
  }
}

TEST_CASE("D_f maximizer on documented cases") {
  const auto inst = two_atom();
  const auto tv = df_maximizer(kTV, inst);
  REQUIRE(tv.size() == 2);
  CHECK(tv[0].labels == std::vector<std::size_t>{0, 1});
  CHECK(tv[1].labels == std::vector<std::size_t>{1, 0});
  CHECK_THAT(divergence_closed_form(kTV, induced_joint(inst, tv[0])), WithinAbs(0.3, 1e-15));
  CHECK(contains(tv, bayes_optimal(inst)));
  CHECK(df_maximizer(kTV, inst, binary(0.2, 0.2)) == tv);
  const FiniteInstance single({{1.0, {0.3, 0.7}}}, 2);
  for (Divergence d : kAllDivergences) CHECK(df_maximizer(DivergenceSpec(d), single).size() == 2);
}

TEST_CASE("D_f maximizer matches a reference scan") {
  Rng rng(73);
  for (int n = 0; n < 20; ++n) {
    const std::size_t k = gen::size_between(2, 3, rng);
    const auto inst = random_instance(gen::size_between(2, 5, rng), k, rng);
    const std::optional<TransitionMatrix> t = n % 2 ? std::optional(symmetric_noise(k, 0.2)) : std::nullopt;
    for (Divergence d : kAllDivergences) {
      const DivergenceSpec s(d);
      CAPTURE(s.name(), n);
      CHECK(df_maximizer(s, inst, t) == reference_argmax(s, inst, t));
    }
  }
}

TEST_CASE("argmax sets are closed under output relabeling") {
  Rng rng(74);
  for (int n = 0; n < 20; ++n) {
    const auto inst = random_balanced_binary_instance(gen::size_between(2, 6, rng), rng);
    for (Divergence d : kAllDivergences) {
      const auto set = df_maximizer(DivergenceSpec(d), inst);
      for (auto h : set) {
        for (auto& c : h.labels) c = 1 - c;
        CHECK(contains(set, h));
      }
    }
  }
}

TEST_CASE("TV maximizers contain the Bayes classifier") {
  Rng rng(75);
  for (int n = 0; n < 24; ++n) {
    const auto inst = random_balanced_binary_instance(gen::size_between(2, 6, rng), rng);
    CHECK(contains(df_maximizer(kTV, inst), bayes_optimal(inst)));
    const auto star = with_bayes_labels(inst);
    CHECK(contains(df_maximizer(kPearson, star), bayes_optimal(inst)));
  }
}

TEST_CASE("robustness verdicts") {
  const auto inst = two_atom();
  CHECK(robustness_verdict(kKL, inst, binary(0.2, 0.2)));
  Rng rng(76);
  for (int n = 0; n < 10; ++n) {
    const auto bin = random_balanced_binary_instance(gen::size_between(2, 6, rng), rng);
    for (Divergence d : kAllDivergences) CHECK(robustness_verdict(DivergenceSpec(d), bin, symmetric_noise(2, 0.0)));
    const double ep = rng.uniform(0.0, 0.6);
    CHECK(robustness_verdict(kTV, bin, binary(ep, rng.uniform(0.0, 0.95 - ep))));
    const auto three = random_instance(gen::size_between(2, 5, rng), 3, rng);
    CHECK(robustness_verdict(kTV, three, uniform_offdiagonal({0.1, 0.2, 0.05})));
  }
}

TEST_CASE("bias-corrected maximizers equal the clean ones") {
  Rng rng(77);
  for (int n = 0; n < 10; ++n) {
    const auto inst = random_instance(gen::size_between(2, 5, rng), 2, rng);
    for (Divergence d : kAllDivergences) {
      const DivergenceSpec s(d);
      CHECK(bias_corrected_maximizer(s, inst, binary(0.3, 0.1)) == df_maximizer(s, inst));
    }
  }
}

TEST_CASE("confident classifiers") {
  CHECK(is_confident(JointDistribution(Table{{0.4, 0.1}, {0.1, 0.4}})));
  CHECK(is_confident(JointDistribution(Table{{0.25, 0.25}, {0.25, 0.25}})));
  // Label 0 is over-represented in predictions 0 and 1 alike.
  CHECK_FALSE(is_confident(JointDistribution(Table{{0.2, 0.05, 0.05}, {0.2, 0.05, 0.05}, {0.0, 0.2, 0.2}})));
}

TEST_CASE("geometric grid") {
  const auto g = geometric_grid(1e-2, 1e2, 5);
  REQUIRE(g.size() == 5);
  CHECK(g.front() == 1e-2);
  CHECK(g.back() == 1e2);
  CHECK_THAT(g[2], WithinAbs(1.0, 1e-14));
  const auto s = standard_v_grid();
  CHECK(s.size() == 10000);
  CHECK(s.front() == 1e-6);
  CHECK(s.back() == 1e3);
}

TEST_CASE("conjugate oracle on documented points") {
  const auto grid = standard_v_grid();
  const auto tv = conjugate_oracle(kTV, 0.3, grid);
  CHECK(std::abs(tv.value - 0.3) <= tv.tau + 1e-15);
  const auto pearson = conjugate_oracle(kPearson, 2.0, grid);
  CHECK(std::abs(pearson.value - 3.0) <= pearson.tau);
  const auto kl = conjugate_oracle(kKL, 1.0, grid);
  CHECK(std::abs(kl.value - 1.0) <= kl.tau);
  CHECK(kl.tau <= 1e-3);
}

TEST_CASE("conjugate oracle brackets the conjugate") {
  const auto grid = standard_v_grid();
  for (Divergence d : kAllDivergences) {
    const DivergenceSpec s(d);
    for (double u : conjugate_test_points(s, 50)) {
      const auto o = conjugate_oracle(s, u, grid);
      CAPTURE(s.name(), u);
      CHECK(o.value <= s.conjugate(u) + 1e-12 * (1.0 + std::abs(o.value)));
      CHECK(s.conjugate(u) <= o.value + o.tau + 1e-12 * (1.0 + std::abs(o.value)));
      CHECK(o.tau <= 1e-3);
    }
  }
}

TEST_CASE("conjugate oracle reports an unbounded gap beyond the grid") {
  // KL maximizer e^(u-1) = e^19 lies far beyond v = 1e3.
  CHECK(std::isinf(conjugate_oracle(kKL, 20.0, standard_v_grid()).tau));
}

TEST_CASE("variational supremum oracle") {
  const auto grid = standard_v_grid();
  const JointDistribution j(Table{{0.4, 0.1}, {0.1, 0.4}});
  const auto tv = variational_sup_oracle(kTV, j, variational_grid(kTV, grid));
  CHECK(tv.value <= 0.3 + 1e-12);
  CHECK(0.3 <= tv.value + tv.tau + 1e-12);
  const JointDistribution independent(Table{{0.12, 0.28}, {0.18, 0.42}});
  for (Divergence d : kAllDivergences) {
    const DivergenceSpec s(d);
    const auto o = variational_sup_oracle(s, independent, variational_grid(s, grid));
    CHECK(o.value <= 1e-12);
    CHECK(0.0 <= o.value + o.tau + 1e-12);
  }
  CHECK_THROWS_AS(variational_sup_oracle(kKL, JointDistribution(Table{{0.5, 0.0}, {0.0, 0.5}}),
                                         variational_grid(kKL, grid)),
                  DomainError);
}

TEST_CASE("refining the grid never increases the error") {
  Rng rng(78);
  for (int n = 0; n < 20; ++n) {
    const auto j = gen::positive_joint(3, 3, rng);
    for (Divergence d : kAllDivergences) {
      const DivergenceSpec s(d);
      const double exact = divergence_closed_form(s, j);
      double prev = INFINITY;
      for (std::size_t points : {101, 201, 401, 801}) {
        // Each grid nests inside the next.
        const double err = exact - variational_sup_oracle(s, j, variational_grid(s, geometric_grid(1e-3, 1e3, points))).value;
        CAPTURE(s.name(), points);
        CHECK(err <= prev + 1e-14);
        prev = err;
      }
    }
  }
}

TEST_CASE("duality sandwich on random positive joints") {
  Rng rng(79);
  const auto grid = standard_v_grid();
  for (Divergence d : kAllDivergences) {
    const DivergenceSpec s(d);
    const auto g_grid = variational_grid(s, grid);
    for (int n = 0; n < 25; ++n) {
      const auto j = gen::positive_joint(gen::size_between(2, 4, rng), gen::size_between(2, 4, rng), rng);
      const auto o = variational_sup_oracle(s, j, g_grid);
      const double closed = divergence_closed_form(s, j);
      CAPTURE(s.name(), n);
      CHECK(o.value <= closed + 1e-9);
      CHECK(closed <= o.value + o.tau + 1e-12);
    }
  }
}
