#include "fdiv/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fdiv/decoupling.hpp"
#include "fdiv/experiment.hpp"
#include "fdiv/metrics_io.hpp"
#include "fdiv/trainer.hpp"

namespace fdivergence {

namespace {

constexpr double kIdentityTolerance = 1e-9;
constexpr double kGradientTolerance = 1e-4;
constexpr double kTauCeiling = 1e-3;
constexpr double kFloatSlack = 1e-12;
constexpr double kSlopeFloor = 1.8;
constexpr std::uint64_t kMasterSeed = 20240601;

Check make_check(std::string name, double measured, double tolerance, bool passed, std::string detail = {}) {
  return {std::move(name), passed, measured, tolerance, std::move(detail)};
}

std::vector<std::size_t> shuffled_classes(std::size_t k, Rng& rng) {
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

Dataset random_problem(std::size_t n, std::size_t d, std::size_t k, Rng& rng) {
  Table x(n, d);
  for (double& v : x.flat()) v = rng.normal();
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = i < k ? i : rng.uniform_index(k);
  return Dataset(std::move(x), std::move(y), k, FileSource{"<random>"});
}

}  // namespace

bool SuiteReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

nlohmann::json SuiteReport::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const Check& c : checks) {
    list.push_back({{"name", c.name},
                    {"passed", c.passed},
                    {"measured", json_number(c.measured)},
                    {"tolerance", json_number(c.tolerance)},
                    {"detail", c.detail}});
  }
  return {{"suite", suite}, {"passed", passed()}, {"checks", list}};
}

JointDistribution random_positive_joint(std::size_t rows, std::size_t cols, Rng& rng) {
  Table t(rows, cols);
  double s = 0.0;
  for (double& v : t.flat()) s += (v = 0.02 - std::log(rng.uniform(1e-6, 1.0)));
  for (double& v : t.flat()) v /= s;
  return JointDistribution(std::move(t));
}

std::vector<std::string> decoupling_families() {
  return {"binary", "uniform_k3", "uniform_k4", "uniform_k10", "sparse_k4", "sparse_k10"};
}

TransitionMatrix random_family_noise(const std::string& family, Rng& rng) {
  if (family == "binary") {
    const double total = rng.uniform(0.05, 0.95);
    const double share = rng.uniform(0.0, 1.0);
    return binary(total * share, total * (1.0 - share));
  }
  const auto k = static_cast<std::size_t>(std::stoul(family.substr(family.find('k') + 1)));
  if (family.rfind("uniform", 0) == 0) {
    std::vector<double> e(k);
    double s = 0.0;
    for (double& v : e) s += (v = rng.uniform(0.0, 1.0));
    const double total = rng.uniform(0.05, 0.95);
    for (double& v : e) v *= total / s;
    return uniform_offdiagonal(std::move(e));
  }
  if (family.rfind("sparse", 0) == 0) {
    const double flip = rng.uniform(0.1, 0.95);
    const auto order = shuffled_classes(k, rng);
    std::vector<SparsePair> pairs;
    for (std::size_t c = 0; c + 1 < k; c += 2) {
      const double e1 = rng.uniform(0.0, flip);
      pairs.push_back({std::min(order[c], order[c + 1]), std::max(order[c], order[c + 1]), e1, flip - e1});
    }
    std::sort(pairs.begin(), pairs.end(), [](const SparsePair& a, const SparsePair& b) { return a.i < b.i; });
    return sparse_pairs(std::move(pairs), k);
  }
  throw std::invalid_argument("unknown noise family " + family);
}

std::map<std::string, FamilyStats> decoupling_battery(std::size_t trials, std::uint64_t seed, Fault fault) {
  std::map<std::string, FamilyStats> out;
  const Rng root(seed);
  for (const std::string& family : decoupling_families()) {
    FamilyStats& st = out[family];
    for (Divergence d : kAllDivergences) {
      const DivergenceSpec spec(d);
      Rng rng = root.split(family, static_cast<std::uint64_t>(d));
      for (std::size_t trial = 0; trial < trials; ++trial) {
        const TransitionMatrix t = random_family_noise(family, rng);
        const std::size_t k = t.size();
        const JointDistribution clean = random_positive_joint(k, k, rng);
        const VariationalTable g = random_variational_table(spec, k, k, rng);
        DecouplingReport r = decoupling_check(spec, clean, t, g);
        if (fault == Fault::BiasSignFlip) {
          r.bias = -r.bias;
          r.residual = std::abs(r.noisy_difference - (r.shrink_factor * r.clean_difference + r.bias));
        }
        const JointDistribution noisy = corrupt_joint(clean, t);
        double corrected = bias_corrected_difference(spec, noisy, t, g);
        if (fault == Fault::BiasSignFlip) corrected = r.noisy_difference - r.bias;
        ++st.cases;
        st.max_residual = std::max(st.max_residual, r.residual);
        st.max_corrected_gap =
            std::max(st.max_corrected_gap, std::abs(corrected - r.shrink_factor * r.clean_difference));
        if (d == Divergence::TotalVariation) st.max_abs_tv_bias = std::max(st.max_abs_tv_bias, std::abs(r.bias));
      }
    }
  }
  return out;
}

ConjugateStats conjugate_battery(DivergenceSpec spec, std::size_t points) {
  ConjugateStats st;
  const std::vector<double> grid = standard_v_grid();
  for (double u : conjugate_test_points(spec, points)) {
    const OracleValue o = conjugate_oracle(spec, u, grid);
    const double exact = spec.conjugate(u);
    st.max_excess = std::max(st.max_excess, std::abs(o.value - exact) - o.tau);
    st.max_tau = std::max(st.max_tau, o.tau);
    st.max_above = std::max(st.max_above, o.value - exact);
    ++st.points;
  }
  return st;
}

SandwichStats duality_sandwich(DivergenceSpec spec, std::size_t joints, std::uint64_t seed) {
  SandwichStats st;
  st.max_oracle_above = -INFINITY;
  st.max_closed_excess = -INFINITY;
  Rng rng = Rng(seed).split("sandwich", static_cast<std::uint64_t>(spec.kind()));
  const std::vector<double> g_grid = variational_grid(spec, standard_v_grid());
  for (std::size_t n = 0; n < joints; ++n) {
    const std::size_t rows = 2 + rng.uniform_index(3);
    const std::size_t cols = 2 + rng.uniform_index(3);
    const JointDistribution joint = random_positive_joint(rows, cols, rng);
    const OracleValue o = variational_sup_oracle(spec, joint, g_grid);
    const double closed = divergence_closed_form(spec, joint);
    st.max_oracle_above = std::max(st.max_oracle_above, o.value - closed);
    st.max_closed_excess = std::max(st.max_closed_excess, closed - (o.value + o.tau));
    st.max_tau = std::max(st.max_tau, o.tau);
    ++st.joints;
  }
  return st;
}

double gradient_check(DivergenceSpec spec, std::size_t trials, std::uint64_t seed, bool bias_correction,
                      bool logit_ratio) {
  constexpr double h = 1e-5;
  Rng rng = Rng(seed).split("gradient", static_cast<std::uint64_t>(spec.kind()) * 4 + bias_correction * 2 +
                                            logit_ratio);
  double worst = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const Dataset data = random_problem(30, 3, 2, rng);
    SoftmaxLinearModel model(2, 3);
    std::vector<double> theta(model.num_parameters());
    for (double& v : theta) v = 0.5 * rng.normal();
    model.set_parameters(theta);
    TrainConfig cfg;
    cfg.divergence = spec;
    cfg.batch_size = 10;
    cfg.score_mode = logit_ratio ? ScoreMode::LogitRatio : ScoreMode::Probability;
    cfg.bias_correction = bias_correction;
    if (bias_correction) cfg.correction_noise = binary(0.2, 0.1);
    const Batches b = sample_batches(data.size(), cfg.batch_size, rng);
    const ObjectiveValue analytic = f_objective(model, data, b, cfg);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      std::vector<double> up = theta, down = theta;
      up[i] += h;
      down[i] -= h;
      SoftmaxLinearModel mu = model, md = model;
      mu.set_parameters(up);
      md.set_parameters(down);
      const double fd = (f_objective(mu, data, b, cfg).value - f_objective(md, data, b, cfg).value) / (2.0 * h);
      err = std::max(err, std::abs(analytic.gradient[i] - fd));
      scale = std::max(scale, std::abs(fd));
    }
    worst = std::max(worst, scale > 0.0 ? err / scale : err);
  }
  return worst;
}

double cross_entropy_gradient_check(std::size_t trials, std::uint64_t seed) {
  constexpr double h = 1e-5;
  Rng rng = Rng(seed).split("ce-gradient");
  double worst = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const Dataset data = random_problem(30, 3, 2, rng);
    SoftmaxLinearModel model(2, 3);
    std::vector<double> theta(model.num_parameters());
    for (double& v : theta) v = 0.5 * rng.normal();
    model.set_parameters(theta);
    const auto batch = rng.sample_without_replacement(data.size(), 10);
    const ObjectiveValue analytic = cross_entropy_objective(model, data, batch);
    double err = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      std::vector<double> up = theta, down = theta;
      up[i] += h;
      down[i] -= h;
      SoftmaxLinearModel mu = model, md = model;
      mu.set_parameters(up);
      md.set_parameters(down);
      const double fd =
          (cross_entropy_objective(mu, data, batch).value - cross_entropy_objective(md, data, batch).value) /
          (2.0 * h);
      err = std::max(err, std::abs(analytic.gradient[i] - fd));
      scale = std::max(scale, std::abs(fd));
    }
    worst = std::max(worst, scale > 0.0 ? err / scale : err);
  }
  return worst;
}

std::vector<JointDistribution> scaling_joint_family() {
  return {JointDistribution(Table{{0.4, 0.1}, {0.1, 0.4}}), JointDistribution(Table{{0.35, 0.15}, {0.05, 0.45}}),
          JointDistribution(Table{{0.3, 0.1}, {0.2, 0.4}}), JointDistribution(Table{{0.45, 0.2}, {0.05, 0.3}})};
}

SuiteReport verify_conjugates() {
  SuiteReport rep{"conjugates", {}};
  for (Divergence d : kAllDivergences) {
    const DivergenceSpec spec(d);
    const std::string n(spec.token());
    const ConjugateStats c = conjugate_battery(spec, 200);
    rep.checks.push_back(make_check("conjugate_gap_within_tau/" + n, c.max_excess, kFloatSlack,
                                    c.max_excess <= kFloatSlack, "max |oracle - f*| - tau over 200 points"));
    rep.checks.push_back(make_check("conjugate_tau/" + n, c.max_tau, kTauCeiling, c.max_tau <= kTauCeiling));
    rep.checks.push_back(make_check("conjugate_lower_bound/" + n, c.max_above, kFloatSlack, c.max_above <= kFloatSlack));
    const SandwichStats s = duality_sandwich(spec, 100, kMasterSeed);
    rep.checks.push_back(make_check("sandwich_oracle_below/" + n, s.max_oracle_above, kIdentityTolerance,
                                    s.max_oracle_above <= kIdentityTolerance));
    rep.checks.push_back(make_check("sandwich_closed_within_tau/" + n, s.max_closed_excess, kFloatSlack,
                                    s.max_closed_excess <= kFloatSlack));
  }
  return rep;
}

SuiteReport verify_decoupling(Fault fault) {
  SuiteReport rep{"decoupling", {}};
  const auto stats = decoupling_battery(100, kMasterSeed, fault);
  for (const auto& [family, st] : stats) {
    rep.checks.push_back(make_check("identity_residual/" + family, st.max_residual, kIdentityTolerance,
                                    st.max_residual <= kIdentityTolerance,
                                    std::to_string(st.cases) + " (divergence, joint, g) cases"));
    rep.checks.push_back(make_check("corrected_equals_shrunk_clean/" + family, st.max_corrected_gap,
                                    kIdentityTolerance, st.max_corrected_gap <= kIdentityTolerance));
    if (family.rfind("sparse", 0) != 0) {
      rep.checks.push_back(
          make_check("tv_bias_zero/" + family, st.max_abs_tv_bias, 0.0, st.max_abs_tv_bias == 0.0));
    }
  }
  const std::vector<double> rates = {0.4, 0.45, 0.475};
  for (Divergence d : kAllDivergences) {
    if (d == Divergence::TotalVariation || d == Divergence::Jeffrey) continue;
    const DivergenceSpec spec(d);
    double lowest = INFINITY;
    for (const JointDistribution& j : scaling_joint_family()) {
      const auto pts = bias_scaling_probe(spec, j, rates);
      lowest = std::min(lowest, loglog_slope(pts));
    }
    rep.checks.push_back(make_check("bias_scaling_slope/" + std::string(spec.token()), lowest, kSlopeFloor,
                                    lowest >= kSlopeFloor, "min log-log slope over the joint family"));
  }
  return rep;
}

SuiteReport verify_oracle() {
  SuiteReport rep{"oracle", {}};
  const Rng root(kMasterSeed);
  const DivergenceSpec tv(Divergence::TotalVariation);
  const DivergenceSpec pearson(Divergence::PearsonChi2);

  std::size_t t1 = 0, t2 = 0;
  const std::size_t n_bayes = 24;
  Rng rng = root.split("bayes");
  for (std::size_t n = 0; n < n_bayes; ++n) {
    const FiniteInstance inst = random_balanced_binary_instance(2 + n % 5, rng);
    const TabularClassifier bayes = bayes_optimal(inst);
    const auto tv_set = df_maximizer(tv, inst);
    t1 += std::binary_search(tv_set.begin(), tv_set.end(), bayes);
    const FiniteInstance star = with_bayes_labels(inst);
    const auto ps_set = df_maximizer(pearson, star);
    t2 += std::binary_search(ps_set.begin(), ps_set.end(), bayes);
  }
  rep.checks.push_back(make_check("tv_argmax_contains_bayes", static_cast<double>(t1), n_bayes, t1 == n_bayes,
                                  std::to_string(t1) + "/" + std::to_string(n_bayes) + " instances"));
  rep.checks.push_back(make_check("pearson_bayes_labels_argmax_contains_bayes", static_cast<double>(t2), n_bayes,
                                  t2 == n_bayes, std::to_string(t2) + "/" + std::to_string(n_bayes) + " instances"));

  struct Family {
    std::string name;
    std::size_t instances;
  };
  const std::vector<Family> families = {{"binary_balanced", 12}, {"binary_unbalanced", 12}, {"uniform_k3", 8},
                                        {"uniform_k4", 8},       {"sparse_k3", 8},          {"sparse_k4", 8}};
  for (const Family& f : families) {
    Rng frng = root.split("robust/" + f.name);
    std::size_t robust = 0, total = 0;
    for (std::size_t n = 0; n < f.instances; ++n) {
      std::optional<FiniteInstance> inst;
      std::vector<TransitionMatrix> noises;
      if (f.name == "binary_balanced" || f.name == "binary_unbalanced") {
        inst = f.name == "binary_balanced" ? random_balanced_binary_instance(2 + n % 5, frng)
                                           : random_instance(2 + n % 5, 2, frng);
        for (auto [ep, em] : {std::pair{0.1, 0.1}, {0.2, 0.1}, {0.3, 0.2}, {0.45, 0.45}}) noises.push_back(binary(ep, em));
      } else {
        const std::size_t k = f.name.back() == '3' ? 3 : 4;
        inst = random_instance(k == 3 ? 5 : 4, k, frng);
        if (f.name.rfind("uniform", 0) == 0) {
          noises.push_back(random_family_noise("uniform_k" + std::to_string(k), frng));
        } else {
          const double flip = frng.uniform(0.1, 0.9);
          const double e1 = frng.uniform(0.0, flip);
          if (k == 3) {
            noises.push_back(sparse_pairs({{0, 1, e1, flip - e1}}, 3));
          } else {
            noises.push_back(sparse_pairs({{0, 2, e1, flip - e1}, {1, 3, flip - e1, e1}}, 4));
          }
        }
      }
      for (const TransitionMatrix& t : noises) {
        ++total;
        robust += robustness_verdict(tv, *inst, t);
      }
    }
    rep.checks.push_back(make_check("tv_robust/" + f.name, static_cast<double>(robust), static_cast<double>(total),
                                    robust == total,
                                    std::to_string(robust) + "/" + std::to_string(total) + " (instance, noise) pairs"));
  }

  // Bias-corrected noisy maximizers coincide with clean maximizers.
  std::size_t agree = 0, cases = 0;
  Rng crng = root.split("corrected-argmax");
  for (std::size_t n = 0; n < 6; ++n) {
    const FiniteInstance bin = random_balanced_binary_instance(2 + n % 5, crng);
    const FiniteInstance multi = random_instance(4, 4, crng);
    const TransitionMatrix tb = binary(0.3, 0.15);
    const TransitionMatrix tu = random_family_noise("uniform_k4", crng);
    const TransitionMatrix ts = random_family_noise("sparse_k4", crng);
    for (Divergence d : kAllDivergences) {
      const DivergenceSpec spec(d);
      for (const auto& [inst, t] : {std::pair{&bin, &tb}, {&multi, &tu}, {&multi, &ts}}) {
        ++cases;
        agree += bias_corrected_maximizer(spec, *inst, *t) == df_maximizer(spec, *inst);
      }
    }
  }
  rep.checks.push_back(make_check("corrected_argmax_equals_clean", static_cast<double>(agree),
                                  static_cast<double>(cases), agree == cases,
                                  std::to_string(agree) + "/" + std::to_string(cases) + " cases"));
  return rep;
}

SuiteReport verify_gradients() {
  SuiteReport rep{"gradients", {}};
  for (Divergence d : kAllDivergences) {
    const DivergenceSpec spec(d);
    const std::string n(spec.token());
    const double plain = gradient_check(spec, 5, kMasterSeed, false, false);
    rep.checks.push_back(make_check("gradient/" + n, plain, kGradientTolerance, plain <= kGradientTolerance));
    const double corrected = gradient_check(spec, 5, kMasterSeed, true, false);
    rep.checks.push_back(
        make_check("gradient_bias_corrected/" + n, corrected, kGradientTolerance, corrected <= kGradientTolerance));
    const double logit = gradient_check(spec, 5, kMasterSeed, false, true);
    rep.checks.push_back(
        make_check("gradient_logit_ratio/" + n, logit, kGradientTolerance, logit <= kGradientTolerance));
  }
  const double ce = cross_entropy_gradient_check(5, kMasterSeed);
  rep.checks.push_back(make_check("gradient/cross_entropy", ce, kGradientTolerance, ce <= kGradientTolerance));
  return rep;
}

}  // namespace fdivergence
