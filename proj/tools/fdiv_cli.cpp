// fdiv: catalog, verification suites, training runs, noise sweeps and
// decoupling reports for variational f-divergence learning with noisy labels.
//
// Exit codes: 0 success, 1 verification failure, 2 config error,
// 3 runtime numeric failure.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fdiv/errors.hpp"
#include "fdiv/experiment.hpp"
#include "fdiv/metrics_io.hpp"
#include "fdiv/verify.hpp"

namespace fd = fdivergence;
namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerify = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct TrainFlags {
  std::string config_path;
  std::string divergence;
  std::string noise;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  double lr_decay = 0.0;
  std::size_t lr_decay_every = 0;
  std::uint64_t seed = 0;
  bool bias_correction = false;
  std::string score_mode;
  std::string objective;
  std::string data;
  std::string label_column;
  std::size_t samples = 0;
  double test_fraction = 0.0;
  std::string output_dir;
  std::vector<CLI::Option*> opts;
};

CLI::Option* find(const TrainFlags& f, const std::string& name) {
  for (CLI::Option* o : f.opts)
    if (o->check_lname(name)) return o;
  return nullptr;
}

bool given(const TrainFlags& f, const std::string& name) {
  const CLI::Option* o = find(f, name);
  return o && o->count() > 0;
}

void add_train_flags(CLI::App* app, TrainFlags& f) {
  f.opts = {
      app->add_option("--config", f.config_path, "JSON experiment config (flags override it)"),
      app->add_option("--divergence,-d", f.divergence, "Divergence token (" + fd::divergence_tokens() + ")"),
      app->add_option("--noise", f.noise,
                      "none | binary:E+,E- | symmetric:R | uniform:E1,..,EK | sparse:I-J:EP1:EP2,... | "
                      "file:PATH | bundled:NAME"),
      app->add_option("--epochs", f.epochs, "Training epochs"),
      app->add_option("--batch-size", f.batch_size, "Mini-batch size B (>= 2)"),
      app->add_option("--lr", f.lr, "Initial learning rate"),
      app->add_option("--lr-decay", f.lr_decay, "Multiplicative learning-rate decay"),
      app->add_option("--lr-decay-every", f.lr_decay_every, "Epochs between decays (0 = never)"),
      app->add_option("--seed", f.seed, "Run seed (data, split, noise, init, batches)"),
      app->add_flag("--bias-correction", f.bias_correction, "Subtract the noise bias term from the objective"),
      app->add_option("--score-mode", f.score_mode, "probability | logit_ratio"),
      app->add_option("--objective", f.objective, "f_divergence | cross_entropy"),
      app->add_option("--data", f.data, "CSV dataset (header row; label column last by default)"),
      app->add_option("--label-column", f.label_column, "Name of the CSV label column"),
      app->add_option("--samples", f.samples, "Synthetic sample count (train + test)"),
      app->add_option("--test-fraction", f.test_fraction, "Held-out clean test fraction in (0, 1)"),
      app->add_option("--output-dir", f.output_dir, "Directory for output files (default: $FDIV_OUTPUT_DIR)"),
  };
}

fd::ExperimentConfig resolve_config(const TrainFlags& f) {
  fd::ExperimentConfig c;
  if (given(f, "config")) {
    std::ifstream in(f.config_path);
    if (!in) throw fd::ParseError("cannot open config " + f.config_path);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw fd::ParseError(f.config_path + ": " + e.what());
    }
    c = fd::experiment_from_json(j);
  }
  if (given(f, "divergence")) c.train.divergence = fd::parse_divergence(f.divergence);
  if (given(f, "noise")) c.noise = f.noise;
  if (given(f, "epochs")) c.train.epochs = f.epochs;
  if (given(f, "batch-size")) c.train.batch_size = f.batch_size;
  if (given(f, "lr")) c.train.learning_rate.initial = f.lr;
  if (given(f, "lr-decay")) c.train.learning_rate.decay = f.lr_decay;
  if (given(f, "lr-decay-every")) c.train.learning_rate.decay_every = f.lr_decay_every;
  if (given(f, "seed")) c.train.seed = f.seed;
  if (f.bias_correction) c.train.bias_correction = true;
  if (given(f, "score-mode")) c.train.score_mode = fd::parse_score_mode(f.score_mode);
  if (given(f, "objective")) c.train.objective = fd::parse_objective(f.objective);
  if (given(f, "data")) c.csv_path = f.data;
  if (given(f, "label-column")) c.label_column = f.label_column;
  if (given(f, "samples")) c.synthetic.num_samples = f.samples;
  if (given(f, "test-fraction")) c.test_fraction = f.test_fraction;
  if (given(f, "output-dir")) {
    c.output_dir = f.output_dir;
  } else if (!c.output_dir) {
    if (const char* env = std::getenv("FDIV_OUTPUT_DIR"); env && *env) c.output_dir = env;
  }
  return c;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw std::runtime_error("cannot write " + path.string());
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw fd::ParseError("not a number: '" + item + "'");
    }
  }
  return out;
}

std::vector<std::string> parse_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int cmd_catalog(bool json) {
  if (json) {
    std::cout << fd::catalog_json().dump(2) << "\n";
  } else {
    std::cout << fd::catalog_text();
  }
  return kExitOk;
}

int cmd_verify(const std::string& suite, const std::string& fault, const std::string& report_path) {
  const fd::Fault f = fault == "bias-sign" ? fd::Fault::BiasSignFlip : fd::Fault::None;
  if (!fault.empty() && fault != "bias-sign") throw std::invalid_argument("unknown fault '" + fault + "'");
  std::vector<fd::SuiteReport> reports;
  if (suite == "conjugates" || suite == "all") reports.push_back(fd::verify_conjugates());
  if (suite == "decoupling" || suite == "all") reports.push_back(fd::verify_decoupling(f));
  if (suite == "oracle" || suite == "all") reports.push_back(fd::verify_oracle());
  if (suite == "gradients" || suite == "all") reports.push_back(fd::verify_gradients());
  nlohmann::json out = {{"suites", nlohmann::json::array()}};
  bool ok = true;
  for (const auto& r : reports) {
    out["suites"].push_back(r.to_json());
    ok = ok && r.passed();
    for (const auto& c : r.checks) {
      std::cerr << (c.passed ? "PASS " : "FAIL ") << r.suite << ": " << c.name << " measured=" << fd::format_double(c.measured)
                << " tol=" << fd::format_double(c.tolerance) << (c.detail.empty() ? "" : " (" + c.detail + ")")
                << "\n";
    }
  }
  out["passed"] = ok;
  const std::string text = fd::with_metadata(out).dump(2) + "\n";
  if (!report_path.empty()) write_file(report_path, text);
  std::cout << text;
  return ok ? kExitOk : kExitVerify;
}

int cmd_train(const TrainFlags& flags) {
  const fd::ExperimentConfig cfg = resolve_config(flags);
  cfg.validate();
  const fd::TrainOutcome o = fd::run_train(cfg);
  const std::string csv = fd::metrics_to_csv({o.metrics});
  std::cout << csv;
  if (cfg.output_dir) {
    write_file(*cfg.output_dir / "metrics.csv", csv);
    write_file(*cfg.output_dir / "history.json", fd::with_metadata(o.document).dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_sweep(const TrainFlags& flags, const std::string& rates, const std::string& divergences,
              const std::string& seeds, const std::string& family, std::size_t threads) {
  fd::SweepRequest req;
  req.base = resolve_config(flags);
  req.rates = parse_doubles(rates);
  req.divergences = parse_list(divergences);
  for (double s : parse_doubles(seeds)) req.seeds.push_back(static_cast<std::uint64_t>(s));
  req.noise_family = family;
  req.threads = threads;
  if (req.rates.empty() || req.divergences.empty() || req.seeds.empty()) {
    throw fd::ConstraintError("sweep needs at least one rate, divergence and seed");
  }
  // Validate every cell's noise before any compute.
  for (double r : req.rates) {
    std::ostringstream n;
    n.precision(17);
    if (family == "binary") {
      n << "binary:" << r << "," << r;
    } else {
      n << "symmetric:" << r;
    }
    fd::ExperimentConfig probe = req.base;
    probe.noise = n.str();
    probe.validate();
  }
  const auto rows = fd::run_sweep(req);
  const std::string csv = fd::metrics_to_csv(fd::sweep_records(rows));
  std::cout << csv;
  if (req.base.output_dir) {
    write_file(*req.base.output_dir / "sweep.csv", csv);
    write_file(*req.base.output_dir / "sweep.json", fd::with_metadata({{"config", fd::to_json(req)}}).dump(2) + "\n");
  }
  return kExitOk;
}

int cmd_decouple(const std::string& joint_path, const std::string& noise, const std::string& divergence,
                 const std::string& g_source, std::uint64_t seed) {
  std::ifstream in(joint_path);
  if (!in) throw fd::ParseError("cannot open joint " + joint_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw fd::ParseError(joint_path + ": " + e.what());
  }
  const fd::JointDistribution joint = fd::joint_from_json(j);
  const fd::DivergenceSpec spec = fd::parse_divergence(divergence);
  const fd::TransitionMatrix t = fd::parse_noise_spec(noise, joint.cols());
  nlohmann::json report = fd::decouple(spec, joint, t, fd::parse_g_source(g_source), seed);
  report["config"] = {{"joint", joint_path}, {"noise", noise}, {"divergence", divergence},
                      {"g_source", g_source}, {"seed", seed}};
  std::cout << fd::with_metadata(report).dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational f-divergence learning with noisy labels"};
  app.require_subcommand(1);

  bool catalog_json = false;
  auto* catalog = app.add_subcommand("catalog", "List the supported divergences");
  catalog->add_flag("--json", catalog_json, "Machine-readable output");

  std::string suite = "all", fault, report_path;
  auto* verify = app.add_subcommand("verify", "Run deterministic verification suites");
  verify->add_option("suite", suite, "conjugates | decoupling | oracle | gradients | all")
      ->check(CLI::IsMember({"conjugates", "decoupling", "oracle", "gradients", "all"}));
  verify->add_option("--report", report_path, "Also write the JSON report here");
  verify->add_option("--inject-fault", fault)->group("");  // mutation testing only

  TrainFlags train_flags;
  auto* train = app.add_subcommand("train", "Train one model on noisy labels and evaluate on clean labels");
  add_train_flags(train, train_flags);

  TrainFlags sweep_flags;
  std::string rates = "0,0.1,0.2,0.3,0.4", divergences = "tv", seeds = "1,2,3,4,5", family = "symmetric";
  std::size_t threads = 0;
  auto* sweep = app.add_subcommand("sweep-noise", "Train across noise rates, divergences and seeds");
  add_train_flags(sweep, sweep_flags);
  sweep->add_option("--rates", rates, "Comma-separated noise rates");
  sweep->add_option("--divergences", divergences, "Comma-separated divergence tokens; 'ce' is cross-entropy");
  sweep->add_option("--seeds", seeds, "Comma-separated seeds");
  sweep->add_option("--noise-family", family, "symmetric | binary");
  sweep->add_option("--threads", threads, "Worker threads (0 = all cores)");

  std::string joint_path, noise = "none", divergence = "tv", g_source = "optimal_clean";
  std::uint64_t decouple_seed = 0;
  auto* decouple = app.add_subcommand("decouple", "Report the decoupling identity for a joint and a noise model");
  decouple->add_option("--joint", joint_path, "Joint distribution JSON")->required();
  decouple->add_option("--noise", noise, "Noise spec (as for train)");
  decouple->add_option("--divergence,-d", divergence, "Divergence token");
  decouple->add_option("--g-source", g_source, "optimal_clean | optimal_noisy | random");
  decouple->add_option("--seed", decouple_seed, "Seed for --g-source random");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*catalog) return cmd_catalog(catalog_json);
    if (*verify) return cmd_verify(suite, fault, report_path);
    if (*train) return cmd_train(train_flags);
    if (*sweep) return cmd_sweep(sweep_flags, rates, divergences, seeds, family, threads);
    if (*decouple) return cmd_decouple(joint_path, noise, divergence, g_source, decouple_seed);
  } catch (const fd::DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fd::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::length_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitOk;
}
