#include "fdiv/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "fdiv/errors.hpp"
#include "fdiv/rng.hpp"

namespace fdivergence {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) {
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

GaussianMixtureSpec GaussianMixtureSpec::standard(std::size_t num_samples, std::uint64_t seed) {
  GaussianMixtureSpec s;
  s.num_classes = 2;
  s.dim = 2;
  s.means = {{1.5, 0.0}, {-1.5, 0.0}};
  s.variance = 1.0;
  s.priors = {0.5, 0.5};
  s.num_samples = num_samples;
  s.seed = seed;
  return s;
}

void GaussianMixtureSpec::validate() const {
  if (num_classes < 2) throw ConstraintError("mixture: need at least two classes");
  if (dim < 1) throw ConstraintError("mixture: dimension must be positive");
  if (num_samples < 1) throw ConstraintError("mixture: sample count must be positive");
  if (!(variance > 0.0) || !std::isfinite(variance)) throw ConstraintError("mixture: variance must be positive");
  if (means.size() != num_classes) throw ConstraintError("mixture: need one mean per class");
  for (const auto& m : means)
    if (m.size() != dim) throw ConstraintError("mixture: mean of wrong dimension");
  if (priors.size() != num_classes) throw ConstraintError("mixture: need one prior per class");
  double s = 0.0;
  for (double p : priors) {
    if (!(p >= 0.0)) throw ConstraintError("mixture: negative prior");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConstraintError("mixture: priors sum to " + std::to_string(s));
}

Dataset::Dataset(Table features, std::vector<std::size_t> labels, std::size_t num_classes, Provenance provenance)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      provenance_(std::move(provenance)) {
  if (labels_.empty()) throw ConstraintError("dataset: no samples");
  if (features_.rows() != labels_.size()) throw ConstraintError("dataset: feature and label counts differ");
  for (std::size_t n = 0; n < labels_.size(); ++n) {
    if (labels_[n] >= num_classes_) {
      throw ConstraintError("dataset: label " + std::to_string(labels_[n]) + " at row " + std::to_string(n) +
                            " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
  for (double v : features_.flat())
    if (std::isnan(v)) throw ConstraintError("dataset: NaN feature");
}

Dataset Dataset::with_labels(std::vector<std::size_t> labels) const {
  return Dataset(features_, std::move(labels), num_classes_, provenance_);
}

std::pair<Dataset, Dataset> Dataset::split(std::size_t count) const {
  if (count == 0 || count >= size()) throw std::invalid_argument("dataset split: both parts must be non-empty");
  auto part = [&](std::size_t from, std::size_t to) {
    Table f(to - from, dim());
    for (std::size_t n = from; n < to; ++n) std::copy_n(x(n).begin(), dim(), f.row(n - from).begin());
    return Dataset(std::move(f), std::vector<std::size_t>(labels_.begin() + static_cast<std::ptrdiff_t>(from),
                                                         labels_.begin() + static_cast<std::ptrdiff_t>(to)),
                   num_classes_, provenance_);
  };
  return {part(0, count), part(count, size())};
}

GeneratedData generate_gaussian_mixture(const GaussianMixtureSpec& spec) {
  spec.validate();
  Rng root(spec.seed);
  Rng label_rng = root.split("mixture-labels");
  Rng noise_rng = root.split("mixture-features");
  const double sigma = std::sqrt(spec.variance);
  Table features(spec.num_samples, spec.dim);
  std::vector<std::size_t> labels(spec.num_samples);
  for (std::size_t n = 0; n < spec.num_samples; ++n) {
    const std::size_t k = label_rng.categorical(spec.priors);
    labels[n] = k;
    for (std::size_t d = 0; d < spec.dim; ++d) features(n, d) = spec.means[k][d] + sigma * noise_rng.normal();
  }
  Posterior posterior = [spec](std::span<const double> x) {
    if (x.size() != spec.dim) throw std::invalid_argument("posterior: dimension mismatch");
    std::vector<double> logits(spec.num_classes);
    for (std::size_t k = 0; k < spec.num_classes; ++k) {
      double d2 = 0.0;
      for (std::size_t d = 0; d < spec.dim; ++d) d2 += (x[d] - spec.means[k][d]) * (x[d] - spec.means[k][d]);
      logits[k] = (spec.priors[k] > 0.0 ? std::log(spec.priors[k]) : -INFINITY) - d2 / (2.0 * spec.variance);
    }
    const double m = *std::max_element(logits.begin(), logits.end());
    double s = 0.0;
    for (double& l : logits) s += (l = std::exp(l - m));
    for (double& l : logits) l /= s;
    return logits;
  };
  return {Dataset(std::move(features), std::move(labels), spec.num_classes, SyntheticSource{spec}),
          std::move(posterior)};
}

Dataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty file");
  const std::vector<std::string> header = split_fields(line);
  if (header.size() < 2) throw ParseError(path.string() + ": need at least one feature and one label column");
  std::size_t label_idx = header.size() - 1;
  if (label_column) {
    const auto it = std::find(header.begin(), header.end(), *label_column);
    if (it == header.end()) throw ParseError(path.string() + ": no column named '" + *label_column + "'");
    label_idx = static_cast<std::size_t>(it - header.begin());
  }
  std::vector<double> values;
  std::vector<std::size_t> labels;
  std::size_t line_no = 1;  // file line, header is line 1
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = split_fields(line);
    const std::string where = path.string() + ": line " + std::to_string(line_no);
    if (fields.size() != header.size()) {
      throw ParseError(where + " has " + std::to_string(fields.size()) + " fields, expected " +
                       std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (c == label_idx) {
        std::size_t used = 0;
        long long v = 0;
        try {
          v = std::stoll(fields[c], &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used == 0 || used != fields[c].size() || v < 0) {
          throw ParseError(where + ": label '" + fields[c] + "' is not a non-negative integer");
        }
        labels.push_back(static_cast<std::size_t>(v));
        continue;
      }
      double v = 0.0;
      std::size_t used = 0;
      try {
        v = std::stod(fields[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != fields[c].size()) {
        throw ParseError(where + ": feature '" + header[c] + "' value '" + fields[c] + "' is not numeric");
      }
      if (!std::isfinite(v)) throw ParseError(where + ": feature '" + header[c] + "' is not finite");
      values.push_back(v);
    }
  }
  if (labels.empty()) throw ParseError(path.string() + ": no data rows");
  const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::set<std::size_t> present(labels.begin(), labels.end());
  std::string missing;
  for (std::size_t c = 0; c < k; ++c)
    if (!present.count(c)) missing += (missing.empty() ? "" : ", ") + std::to_string(c);
  if (!missing.empty()) throw ParseError(path.string() + ": labels are not contiguous; missing classes " + missing);
  Table features = Table::from_flat(labels.size(), header.size() - 1, std::move(values));
  return Dataset(std::move(features), std::move(labels), k, FileSource{path});
}

nlohmann::json to_json(const GaussianMixtureSpec& spec) {
  return {{"num_classes", spec.num_classes}, {"dim", spec.dim},         {"means", spec.means},
          {"variance", spec.variance},       {"priors", spec.priors},   {"num_samples", spec.num_samples},
          {"seed", spec.seed}};
}

GaussianMixtureSpec mixture_from_json(const nlohmann::json& j) {
  GaussianMixtureSpec s = GaussianMixtureSpec::standard(j.value("num_samples", std::size_t{2000}),
                                                        j.value("seed", std::uint64_t{0}));
  s.num_classes = j.value("num_classes", s.num_classes);
  s.dim = j.value("dim", s.dim);
  if (j.contains("means")) s.means = j.at("means").get<std::vector<std::vector<double>>>();
  s.variance = j.value("variance", s.variance);
  if (j.contains("priors")) s.priors = j.at("priors").get<std::vector<double>>();
  s.validate();
  return s;
}

}  // namespace fdivergence
