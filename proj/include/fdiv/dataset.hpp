#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fdiv/table.hpp"

namespace fdivergence {

struct GaussianMixtureSpec {
  std::size_t num_classes = 2;
  std::size_t dim = 2;
  std::vector<std::vector<double>> means;  // num_classes x dim
  double variance = 1.0;                   // shared isotropic sigma^2
  std::vector<double> priors;              // sums to one
  std::size_t num_samples = 2000;
  std::uint64_t seed = 0;

  /// Two balanced classes at +-(1.5, 0), unit variance.
  static GaussianMixtureSpec standard(std::size_t num_samples, std::uint64_t seed);
  /// Throws ConstraintError on inconsistent sizes, priors or variance.
  void validate() const;
};

struct SyntheticSource {
  GaussianMixtureSpec spec;
};
struct FileSource {
  std::filesystem::path path;
};
using Provenance = std::variant<SyntheticSource, FileSource>;

/// N x d features with labels in [0, K). No NaN features, N >= 1.
class Dataset {
 public:
  Dataset(Table features, std::vector<std::size_t> labels, std::size_t num_classes, Provenance provenance);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t dim() const noexcept { return features_.cols(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::span<const double> x(std::size_t n) const { return features_.row(n); }
  std::size_t y(std::size_t n) const { return labels_[n]; }
  const Table& features() const noexcept { return features_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  const Provenance& provenance() const noexcept { return provenance_; }

  /// Same features, new labels (e.g. after noise).
  Dataset with_labels(std::vector<std::size_t> labels) const;
  /// First `count` rows and the remainder, in order.
  std::pair<Dataset, Dataset> split(std::size_t count) const;

 private:
  Table features_;
  std::vector<std::size_t> labels_;
  std::size_t num_classes_;
  Provenance provenance_;
};

/// P(Y = . | x) for the mixture: softmax of log prior - |x - mu|^2 / 2 sigma^2.
using Posterior = std::function<std::vector<double>(std::span<const double>)>;

struct GeneratedData {
  Dataset dataset;
  Posterior posterior;
};

GeneratedData generate_gaussian_mixture(const GaussianMixtureSpec& spec);

/// Header row, numeric features, integer labels. The label column is the
/// last one unless `label_column` names another.
Dataset load_csv(const std::filesystem::path& path, const std::optional<std::string>& label_column = std::nullopt);

nlohmann::json to_json(const GaussianMixtureSpec& spec);
GaussianMixtureSpec mixture_from_json(const nlohmann::json& j);

}  // namespace fdivergence
