#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "fdiv/distribution.hpp"
#include "fdiv/rng.hpp"
#include "fdiv/table.hpp"

namespace fdivergence {

// Class order for binary problems: +1 -> index 0, -1 -> index 1.

struct BinaryNoise {
  double e_plus;   // P(noisy = -1 | clean = +1)
  double e_minus;  // P(noisy = +1 | clean = -1)
};

struct UniformOffDiagonalNoise {
  std::vector<double> e;  // e[j] = T[i][j] for every i != j
};

struct SparsePair {
  std::size_t i;  // i < j
  std::size_t j;
  double e_p1;  // T[i][j]
  double e_p2;  // T[j][i]
};

struct SparsePairsNoise {
  std::vector<SparsePair> pairs;
};

struct GeneralNoise {};

using NoiseStructure = std::variant<BinaryNoise, UniformOffDiagonalNoise, SparsePairsNoise, GeneralNoise>;

/// Row-stochastic label-noise model, T(i, j) = P(noisy = j | clean = i),
/// tagged with the structure it was built from.
class TransitionMatrix {
 public:
  /// Validates row-stochasticity (1e-12) and entry range; structure is
  /// taken on trust, so prefer the named constructors below.
  TransitionMatrix(Table matrix, NoiseStructure structure);

  std::size_t size() const noexcept { return matrix_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return matrix_(i, j); }
  std::span<const double> row(std::size_t i) const { return matrix_.row(i); }
  const Table& matrix() const noexcept { return matrix_; }
  const NoiseStructure& structure() const noexcept { return structure_; }
  std::string structure_name() const;

  bool is_identity() const;

 private:
  Table matrix_;
  NoiseStructure structure_;
};

TransitionMatrix binary(double e_plus, double e_minus);
TransitionMatrix uniform_offdiagonal(std::vector<double> e);
/// Uniform off-diagonal noise that flips a label with total probability
/// `rate`, spread evenly over the other K-1 classes.
TransitionMatrix symmetric_noise(std::size_t num_classes, double rate);
/// Pairs must be disjoint with i < j < K and e_p1 + e_p2 < 1. Classes not
/// covered by any pair keep identity rows.
TransitionMatrix sparse_pairs(std::vector<SparsePair> pairs, std::size_t num_classes);
/// Random disjoint pairing of all classes (K even), each pair drawing its
/// (T[j][i], T[i][j]) rates from `rate_options`.
TransitionMatrix random_sparse_pairs(std::size_t num_classes,
                                     std::span<const std::pair<double, double>> rate_options, Rng& rng);

/// General-structure matrix from a numeric table. Rows within 1e-6 of
/// summing to one are accepted as-is; rows within 2e-2 are renormalized
/// with a warning on stderr; anything else is rejected naming the row.
TransitionMatrix general_matrix(Table matrix);
/// CSV (K lines of K comma-separated values) or JSON (array of rows, or an
/// object with a "matrix" field), dispatched on extension.
TransitionMatrix from_file(const std::filesystem::path& path);
/// One of the bundled matrices, e.g. "cifar10_sparse_high".
TransitionMatrix bundled_matrix(const std::string& name);
std::vector<std::string> bundled_matrix_names();

/// Recognizes uniform off-diagonal or sparse-pair structure in a general
/// matrix (entries compared to 1e-12) and retags it; otherwise returns
/// the input unchanged.
TransitionMatrix infer_structure(const TransitionMatrix& t);

/// Row-stochastic product: noise `first` followed by noise `second`.
TransitionMatrix compose(const TransitionMatrix& first, const TransitionMatrix& second);

/// Resamples each label from its row of T. Deterministic for a given seed.
std::vector<std::size_t> apply_noise(std::span<const std::size_t> labels, const TransitionMatrix& t,
                                     std::uint64_t seed);

/// Noisy joint P~(i, j) = sum_k P(i, k) T(k, j).
JointDistribution corrupt_joint(const JointDistribution& clean, const TransitionMatrix& t);

/// Parses a noise description:
///   none | binary:E_PLUS,E_MINUS | symmetric:RATE | uniform:E1,...,EK |
///   sparse:I-J:EP1:EP2[,I-J:EP1:EP2...] | file:PATH | bundled:NAME
/// `num_classes` is used by symmetric/sparse/none.
TransitionMatrix parse_noise_spec(const std::string& text, std::size_t num_classes);

nlohmann::json to_json(const TransitionMatrix& t);

}  // namespace fdivergence
