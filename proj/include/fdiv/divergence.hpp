#pragma once

#include <array>
#include <string>
#include <string_view>

namespace fdivergence {

enum class Divergence {
  TotalVariation,
  JensenShannon,
  SquaredHellinger,
  PearsonChi2,
  NeymanChi2,
  KL,
  ReverseKL,
  Jeffrey,
};

inline constexpr std::array<Divergence, 8> kAllDivergences = {
    Divergence::TotalVariation, Divergence::JensenShannon, Divergence::SquaredHellinger,
    Divergence::PearsonChi2,    Divergence::NeymanChi2,    Divergence::KL,
    Divergence::ReverseKL,      Divergence::Jeffrey,
};

/// Real interval with optionally open or infinite ends.
struct Interval {
  double lo;
  double hi;
  bool lo_closed;
  bool hi_closed;

  bool contains(double u) const;
  std::string to_string() const;
};

/// Human-readable formulas for the catalog listing.
struct DivergenceFormulas {
  std::string_view generator;
  std::string_view conjugate;
  std::string_view domain;
  std::string_view activation;
  std::string_view optimal_variational;
};

/// One f-divergence: generator f, Fenchel conjugate f* with its domain, the
/// optimal variational value g* for a (p, q) cell, and the output
/// activation g_f that maps an unconstrained score into dom(f*).
///
/// Immutable and cheap to copy. All logarithms are natural.
class DivergenceSpec {
 public:
  constexpr explicit DivergenceSpec(Divergence kind) noexcept : kind_(kind) {}

  constexpr Divergence kind() const noexcept { return kind_; }
  std::string_view name() const noexcept;
  /// Short CLI token (tv, js, sh, pearson, neyman, kl, rkl, jeffrey).
  std::string_view token() const noexcept;
  DivergenceFormulas formulas() const noexcept;

  /// f(v) for v >= 0; v = 0 is the right limit and may be +inf.
  double f(double v) const;
  /// f'(v) for v > 0 (TV: the subgradient 1/2 sign(v - 1)).
  double generator_derivative(double v) const;
  /// lim_{v->inf} f(v)/v, the weight of a cell with p > 0 and q = 0.
  double recession_slope() const noexcept;

  Interval conjugate_domain() const noexcept;
  /// f*(u); throws DomainError naming the violated bound when u is outside
  /// dom(f*).
  double conjugate(double u) const;
  /// d f*/du, which equals the primal maximizer v*(u).
  double conjugate_derivative(double u) const;

  /// g* for a cell with joint mass p > 0 and product mass q > 0. Throws
  /// ZeroCellError when either is zero.
  double optimal_variational(double p, double q) const;

  /// g_f(v): total, always strictly inside dom(f*).
  double activation(double v) const;
  double activation_derivative(double v) const;

  friend constexpr bool operator==(DivergenceSpec a, DivergenceSpec b) noexcept {
    return a.kind_ == b.kind_;
  }

 private:
  Divergence kind_;
};

/// Accepts the short token, the full name, or the enum spelling
/// (case-insensitive). Throws std::invalid_argument listing valid names.
DivergenceSpec parse_divergence(std::string_view text);

/// Comma-separated list of accepted short tokens, for error messages.
std::string divergence_tokens();

}  // namespace fdivergence
