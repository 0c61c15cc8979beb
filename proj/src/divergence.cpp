#include "fdiv/divergence.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "fdiv/errors.hpp"
#include "fdiv/lambert_w.hpp"

namespace fdivergence {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kLog2 = std::log(2.0);
// Exponential activations saturate here instead of overflowing to -inf.
constexpr double kLowest = std::numeric_limits<double>::lowest();

double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double below(double hi) { return std::nextafter(hi, -kInf); }

std::string format_bound(double x) {
  if (std::isinf(x)) return x > 0 ? "+inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace

bool Interval::contains(double u) const {
  if (std::isnan(u)) return false;
  const bool above_lo = lo_closed ? u >= lo : u > lo;
  const bool below_hi = hi_closed ? u <= hi : u < hi;
  return above_lo && below_hi;
}

std::string Interval::to_string() const {
  return std::string(lo_closed ? "[" : "(") + format_bound(lo) + ", " + format_bound(hi) +
         (hi_closed ? "]" : ")");
}

std::string_view DivergenceSpec::name() const noexcept {
  switch (kind_) {
    case Divergence::TotalVariation: return "TotalVariation";
    case Divergence::JensenShannon: return "JensenShannon";
    case Divergence::SquaredHellinger: return "SquaredHellinger";
    case Divergence::PearsonChi2: return "PearsonChi2";
    case Divergence::NeymanChi2: return "NeymanChi2";
    case Divergence::KL: return "KL";
    case Divergence::ReverseKL: return "ReverseKL";
    case Divergence::Jeffrey: return "Jeffrey";
  }
  return "?";
}

std::string_view DivergenceSpec::token() const noexcept {
  switch (kind_) {
    case Divergence::TotalVariation: return "tv";
    case Divergence::JensenShannon: return "js";
    case Divergence::SquaredHellinger: return "sh";
    case Divergence::PearsonChi2: return "pearson";
    case Divergence::NeymanChi2: return "neyman";
    case Divergence::KL: return "kl";
    case Divergence::ReverseKL: return "rkl";
    case Divergence::Jeffrey: return "jeffrey";
  }
  return "?";
}

DivergenceFormulas DivergenceSpec::formulas() const noexcept {
  switch (kind_) {
    case Divergence::TotalVariation:
      return {"1/2 |v - 1|", "u", "[-1/2, 1/2]", "1/2 tanh(v)", "1/2 sign(p/q - 1)"};
    case Divergence::JensenShannon:
      return {"v log v - (v + 1) log((v + 1)/2)", "-log(2 - e^u)", "u < log 2",
              "log(2 / (1 + e^-v))", "log(2p / (p + q))"};
    case Divergence::SquaredHellinger:
      return {"(sqrt(v) - 1)^2", "u / (1 - u)", "u < 1", "1 - e^v", "1 - sqrt(q/p)"};
    case Divergence::PearsonChi2:
      return {"(v - 1)^2", "u^2/4 + u", "R", "v", "2 (p/q - 1)"};
    case Divergence::NeymanChi2:
      return {"(1 - v)^2 / v", "2 - 2 sqrt(1 - u)", "u < 1", "1 - e^v", "1 - (q/p)^2"};
    case Divergence::KL:
      return {"v log v", "e^(u - 1)", "R", "v", "1 + log(p/q)"};
    case Divergence::ReverseKL:
      return {"-log v", "-1 - log(-u)", "u < 0", "-e^v", "-q/p"};
    case Divergence::Jeffrey:
      return {"(v - 1) log v", "W(e^(1-u)) + 1/W(e^(1-u)) + u - 2", "R", "v",
              "1 + log(p/q) - q/p"};
  }
  return {};
}

double DivergenceSpec::f(double v) const {
  if (std::isnan(v) || v < 0.0) {
    throw DomainError(std::string(name()) + ": generator requires v >= 0, got " + format_bound(v));
  }
  switch (kind_) {
    case Divergence::TotalVariation: return 0.5 * std::abs(v - 1.0);
    case Divergence::JensenShannon: return xlogx(v) - (v + 1.0) * std::log((v + 1.0) / 2.0);
    case Divergence::SquaredHellinger: {
      const double r = std::sqrt(v) - 1.0;
      return r * r;
    }
    case Divergence::PearsonChi2: return (v - 1.0) * (v - 1.0);
    case Divergence::NeymanChi2: return v == 0.0 ? kInf : (1.0 - v) * (1.0 - v) / v;
    case Divergence::KL: return xlogx(v);
    case Divergence::ReverseKL: return v == 0.0 ? kInf : -std::log(v);
    case Divergence::Jeffrey: return v == 0.0 ? kInf : (v - 1.0) * std::log(v);
  }
  return 0.0;
}

double DivergenceSpec::generator_derivative(double v) const {
  if (std::isnan(v) || v <= 0.0) {
    throw DomainError(std::string(name()) + ": f'(v) requires v > 0, got " + format_bound(v));
  }
  switch (kind_) {
    case Divergence::TotalVariation: return v > 1.0 ? 0.5 : (v < 1.0 ? -0.5 : 0.0);
    case Divergence::JensenShannon: return std::log(2.0 * v / (1.0 + v));
    case Divergence::SquaredHellinger: return 1.0 - 1.0 / std::sqrt(v);
    case Divergence::PearsonChi2: return 2.0 * (v - 1.0);
    case Divergence::NeymanChi2: return 1.0 - 1.0 / (v * v);
    case Divergence::KL: return 1.0 + std::log(v);
    case Divergence::ReverseKL: return -1.0 / v;
    case Divergence::Jeffrey: return std::log(v) + 1.0 - 1.0 / v;
  }
  return 0.0;
}

double DivergenceSpec::recession_slope() const noexcept {
  switch (kind_) {
    case Divergence::TotalVariation: return 0.5;
    case Divergence::JensenShannon: return kLog2;
    case Divergence::SquaredHellinger: return 1.0;
    case Divergence::NeymanChi2: return 1.0;
    case Divergence::ReverseKL: return 0.0;
    case Divergence::PearsonChi2:
    case Divergence::KL:
    case Divergence::Jeffrey: return kInf;
  }
  return kInf;
}

Interval DivergenceSpec::conjugate_domain() const noexcept {
  switch (kind_) {
    case Divergence::TotalVariation: return {-0.5, 0.5, true, true};
    case Divergence::JensenShannon: return {-kInf, kLog2, false, false};
    case Divergence::SquaredHellinger: return {-kInf, 1.0, false, false};
    case Divergence::NeymanChi2: return {-kInf, 1.0, false, false};
    case Divergence::ReverseKL: return {-kInf, 0.0, false, false};
    case Divergence::PearsonChi2:
    case Divergence::KL:
    case Divergence::Jeffrey: return {-kInf, kInf, false, false};
  }
  return {-kInf, kInf, false, false};
}

namespace {

void require_in_domain(const DivergenceSpec& spec, double u) {
  const Interval dom = spec.conjugate_domain();
  if (dom.contains(u)) return;
  std::string bound;
  if (std::isnan(u)) {
    bound = "argument is NaN";
  } else if (dom.lo_closed ? u < dom.lo : u <= dom.lo) {
    bound = std::string("lower bound ") + (dom.lo_closed ? ">= " : "> ") + format_bound(dom.lo);
  } else {
    bound = std::string("upper bound ") + (dom.hi_closed ? "<= " : "< ") + format_bound(dom.hi);
  }
  throw DomainError(std::string(spec.name()) + ": conjugate argument " + format_bound(u) +
                    " outside dom(f*) = " + dom.to_string() + " (violates " + bound + ")");
}

}  // namespace

double DivergenceSpec::conjugate(double u) const {
  require_in_domain(*this, u);
  switch (kind_) {
    case Divergence::TotalVariation: return u;
    case Divergence::JensenShannon: return -std::log(2.0 - std::exp(u));
    case Divergence::SquaredHellinger: return u / (1.0 - u);
    case Divergence::PearsonChi2: return 0.25 * u * u + u;
    case Divergence::NeymanChi2: return 2.0 - 2.0 * std::sqrt(1.0 - u);
    case Divergence::KL: return std::exp(u - 1.0);
    case Divergence::ReverseKL: return -1.0 - std::log(-u);
    case Divergence::Jeffrey: {
      const double w = lambert_w_exp(1.0 - u);
      return w + 1.0 / w + u - 2.0;
    }
  }
  return 0.0;
}

double DivergenceSpec::conjugate_derivative(double u) const {
  require_in_domain(*this, u);
  switch (kind_) {
    case Divergence::TotalVariation: return 1.0;
    case Divergence::JensenShannon: {
      const double e = std::exp(u);
      return e / (2.0 - e);
    }
    case Divergence::SquaredHellinger: return 1.0 / ((1.0 - u) * (1.0 - u));
    case Divergence::PearsonChi2: return 0.5 * u + 1.0;
    case Divergence::NeymanChi2: return 1.0 / std::sqrt(1.0 - u);
    case Divergence::KL: return std::exp(u - 1.0);
    case Divergence::ReverseKL: return -1.0 / u;
    case Divergence::Jeffrey: return 1.0 / lambert_w_exp(1.0 - u);
  }
  return 0.0;
}

double DivergenceSpec::optimal_variational(double p, double q) const {
  if (!(p > 0.0) || !(q > 0.0)) {
    throw ZeroCellError(std::string(name()) + ": optimal variational value needs p > 0 and q > 0 (p=" +
                        format_bound(p) + ", q=" + format_bound(q) +
                        "); use the closed-form edge convention");
  }
  switch (kind_) {
    case Divergence::TotalVariation: return p > q ? 0.5 : (p < q ? -0.5 : 0.0);
    case Divergence::JensenShannon: return std::log(2.0 * p / (p + q));
    case Divergence::SquaredHellinger: return 1.0 - std::sqrt(q / p);
    case Divergence::PearsonChi2: return 2.0 * (p / q - 1.0);
    case Divergence::NeymanChi2: {
      const double r = q / p;
      return 1.0 - r * r;
    }
    case Divergence::KL: return 1.0 + std::log(p / q);
    case Divergence::ReverseKL: return -q / p;
    case Divergence::Jeffrey: return 1.0 + std::log(p / q) - q / p;
  }
  return 0.0;
}

double DivergenceSpec::activation(double v) const {
  switch (kind_) {
    case Divergence::TotalVariation: return 0.5 * std::tanh(v);
    case Divergence::JensenShannon: return std::min(kLog2 - softplus(-v), below(kLog2));
    case Divergence::SquaredHellinger:
    case Divergence::NeymanChi2: return std::clamp(1.0 - std::exp(v), kLowest, below(1.0));
    case Divergence::ReverseKL: return std::clamp(-std::exp(v), kLowest, below(0.0));
    case Divergence::PearsonChi2:
    case Divergence::KL:
    case Divergence::Jeffrey: return v;
  }
  return v;
}

double DivergenceSpec::activation_derivative(double v) const {
  switch (kind_) {
    case Divergence::TotalVariation: {
      const double t = std::tanh(v);
      return 0.5 * (1.0 - t * t);
    }
    case Divergence::JensenShannon: return 1.0 / (1.0 + std::exp(v));
    case Divergence::SquaredHellinger:
    case Divergence::NeymanChi2:
    case Divergence::ReverseKL: return -std::exp(v);
    case Divergence::PearsonChi2:
    case Divergence::KL:
    case Divergence::Jeffrey: return 1.0;
  }
  return 1.0;
}

std::string divergence_tokens() {
  std::string out;
  for (Divergence d : kAllDivergences) {
    if (!out.empty()) out += ", ";
    out += DivergenceSpec(d).token();
  }
  return out;
}

DivergenceSpec parse_divergence(std::string_view text) {
  auto lower = [](std::string_view s) {
    std::string r(s);
    std::transform(r.begin(), r.end(), r.begin(), [](unsigned char c) { return std::tolower(c); });
    return r;
  };
  const std::string key = lower(text);
  for (Divergence d : kAllDivergences) {
    const DivergenceSpec spec(d);
    if (key == spec.token() || key == lower(spec.name())) return spec;
  }
  // A few common aliases.
  if (key == "total_variation" || key == "total-variation") return DivergenceSpec(Divergence::TotalVariation);
  if (key == "jensen-shannon" || key == "jensen_shannon") return DivergenceSpec(Divergence::JensenShannon);
  if (key == "ps" || key == "chi2") return DivergenceSpec(Divergence::PearsonChi2);
  if (key == "reverse_kl" || key == "reverse-kl") return DivergenceSpec(Divergence::ReverseKL);
  if (key == "jf") return DivergenceSpec(Divergence::Jeffrey);
  throw std::invalid_argument("unknown divergence '" + std::string(text) +
                              "'; valid names: " + divergence_tokens());
}

}  // namespace fdivergence
