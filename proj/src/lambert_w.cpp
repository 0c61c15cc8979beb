#include "fdiv/lambert_w.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "fdiv/errors.hpp"

namespace fdivergence {

namespace {
constexpr int kMaxIterations = 64;
constexpr double kResidualTarget = 1e-14;
}  // namespace

double lambert_w(double x) {
  if (std::isnan(x) || x < 0.0) {
    throw DomainError("lambert_w: argument must be >= 0 (principal branch), got " +
                      std::to_string(x));
  }
  if (x == 0.0) return 0.0;
  if (std::isinf(x)) return x;

  double w = std::log1p(x);
  for (int it = 0; it < kMaxIterations; ++it) {
    const double ew = std::exp(w);
    const double residual = w * ew - x;
    if (std::abs(residual) <= kResidualTarget * x) break;
    double next = w - residual / (ew * (1.0 + w));
    // Newton on a convex increasing function overshoots only from below;
    // keep the iterate on the principal branch.
    if (next < 0.0) next = 0.5 * w;
    if (next == w) break;
    w = next;
  }
  return w;
}

double lambert_w_exp(double a) {
  if (std::isnan(a)) throw DomainError("lambert_w_exp: NaN argument");
  if (a < 700.0) return lambert_w(std::exp(a));
  // w + log w = a, with w ~ a - log a.
  double w = a - std::log(a);
  for (int it = 0; it < kMaxIterations; ++it) {
    const double r = w + std::log(w) - a;
    const double next = w - r / (1.0 + 1.0 / w);
    if (std::abs(next - w) <= kResidualTarget * w) {
      w = next;
      break;
    }
    w = next;
  }
  return w;
}

}  // namespace fdivergence
