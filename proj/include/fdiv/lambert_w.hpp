#pragma once

namespace fdivergence {

/// Principal branch of the Lambert W function for x >= 0: the w >= 0 with
/// w * exp(w) = x. Newton iteration from log(1 + x), at most 64 steps,
/// stopping once the relative residual drops below 1e-14.
/// Throws DomainError for x < 0 or NaN.
double lambert_w(double x);

/// W(exp(a)) without forming exp(a), so that large a does not overflow.
/// Solves w + log(w) = a when exp(a) is not representable.
double lambert_w_exp(double a);

}  // namespace fdivergence
