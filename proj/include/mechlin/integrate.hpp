#pragma once

// Structural antiderivatives in a single coordinate, used when reconstructing
// a scalar function from its partial derivatives.

#include "mechlin/expr.hpp"

#include <optional>

namespace mechlin {

/// Antiderivative F of f in x<index>, normalized so F vanishes at
/// x<index> = 0.  Handles expressions whose only x<index>-dependence, per
/// additive term, is a nonnegative power of the coordinate or a single
/// sin/cos/exp of an affine function of it (times factors free of the
/// coordinate).  Returns nullopt when the term shape is not covered.
/// Expressions must not contain other coordinates structurally.
std::optional<ExprPtr> integrate_univariate(const ExprPtr& f, int index);

}  // namespace mechlin
