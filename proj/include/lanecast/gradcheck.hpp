#pragma once

#include "lanecast/graph.hpp"

#include <cstddef>
#include <string>

namespace lanecast {

struct FiniteDifferenceReport {
    /// max over entries of |analytic - numeric| / max(1, |analytic|)
    double max_relative_error = 0.0;
    std::size_t entries = 0;
    /// Perturbations that pushed some leaky-rectifier input across zero.
    /// Central differences straddle the kink there and do not estimate the
    /// derivative, so callers should not trust the error for such instances.
    std::size_t kink_crossings = 0;
};

/// Compares the reverse-mode gradient of a scalar output with respect to one
/// leaf against central differences (f(x+h) - f(x-h)) / 2h, entry by entry.
///
/// Throws NumericError when the step is too small to move an entry.
FiniteDifferenceReport finite_difference_check(const Graph<double>& graph, const Bindings<double>& bindings,
                                               NodeId output, const std::string& leaf, double step);

} // namespace lanecast
