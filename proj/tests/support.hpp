#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include "lanecast/gradcheck.hpp"
#include "lanecast/model.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace lanecast::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = u(rng);
    return Tensor(std::move(shape), std::move(v));
}

/// Small GraphMLP configuration with N <= 6, T <= 12, z <= 3.
inline GraphMLPConfig random_small_config(std::mt19937_64& rng) {
    auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    GraphMLPConfig c;
    c.nodes = pick(2, 6);
    c.window = pick(4, 12);
    c.horizon = pick(1, 3);
    c.key_dim = pick(2, 6);
    c.patches = pick(1, std::min<std::size_t>(4, c.window));
    c.depth = pick(1, 3);
    c.hidden = pick(3, 8);
    return c;
}

/// Initial parameters in 64-bit with every bias, the norm affine and the gate
/// moved away from their initial values so that no gradient is trivially structured.
inline ParamMap<double> perturbed_parameters(const GraphMLP& model, std::mt19937_64& rng) {
    ParamMap<double> p = cast_params<double>(model.initial_parameters(rng()));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& [name, value] : p) {
        const bool bias = name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2");
        if (name == "norm.psi") value = random_tensor(rng, value.shape(), 0.5, 2.0);
        else if (name == "norm.beta" || name == "gate.g") value = random_tensor(rng, value.shape(), -1.0, 1.0);
        else if (bias) value = random_tensor(rng, value.shape(), -0.1, 0.1);
    }
    return p;
}

struct GradientCheckOutcome {
    bool kinked = false;
    double worst = 0.0;
    std::string worst_leaf;
    std::size_t entries = 0;
};

/// Finite-difference check of every leaf except the input and target.
inline GradientCheckOutcome check_all_parameters(const Graph<double>& g, const Bindings<double>& bindings, NodeId loss,
                                                 double step = 1e-4) {
    GradientCheckOutcome out;
    for (const std::string& leaf : g.leaf_names()) {
        if (leaf == kInputLeaf || leaf == kTargetLeaf) continue;
        const auto rep = finite_difference_check(g, bindings, loss, leaf, step);
        out.entries += rep.entries;
        if (rep.kink_crossings > 0) out.kinked = true;
        if (rep.max_relative_error > out.worst) {
            out.worst = rep.max_relative_error;
            out.worst_leaf = leaf;
        }
    }
    return out;
}

} // namespace lanecast::testing
