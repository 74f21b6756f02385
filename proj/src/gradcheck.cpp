#include "lanecast/gradcheck.hpp"

#include "lanecast/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lanecast {

namespace {

std::vector<bool> kink_pattern(const Graph<double>& graph, const Evaluation<double>& ev) {
    std::vector<bool> signs;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        NodeId id{i};
        if (graph.kind(id) != OpKind::LeakyRelu) continue;
        for (double v : ev.value(graph.inputs(id)[0]).values()) signs.push_back(v >= 0.0);
    }
    return signs;
}

} // namespace

FiniteDifferenceReport finite_difference_check(const Graph<double>& graph, const Bindings<double>& bindings,
                                               NodeId output, const std::string& leaf, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
    if (!bindings.contains(leaf)) throw ShapeError("leaf '" + leaf + "' is not bound");

    const Evaluation<double> base = graph.evaluate(bindings, output);
    const std::vector<bool> base_kinks = kink_pattern(graph, base);
    const Tensor analytic = graph.backward(base, output).at(leaf);

    const Tensor& original = bindings.at(leaf);
    std::vector<double> values(original.values().begin(), original.values().end());
    Bindings<double> perturbed = bindings;

    FiniteDifferenceReport report;
    report.entries = values.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = values[i];
        const double up = x + step;
        const double down = x - step;
        if (up == x || down == x) {
            throw NumericError("finite-difference step " + std::to_string(step) +
                               " underflows against value " + std::to_string(x) + " of leaf '" + leaf + "'");
        }
        auto eval_at = [&](double v, bool& crossed) {
            values[i] = v;
            perturbed.insert_or_assign(leaf, Tensor(original.shape(), values));
            Evaluation<double> ev = graph.evaluate(perturbed, output);
            crossed = crossed || kink_pattern(graph, ev) != base_kinks;
            return ev.value(output)[0];
        };
        bool crossed = false;
        const double f_up = eval_at(up, crossed);
        const double f_down = eval_at(down, crossed);
        values[i] = x;
        if (crossed) ++report.kink_crossings;

        const double numeric = (f_up - f_down) / (up - down);
        const double a = analytic[i];
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        report.max_relative_error = std::max(report.max_relative_error, err);
    }
    return report;
}

} // namespace lanecast
