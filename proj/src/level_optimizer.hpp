#pragma once

#include <functional>
#include <span>
#include <vector>

namespace gtap::detail {

// Value at x; fills grad with the gradient.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;
// Projection in the diagonal metric onto the feasible set.
using Projection = std::function<void(std::span<double> x, std::span<const double> metric)>;

struct SpgOptions {
    int max_iter = 400;
    // stop when the metric-scaled projected step is below this in sup norm
    double step_tol = 1e-9;
    int memory = 8;
};

struct SpgResult {
    std::vector<double> x;
    double value = 0.0;
    std::vector<double> grad;
    double step_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

SpgResult spg_minimize(const Objective& f, std::vector<double> x0, std::span<const double> metric,
                       const Projection& project, const SpgOptions& opt = {});

// Weighted isotonic regression onto nondecreasing sequences, clipped to [0,1].
void project_levels(std::span<double> x, std::span<const double> weight);

// Breakpoints {lo} U {j/cells : j/cells > lo} U {hi} of the global uniform partition of [0,1],
// translated by -offset.
std::vector<double> partition_nodes(double lo, double hi, int cells, double offset = 0.0);

}  // namespace gtap::detail
