#pragma once

#include "gtap/measures.hpp"
#include "gtap/model.hpp"
#include "gtap/tap_core.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace gtap {

// Truncated Ruelle cascade with Poisson-Dirichlet parameters params[0..r-1] down the levels.
class CascadeSample {
public:
    CascadeSample(std::vector<double> params, int branching, std::uint64_t seed);

    int depth() const { return static_cast<int>(params_.size()); }
    int branching() const { return K_; }
    const std::vector<double>& params() const { return params_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t leaves() const;
    // log point of child c of parent node `parent` at level k (parents indexed row-major)
    double log_point(int level, std::size_t parent, int c) const
    {
        return log_points_[level][parent * K_ + c];
    }
    // normalized leaf weights v_alpha, leaves in lexicographic order
    std::vector<double> leaf_weights() const;
    // smallest estimated fraction of Poisson mass kept by the truncation, over levels
    double coverage() const { return coverage_; }

private:
    std::vector<double> params_;
    int K_;
    std::uint64_t seed_;
    std::vector<std::vector<double>> log_points_;
    double coverage_ = 1.0;
};

CascadeSample sample_cascade(std::span<const double> params, int branching, std::uint64_t seed);

// Variances of a Gaussian tree field along a cascade: a root increment shared by all leaves,
// one increment per cascade level, and a leaf increment integrated in closed form.
struct TreeLevels {
    double root_var = 0.0;
    std::vector<double> params;
    std::vector<double> level_var;
    double leaf_var = 0.0;
};

// Cells of zeta with level 0 feed the root, levels in (0,1) become cascade levels, level 1 the leaf.
TreeLevels tree_levels(const OrderParameter& zeta, const std::function<double(double)>& clock);

// one site of a tree field with covariance given by the cumulative variances at the branching depth
std::vector<double> sample_tree_field(const CascadeSample& c, const TreeLevels& levels, std::uint64_t seed);

// (1/N) log sum_alpha v_alpha prod_i sum_sigma exp((sigma - m_i)(g_i(alpha) + lambda m_i + v(m_i)))
double psi_full(const CascadeSample& c, const TreeLevels& levels, std::span<const double> m, double lambda,
                const std::function<double(double)>& field, std::uint64_t field_seed);

struct CascadeConfig {
    int branching = 2000;
    int draws = 100;
    std::uint64_t seed = 1;
    double min_coverage = 0.99;
};

// psi_full averaged over cascade and field draws for the band order parameter zeta on [0, 1-q]
McEstimate psi_full_mc(const ShiftedModel& model, const OrderParameter& zeta, std::span<const double> m,
                       double lambda, const std::function<double(double)>& field, const CascadeConfig& cfg);
// (1/N) sum_i Phi_{m_i,zeta}(0, lambda m_i + v(m_i))
double psi_pde(const ShiftedModel& model, const OrderParameter& zeta, std::span<const double> m, double lambda,
               const std::function<double(double)>& field, const SolverConfig& cfg = {});

// 1/2 int zeta(s) s f''(s) ds
double upsilon(const MixedModel& f, const OrderParameter& zeta);
double upsilon(const ShiftedModel& f, const OrderParameter& zeta);
// E log sum_alpha v_alpha exp g(alpha) for the tree field with covariance s f'(s) - f(s)
McEstimate upsilon_mc(const MixedModel& f, const OrderParameter& zeta, const CascadeConfig& cfg);

}  // namespace gtap
