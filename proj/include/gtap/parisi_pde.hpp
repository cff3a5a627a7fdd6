#pragma once

#include "gtap/measures.hpp"
#include "gtap/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace gtap {

struct SolverConfig {
    double grid_step = 1.0 / 64.0;
    // 0 selects 6 + 4 sqrt(total variance) + field_margin
    double x_max = 0.0;
    double field_margin = 0.0;
    int gh_order = 40;
    // Gaussian increments wider than this are split into equal-variance sub-steps
    double max_substep_sd = 0.75;
    int sde_steps = 4096;
    // |phi_xx| allowed at the grid edge before the grid is declared too small
    double edge_curvature_tol = 1e-4;
};

enum class BoundaryKind { original, band };

struct Boundary {
    BoundaryKind kind = BoundaryKind::original;
    double a = 0.0;

    static Boundary original() { return {}; }
    static Boundary band(double a) { return {BoundaryKind::band, a}; }

    // log 2cosh x, or log 2 - a x + log cosh x
    double value(double x) const;
    double d1(double x) const;
    double d2(double x) const;
};

// Variance clock of the diffusion: d(t) = f'(t), dd(t) = f''(t).
struct Clock {
    std::function<double(double)> f;
    std::function<double(double)> d;
    std::function<double(double)> dd;

    static Clock of(const MixedModel& m);
    static Clock of(const ShiftedModel& m);
};

class PDESolution {
public:
    struct Layer {
        std::vector<double> f, fx, fxx;
    };

    const OrderParameter& zeta() const { return zeta_; }
    const Boundary& boundary() const { return boundary_; }
    const Clock& clock() const { return clock_; }
    double t0() const { return zeta_.lo(); }
    double t1() const { return zeta_.hi(); }
    std::size_t node_count() const { return zeta_.nodes().size(); }
    double node(std::size_t p) const { return zeta_.nodes()[p]; }

    double grid_step() const { return h_; }
    double x_max() const { return h_ * half_; }
    int grid_size() const { return 2 * half_ + 1; }
    double grid_x(int i) const { return (i - half_) * h_; }

    // interior grid values at node p
    std::span<const double> values(std::size_t p) const;
    std::span<const double> derivative(std::size_t p) const;
    std::span<const double> second_derivative(std::size_t p) const;

    // t must be a node or lie in [t0, t1]; off-node times solve the sub-recursion
    double phi(double t, double x) const;
    double phi_x(double t, double x) const;
    double phi_xx(double t, double x) const;
    double phi_node(std::size_t p, double x) const;
    double phi_x_node(std::size_t p, double x) const;
    double phi_xx_node(std::size_t p, double x) const;

    // root of phi_x(node p, x) = target, bracketed on the grid
    double solve_phi_x(std::size_t p, double target, double tol = 1e-10) const;

    // integral of f'' zeta over [t0, t1]
    double zeta_clock_integral() const;
    // integral of s f''(s) zeta(s) over [t0, t1], where f' is the clock
    double zeta_theta_integral() const;

    bool keeps_transitions() const { return !omega_.empty(); }

private:
    friend struct PdeAccess;

    int idx(int i) const { return i + half_ + pad_; }
    const Layer& node_layer(std::size_t p) const { return layers_[node_layer_[p]]; }
    double interp(const std::vector<double>& a, double x) const;
    Layer layer_at(double t) const;

    OrderParameter zeta_{{0.0}, {}};
    Boundary boundary_;
    Clock clock_;
    SolverConfig cfg_;
    double h_ = 0.0;
    int half_ = 0;
    int pad_ = 0;
    std::vector<Layer> layers_;            // layers_[j] at sub-step time j; back() is the boundary
    std::vector<double> step_level_;       // level of step j (layers_[j+1] -> layers_[j])
    std::vector<double> step_var_;
    std::vector<std::size_t> step_cell_;   // zeta cell owning step j
    std::vector<std::size_t> node_layer_;  // layer index of node p
    std::vector<std::vector<double>> omega_;  // Gibbs weights per step, node-major
    std::vector<std::vector<double>> dlevel_; // d(layer j)/d(level of step j)
};

PDESolution solve(const Clock& clock, const OrderParameter& zeta, const Boundary& boundary,
                  const SolverConfig& cfg = {}, bool keep_transitions = false);
PDESolution solve(const MixedModel& model, const OrderParameter& zeta, const Boundary& boundary,
                  const SolverConfig& cfg = {}, bool keep_transitions = false);
PDESolution solve(const ShiftedModel& model, const OrderParameter& zeta, const Boundary& boundary,
                  const SolverConfig& cfg = {}, bool keep_transitions = false);

// Weighted point evaluation sum_k w_k phi(t0, x_k) with its level gradient and the
// node statistics of the optimal diffusion started from each x_k.
struct PointSensitivity {
    double value = 0.0;
    std::vector<double> dlevels;
    std::vector<double> node_u2;
    std::vector<double> node_uxx2;
};
PointSensitivity point_sensitivity(const PDESolution& sol, std::span<const double> xs, std::span<const double> ws);

// Phi_zeta(q, x - a I) - a x + a^2 I / 2 for an original-boundary solution on [q, 1]
double unify(const PDESolution& original, double a, double x);
// same, after checking that band is the matching shifted solution
double unify(const PDESolution& band, const PDESolution& original, double x);

struct ControlCurves {
    std::vector<double> times;
    std::vector<double> u2_mean, u2_se;
    std::vector<double> uxx2_mean, uxx2_se;
    // per-node E u^2 and the zeta-jump weighted sum  sum_p dzeta_p u(node_p)^2
    std::vector<double> node_u2_mean, node_u2_se;
    double jump_sum_mean = 0.0;
    double jump_sum_se = 0.0;
    std::size_t paths = 0;
};
ControlCurves simulate_control(const PDESolution& sol, double x0, std::size_t n_paths, int n_steps,
                               std::uint64_t seed);

double parisi_functional(const MixedModel& model, const OrderParameter& zeta, const SolverConfig& cfg = {});

struct ParisiMeasureResult {
    OrderParameter zeta{{0.0}, {}};
    double value = 0.0;
    double projected_gradient = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> node_residual;
};
ParisiMeasureResult parisi_measure(const MixedModel& model, int r_atoms, const SolverConfig& cfg = {});

}  // namespace gtap
