#pragma once

#include "gtap/parisi_pde.hpp"
#include "gtap/quadrature.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gtap {

struct PdeAccess {
    struct GridSpec {
        int n;
        int pad;
        double h;
    };
    struct Step {
        double level;
        double var;
        std::size_t cell;
    };
    struct StepWork {
        std::vector<int> shift;
        std::vector<double> c, F, Fx, Fxx;
        std::vector<double> M, S, mF, mF2, mFx, mFx2, mFxx;
    };

    static int order_for(double sd, int base);
    static const GaussRule& rule(int order);
    static void stencils(double sd, double h, const GaussRule& r, std::vector<int>& shift, std::vector<double>& c);
    static void fill_ghosts(PDESolution::Layer& L, int n, int pad, double h);
    static void step(const GridSpec& g, const PDESolution::Layer& next, double z, double var, int base_order,
                     PDESolution::Layer& out, std::vector<double>* omega, std::vector<double>* dz, StepWork& wk);
    static std::vector<Step> schedule(const Clock& clock, const OrderParameter& zeta, double t_start, double max_sd);
    static GridSpec grid_of(const PDESolution& sol);
    static void boundary_layer(const PDESolution& sol, PDESolution::Layer& L);
    static void init(PDESolution& sol, const Clock& clock, const OrderParameter& zeta, const Boundary& boundary,
                     const SolverConfig& cfg);
    static void run(PDESolution& sol, bool keep_transitions);
    static PointSensitivity sensitivity(const PDESolution& sol, std::span<const double> xs,
                                        std::span<const double> ws);
    static ControlCurves control(const PDESolution& sol, double x0, std::size_t n_paths, int n_steps,
                                 std::uint64_t seed);
};

}  // namespace gtap
