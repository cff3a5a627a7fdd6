#pragma once

#include "gtap/measures.hpp"
#include "gtap/model.hpp"
#include "gtap/parisi_pde.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <vector>

namespace gtap {

struct TapConfig {
    SolverConfig solver;
    // cells of the global uniform partition of [0,1] carrying the order parameter
    int r_atoms = 24;
    // atoms with |a| above 1 - boundary_tol are treated as the atom at 1
    double boundary_tol = 1e-9;
    double bisection_tol = 1e-10;
    int max_iter = 400;
    double step_tol = 1e-9;
    // 0 starts from a ramp; otherwise from random nondecreasing levels
    std::uint64_t init_seed = 0;
    // evaluate the band representation at the minimizer
    bool cross_check = true;
};

// Lambda_zeta(q, a) and its minimizing point; x_star is infinite for the boundary atoms a = +-1.
struct Conjugate {
    double value = 0.0;
    double x_star = 0.0;
    bool boundary = false;
};

// sol must be an original-boundary solution on [q, 1]
Conjugate lambda_conj(const PDESolution& sol, double a, double boundary_tol = 1e-9, double tol = 1e-10);
Conjugate lambda_conj(const MixedModel& model, double q, double a, const OrderParameter& zeta,
                      const SolverConfig& cfg = {});
// x_star + a * int_q^1 xi'' zeta
double psi(const PDESolution& sol, double a, double tol = 1e-10);
double psi(const MixedModel& model, double q, double a, const OrderParameter& zeta, const SolverConfig& cfg = {});

// a -> v_zeta(a), the root of d/dx Phi_{a,zeta}(0, .) for a band order parameter on [0, 1-q].
class EffectiveField {
public:
    EffectiveField(ShiftedModel model, OrderParameter zeta, SolverConfig cfg = {}, double tol = 1e-10);

    double operator()(double a) const;
    const PDESolution& band_solution(double a) const;

    const ShiftedModel& model() const { return model_; }
    double q() const { return model_.q(); }
    const OrderParameter& zeta() const { return zeta_; }

private:
    struct Entry {
        std::shared_ptr<const PDESolution> sol;
        double root;
    };
    const Entry& entry(double a) const;

    ShiftedModel model_;
    OrderParameter zeta_;
    SolverConfig cfg_;
    double tol_;
    std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
    mutable std::map<double, Entry> cache_;
};

EffectiveField effective_field(const ShiftedModel& model, const OrderParameter& zeta_band, const SolverConfig& cfg = {});

// Order parameters given on [0,1] are restricted to [q,1]; ones given on [q,1] are used as is.
double tap_with_zeta(const MixedModel& model, const DiscreteMeasure& mu, const OrderParameter& zeta,
                     const SolverConfig& cfg = {});

struct TapCertificate {
    // support nodes of the band order parameter
    std::vector<double> nodes;
    // sum_a mu_a E u_a(s)^2 - s
    std::vector<double> first;
    // xi_q''(s) sum_a mu_a E (d_xx Phi)^2 - 1
    std::vector<double> second;
    double first_sup = 0.0;
    double second_sup = 0.0;
    // sup norm of the metric projected gradient step over partition cells
    double cell_stationarity = 0.0;
};

struct TapResult {
    double value = 0.0;
    double q = 0.0;
    OrderParameter minimizer_zeta{{1.0}, {}};
    TapCertificate certificate;
    double representation_value = 0.0;
    double representation_gap = 0.0;
    double best_evaluated = 0.0;
    double projected_gradient = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    // first support point of the minimizer minus q
    double support_offset = 0.0;
};

TapResult tap_correction(const MixedModel& model, const DiscreteMeasure& mu, const TapConfig& cfg = {});
TapResult tap_correction(const MixedModel& model, const DiscreteMeasure& mu, int r_atoms);

enum class BandVariant { full, bar };

double band_functional(const ShiftedModel& model, const DiscreteMeasure& mu, const std::function<double(double)>& field,
                       double lambda, const OrderParameter& zeta_band, BandVariant variant = BandVariant::bar,
                       const SolverConfig& cfg = {});

// Evaluation of the bar functional at lambda = 0 with the field v_zeta.
struct BandEvaluation {
    double value = 0.0;
    std::vector<double> grad;
    std::vector<double> fields;
    std::vector<double> node_u2;
    std::vector<double> node_uxx2;
};
BandEvaluation band_evaluation(const ShiftedModel& model, const DiscreteMeasure& mu, const OrderParameter& zeta_band,
                               const SolverConfig& cfg = {}, double boundary_tol = 1e-9);

// inf over band order parameters of the bar functional with the self-generated field
struct BandRepresentation {
    double value = 0.0;
    OrderParameter zeta{{0.0}, {}};
    double projected_gradient = 0.0;
    bool converged = false;
};
BandRepresentation band_representation(const MixedModel& model, const DiscreteMeasure& mu, const TapConfig& cfg = {});

// inf over (lambda, zeta) of the bar functional with a fixed field
struct BandMinimum {
    double value = 0.0;
    double lambda = 0.0;
    OrderParameter zeta{{0.0}, {}};
    bool lambda_saturated = false;
    bool converged = false;
};
BandMinimum band_minimize(const ShiftedModel& model, const DiscreteMeasure& mu, const std::function<double(double)>& field,
                          const TapConfig& cfg = {}, double lambda_max = 20.0);

// derivative at b = 0 of the bar functional along (1-b)(v0,zeta0) + b(v1,zeta1), lambda = 0
double directional_derivative(const ShiftedModel& model, const DiscreteMeasure& mu,
                              const std::function<double(double)>& v0, const OrderParameter& zeta0,
                              const std::function<double(double)>& v1, const OrderParameter& zeta1,
                              const SolverConfig& cfg = {});

// Monte Carlo counterpart using simulated control curves
struct McEstimate {
    double mean = 0.0;
    double se = 0.0;
};
McEstimate directional_derivative_mc(const ShiftedModel& model, const DiscreteMeasure& mu,
                                     const std::function<double(double)>& v0, const OrderParameter& zeta0,
                                     const std::function<double(double)>& v1, const OrderParameter& zeta1,
                                     std::size_t n_paths, std::uint64_t seed, const SolverConfig& cfg = {});

TapCertificate optimality_check(const ShiftedModel& model, const DiscreteMeasure& mu, const OrderParameter& zeta_band,
                                const SolverConfig& cfg = {});

}  // namespace gtap
