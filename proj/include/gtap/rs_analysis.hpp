#pragma once

#include "gtap/measures.hpp"
#include "gtap/model.hpp"

#include <ostream>
#include <vector>

namespace gtap {

// tanh^{-1}(a) + a xi_q'(1-q)
double v_rs(const ShiftedModel& model, double a);

// Band solution for the point mass order parameter, at time s in [0, 1-q].
double band_rs_phi(const ShiftedModel& model, double a, double s, double x);
double band_rs_phi_x(const ShiftedModel& model, double a, double s, double x);

double gamma_mu(const ShiftedModel& model, const DiscreteMeasure& mu, double s);
double big_gamma(const ShiftedModel& model, const DiscreteMeasure& mu, double s);

struct GammaPoint {
    double s;
    double gamma;
    double big_gamma;
};

struct RsOptions {
    double rs_tolerance = 1e-6;
    int grid_points = 200;
    // step of the finite difference for the curvature at 0
    double fd_step = 1e-3;
};

struct RsDiagnostics {
    std::vector<GammaPoint> gamma_curve;
    double sup_gamma = 0.0;
    bool is_rs = false;
    double gamma_second_deriv_at_0 = 0.0;
    // beta^2 int (1-a^2)^2 dmu with beta^2 = xi''(q); the Plefka quantity for the pure 2-spin model
    double plefka_lhs = 0.0;
    // sup over (0, 1-q] of big_gamma(s) / s^2
    double margin = 0.0;
};

RsDiagnostics is_replica_symmetric(const ShiftedModel& model, const DiscreteMeasure& mu, const RsOptions& opt = {});

void write_gamma_csv(std::ostream& os, const RsDiagnostics& d);

// -int I dmu + (xi(1) - xi(q) - xi'(q)(1-q)) / 2
double classical_tap(const MixedModel& model, const DiscreteMeasure& mu);
double binary_entropy_rate(double a);

struct PlefkaResult {
    bool holds = false;
    double lhs = 0.0;
};
// SK convention xi(s) = beta^2 s^2 / 2
PlefkaResult plefka(const DiscreteMeasure& mu, double beta);

struct AtReport {
    double beta = 0.0;
    double h = 0.0;
    double q = 0.0;
    double at_quantity = 0.0;
    double plefka_lhs = 0.0;
    bool at_holds = false;
    bool plefka_holds = false;
    bool at_without_plefka = false;
    int iterations = 0;
};

struct AtOptions {
    double damping = 0.5;
    int max_iter = 100000;
    double tol = 1e-13;
};

AtReport at_line_scan(double beta, double h, const AtOptions& opt = {});
void write_at_csv(std::ostream& os, const std::vector<AtReport>& rows);

}  // namespace gtap
