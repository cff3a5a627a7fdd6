#include "gtap/rs_analysis.hpp"

#include "gtap/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace gtap {

namespace {

constexpr double edge_tol = 1e-9;

double log2cosh(double x)
{
    const double ax = std::abs(x);
    return ax + std::log1p(std::exp(-2.0 * ax));
}

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

// remaining variance xi_q'(1-q) - xi_q'(s)
double remaining(const ShiftedModel& m, double s) { return m.xi_prime(m.length()) - m.xi_prime(s); }

void check_time(const ShiftedModel& m, double s)
{
    if (s < -1e-14 || s > m.length() + 1e-14)
        throw std::domain_error("time outside [0, 1-q]");
}

}  // namespace

double v_rs(const ShiftedModel& model, double a)
{
    if (std::abs(a) >= 1.0)
        throw std::domain_error("v_rs needs |a| < 1");
    return std::atanh(a) + a * model.xi_prime(model.length());
}

double band_rs_phi(const ShiftedModel& model, double a, double s, double x)
{
    check_time(model, s);
    const double V = remaining(model, s);
    return 0.5 * (1.0 + a * a) * V - a * x + log2cosh(x - a * V);
}

double band_rs_phi_x(const ShiftedModel& model, double a, double s, double x)
{
    check_time(model, s);
    return std::tanh(x - a * remaining(model, s)) - a;
}

double gamma_mu(const ShiftedModel& model, const DiscreteMeasure& mu, double s)
{
    check_time(model, s);
    s = std::clamp(s, 0.0, model.length());
    const double var = model.xi_prime(s);
    const double sd = std::sqrt(std::max(var, 0.0));
    const double V = remaining(model, s);
    const DiscreteMeasure folded = mu.folded();
    double total = 0.0;
    for (const Atom& at : folded.atoms()) {
        const double a = at.x;
        if (a >= 1.0 - edge_tol)
            continue;
        const double v = v_rs(model, a);
        // the tilted law of v + sd g is a two-component Gaussian mixture
        const double lp = v - a * V + 0.5 * (1.0 - a) * (1.0 - a) * var;
        const double lm = -v + a * V + 0.5 * (1.0 + a) * (1.0 + a) * var;
        const double top = std::max(lp, lm);
        const double wp = std::exp(lp - top), wm = std::exp(lm - top);
        const double cp = v + (1.0 - a) * var, cm = v - (1.0 + a) * var;
        auto u2 = [&](double x) {
            const double u = std::tanh(x - a * V) - a;
            return u * u;
        };
        const double ep = gaussian_expectation(u2, cp, sd), em = gaussian_expectation(u2, cm, sd);
        total += at.w * (wp * ep + wm * em) / (wp + wm);
    }
    return total;
}

double big_gamma(const ShiftedModel& model, const DiscreteMeasure& mu, double s)
{
    check_time(model, s);
    if (s <= 0.0)
        return 0.0;
    return integrate_adaptive([&](double r) { return model.xi_double_prime(r) * (gamma_mu(model, mu, r) - r); }, 0.0,
                              std::min(s, model.length()), 1e-14, 1e-11);
}

RsDiagnostics is_replica_symmetric(const ShiftedModel& model, const DiscreteMeasure& mu, const RsOptions& opt)
{
    if (model.length() <= 1e-12)
        throw std::invalid_argument("replica symmetry analysis needs mu != delta_1");
    if (opt.grid_points < 2)
        throw std::invalid_argument("gamma grid needs at least two points");
    RsDiagnostics d;
    const double L = model.length();
    auto integrand = [&](double r) { return model.xi_double_prime(r) * (gamma_mu(model, mu, r) - r); };

    // quadratic spacing refines the grid near 0
    double acc = 0.0, prev = 0.0;
    d.margin = -std::numeric_limits<double>::infinity();
    d.gamma_curve.push_back({0.0, gamma_mu(model, mu, 0.0), 0.0});
    for (int k = 1; k <= opt.grid_points; ++k) {
        const double u = static_cast<double>(k) / opt.grid_points;
        const double s = k == opt.grid_points ? L : L * u * u;
        acc += integrate_adaptive(integrand, prev, s, 1e-14, 1e-11);
        prev = s;
        d.gamma_curve.push_back({s, gamma_mu(model, mu, s), acc});
        d.sup_gamma = std::max(d.sup_gamma, acc);
        d.margin = std::max(d.margin, acc / (s * s));
    }
    d.is_rs = d.sup_gamma <= opt.rs_tolerance;

    const double h = std::min(opt.fd_step, 0.5 * L);
    const double d_full = 2.0 * big_gamma(model, mu, h) / (h * h);
    const double d_half = 8.0 * big_gamma(model, mu, 0.5 * h) / (h * h);
    d.gamma_second_deriv_at_0 = 2.0 * d_half - d_full;

    double plefka_int = 0.0;
    for (const Atom& at : mu.atoms())
        plefka_int += at.w * (1.0 - at.x * at.x) * (1.0 - at.x * at.x);
    d.plefka_lhs = model.xi_double_prime(0.0) * plefka_int;
    return d;
}

void write_gamma_csv(std::ostream& os, const RsDiagnostics& d)
{
    os << "s,gamma,big_gamma\n";
    os.precision(12);
    for (const GammaPoint& p : d.gamma_curve)
        os << p.s << ',' << p.gamma << ',' << p.big_gamma << '\n';
}

double binary_entropy_rate(double a)
{
    if (std::abs(a) > 1.0)
        throw std::domain_error("entropy argument outside [-1,1]");
    return xlogx(0.5 * (1.0 + a)) + xlogx(0.5 * (1.0 - a));
}

double classical_tap(const MixedModel& model, const DiscreteMeasure& mu)
{
    const double q = mu.moment(2);
    double entropy = 0.0;
    for (const Atom& at : mu.atoms())
        entropy += at.w * binary_entropy_rate(at.x);
    return -entropy + 0.5 * (model.xi(1.0) - model.xi(q) - model.xi_prime(q) * (1.0 - q));
}

PlefkaResult plefka(const DiscreteMeasure& mu, double beta)
{
    PlefkaResult r;
    for (const Atom& at : mu.atoms())
        r.lhs += at.w * (1.0 - at.x * at.x) * (1.0 - at.x * at.x);
    r.lhs *= beta * beta;
    r.holds = r.lhs <= 1.0;
    return r;
}

AtReport at_line_scan(double beta, double h, const AtOptions& opt)
{
    if (!(beta > 0.0) || !(h > 0.0))
        throw std::invalid_argument("AT scan needs beta > 0 and h > 0");
    auto expect = [&](double q, auto f) {
        return gaussian_expectation([&](double y) { return f(y); }, h, beta * std::sqrt(q), 1e-15);
    };
    AtReport r;
    r.beta = beta;
    r.h = h;
    double q = 0.5;
    bool converged = false;
    for (r.iterations = 1; r.iterations <= opt.max_iter; ++r.iterations) {
        const double next = expect(q, [](double y) { return std::tanh(y) * std::tanh(y); });
        const double upd = (1.0 - opt.damping) * q + opt.damping * next;
        if (std::abs(next - q) < opt.tol) {
            q = next;
            converged = true;
            break;
        }
        q = upd;
    }
    if (!converged)
        throw std::runtime_error("AT fixed point did not converge");
    r.q = q;
    r.at_quantity = beta * beta * expect(q, [](double y) { return 2.0 / std::pow(std::cosh(y), 4); });
    r.plefka_lhs = beta * beta * (1.0 - q);
    r.at_holds = r.at_quantity <= 1.0;
    r.plefka_holds = r.plefka_lhs <= 1.0;
    r.at_without_plefka = r.at_holds && !r.plefka_holds;
    return r;
}

void write_at_csv(std::ostream& os, const std::vector<AtReport>& rows)
{
    os << "beta,h,q,at,plefka,at_holds,plefka_holds\n";
    os.precision(12);
    for (const AtReport& r : rows)
        os << r.beta << ',' << r.h << ',' << r.q << ',' << r.at_quantity << ',' << r.plefka_lhs << ','
           << r.at_holds << ',' << r.plefka_holds << '\n';
}

}  // namespace gtap
