#include "gtap/parisi_pde.hpp"

#include "gtap/quadrature.hpp"
#include "level_optimizer.hpp"
#include "pde_access.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace gtap {

double Boundary::value(double x) const
{
    const double ax = std::abs(x);
    const double lc = ax + std::log1p(std::exp(-2.0 * ax));
    return kind == BoundaryKind::original ? lc : lc - a * x;
}

double Boundary::d1(double x) const
{
    return kind == BoundaryKind::original ? std::tanh(x) : std::tanh(x) - a;
}

double Boundary::d2(double x) const
{
    const double e = std::exp(-2.0 * std::abs(x));
    return 4.0 * e / ((1.0 + e) * (1.0 + e));
}

Clock Clock::of(const MixedModel& m)
{
    return {[m](double t) { return m.xi(t); }, [m](double t) { return m.xi_prime(t); },
            [m](double t) { return m.xi_double_prime(t); }};
}

Clock Clock::of(const ShiftedModel& m)
{
    return {[m](double t) { return m.xi(t); }, [m](double t) { return m.xi_prime(t); },
            [m](double t) { return m.xi_double_prime(t); }};
}

namespace {

// Lagrange weights on the nodes -2..3 at offset f in [0,1).
inline void lagrange6(double f, double* c)
{
    const double t0 = f + 2.0, t1 = f + 1.0, t2 = f, t3 = f - 1.0, t4 = f - 2.0, t5 = f - 3.0;
    c[0] = t1 * t2 * t3 * t4 * t5 / -120.0;
    c[1] = t0 * t2 * t3 * t4 * t5 / 24.0;
    c[2] = t0 * t1 * t3 * t4 * t5 / -12.0;
    c[3] = t0 * t1 * t2 * t4 * t5 / 12.0;
    c[4] = t0 * t1 * t2 * t3 * t5 / -24.0;
    c[5] = t0 * t1 * t2 * t3 * t4 / 120.0;
}

const GaussRule& trivial_rule()
{
    static const GaussRule r{{0.0}, {1.0}};
    return r;
}

double largest_node(int order)
{
    const GaussRule& r = gauss_hermite(order);
    return *std::max_element(r.x.begin(), r.x.end());
}

}  // namespace

int PdeAccess::order_for(double sd, int base)
{
    if (sd <= 0.0)
        return 1;
    if (sd >= 0.5)
        return base;
    const int k = static_cast<int>(std::ceil(base * sd / 0.5));
    return std::clamp(k, std::min(10, base), base);
}

const GaussRule& PdeAccess::rule(int order)
{
    return order == 1 ? trivial_rule() : gauss_hermite(order);
}

void PdeAccess::stencils(double sd, double h, const GaussRule& r, std::vector<int>& shift, std::vector<double>& c)
{
    const std::size_t K = r.x.size();
    shift.resize(K);
    c.resize(6 * K);
    for (std::size_t k = 0; k < K; ++k) {
        const double u = sd * r.x[k] / h;
        const double s = std::floor(u);
        shift[k] = static_cast<int>(s);
        lagrange6(u - s, &c[6 * k]);
    }
}

void PdeAccess::fill_ghosts(PDESolution::Layer& L, int n, int pad, double h)
{
    const int lo = pad, hi = pad + n - 1;
    for (int j = 1; j <= pad; ++j) {
        L.f[lo - j] = L.f[lo] - L.fx[lo] * j * h;
        L.fx[lo - j] = L.fx[lo];
        L.fxx[lo - j] = 0.0;
        L.f[hi + j] = L.f[hi] + L.fx[hi] * j * h;
        L.fx[hi + j] = L.fx[hi];
        L.fxx[hi + j] = 0.0;
    }
}

void PdeAccess::step(const GridSpec& g, const PDESolution::Layer& next, double z, double var, int base_order,
                     PDESolution::Layer& out, std::vector<double>* omega, std::vector<double>* dz, StepWork& wk)
{
    const int n = g.n, pad = g.pad;
    const double sd = var > 0.0 ? std::sqrt(var) : 0.0;
    const GaussRule& R = rule(order_for(sd, base_order));
    const int K = static_cast<int>(R.x.size());
    stencils(sd, g.h, R, wk.shift, wk.c);
    if (K * 6 > 0 && (std::abs(wk.shift.front()) + 3 > pad || std::abs(wk.shift.back()) + 3 > pad))
        throw std::logic_error("quadrature stencil exceeds ghost padding");

    wk.F.resize(static_cast<std::size_t>(K) * n);
    wk.Fx.resize(wk.F.size());
    wk.Fxx.resize(wk.F.size());
    for (int k = 0; k < K; ++k) {
        const double* c = &wk.c[6 * k];
        const int off = pad + wk.shift[k] - 2;
        const double* a = next.f.data() + off;
        const double* b = next.fx.data() + off;
        const double* d = next.fxx.data() + off;
        double* F = wk.F.data() + static_cast<std::size_t>(k) * n;
        double* Fx = wk.Fx.data() + static_cast<std::size_t>(k) * n;
        double* Fxx = wk.Fxx.data() + static_cast<std::size_t>(k) * n;
        for (int i = 0; i < n; ++i) {
            F[i] = c[0] * a[i] + c[1] * a[i + 1] + c[2] * a[i + 2] + c[3] * a[i + 3] + c[4] * a[i + 4] + c[5] * a[i + 5];
            Fx[i] = c[0] * b[i] + c[1] * b[i + 1] + c[2] * b[i + 2] + c[3] * b[i + 3] + c[4] * b[i + 4] + c[5] * b[i + 5];
            Fxx[i] = c[0] * d[i] + c[1] * d[i + 1] + c[2] * d[i + 2] + c[3] * d[i + 3] + c[4] * d[i + 4] + c[5] * d[i + 5];
        }
    }

    const std::size_t total = static_cast<std::size_t>(n + 2 * pad);
    out.f.resize(total);
    out.fx.resize(total);
    out.fxx.resize(total);
    if (omega)
        omega->resize(static_cast<std::size_t>(K) * n);
    if (dz)
        dz->resize(n);
    const bool tilt = z > 0.0;
    const std::size_t un = static_cast<std::size_t>(n);
    for (auto* v : {&wk.M, &wk.S, &wk.mF, &wk.mF2, &wk.mFx, &wk.mFx2, &wk.mFxx})
        v->assign(un, 0.0);
    if (tilt) {
        std::fill(wk.M.begin(), wk.M.end(), -std::numeric_limits<double>::infinity());
        for (int k = 0; k < K; ++k) {
            const double lw = std::log(R.w[k]);
            const double* F = wk.F.data() + k * un;
            for (int i = 0; i < n; ++i)
                wk.M[i] = std::max(wk.M[i], lw + z * F[i]);
        }
    }
    double* om = omega ? omega->data() : nullptr;
    for (int k = 0; k < K; ++k) {
        const double lw = std::log(R.w[k]);
        const double* F = wk.F.data() + k * un;
        const double* Fx = wk.Fx.data() + k * un;
        const double* Fxx = wk.Fxx.data() + k * un;
        double* ok = om ? om + k * un : nullptr;
        for (int i = 0; i < n; ++i) {
            const double e = tilt ? std::exp(lw + z * F[i] - wk.M[i]) : R.w[k];
            wk.S[i] += e;
            wk.mF[i] += e * F[i];
            wk.mF2[i] += e * F[i] * F[i];
            wk.mFx[i] += e * Fx[i];
            wk.mFx2[i] += e * Fx[i] * Fx[i];
            wk.mFxx[i] += e * Fxx[i];
            if (ok)
                ok[i] = e;
        }
    }
    for (int i = 0; i < n; ++i) {
        const double inv = 1.0 / wk.S[i];
        const double mF = wk.mF[i] * inv, mF2 = wk.mF2[i] * inv, mFx = wk.mFx[i] * inv;
        const double mFx2 = wk.mFx2[i] * inv, mFxx = wk.mFxx[i] * inv;
        const double phi = tilt ? (wk.M[i] + std::log(wk.S[i])) / z : mF;
        out.f[pad + i] = phi;
        out.fx[pad + i] = mFx;
        out.fxx[pad + i] = mFxx + z * (mFx2 - mFx * mFx);
        if (dz)
            (*dz)[i] = z > 1e-7 ? (mF - phi) / z : 0.5 * (mF2 - mF * mF);
        wk.S[i] = inv;
    }
    if (om)
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < n; ++i)
                om[k * un + i] *= wk.S[i];
    fill_ghosts(out, n, pad, g.h);
}

std::vector<PdeAccess::Step> PdeAccess::schedule(const Clock& clock, const OrderParameter& zeta, double t_start,
                                                 double max_sd)
{
    std::vector<Step> steps;
    const auto& T = zeta.nodes();
    const auto& z = zeta.levels();
    for (std::size_t p = 0; p < z.size(); ++p) {
        const double a = std::max(T[p], t_start);
        const double b = T[p + 1];
        if (b <= a)
            continue;
        const double var = std::max(0.0, clock.d(b) - clock.d(a));
        const int nsub = var > 0.0 ? std::max(1, static_cast<int>(std::ceil(var / (max_sd * max_sd) - 1e-12))) : 1;
        for (int s = 0; s < nsub; ++s)
            steps.push_back({z[p], var / nsub, p});
    }
    return steps;
}

PDESolution solve(const Clock& clock, const OrderParameter& zeta, const Boundary& boundary, const SolverConfig& cfg,
                  bool keep_transitions)
{
    if (!(cfg.grid_step > 0.0) || cfg.gh_order < 2 || cfg.gh_order > 512 || !(cfg.max_substep_sd > 0.0))
        throw std::invalid_argument("invalid solver configuration");
    PDESolution sol;
    PdeAccess::init(sol, clock, zeta, boundary, cfg);
    PdeAccess::run(sol, keep_transitions);
    return sol;
}

void PdeAccess::init(PDESolution& sol, const Clock& clock, const OrderParameter& zeta, const Boundary& boundary,
                     const SolverConfig& cfg)
{
    sol.zeta_ = zeta;
    sol.boundary_ = boundary;
    sol.clock_ = clock;
    sol.cfg_ = cfg;
    sol.h_ = cfg.grid_step;
    const double total_var = std::max(0.0, clock.d(zeta.hi()) - clock.d(zeta.lo()));
    const double X = cfg.x_max > 0.0 ? cfg.x_max : 6.0 + 4.0 * std::sqrt(total_var) + cfg.field_margin;
    sol.half_ = static_cast<int>(std::ceil(X / sol.h_ - 1e-9));
    sol.pad_ = static_cast<int>(std::ceil(cfg.max_substep_sd * largest_node(cfg.gh_order) / sol.h_)) + 4;
}

void PdeAccess::run(PDESolution& sol, bool keep_transitions)
{
    const std::vector<Step> steps = schedule(sol.clock_, sol.zeta_, sol.zeta_.lo(), sol.cfg_.max_substep_sd);
    const std::size_t J = steps.size();
    const GridSpec g = grid_of(sol);
    sol.layers_.assign(J + 1, {});
    sol.step_level_.resize(J);
    sol.step_var_.resize(J);
    sol.step_cell_.resize(J);
    for (std::size_t j = 0; j < J; ++j) {
        sol.step_level_[j] = steps[j].level;
        sol.step_var_[j] = steps[j].var;
        sol.step_cell_[j] = steps[j].cell;
    }
    boundary_layer(sol, sol.layers_[J]);
    if (keep_transitions) {
        sol.omega_.assign(J, {});
        sol.dlevel_.assign(J, {});
    } else {
        sol.omega_.clear();
        sol.dlevel_.clear();
    }
    StepWork wk;
    for (std::size_t j = J; j-- > 0;)
        step(g, sol.layers_[j + 1], steps[j].level, steps[j].var, sol.cfg_.gh_order, sol.layers_[j],
             keep_transitions ? &sol.omega_[j] : nullptr, keep_transitions ? &sol.dlevel_[j] : nullptr, wk);

    const std::size_t P = sol.zeta_.nodes().size();
    sol.node_layer_.assign(P, 0);
    std::size_t j = 0;
    for (std::size_t p = 0; p < P; ++p) {
        while (j < J && steps[j].cell < p)
            ++j;
        sol.node_layer_[p] = j;
    }
    sol.node_layer_[P - 1] = J;

    const auto& L0 = sol.layers_[0];
    const double edge = std::max(std::abs(L0.fxx[sol.pad_]), std::abs(L0.fxx[sol.pad_ + g.n - 1]));
    if (J > 0 && edge > sol.cfg_.edge_curvature_tol)
        throw std::runtime_error("grid too small: boundary influence reaches the grid edge");
}

PdeAccess::GridSpec PdeAccess::grid_of(const PDESolution& sol)
{
    return {2 * sol.half_ + 1, sol.pad_, sol.h_};
}

void PdeAccess::boundary_layer(const PDESolution& sol, PDESolution::Layer& L)
{
    const int total = 2 * sol.half_ + 1 + 2 * sol.pad_;
    L.f.resize(total);
    L.fx.resize(total);
    L.fxx.resize(total);
    for (int k = 0; k < total; ++k) {
        const double x = (k - sol.pad_ - sol.half_) * sol.h_;
        L.f[k] = sol.boundary_.value(x);
        L.fx[k] = sol.boundary_.d1(x);
        L.fxx[k] = sol.boundary_.d2(x);
    }
}

PDESolution solve(const MixedModel& model, const OrderParameter& zeta, const Boundary& boundary,
                  const SolverConfig& cfg, bool keep_transitions)
{
    if (zeta.lo() < 0.0 || zeta.hi() > 1.0 + 1e-12)
        throw std::invalid_argument("order parameter must live inside [0,1]");
    return solve(Clock::of(model), zeta, boundary, cfg, keep_transitions);
}

PDESolution solve(const ShiftedModel& model, const OrderParameter& zeta, const Boundary& boundary,
                  const SolverConfig& cfg, bool keep_transitions)
{
    if (zeta.lo() < 0.0 || zeta.hi() > model.length() + 1e-12)
        throw std::invalid_argument("order parameter must live inside [0,1-q]");
    return solve(Clock::of(model), zeta, boundary, cfg, keep_transitions);
}

std::span<const double> PDESolution::values(std::size_t p) const
{
    return {node_layer(p).f.data() + pad_, static_cast<std::size_t>(grid_size())};
}

std::span<const double> PDESolution::derivative(std::size_t p) const
{
    return {node_layer(p).fx.data() + pad_, static_cast<std::size_t>(grid_size())};
}

std::span<const double> PDESolution::second_derivative(std::size_t p) const
{
    return {node_layer(p).fxx.data() + pad_, static_cast<std::size_t>(grid_size())};
}

double PDESolution::interp(const std::vector<double>& a, double x) const
{
    if (!(std::abs(x) <= x_max() * (1.0 + 1e-14)))
        throw std::out_of_range("evaluation point beyond X_max: " + std::to_string(x));
    const double u = x / h_ + half_;
    const double s = std::floor(u);
    double c[6];
    lagrange6(u - s, c);
    const double* v = a.data() + pad_ + static_cast<int>(s) - 2;
    return c[0] * v[0] + c[1] * v[1] + c[2] * v[2] + c[3] * v[3] + c[4] * v[4] + c[5] * v[5];
}

double PDESolution::phi_node(std::size_t p, double x) const { return interp(node_layer(p).f, x); }
double PDESolution::phi_x_node(std::size_t p, double x) const { return interp(node_layer(p).fx, x); }
double PDESolution::phi_xx_node(std::size_t p, double x) const { return interp(node_layer(p).fxx, x); }

namespace {

std::size_t find_node(const OrderParameter& z, double t)
{
    const auto& T = z.nodes();
    for (std::size_t p = 0; p < T.size(); ++p)
        if (std::abs(T[p] - t) <= 1e-12)
            return p;
    return T.size();
}

}  // namespace

PDESolution::Layer PDESolution::layer_at(double t) const
{
    if (t < t0() - 1e-12 || t > t1() + 1e-12)
        throw std::out_of_range("time outside the solution interval");
    const auto& T = zeta_.nodes();
    std::size_t p = static_cast<std::size_t>(std::upper_bound(T.begin(), T.end(), t) - T.begin()) - 1;
    const std::vector<PdeAccess::Step> steps =
        PdeAccess::schedule(clock_, OrderParameter({t, T[p + 1]}, {zeta_.levels()[p]}), t, cfg_.max_substep_sd);
    const PdeAccess::GridSpec g = PdeAccess::grid_of(*this);
    PdeAccess::StepWork wk;
    Layer cur = node_layer(p + 1), nxt;
    for (std::size_t j = steps.size(); j-- > 0;) {
        PdeAccess::step(g, cur, steps[j].level, steps[j].var, cfg_.gh_order, nxt, nullptr, nullptr, wk);
        std::swap(cur, nxt);
    }
    return cur;
}

double PDESolution::phi(double t, double x) const
{
    const std::size_t p = find_node(zeta_, t);
    return p < node_count() ? phi_node(p, x) : interp(layer_at(t).f, x);
}

double PDESolution::phi_x(double t, double x) const
{
    const std::size_t p = find_node(zeta_, t);
    return p < node_count() ? phi_x_node(p, x) : interp(layer_at(t).fx, x);
}

double PDESolution::phi_xx(double t, double x) const
{
    const std::size_t p = find_node(zeta_, t);
    return p < node_count() ? phi_xx_node(p, x) : interp(layer_at(t).fxx, x);
}

double PDESolution::solve_phi_x(std::size_t p, double target, double tol) const
{
    const auto fx = derivative(p);
    const std::size_t n = fx.size();
    if (!(fx[0] < target && target < fx[n - 1]))
        throw std::runtime_error("bisection bracket failure (grid too small)");
    const std::size_t i = static_cast<std::size_t>(std::upper_bound(fx.begin(), fx.end(), target) - fx.begin()) - 1;
    double lo = grid_x(static_cast<int>(i)), hi = grid_x(static_cast<int>(i) + 1);
    const auto& a = node_layer(p).fx;
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (interp(a, mid) < target)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

double PDESolution::zeta_clock_integral() const
{
    return zeta_.integrate(clock_.d);
}

double PDESolution::zeta_theta_integral() const
{
    return zeta_.integrate([this](double s) { return s * clock_.d(s) - clock_.f(s); });
}

PointSensitivity point_sensitivity(const PDESolution& sol, std::span<const double> xs, std::span<const double> ws)
{
    return PdeAccess::sensitivity(sol, xs, ws);
}

PointSensitivity PdeAccess::sensitivity(const PDESolution& sol, std::span<const double> xs,
                                        std::span<const double> ws)
{
    if (!sol.keeps_transitions() && !sol.step_level_.empty())
        throw std::logic_error("point sensitivity needs a solution with stored transitions");
    if (xs.size() != ws.size())
        throw std::invalid_argument("points and weights differ in length");
    const GridSpec g = grid_of(sol);
    const int n = g.n;
    PointSensitivity out;
    out.dlevels.assign(sol.zeta_.cells(), 0.0);
    out.node_u2.assign(sol.node_count(), 0.0);
    out.node_uxx2.assign(sol.node_count(), 0.0);

    std::vector<double> rho(n, 0.0), next(n, 0.0);
    for (std::size_t k = 0; k < xs.size(); ++k) {
        out.value += ws[k] * sol.phi_node(0, xs[k]);
        const double u = xs[k] / g.h + sol.half_;
        const double s = std::floor(u);
        double c[6];
        lagrange6(u - s, c);
        for (int m = 0; m < 6; ++m)
            rho[std::clamp(static_cast<int>(s) - 2 + m, 0, n - 1)] += ws[k] * c[m];
    }

    const std::size_t J = sol.step_level_.size();
    std::size_t node = 0;
    auto record_nodes = [&](std::size_t layer) {
        const auto& L = sol.layers_[layer];
        while (node < sol.node_count() && sol.node_layer_[node] == layer) {
            double u2 = 0.0, uxx2 = 0.0;
            for (int i = 0; i < n; ++i) {
                const double fx = L.fx[g.pad + i], fxx = L.fxx[g.pad + i];
                u2 += rho[i] * fx * fx;
                uxx2 += rho[i] * fxx * fxx;
            }
            out.node_u2[node] = u2;
            out.node_uxx2[node] = uxx2;
            ++node;
        }
    };

    std::vector<int> shift;
    std::vector<double> c;
    for (std::size_t j = 0; j < J; ++j) {
        record_nodes(j);
        const auto& D = sol.dlevel_[j];
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
            acc += rho[i] * D[i];
        out.dlevels[sol.step_cell_[j]] += acc;

        const double sd = sol.step_var_[j] > 0.0 ? std::sqrt(sol.step_var_[j]) : 0.0;
        const GaussRule& R = rule(order_for(sd, sol.cfg_.gh_order));
        const int K = static_cast<int>(R.x.size());
        stencils(sd, g.h, R, shift, c);
        const double* om = sol.omega_[j].data();
        std::fill(next.begin(), next.end(), 0.0);
        for (int k = 0; k < K; ++k) {
            const double* w = om + static_cast<std::size_t>(k) * n;
            const double* ck = &c[6 * k];
            const int lo = std::clamp(2 - shift[k], 0, n);
            const int hi = std::clamp(n - 3 - shift[k], lo, n);
            for (int i = 0; i < lo; ++i)
                for (int m = 0; m < 6; ++m)
                    next[std::clamp(i + shift[k] - 2 + m, 0, n - 1)] += rho[i] * w[i] * ck[m];
            for (int m = 0; m < 6; ++m) {
                const double cm = ck[m];
                double* dst = next.data() + shift[k] - 2 + m;
                for (int i = lo; i < hi; ++i)
                    dst[i] += rho[i] * w[i] * cm;
            }
            for (int i = hi; i < n; ++i)
                for (int m = 0; m < 6; ++m)
                    next[std::clamp(i + shift[k] - 2 + m, 0, n - 1)] += rho[i] * w[i] * ck[m];
        }
        std::swap(rho, next);
    }
    record_nodes(J);
    return out;
}

double unify(const PDESolution& original, double a, double x)
{
    if (original.boundary().kind != BoundaryKind::original)
        throw std::invalid_argument("unify expects an original-boundary solution");
    const double I = original.zeta_clock_integral();
    return original.phi_node(0, x - a * I) - a * x + 0.5 * a * a * I;
}

double unify(const PDESolution& band, const PDESolution& original, double x)
{
    if (band.boundary().kind != BoundaryKind::band)
        throw std::invalid_argument("unify expects a band-boundary solution");
    const OrderParameter shifted = original.zeta().translated(original.t0());
    if (d1(shifted, band.zeta()) > 1e-12 || shifted.cells() != band.zeta().cells())
        throw std::invalid_argument("mismatched order parameters in unify");
    return unify(original, band.boundary().a, x);
}

ControlCurves simulate_control(const PDESolution& sol, double x0, std::size_t n_paths, int n_steps,
                               std::uint64_t seed)
{
    return PdeAccess::control(sol, x0, n_paths, n_steps, seed);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Welford {
    double sum = 0.0, sum2 = 0.0;
    void add(double v)
    {
        sum += v;
        sum2 += v * v;
    }
    double mean(std::size_t n) const { return sum / static_cast<double>(n); }
    double se(std::size_t n) const
    {
        if (n < 2)
            return 0.0;
        const double m = mean(n);
        const double var = std::max(0.0, (sum2 - n * m * m) / static_cast<double>(n - 1));
        return std::sqrt(var / static_cast<double>(n));
    }
};

}  // namespace

ControlCurves PdeAccess::control(const PDESolution& sol, double x0, std::size_t n_paths, int n_steps,
                                 std::uint64_t seed)
{
    if (n_steps < 1 || n_paths < 2)
        throw std::invalid_argument("simulation needs at least one step and two paths");
    const double t0 = sol.t0(), t1 = sol.t1();
    std::vector<double> times;
    for (int k = 0; k <= n_steps; ++k)
        times.push_back(t0 + (t1 - t0) * k / n_steps);
    for (double t : sol.zeta_.nodes())
        times.push_back(t);
    std::sort(times.begin(), times.end());
    std::vector<double> uniq;
    for (double t : times)
        if (uniq.empty() || t - uniq.back() > 1e-12)
            uniq.push_back(t);
    uniq.back() = t1;
    times = std::move(uniq);
    const std::size_t T = times.size() - 1;

    std::vector<double> dvar(T), level(T);
    for (std::size_t k = 0; k < T; ++k) {
        dvar[k] = std::max(0.0, sol.clock_.d(times[k + 1]) - sol.clock_.d(times[k]));
        level[k] = sol.zeta_(times[k]);
        if (dvar[k] > 0.05)
            throw std::invalid_argument("SDE step too coarse for the drift");
    }

    const GridSpec g = grid_of(sol);
    const int n = g.n;
    std::vector<float> slx((T + 1) * static_cast<std::size_t>(n)), slxx(slx.size());
    auto store = [&](std::size_t k, const PDESolution::Layer& L) {
        for (int i = 0; i < n; ++i) {
            slx[k * n + i] = static_cast<float>(L.fx[g.pad + i]);
            slxx[k * n + i] = static_cast<float>(L.fxx[g.pad + i]);
        }
    };
    std::vector<std::size_t> node_time(sol.node_count());
    for (std::size_t p = 0; p < sol.node_count(); ++p) {
        const double tp = sol.node(p);
        node_time[p] = static_cast<std::size_t>(
            std::min_element(times.begin(), times.end(),
                             [tp](double a, double b) { return std::abs(a - tp) < std::abs(b - tp); }) -
            times.begin());
    }
    {
        PDESolution::Layer cur = sol.layers_.back(), nxt;
        store(T, cur);
        StepWork wk;
        std::size_t node = sol.node_count() - 1;
        for (std::size_t k = T; k-- > 0;) {
            const double sd = std::sqrt(dvar[k]);
            const int nsub = std::max(1, static_cast<int>(std::ceil(sd * sd / (sol.cfg_.max_substep_sd * sol.cfg_.max_substep_sd) - 1e-12)));
            for (int s = 0; s < nsub; ++s) {
                step(g, cur, level[k], dvar[k] / nsub, sol.cfg_.gh_order, nxt, nullptr, nullptr, wk);
                std::swap(cur, nxt);
            }
            while (node > 0 && node_time[node - 1] == k) {
                --node;
                cur = sol.node_layer(node);
            }
            store(k, cur);
        }
    }

    const double xmax = sol.x_max();
    auto slice_u = [&](std::size_t k, double x) {
        const double u = x / g.h + sol.half_;
        int i = static_cast<int>(std::floor(u));
        i = std::clamp(i, 0, n - 2);
        const double f = u - i;
        const float* a = &slx[k * n + i];
        const float* d = &slxx[k * n + i];
        const double f2 = f * f, f3 = f2 * f;
        const double h00 = 2 * f3 - 3 * f2 + 1, h10 = f3 - 2 * f2 + f, h01 = -2 * f3 + 3 * f2, h11 = f3 - f2;
        const double ux = h00 * a[0] + h10 * g.h * d[0] + h01 * a[1] + h11 * g.h * d[1];
        const double uxx = (1.0 - f) * d[0] + f * d[1];
        return std::pair<double, double>(ux, uxx);
    };

    const std::pair<double, double> start(sol.phi_x_node(0, x0), sol.phi_xx_node(0, x0));
    const std::size_t pairs = (n_paths + 1) / 2;
    std::vector<Welford> acc_u2(T + 1), acc_uxx2(T + 1);
    Welford jump;
    std::vector<double> jump_w(sol.node_count(), 0.0);
    {
        const auto& z = sol.zeta_.levels();
        double prev = 0.0;
        for (std::size_t p = 0; p + 1 < sol.node_count(); ++p) {
            jump_w[p] = z[p] - prev;
            prev = z[p];
        }
        jump_w.back() = 1.0 - prev;
    }
    std::vector<double> node_pair(sol.node_count());
    constexpr std::size_t chunk = 1024;
    std::vector<double> u2a(T + 1), uxxa(T + 1);
    for (std::size_t c0 = 0; c0 < pairs; c0 += chunk) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(c0 / chunk + 1)));
        std::normal_distribution<double> normal;
        const std::size_t c1 = std::min(pairs, c0 + chunk);
        for (std::size_t pth = c0; pth < c1; ++pth) {
            double X[2] = {x0, x0};
            std::fill(u2a.begin(), u2a.end(), 0.0);
            std::fill(uxxa.begin(), uxxa.end(), 0.0);
            for (std::size_t k = 0; k < T; ++k) {
                const double Z = normal(rng);
                for (int s = 0; s < 2; ++s) {
                    if (!(std::abs(X[s]) < xmax))
                        throw std::runtime_error("SDE path escaped the grid");
                    const auto [u, uxx] = k == 0 ? start : slice_u(k, X[s]);
                    u2a[k] += 0.5 * u * u;
                    uxxa[k] += 0.5 * uxx * uxx;
                    X[s] += level[k] * dvar[k] * u + (s == 0 ? 1.0 : -1.0) * std::sqrt(dvar[k]) * Z;
                }
            }
            for (int s = 0; s < 2; ++s) {
                const double u = sol.boundary_.d1(X[s]), uxx = sol.boundary_.d2(X[s]);
                u2a[T] += 0.5 * u * u;
                uxxa[T] += 0.5 * uxx * uxx;
            }
            double js = 0.0;
            for (std::size_t k = 0; k <= T; ++k) {
                acc_u2[k].add(u2a[k]);
                acc_uxx2[k].add(uxxa[k]);
            }
            for (std::size_t p = 0; p < sol.node_count(); ++p)
                js += jump_w[p] * u2a[node_time[p]];
            jump.add(js);
        }
    }

    ControlCurves out;
    out.times = times;
    out.paths = 2 * pairs;
    for (std::size_t k = 0; k <= T; ++k) {
        out.u2_mean.push_back(acc_u2[k].mean(pairs));
        out.u2_se.push_back(acc_u2[k].se(pairs));
        out.uxx2_mean.push_back(acc_uxx2[k].mean(pairs));
        out.uxx2_se.push_back(acc_uxx2[k].se(pairs));
    }
    for (std::size_t p = 0; p < sol.node_count(); ++p) {
        out.node_u2_mean.push_back(out.u2_mean[node_time[p]]);
        out.node_u2_se.push_back(out.u2_se[node_time[p]]);
    }
    out.jump_sum_mean = jump.mean(pairs);
    out.jump_sum_se = jump.se(pairs);
    return out;
}

double parisi_functional(const MixedModel& model, const OrderParameter& zeta, const SolverConfig& cfg)
{
    if (std::abs(zeta.lo()) > 1e-12 || std::abs(zeta.hi() - 1.0) > 1e-12)
        throw std::invalid_argument("the Parisi functional takes an order parameter on [0,1]");
    SolverConfig c = cfg;
    c.field_margin = std::max(c.field_margin, std::abs(model.external_field()));
    const PDESolution sol = solve(model, zeta, Boundary::original(), c);
    return sol.phi_node(0, model.external_field()) - 0.5 * sol.zeta_theta_integral();
}

namespace {

struct ParisiObjective {
    const MixedModel* model_ptr;
    const MixedModel& model() const { return *model_ptr; }
    SolverConfig cfg;
    std::vector<double> nodes;

    double operator()(std::span<const double> levels, std::span<double> grad, PointSensitivity* out = nullptr) const
    {
        const OrderParameter z(nodes, {levels.begin(), levels.end()});
        const PDESolution sol = solve(model(), z, Boundary::original(), cfg, true);
        const double x[1] = {model().external_field()};
        const double w[1] = {1.0};
        PointSensitivity ps = point_sensitivity(sol, x, w);
        for (std::size_t p = 0; p < levels.size(); ++p)
            grad[p] = ps.dlevels[p] - 0.5 * (model().theta(nodes[p + 1]) - model().theta(nodes[p]));
        const double value = ps.value - 0.5 * sol.zeta_theta_integral();
        if (out)
            *out = std::move(ps);
        return value;
    }

    std::vector<double> metric() const
    {
        std::vector<double> m(nodes.size() - 1);
        for (std::size_t p = 0; p + 1 < nodes.size(); ++p)
            m[p] = std::max(model().xi_prime(nodes[p + 1]) - model().xi_prime(nodes[p]), 1e-12 * (nodes[p + 1] - nodes[p]));
        return m;
    }

    detail::SpgResult minimize(std::vector<double> x0) const
    {
        const std::vector<double> m = metric();
        return detail::spg_minimize([this](std::span<const double> x, std::span<double> g) { return (*this)(x, g); },
                                    std::move(x0), m,
                                    [](std::span<double> x, std::span<const double> w) { detail::project_levels(x, w); });
    }
};

// Merge runs of equal levels, then adjacent groups of least weighted spread, until at most r groups remain.
void reduce_cells(std::vector<double>& nodes, std::vector<double>& levels, std::vector<double> weight, std::size_t r)
{
    std::vector<double> n{nodes.front()}, z{levels.front()}, w{weight.front()};
    for (std::size_t p = 1; p < levels.size(); ++p) {
        if (std::abs(levels[p] - z.back()) <= 1e-7) {
            const double tw = w.back() + weight[p];
            z.back() = tw > 0.0 ? (z.back() * w.back() + levels[p] * weight[p]) / tw : z.back();
            w.back() = tw;
            continue;
        }
        n.push_back(nodes[p]);
        z.push_back(levels[p]);
        w.push_back(weight[p]);
    }
    n.push_back(nodes.back());
    while (z.size() > r) {
        std::size_t best = 0;
        double cost = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p + 1 < z.size(); ++p) {
            const double dz = z[p + 1] - z[p];
            const double c = w[p] * w[p + 1] / (w[p] + w[p + 1]) * dz * dz;
            if (c < cost) {
                cost = c;
                best = p;
            }
        }
        const double tw = w[best] + w[best + 1];
        z[best] = (z[best] * w[best] + z[best + 1] * w[best + 1]) / tw;
        w[best] = tw;
        z.erase(z.begin() + static_cast<std::ptrdiff_t>(best) + 1);
        w.erase(w.begin() + static_cast<std::ptrdiff_t>(best) + 1);
        n.erase(n.begin() + static_cast<std::ptrdiff_t>(best) + 1);
    }
    nodes = std::move(n);
    levels = std::move(z);
}

}  // namespace

ParisiMeasureResult parisi_measure(const MixedModel& model, int r_atoms, const SolverConfig& cfg)
{
    if (r_atoms < 1)
        throw std::invalid_argument("r_atoms must be at least 1");
    SolverConfig c = cfg;
    c.field_margin = std::max(c.field_margin, std::abs(model.external_field()));
    ParisiMeasureResult out;
    if (model.is_zero()) {
        out.zeta = OrderParameter::constant(0.0, 1.0, 1.0);
        out.value = parisi_functional(model, out.zeta, c);
        out.converged = true;
        return out;
    }

    const int fine = std::max(32, 2 * r_atoms);
    ParisiObjective obj{&model, c, detail::partition_nodes(0.0, 1.0, fine)};
    std::vector<double> x0(obj.nodes.size() - 1);
    for (std::size_t p = 0; p < x0.size(); ++p)
        x0[p] = (p + 0.5) / x0.size();
    detail::SpgResult res = obj.minimize(x0);
    int iterations = res.iterations;

    std::vector<double> nodes = obj.nodes, levels = res.x;
    reduce_cells(nodes, levels, obj.metric(), static_cast<std::size_t>(r_atoms));
    obj.nodes = nodes;
    res = obj.minimize(levels);
    iterations += res.iterations;

    double step = 0.5 / fine;
    std::vector<double> g(res.x.size());
    for (int round = 0; round < 40 && step > 1e-4 && obj.nodes.size() > 2; ++round) {
        bool improved = false;
        for (std::size_t p = 1; p + 1 < obj.nodes.size(); ++p) {
            for (double dir : {-1.0, 1.0}) {
                ParisiObjective trial = obj;
                const double t = obj.nodes[p] + dir * step;
                if (t <= obj.nodes[p - 1] + 1e-6 || t >= obj.nodes[p + 1] - 1e-6)
                    continue;
                trial.nodes[p] = t;
                const double v = trial(res.x, g);
                if (v < res.value - 1e-13) {
                    obj = trial;
                    res = obj.minimize(res.x);
                    iterations += res.iterations;
                    improved = true;
                    break;
                }
            }
        }
        if (!improved)
            step *= 0.5;
    }

    // prefer fewer atoms when the value is unchanged
    for (std::size_t p = 0; p + 1 < res.x.size();) {
        ParisiObjective trial = obj;
        std::vector<double> lv = res.x;
        const double merged = 0.5 * (lv[p] + lv[p + 1]);
        lv[p] = merged;
        lv.erase(lv.begin() + static_cast<std::ptrdiff_t>(p) + 1);
        trial.nodes.erase(trial.nodes.begin() + static_cast<std::ptrdiff_t>(p) + 1);
        std::vector<double> gg(lv.size());
        const double v = trial(lv, gg);
        if (std::abs(v - res.value) < 1e-9) {
            obj = trial;
            res.x = lv;
            res.grad = gg;
            res.value = std::min(v, res.value);
        } else {
            ++p;
        }
    }

    std::vector<double> grad(res.x.size());
    PointSensitivity ps;
    out.value = obj(res.x, grad, &ps);
    out.zeta = OrderParameter(obj.nodes, res.x);
    std::vector<double> trial = res.x;
    const std::vector<double> m = obj.metric();
    double pg = 0.0;
    for (std::size_t p = 0; p < trial.size(); ++p)
        trial[p] -= grad[p] / m[p];
    detail::project_levels(trial, m);
    for (std::size_t p = 0; p < trial.size(); ++p)
        pg = std::max(pg, std::abs(trial[p] - res.x[p]));
    out.projected_gradient = pg;
    out.iterations = iterations;
    out.converged = res.converged || pg < 1e-6;
    const DiscreteMeasure mu = out.zeta.to_measure();
    for (const Atom& a : mu.atoms()) {
        std::size_t p = 0;
        while (p + 1 < obj.nodes.size() && std::abs(obj.nodes[p] - a.x) > 1e-12)
            ++p;
        out.node_residual.push_back(ps.node_u2[p] - a.x);
    }
    return out;
}

}  // namespace gtap
