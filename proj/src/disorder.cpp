#include "gtap/disorder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>

namespace gtap {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::size_t ipow(std::size_t b, std::size_t e)
{
    std::size_t r = 1;
    while (e--)
        r *= b;
    return r;
}

// sum_{i_1..i_p} g_{i_1..i_p} m_{i_1} ... m_{i_p}, contracting the last index first
double contract(std::span<const double> g, std::span<const double> m, std::size_t p)
{
    const std::size_t n = m.size();
    std::vector<double> cur(g.begin(), g.end()), next;
    for (std::size_t level = 0; level < p; ++level) {
        next.assign(cur.size() / n, 0.0);
        for (std::size_t i = 0; i < next.size(); ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                s += cur[i * n + k] * m[k];
            next[i] = s;
        }
        cur.swap(next);
    }
    return cur[0];
}

void contract_gradient(std::span<const double> g, std::span<const double> m, std::size_t p, double scale,
                       std::vector<double>& grad)
{
    const std::size_t n = m.size();
    std::vector<std::size_t> idx(p, 0);
    std::vector<double> prefix(p + 1), suffix(p + 1);
    for (std::size_t e = 0; e < g.size(); ++e) {
        if (g[e] != 0.0) {
            prefix[0] = 1.0;
            for (std::size_t j = 0; j < p; ++j)
                prefix[j + 1] = prefix[j] * m[idx[j]];
            suffix[p] = 1.0;
            for (std::size_t j = p; j-- > 0;)
                suffix[j] = suffix[j + 1] * m[idx[j]];
            for (std::size_t j = 0; j < p; ++j)
                grad[idx[j]] += scale * g[e] * prefix[j] * suffix[j + 1];
        }
        for (std::size_t j = p; j-- > 0;) {
            if (++idx[j] < n)
                break;
            idx[j] = 0;
        }
    }
}

}  // namespace

DisorderSample::DisorderSample(int n_spins, MixedModel model, std::uint64_t seed)
    : n_(n_spins), model_(std::move(model)), seed_(seed)
{
    if (n_spins < 1 || n_spins > max_spins)
        throw std::invalid_argument("number of spins must lie in [1, " + std::to_string(max_spins) + "]");
    std::mt19937_64 rng(splitmix64(seed));
    std::normal_distribution<double> gauss(0.0, 1.0);
    tensors_.resize(model_.max_degree());
    for (std::size_t p = 1; p <= model_.max_degree(); ++p) {
        if (model_.coeff(p) == 0.0)
            continue;
        const std::size_t size = ipow(static_cast<std::size_t>(n_), p);
        if (size > (std::size_t{1} << 24))
            throw std::invalid_argument("coupling tensor too large");
        auto& t = tensors_[p - 1];
        t.resize(size);
        for (double& x : t)
            x = gauss(rng);
    }
}

double DisorderSample::energy(std::span<const double> m) const
{
    if (m.size() != static_cast<std::size_t>(n_))
        throw std::invalid_argument("configuration size differs from the sample");
    double e = 0.0;
    for (std::size_t p = 1; p <= tensors_.size(); ++p) {
        if (tensors_[p - 1].empty())
            continue;
        const double scale = std::sqrt(model_.coeff(p)) / std::pow(static_cast<double>(n_), 0.5 * (p - 1.0));
        e += scale * contract(tensors_[p - 1], m, p);
    }
    if (model_.external_field() != 0.0)
        for (double x : m)
            e += model_.external_field() * x;
    return e;
}

std::vector<double> DisorderSample::gradient(std::span<const double> m) const
{
    if (m.size() != static_cast<std::size_t>(n_))
        throw std::invalid_argument("configuration size differs from the sample");
    std::vector<double> g(n_, model_.external_field());
    for (std::size_t p = 1; p <= tensors_.size(); ++p) {
        if (tensors_[p - 1].empty())
            continue;
        const double scale = std::sqrt(model_.coeff(p)) / std::pow(static_cast<double>(n_), 0.5 * (p - 1.0));
        contract_gradient(tensors_[p - 1], m, p, scale, g);
    }
    return g;
}

DisorderSample sample(int n_spins, const MixedModel& model, std::uint64_t seed)
{
    return DisorderSample(n_spins, model, seed);
}

double energy(const DisorderSample& s, std::span<const double> m) { return s.energy(m); }

std::vector<double> gradient(const DisorderSample& s, std::span<const double> m) { return s.gradient(m); }

Enumeration::Enumeration(const DisorderSample& s) : n_(s.size())
{
    const std::size_t count = std::size_t{1} << n_;
    energies_.resize(count);
    std::vector<double> sigma(n_);
    for (std::size_t c = 0; c < count; ++c) {
        for (int i = 0; i < n_; ++i)
            sigma[i] = spin(c, i);
        energies_[c] = s.energy(sigma);
    }
    max_ = *std::max_element(energies_.begin(), energies_.end());
    weights_.resize(count);
    for (std::size_t c = 0; c < count; ++c)
        weights_[c] = std::exp(energies_[c] - max_);
}

double Enumeration::overlap(std::size_t a, std::size_t b) const
{
    return static_cast<double>(n_ - 2 * std::popcount(a ^ b)) / n_;
}

double free_energy(const Enumeration& e)
{
    double total = 0.0;
    for (std::size_t c = 0; c < e.count(); ++c)
        total += e.weight(c);
    return (e.max_energy() + std::log(total)) / e.size();
}

double free_energy(const DisorderSample& s) { return free_energy(Enumeration(s)); }

std::vector<std::size_t> band_members(const Enumeration& e, std::span<const double> m, double eps)
{
    if (m.size() != static_cast<std::size_t>(e.size()))
        throw std::invalid_argument("band center size differs from the sample");
    double mm = 0.0;
    for (double x : m)
        mm += x * x;
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < e.count(); ++c) {
        double ms = 0.0;
        for (int i = 0; i < e.size(); ++i)
            ms += m[i] * e.spin(c, i);
        if (std::abs(ms - mm) / e.size() < eps)
            out.push_back(c);
    }
    return out;
}

double BandPartition::per_spin() const
{
    return empty ? -std::numeric_limits<double>::infinity() : (max_energy + log_sum) / spins;
}

namespace {

// g(level) = sum over compatible sigma of w_sigma * g(level + 1) / T, with g(n - 1) a plain subset sum
struct ReplicaSum {
    const Enumeration& e;
    const std::vector<std::size_t>& members;
    double target, delta, total;
    int replicas;
    std::vector<std::size_t> chosen;

    bool compatible(std::size_t c) const
    {
        for (std::size_t o : chosen)
            if (!(std::abs(e.overlap(c, o) - target) < delta))
                return false;
        return true;
    }

    double run(int level)
    {
        double s = 0.0;
        for (std::size_t c : members) {
            if (!compatible(c))
                continue;
            if (level + 1 == replicas) {
                s += e.weight(c);
            } else {
                chosen.push_back(c);
                const double inner = run(level + 1);
                chosen.pop_back();
                s += e.weight(c) * (inner / total);
            }
        }
        return s;
    }
};

}  // namespace

BandPartition band_partition(const Enumeration& e, const BandSpec& band)
{
    if (band.replicas < 1)
        throw std::invalid_argument("replica count must be positive");
    if (band.replicas * e.size() > enumeration_budget_bits)
        throw std::invalid_argument("enumeration budget exceeded");
    if (!(band.eps > 0.0) || !(band.delta > 0.0))
        throw std::invalid_argument("band widths must be positive");
    BandPartition out;
    out.max_energy = e.max_energy();
    out.spins = e.size();
    const std::vector<std::size_t> members = band_members(e, band.m, band.eps);
    out.members = members.size();
    if (members.empty())
        return out;
    double total = 0.0;
    for (std::size_t c : members)
        total += e.weight(c);
    double target = 0.0;
    for (double x : band.m)
        target += x * x;
    target /= e.size();
    ReplicaSum rs{e, members, target, band.delta, total, band.replicas, {}};
    const double g = band.replicas == 1 ? total : rs.run(0);
    if (!(g > 0.0))
        return out;
    out.empty = false;
    const double lt = std::log(total);
    out.log_sum = lt + (std::log(g) - lt) / band.replicas;
    return out;
}

double tap_Nn(const Enumeration& e, const DisorderSample& s, const BandSpec& band)
{
    const BandPartition bp = band_partition(e, band);
    if (bp.empty)
        return -std::numeric_limits<double>::infinity();
    return bp.per_spin() - s.energy(band.m) / s.size();
}

double tap_Nn(const DisorderSample& s, const BandSpec& band)
{
    if (band.replicas * s.size() > enumeration_budget_bits)
        throw std::invalid_argument("enumeration budget exceeded");
    return tap_Nn(Enumeration(s), s, band);
}

double concentration_constant(const MixedModel& model)
{
    const double c = std::max(4.0 * model.xi(1.0), 2.0 * model.xi_prime(1.0));
    return c > 0.0 ? 1.0 / (4.0 * c) : std::numeric_limits<double>::infinity();
}

double concentration_bound(const MixedModel& model, int n_spins, const BandSpec& band, double t)
{
    const double c = concentration_constant(model);
    if (std::isinf(c))
        return t > 0.0 ? 0.0 : 2.0;
    const double b = 2.0 * std::exp(-n_spins * t * t * c / (1.0 / band.replicas + band.delta + band.eps));
    return std::min(b, 2.0);
}

ConcentrationReport concentration_experiment(const MixedModel& model, int n_spins, const BandSpec& band, int n_draws,
                                             std::uint64_t seed, const std::vector<double>& ts)
{
    if (n_draws < 2)
        throw std::invalid_argument("concentration experiment needs at least two draws");
    ConcentrationReport r;
    r.c_xi = concentration_constant(model);
    for (int k = 0; k < n_draws; ++k) {
        const DisorderSample s(n_spins, model, splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(k) + 1)));
        const double v = tap_Nn(s, band);
        if (!std::isfinite(v))
            throw std::runtime_error("band is empty");
        r.values.push_back(v);
    }
    for (double v : r.values)
        r.mean += v;
    r.mean /= n_draws;
    for (double v : r.values)
        r.sd += (v - r.mean) * (v - r.mean);
    r.sd = std::sqrt(r.sd / (n_draws - 1));
    for (double t : ts) {
        TailCell c;
        c.t = t;
        int hits = 0;
        for (double v : r.values)
            if (std::abs(v - r.mean) > t)
                ++hits;
        c.empirical = static_cast<double>(hits) / n_draws;
        c.se = std::sqrt(c.empirical * (1.0 - c.empirical) / n_draws);
        c.bound = concentration_bound(model, n_spins, band, t);
        c.below = c.empirical <= c.bound;
        r.cells.push_back(c);
    }
    return r;
}

void write_tail_csv(std::ostream& os, const ConcentrationReport& r)
{
    os << "t,empirical,se,bound,below\n";
    os.precision(12);
    for (const TailCell& c : r.cells)
        os << c.t << ',' << c.empirical << ',' << c.se << ',' << c.bound << ',' << c.below << '\n';
}

namespace {

// d_x Phi_zeta(q, .) with the grid regrown when fields leave it
class FieldMap {
public:
    FieldMap(const MixedModel& model, OrderParameter zeta, SolverConfig cfg)
        : model_(model), zeta_(std::move(zeta)), cfg_(std::move(cfg))
    {
    }

    double operator()(double x)
    {
        if (!sol_ || std::abs(x) > sol_->x_max() - 1.0) {
            SolverConfig c = cfg_;
            c.field_margin = std::max(c.field_margin, 1.5 * std::abs(x) + 2.0);
            sol_ = std::make_unique<PDESolution>(solve(model_, zeta_, Boundary::original(), c));
        }
        return sol_->phi_x_node(0, x);
    }

private:
    const MixedModel& model_;
    OrderParameter zeta_;
    SolverConfig cfg_;
    std::unique_ptr<PDESolution> sol_;
};

OrderParameter zeta_on(const OrderParameter& zeta, double q)
{
    if (std::abs(zeta.lo() - q) < 1e-12)
        return zeta;
    if (zeta.lo() < q)
        return zeta.restricted(q);
    throw std::invalid_argument("order parameter does not cover [q,1]");
}

double onsager(const MixedModel& model, double q, const OrderParameter& z)
{
    return model.xi_double_prime(q) * z.integrate([](double s) { return s; });
}

double residual_of(const DisorderSample& s, std::span<const double> m, double ons, FieldMap& phi_x)
{
    const std::vector<double> g = s.gradient(m);
    double r = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i)
        r = std::max(r, std::abs(m[i] - phi_x(g[i] - m[i] * ons)));
    return r;
}

void to_sphere(std::vector<double>& m, double q)
{
    double norm = 0.0;
    for (double x : m)
        norm += x * x;
    const double target = q * m.size();
    if (target <= 0.0) {
        std::fill(m.begin(), m.end(), 0.0);
        return;
    }
    if (norm <= 0.0)
        throw std::runtime_error("iterate collapsed to zero off the zero sphere");
    const double f = std::sqrt(target / norm);
    for (double& x : m)
        x *= f;
}

bool growing(const std::deque<double>& hist, int window)
{
    return static_cast<int>(hist.size()) > window && hist.back() > 1.5 * hist.front() && hist.back() > 1e-3;
}

}  // namespace

double tap_equation_residual(const DisorderSample& s, double q, const OrderParameter& zeta, std::span<const double> m,
                             const SolverConfig& cfg)
{
    const OrderParameter z = zeta_on(zeta, q);
    FieldMap phi_x(s.model(), z, cfg);
    return residual_of(s, m, onsager(s.model(), q, z), phi_x);
}

TapSolveResult solve_tap_equations(const DisorderSample& s, double q, const OrderParameter& zeta,
                                   std::vector<double> m_init, const TapSolveOptions& opt)
{
    if (m_init.size() != static_cast<std::size_t>(s.size()))
        throw std::invalid_argument("initial magnetization size differs from the sample");
    if (!(q >= 0.0 && q <= 1.0))
        throw std::invalid_argument("q must lie in [0,1]");
    const OrderParameter z = zeta_on(zeta, q);
    FieldMap phi_x(s.model(), z, opt.solver);
    const double ons = onsager(s.model(), q, z);
    TapSolveResult res;
    res.m = std::move(m_init);
    to_sphere(res.m, q);
    std::deque<double> hist;
    for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
        const std::vector<double> g = s.gradient(res.m);
        std::vector<double> next(res.m.size());
        double r = 0.0;
        for (std::size_t i = 0; i < next.size(); ++i) {
            const double t = phi_x(g[i] - res.m[i] * ons);
            r = std::max(r, std::abs(res.m[i] - t));
            next[i] = (1.0 - opt.damping) * res.m[i] + opt.damping * t;
        }
        res.residual = r;
        if (r < opt.tol) {
            res.converged = true;
            break;
        }
        hist.push_back(r);
        if (static_cast<int>(hist.size()) > opt.divergence_window + 1)
            hist.pop_front();
        if (growing(hist, opt.divergence_window)) {
            res.diverged = true;
            break;
        }
        to_sphere(next, q);
        for (double x : next)
            if (std::abs(x) >= 1.0)
                throw std::runtime_error("renormalized iterate left the cube");
        res.m.swap(next);
    }
    if (!res.converged)
        res.residual = residual_of(s, res.m, ons, phi_x);
    return res;
}

TapSolveResult solve_classical_tap(const DisorderSample& s, std::vector<double> m_init, const TapSolveOptions& opt)
{
    if (m_init.size() != static_cast<std::size_t>(s.size()))
        throw std::invalid_argument("initial magnetization size differs from the sample");
    const MixedModel& model = s.model();
    TapSolveResult res;
    res.m = std::move(m_init);
    std::deque<double> hist;
    auto step = [&](const std::vector<double>& m, std::vector<double>* next) {
        double q = 0.0;
        for (double x : m)
            q += x * x;
        q /= m.size();
        const double ons = model.xi_double_prime(q) * (1.0 - q);
        const std::vector<double> g = s.gradient(m);
        double r = 0.0;
        for (std::size_t i = 0; i < m.size(); ++i) {
            const double t = std::tanh(g[i] - m[i] * ons);
            r = std::max(r, std::abs(m[i] - t));
            if (next)
                (*next)[i] = (1.0 - opt.damping) * m[i] + opt.damping * t;
        }
        return r;
    };
    for (res.iterations = 0; res.iterations < opt.max_iter; ++res.iterations) {
        std::vector<double> next(res.m.size());
        res.residual = step(res.m, &next);
        if (res.residual < opt.tol) {
            res.converged = true;
            break;
        }
        hist.push_back(res.residual);
        if (static_cast<int>(hist.size()) > opt.divergence_window + 1)
            hist.pop_front();
        if (growing(hist, opt.divergence_window)) {
            res.diverged = true;
            break;
        }
        res.m.swap(next);
    }
    if (!res.converged)
        res.residual = step(res.m, nullptr);
    return res;
}

namespace {

TapConfig without_cross_check(TapConfig cfg)
{
    cfg.cross_check = false;
    return cfg;
}

}  // namespace

TapGradient grad_tap(const MixedModel& model, std::span<const double> m, const TapConfig& cfg)
{
    for (double x : m)
        if (!(std::abs(x) < 1.0 - cfg.boundary_tol))
            throw std::domain_error("TAP gradient needs every |m_i| < 1");
    const std::size_t N = m.size();
    TapGradient out;
    out.tap = tap_correction(model, empirical(m, true), without_cross_check(cfg));
    const double q = out.tap.q;
    const OrderParameter& z = out.tap.minimizer_zeta;
    double amax = 0.0;
    for (double x : m)
        amax = std::max(amax, std::abs(x));
    SolverConfig sc = cfg.solver;
    sc.field_margin = std::max(sc.field_margin, std::atanh(amax) + model.xi_prime(1.0) + 1.0);
    const PDESolution sol = solve(model, z, Boundary::original(), sc);
    std::vector<double> xstar(N);
    double mean_curv = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const double a = std::abs(m[i]);
        const double x = a == 0.0 ? 0.0 : sol.solve_phi_x(0, a, cfg.bisection_tol);
        xstar[i] = std::copysign(x, m[i]);
        mean_curv += sol.phi_xx_node(0, x) / N;
    }
    const double ons = model.xi_double_prime(q) * z.integrate([](double s) { return s; });
    const double ons_exact = model.xi_double_prime(q) * mean_curv;
    out.formula.resize(N);
    out.partition.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        out.formula[i] = -(xstar[i] + m[i] * ons) / N;
        out.partition[i] = -(xstar[i] + m[i] * ons_exact) / N;
    }
    return out;
}

double tap_of(const MixedModel& model, std::span<const double> m, const TapConfig& cfg)
{
    return tap_correction(model, empirical(m, true), without_cross_check(cfg)).value;
}

namespace {

std::vector<double> retract(std::vector<double> m, double q)
{
    const double cap = 0.999;
    for (int round = 0; round < 50; ++round) {
        to_sphere(m, q);
        bool inside = true;
        for (double& x : m)
            if (std::abs(x) > cap) {
                x = std::copysign(cap, x);
                inside = false;
            }
        if (inside)
            return m;
    }
    throw std::runtime_error("sphere of radius q is not reachable inside the cube");
}

}  // namespace

AscentResult tap_ascent(const DisorderSample& s, double q, int steps, std::vector<double> m_init, const TapConfig& cfg)
{
    if (m_init.size() != static_cast<std::size_t>(s.size()))
        throw std::invalid_argument("initial magnetization size differs from the sample");
    const std::size_t N = m_init.size();
    const TapConfig tc = without_cross_check(cfg);
    AscentResult res;
    res.free_energy = free_energy(s);
    std::vector<double> m = retract(std::move(m_init), q);
    auto objective = [&](const std::vector<double>& x) { return s.energy(x) / N + tap_of(s.model(), x, tc); };
    double value = objective(m);
    res.trajectory.push_back({m, value});
    double alpha = 1.0;
    for (int k = 0; k < steps; ++k) {
        const TapGradient tg = grad_tap(s.model(), m, tc);
        const std::vector<double> gh = s.gradient(m);
        std::vector<double> d(N);
        double dm = 0.0, mm = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            d[i] = gh[i] / N + tg.formula[i];
            dm += d[i] * m[i];
            mm += m[i] * m[i];
        }
        double dd = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            if (mm > 0.0)
                d[i] -= dm / mm * m[i];
            dd += d[i] * d[i];
        }
        if (dd < 1e-20)
            break;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            std::vector<double> trial(N);
            for (std::size_t i = 0; i < N; ++i)
                trial[i] = m[i] + alpha * N * d[i];
            trial = retract(std::move(trial), q);
            const double v = objective(trial);
            if (v >= value + 1e-4 * alpha * N * dd) {
                m = std::move(trial);
                value = v;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            res.line_search_failed = true;
            break;
        }
        res.trajectory.push_back({m, value});
        alpha = std::min(2.0 * alpha, 1.0);
    }
    return res;
}

void write_trajectory_csv(std::ostream& os, const AscentResult& r)
{
    os << "step,value";
    const std::size_t N = r.trajectory.empty() ? 0 : r.trajectory.front().m.size();
    for (std::size_t i = 0; i < N; ++i)
        os << ",m" << i;
    os << '\n';
    os.precision(12);
    for (std::size_t k = 0; k < r.trajectory.size(); ++k) {
        os << k << ',' << r.trajectory[k].value;
        for (double x : r.trajectory[k].m)
            os << ',' << x;
        os << '\n';
    }
}

}  // namespace gtap
