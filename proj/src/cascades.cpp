#include "gtap/cascades.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

namespace gtap {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double log2cosh(double x)
{
    const double ax = std::abs(x);
    return ax + std::log1p(std::exp(-2.0 * ax));
}

constexpr std::size_t max_leaves = std::size_t{1} << 23;

struct LogSum {
    double top = -std::numeric_limits<double>::infinity();
    double sum = 0.0;

    void add(double x)
    {
        if (x > top) {
            sum = sum * std::exp(top - x) + 1.0;
            top = x;
        } else {
            sum += std::exp(x - top);
        }
    }
    double value() const { return top + std::log(sum); }
};

// log sum_alpha v_alpha exp(sum_i leaf(i, g_i(alpha))) for independent tree fields g_i
template <class Leaf>
double cascade_log_mean(const CascadeSample& c, const TreeLevels& tl, std::size_t sites, Leaf leaf,
                        std::uint64_t field_seed)
{
    if (static_cast<std::size_t>(c.depth()) != tl.params.size())
        throw std::invalid_argument("cascade depth differs from the tree levels");
    std::mt19937_64 rng(splitmix64(field_seed));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int r = c.depth();
    const int K = c.branching();
    std::vector<std::vector<double>> partial(r + 1, std::vector<double>(sites));
    const double root_sd = std::sqrt(tl.root_var);
    for (double& x : partial[0])
        x = root_sd * gauss(rng);
    std::vector<double> sd(r);
    for (int k = 0; k < r; ++k)
        sd[k] = std::sqrt(tl.level_var[k]);

    LogSum with_field, weights;
    auto visit = [&](auto&& self, int depth, std::size_t node, double log_w) -> void {
        if (depth == r) {
            double s = log_w;
            for (std::size_t i = 0; i < sites; ++i)
                s += leaf(i, partial[r][i]);
            with_field.add(s);
            weights.add(log_w);
            return;
        }
        std::vector<double>& next = partial[depth + 1];
        const std::vector<double>& cur = partial[depth];
        for (int ch = 0; ch < K; ++ch) {
            for (std::size_t i = 0; i < sites; ++i)
                next[i] = cur[i] + sd[depth] * gauss(rng);
            self(self, depth + 1, node * K + ch, log_w + c.log_point(depth, node, ch));
        }
    };
    visit(visit, 0, 0, 0.0);
    return with_field.value() - weights.value();
}

}  // namespace

CascadeSample::CascadeSample(std::vector<double> params, int branching, std::uint64_t seed)
    : params_(std::move(params)), K_(branching), seed_(seed)
{
    if (branching < 2)
        throw std::invalid_argument("cascade branching must be at least 2");
    for (std::size_t k = 0; k < params_.size(); ++k) {
        if (!(params_[k] > 0.0 && params_[k] < 1.0))
            throw std::invalid_argument("cascade parameters must lie in (0,1)");
        if (k > 0 && !(params_[k] > params_[k - 1]))
            throw std::invalid_argument("cascade parameters must be increasing");
    }
    if (leaves() > max_leaves)
        throw std::invalid_argument("cascade has too many leaves");
    std::mt19937_64 rng(splitmix64(seed));
    std::exponential_distribution<double> expo(1.0);
    std::size_t parents = 1;
    for (double z : params_) {
        std::vector<double> pts(parents * K_);
        double coverage_sum = 0.0;
        for (std::size_t p = 0; p < parents; ++p) {
            double arrival = 0.0, kept = 0.0;
            for (int j = 0; j < K_; ++j) {
                arrival += expo(rng);
                pts[p * K_ + j] = -std::log(arrival) / z;
                kept += std::exp(pts[p * K_ + j]);
            }
            // expected mass of the discarded points beyond the last arrival
            const double tail = std::pow(arrival, 1.0 - 1.0 / z) / (1.0 / z - 1.0);
            coverage_sum += kept / (kept + tail);
        }
        coverage_ = std::min(coverage_, coverage_sum / parents);
        log_points_.push_back(std::move(pts));
        parents *= K_;
    }
}

std::size_t CascadeSample::leaves() const
{
    std::size_t n = 1;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        n *= static_cast<std::size_t>(K_);
        if (n > max_leaves)
            return max_leaves + 1;
    }
    return n;
}

std::vector<double> CascadeSample::leaf_weights() const
{
    std::vector<double> logw{0.0};
    for (int k = 0; k < depth(); ++k) {
        std::vector<double> next;
        next.reserve(logw.size() * K_);
        for (std::size_t p = 0; p < logw.size(); ++p)
            for (int c = 0; c < K_; ++c)
                next.push_back(logw[p] + log_point(k, p, c));
        logw.swap(next);
    }
    LogSum total;
    for (double x : logw)
        total.add(x);
    const double norm = total.value();
    for (double& x : logw)
        x = std::exp(x - norm);
    return logw;
}

CascadeSample sample_cascade(std::span<const double> params, int branching, std::uint64_t seed)
{
    return CascadeSample({params.begin(), params.end()}, branching, seed);
}

TreeLevels tree_levels(const OrderParameter& zeta, const std::function<double(double)>& clock)
{
    TreeLevels tl;
    const auto& nodes = zeta.nodes();
    const auto& levels = zeta.levels();
    for (std::size_t p = 0; p < levels.size(); ++p) {
        const double var = clock(nodes[p + 1]) - clock(nodes[p]);
        if (var < -1e-14)
            throw std::invalid_argument("tree variance must be nondecreasing");
        const double z = levels[p];
        if (z <= 0.0) {
            tl.root_var += std::max(var, 0.0);
        } else if (z >= 1.0) {
            tl.leaf_var += std::max(var, 0.0);
        } else if (!tl.params.empty() && tl.params.back() == z) {
            tl.level_var.back() += std::max(var, 0.0);
        } else {
            tl.params.push_back(z);
            tl.level_var.push_back(std::max(var, 0.0));
        }
    }
    return tl;
}

std::vector<double> sample_tree_field(const CascadeSample& c, const TreeLevels& tl, std::uint64_t seed)
{
    std::vector<double> out;
    out.reserve(c.leaves());
    std::mt19937_64 rng(splitmix64(seed ^ 0x5bd1e995ULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double leaf_sd = std::sqrt(tl.leaf_var);
    cascade_log_mean(
        c, tl, 1,
        [&](std::size_t, double y) {
            out.push_back(y + leaf_sd * gauss(rng));
            return 0.0;
        },
        seed);
    return out;
}

double psi_full(const CascadeSample& c, const TreeLevels& tl, std::span<const double> m, double lambda,
                const std::function<double(double)>& field, std::uint64_t field_seed)
{
    const std::size_t N = m.size();
    if (N == 0)
        throw std::invalid_argument("empty magnetization");
    std::vector<double> shift(N);
    for (std::size_t i = 0; i < N; ++i) {
        if (!(std::abs(m[i]) <= 1.0))
            throw std::invalid_argument("magnetization entries must lie in [-1,1]");
        shift[i] = lambda * m[i] + field(m[i]);
        if (!std::isfinite(shift[i]))
            throw std::invalid_argument("field is not finite at a magnetization entry");
    }
    const double V = tl.leaf_var;
    auto leaf = [&](std::size_t i, double g) {
        const double a = m[i], y = g + shift[i];
        return 0.5 * (1.0 + a * a) * V - a * y + log2cosh(y - a * V);
    };
    return cascade_log_mean(c, tl, N, leaf, field_seed) / N;
}

namespace {

McEstimate summarize(const std::vector<double>& xs)
{
    McEstimate e;
    for (double x : xs)
        e.mean += x;
    e.mean /= xs.size();
    double v = 0.0;
    for (double x : xs)
        v += (x - e.mean) * (x - e.mean);
    e.se = xs.size() > 1 ? std::sqrt(v / (xs.size() - 1) / xs.size()) : 0.0;
    return e;
}

CascadeSample draw_cascade(const TreeLevels& tl, const CascadeConfig& cfg, int d)
{
    CascadeSample c(tl.params, std::max(cfg.branching, 2), splitmix64(cfg.seed ^ splitmix64(2 * d + 1)));
    if (c.coverage() < cfg.min_coverage)
        throw std::runtime_error("truncation coverage below threshold");
    return c;
}

}  // namespace

McEstimate psi_full_mc(const ShiftedModel& model, const OrderParameter& zeta, std::span<const double> m,
                       double lambda, const std::function<double(double)>& field, const CascadeConfig& cfg)
{
    if (cfg.draws < 2)
        throw std::invalid_argument("cascade estimate needs at least two draws");
    const TreeLevels tl = tree_levels(zeta, [&](double s) { return model.xi_prime(s); });
    std::vector<double> xs;
    for (int d = 0; d < cfg.draws; ++d) {
        const CascadeSample c = draw_cascade(tl, cfg, d);
        xs.push_back(psi_full(c, tl, m, lambda, field, splitmix64(cfg.seed ^ splitmix64(2 * d + 2))));
    }
    return summarize(xs);
}

double psi_pde(const ShiftedModel& model, const OrderParameter& zeta, std::span<const double> m, double lambda,
               const std::function<double(double)>& field, const SolverConfig& cfg)
{
    std::map<double, int> counts;
    for (double a : m)
        ++counts[a];
    double total = 0.0;
    for (const auto& [a, n] : counts) {
        const double x = lambda * a + field(a);
        SolverConfig c = cfg;
        c.field_margin = std::max(c.field_margin, std::abs(x) + 1.0);
        const PDESolution sol = solve(model, zeta, Boundary::band(a), c);
        total += n * sol.phi_node(0, x);
    }
    return total / m.size();
}

double upsilon(const MixedModel& f, const OrderParameter& zeta)
{
    return 0.5 * zeta.integrate([&](double s) { return f.theta(s); });
}

double upsilon(const ShiftedModel& f, const OrderParameter& zeta)
{
    return 0.5 * zeta.integrate([&](double s) { return f.theta(s); });
}

McEstimate upsilon_mc(const MixedModel& f, const OrderParameter& zeta, const CascadeConfig& cfg)
{
    if (cfg.draws < 2)
        throw std::invalid_argument("cascade estimate needs at least two draws");
    const TreeLevels tl = tree_levels(zeta, [&](double s) { return f.theta(s); });
    const double half_leaf = 0.5 * tl.leaf_var;
    std::vector<double> xs;
    for (int d = 0; d < cfg.draws; ++d) {
        const CascadeSample c = draw_cascade(tl, cfg, d);
        xs.push_back(cascade_log_mean(
            c, tl, 1, [&](std::size_t, double g) { return g + half_leaf; },
            splitmix64(cfg.seed ^ splitmix64(2 * d + 2))));
    }
    return summarize(xs);
}

}  // namespace gtap
