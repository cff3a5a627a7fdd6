#include "level_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace gtap::detail {

void project_levels(std::span<double> x, std::span<const double> weight)
{
    struct Block {
        double value, weight;
        std::size_t len;
    };
    std::vector<Block> st;
    st.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        st.push_back({x[i], weight[i], 1});
        while (st.size() > 1 && st[st.size() - 2].value > st.back().value) {
            Block b = st.back();
            st.pop_back();
            Block& a = st.back();
            const double w = a.weight + b.weight;
            a.value = w > 0.0 ? (a.weight * a.value + b.weight * b.value) / w : 0.5 * (a.value + b.value);
            a.weight = w;
            a.len += b.len;
        }
    }
    std::size_t i = 0;
    for (const Block& b : st)
        for (std::size_t k = 0; k < b.len; ++k)
            x[i++] = std::clamp(b.value, 0.0, 1.0);
}

std::vector<double> partition_nodes(double lo, double hi, int cells, double offset)
{
    if (cells < 1)
        throw std::invalid_argument("partition needs at least one cell");
    std::vector<double> nodes{lo - offset};
    for (int j = 1; j < cells; ++j) {
        const double b = static_cast<double>(j) / cells;
        if (b > lo + 1e-9 && b < hi - 1e-9)
            nodes.push_back(b - offset);
    }
    nodes.push_back(hi - offset);
    return nodes;
}

SpgResult spg_minimize(const Objective& f, std::vector<double> x0, std::span<const double> metric,
                       const Projection& project, const SpgOptions& opt)
{
    const std::size_t n = x0.size();
    SpgResult r;
    r.x = std::move(x0);
    project(r.x, metric);
    r.grad.assign(n, 0.0);
    if (n == 0) {
        r.value = f(r.x, r.grad);
        r.evaluations = 1;
        r.converged = true;
        return r;
    }
    r.value = f(r.x, r.grad);
    r.evaluations = 1;

    std::deque<double> hist{r.value};
    std::vector<double> d(n), xn(n), gn(n);
    double alpha = 1.0;
    auto projected_step = [&](double a) {
        for (std::size_t i = 0; i < n; ++i)
            d[i] = r.x[i] - a * r.grad[i] / metric[i];
        project(d, metric);
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            d[i] -= r.x[i];
            s = std::max(s, std::abs(d[i]));
        }
        return s;
    };

    for (r.iterations = 0; r.iterations < opt.max_iter; ++r.iterations) {
        r.step_norm = projected_step(1.0);
        if (r.step_norm < opt.step_tol) {
            r.converged = true;
            break;
        }
        projected_step(alpha);
        double gd = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            gd += r.grad[i] * d[i];
        if (!(gd < 0.0)) {
            alpha = 1.0;
            projected_step(alpha);
            gd = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                gd += r.grad[i] * d[i];
            if (!(gd < 0.0))
                break;
        }
        const double fmax = *std::max_element(hist.begin(), hist.end());
        double lam = 1.0, fn = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 50; ++ls) {
            for (std::size_t i = 0; i < n; ++i)
                xn[i] = r.x[i] + lam * d[i];
            fn = f(xn, gn);
            ++r.evaluations;
            if (fn <= fmax + 1e-4 * lam * gd) {
                accepted = true;
                break;
            }
            const double quad = -0.5 * gd * lam * lam / (fn - r.value - lam * gd);
            lam = (quad > 0.1 * lam && quad < 0.9 * lam) ? quad : 0.5 * lam;
        }
        if (!accepted)
            break;
        double sty = 0.0, sws = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double s = xn[i] - r.x[i];
            sty += s * (gn[i] - r.grad[i]);
            sws += metric[i] * s * s;
        }
        alpha = sty > 0.0 ? std::clamp(sws / sty, 1e-8, 1e8) : 1e8;
        r.x.swap(xn);
        r.grad.swap(gn);
        r.value = fn;
        hist.push_back(fn);
        if (static_cast<int>(hist.size()) > opt.memory)
            hist.pop_front();
    }
    if (!r.converged)
        r.step_norm = projected_step(1.0);
    return r;
}

}  // namespace gtap::detail
