#include "gtap/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gtap {

namespace {

void check_overlap(double s)
{
    if (!(std::abs(s) <= 1.0 + 1e-12))
        throw std::domain_error("overlap argument outside [-1,1]: " + std::to_string(s));
}

double binomial(std::size_t n, std::size_t k)
{
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i)
        r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

}  // namespace

MixedModel::MixedModel(std::vector<double> coeffs_sq, double external_field)
    : coeffs_(std::move(coeffs_sq)), h_(external_field)
{
    for (double c : coeffs_)
        if (!(c >= 0.0) || !std::isfinite(c))
            throw std::invalid_argument("mixture coefficients must be finite and nonnegative");
    while (!coeffs_.empty() && coeffs_.back() == 0.0)
        coeffs_.pop_back();
    if (!std::isfinite(h_))
        throw std::invalid_argument("external field must be finite");
}

MixedModel MixedModel::sk(double beta)
{
    return MixedModel({0.0, 0.5 * beta * beta});
}

bool MixedModel::is_zero() const
{
    return std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return c == 0.0; });
}

double MixedModel::xi(double s) const
{
    check_overlap(s);
    double r = 0.0;
    for (std::size_t p = coeffs_.size(); p >= 1; --p)
        r = (r + coeffs_[p - 1]) * s;
    return r;
}

double MixedModel::xi_prime(double s) const
{
    check_overlap(s);
    double r = 0.0;
    for (std::size_t p = coeffs_.size(); p >= 1; --p)
        r = r * s + static_cast<double>(p) * coeffs_[p - 1];
    return r;
}

double MixedModel::xi_double_prime(double s) const
{
    check_overlap(s);
    double r = 0.0;
    for (std::size_t p = coeffs_.size(); p >= 2; --p)
        r = r * s + static_cast<double>(p * (p - 1)) * coeffs_[p - 1];
    return r;
}

double MixedModel::theta(double x) const
{
    return x * xi_prime(x) - xi(x);
}

ShiftedModel::ShiftedModel(MixedModel base, double q) : base_(std::move(base)), q_(q)
{
    if (!(q >= 0.0 && q <= 1.0))
        throw std::domain_error("shift parameter q outside [0,1]");
    const std::size_t P = base_.max_degree();
    shifted_.assign(P, 0.0);
    for (std::size_t k = 1; k <= P; ++k) {
        double acc = 0.0;
        for (std::size_t p = k; p <= P; ++p)
            acc += binomial(p, k) * base_.coeff(p) * std::pow(q_, static_cast<double>(p - k));
        shifted_[k - 1] = acc;
    }
}

double ShiftedModel::xi(double s) const
{
    double r = 0.0;
    for (std::size_t k = shifted_.size(); k >= 2; --k)
        r = (r + shifted_[k - 1]) * s;
    return r * s;
}

double ShiftedModel::xi_prime(double s) const
{
    double r = 0.0;
    for (std::size_t k = shifted_.size(); k >= 2; --k)
        r = r * s + static_cast<double>(k) * shifted_[k - 1];
    return r * s;
}

double ShiftedModel::xi_double_prime(double s) const
{
    return base_.xi_double_prime(std::min(1.0, s + q_));
}

double ShiftedModel::theta(double s) const
{
    return s * xi_prime(s) - xi(s);
}

double ShiftedModel::xi_hat(double s) const
{
    double r = 0.0;
    for (std::size_t k = shifted_.size(); k >= 1; --k)
        r = (r + shifted_[k - 1]) * s;
    return r;
}

double ShiftedModel::beta_sq(std::size_t k) const
{
    return k >= 1 && k <= shifted_.size() ? shifted_[k - 1] : 0.0;
}

ShiftedModel shift(const MixedModel& model, double q)
{
    return ShiftedModel(model, q);
}

}  // namespace gtap
