#pragma once

#include <cstddef>
#include <vector>

namespace gtap {

// Mixture xi(s) = sum_p c_p s^p with c_p = beta_p^2, p = 1..P.
class MixedModel {
public:
    MixedModel() = default;
    explicit MixedModel(std::vector<double> coeffs_sq, double external_field = 0.0);

    static MixedModel zero() { return MixedModel(); }
    // xi(s) = beta^2 s^2 / 2
    static MixedModel sk(double beta);

    const std::vector<double>& coeffs_sq() const { return coeffs_; }
    double coeff(std::size_t p) const { return p >= 1 && p <= coeffs_.size() ? coeffs_[p - 1] : 0.0; }
    std::size_t max_degree() const { return coeffs_.size(); }
    double external_field() const { return h_; }
    bool is_zero() const;

    double xi(double s) const;
    double xi_prime(double s) const;
    double xi_double_prime(double s) const;
    // x xi'(x) - xi(x); its derivative is x xi''(x)
    double theta(double x) const;

private:
    std::vector<double> coeffs_;
    double h_ = 0.0;
};

// The model seen from overlap q: xi_q(s) = xi(s+q) - xi(q) - xi'(q)s.
class ShiftedModel {
public:
    ShiftedModel(MixedModel base, double q);

    const MixedModel& base() const { return base_; }
    double q() const { return q_; }
    // s ranges over [0, 1-q]
    double length() const { return 1.0 - q_; }

    double xi(double s) const;
    double xi_prime(double s) const;
    double xi_double_prime(double s) const;
    double theta(double s) const;
    // xi(s+q) - xi(q)
    double xi_hat(double s) const;
    // sum_{p>=k} C(p,k) c_p q^{p-k}
    double beta_sq(std::size_t k) const;
    const std::vector<double>& shifted_coeffs() const { return shifted_; }

private:
    MixedModel base_;
    double q_;
    std::vector<double> shifted_;
};

ShiftedModel shift(const MixedModel& model, double q);

}  // namespace gtap
