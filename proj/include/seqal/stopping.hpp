#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

#include "seqal/matrix.hpp"

namespace seqal {

/// Normalising growth rho(n) = n^exponent. The identifier "n" is the linear
/// default; "n^0.9" style strings select other exponents.
struct GrowthFunction {
    double exponent = 1.0;

    static GrowthFunction parse(const std::string& id);
    std::string id() const;
    double operator()(std::size_t n) const;
};

struct StoppingConfig {
    double d = 0.3;
    double alpha = 0.05;
    /// Initial labeled sample size; 0 selects max(2p, 20).
    std::size_t n0 = 0;
    GrowthFunction growth;

    void validate(std::size_t p) const;
    std::size_t effective_n0(std::size_t p) const;
};

struct StoppingState {
    double nu_n = 0.0;
    double a_n_sq = 0.0;
    double threshold = 0.0;  ///< rho(n) d^2 / a_n^2
    bool stopped = false;
    std::optional<double> kappa;
};

/// Inverse information with every unselected row and column zeroed.
/// Throws NotPositiveDefinite, or NoSelectedVariables when no indicator is set.
SymMatrix shrunk_inverse(const SymMatrix& fisher, std::span<const int> ind);

/// rho(n) times the largest eigenvalue of shrunk_inverse.
double nu_n(const SymMatrix& fisher, std::span<const int> ind, std::size_t n, const GrowthFunction& growth = {});

/// Evaluates nu_n <= rho(n) d^2 / a_n^2 with a_n^2 the (1 - alpha) chi-square
/// quantile on p0_hat degrees of freedom. Throws ZeroSupport when p0_hat = 0.
StoppingState should_stop(double nu, std::size_t n, int p0_hat, const StoppingConfig& cfg);

/// Inverse of the selected block of shrunk_inverse, i.e. the precision matrix
/// of the quadratic form S_n on the selected coordinates.
SymMatrix selected_precision(const SymMatrix& fisher, std::span<const int> ind);

/// S_n = (z_1 - b_1)^T P (z_1 - b_1) over the selected coordinates.
double ellipsoid_statistic(std::span<const double> z, std::span<const double> beta_hat,
                           const SymMatrix& sigma11_tilde, std::span<const int> ind);

/// Membership in { z : S_n / rho(n) <= d^2 / nu_n and z_j = 0 where ind_j = 0 }.
bool ellipsoid_contains(std::span<const double> z, std::span<const double> beta_hat, const SymMatrix& sigma11_tilde,
                        double nu, std::size_t n, double d, std::span<const int> ind,
                        const GrowthFunction& growth = {});

/// Longest semi-axis of the S_n ellipsoid at radius rho(n) d^2 / nu_n.
double ellipsoid_max_semi_axis(const SymMatrix& sigma11_tilde, double nu, std::size_t n, double d,
                               const GrowthFunction& growth = {});

/// d^2 N / (a^2 nu)
double kappa(std::size_t n, double d, double a_sq, double nu);

}  // namespace seqal
