#pragma once

#include <cmath>
#include <optional>
#include <span>

#include "seqal/matrix.hpp"

namespace seqal {

/// Logistic mean exp(t)/(1+exp(t)), evaluated without overflow.
inline double mu(double t) {
    if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

/// Logistic density mu(t)(1 - mu(t)).
inline double mu_dot(double t) {
    const double e = std::exp(-std::abs(t));
    const double d = 1.0 + e;
    return e / (d * d);
}

struct FitOptions {
    double score_tolerance = 1e-8;
    int max_iterations = 100;
    int max_halvings = 20;
    double separation_threshold = 30.0;
    double perfect_fit_residual = 1e-6;
};

struct FitResult {
    Vector beta_tilde;
    SymMatrix fisher;  ///< information at beta_tilde
    double loglik = 0.0;
    int iterations = 0;
    bool converged = false;
    bool separation_flag = false;
};

double log_likelihood(std::span<const double> beta, const Matrix& x, std::span<const int> y);
Vector score(std::span<const double> beta, const Matrix& x, std::span<const int> y);

/// sum_i mu_dot(x_i^T beta) x_i x_i^T
SymMatrix fisher_info(std::span<const double> beta, const Matrix& x);

/// Logistic maximum likelihood by Newton-Raphson with step halving.
///
/// Iterates until |score|_inf <= tolerance or the iteration cap. Once
/// |beta|_inf exceeds the separation threshold the fit stops and returns with
/// separation_flag set rather than chasing an estimate at infinity. The flag
/// is also set when every fitted probability is within perfect_fit_residual
/// of its label, since the score can fall below tolerance on separable data.
/// Throws OneClassOnly for constant y and SingularInformation when the
/// Newton system cannot be factored.
FitResult fit_mle(const Matrix& x, std::span<const int> y,
                  std::optional<std::span<const double>> init = std::nullopt,
                  const FitOptions& options = {});

}  // namespace seqal
