#include "seqal/glm.hpp"

#include <algorithm>
#include <cmath>

#include "seqal/error.hpp"
#include "seqal/numerics.hpp"

namespace seqal {

namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

void check_shapes(std::span<const double> beta, const Matrix& x) {
    if (beta.size() != x.cols())
        throw Error(ErrorCode::InvalidArgument, "coefficient length does not match covariates");
}

}  // namespace

double log_likelihood(std::span<const double> beta, const Matrix& x, std::span<const int> y) {
    check_shapes(beta, x);
    double ll = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double t = dot(x.row(i), beta);
        ll += y[i] * t - softplus(t);
    }
    return ll;
}

Vector score(std::span<const double> beta, const Matrix& x, std::span<const int> y) {
    check_shapes(beta, x);
    Vector g(x.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto xi = x.row(i);
        const double r = y[i] - mu(dot(xi, beta));
        for (std::size_t j = 0; j < g.size(); ++j) g[j] += r * xi[j];
    }
    return g;
}

SymMatrix fisher_info(std::span<const double> beta, const Matrix& x) {
    check_shapes(beta, x);
    SymMatrix f(x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const auto xi = x.row(i);
        f.add_outer(xi, mu_dot(dot(xi, beta)));
    }
    return f;
}

FitResult fit_mle(const Matrix& x, std::span<const int> y, std::optional<std::span<const double>> init,
                  const FitOptions& options) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (y.size() != n) throw Error(ErrorCode::InvalidArgument, "label count does not match rows");
    if (n < p) throw Error(ErrorCode::InvalidArgument, "fewer subjects than coefficients");
    std::size_t ones = 0;
    for (int v : y) {
        if (v != 0 && v != 1) throw Error(ErrorCode::NonBinaryLabel, "labels must be 0 or 1");
        ones += static_cast<std::size_t>(v);
    }
    if (ones == 0 || ones == n) throw Error(ErrorCode::OneClassOnly, "labels contain a single class");

    FitResult res;
    res.beta_tilde.assign(p, 0.0);
    if (init) {
        if (init->size() != p) throw Error(ErrorCode::InvalidArgument, "initial value length mismatch");
        res.beta_tilde.assign(init->begin(), init->end());
    }
    res.loglik = log_likelihood(res.beta_tilde, x, y);

    Vector trial(p);
    for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
        const Vector g = score(res.beta_tilde, x, y);
        if (norm_inf(g) <= options.score_tolerance) {
            res.converged = true;
            break;
        }
        if (norm_inf(res.beta_tilde) > options.separation_threshold) break;

        SymMatrix f = fisher_info(res.beta_tilde, x);
        Vector step;
        try {
            step = spd_solve(f, g);
        } catch (const Error&) {
            throw Error(ErrorCode::SingularInformation, "information matrix is not positive definite");
        }

        double scale = 1.0;
        bool accepted = false;
        for (int h = 0; h <= options.max_halvings; ++h) {
            for (std::size_t j = 0; j < p; ++j) trial[j] = res.beta_tilde[j] + scale * step[j];
            const double ll = log_likelihood(trial, x, y);
            if (ll >= res.loglik) {
                res.beta_tilde = trial;
                res.loglik = ll;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) break;
    }
    if (!res.converged) res.converged = norm_inf(score(res.beta_tilde, x, y)) <= options.score_tolerance;
    res.separation_flag = norm_inf(res.beta_tilde) > options.separation_threshold;
    if (!res.separation_flag) {
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            worst = std::max(worst, std::abs(y[i] - mu(dot(x.row(i), res.beta_tilde))));
        res.separation_flag = worst < options.perfect_fit_residual;
    }
    res.fisher = fisher_info(res.beta_tilde, x);
    return res;
}

}  // namespace seqal
