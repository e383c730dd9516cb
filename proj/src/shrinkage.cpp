#include "seqal/shrinkage.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "seqal/error.hpp"
#include "seqal/numerics.hpp"

namespace seqal {

void ShrinkageConfig::validate() const {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
    if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
    if (!(lambda_scale > 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda scale must be positive");
    if (!(lambda_exponent > 0.5 && lambda_exponent < 0.5 + 0.5 * gamma))
        throw Error(ErrorCode::InvalidArgument,
                    "lambda exponent must lie in (0.5, 0.5 + gamma/2), got " + std::to_string(lambda_exponent));
}

double ShrinkageConfig::lambda(std::size_t n) const {
    return lambda_scale * std::pow(static_cast<double>(n), -lambda_exponent);
}

double compute_L(const SymMatrix& fisher) {
    const Vector ev = sym_eigenvalues(fisher);
    const double nu_max = ev.front();
    const double nu_min = ev.back();
    if (!(nu_min > 0.0) || !(nu_max > 1.0))
        throw Error(ErrorCode::IllConditioned, "information eigenvalues do not admit L (nu_min=" +
                                                   std::to_string(nu_min) + ", nu_max=" + std::to_string(nu_max) + ")");
    return nu_min / std::log(nu_max);
}

Indicators indicators(std::span<const double> beta_tilde, double L, std::size_t n, const ShrinkageConfig& cfg) {
    if (!(L > 0.0)) throw Error(ErrorCode::InvalidArgument, "L must be positive");
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample size must be >= 1");
    const double base = std::sqrt(L) * cfg.lambda(n);
    Indicators out(beta_tilde.size(), 0);
    for (std::size_t j = 0; j < beta_tilde.size(); ++j) {
        const double mag = std::abs(beta_tilde[j]);
        if (mag == 0.0) continue;
        const double stat = base * std::pow(mag, -cfg.gamma);
        out[j] = stat < cfg.epsilon ? 1 : 0;
    }
    return out;
}

Shrunk ase(std::span<const double> beta_tilde, std::span<const int> ind) {
    if (beta_tilde.size() != ind.size())
        throw Error(ErrorCode::InvalidArgument, "indicator length does not match coefficients");
    Shrunk out;
    out.beta_hat.assign(beta_tilde.size(), 0.0);
    for (std::size_t j = 0; j < ind.size(); ++j) {
        if (ind[j]) {
            out.beta_hat[j] = beta_tilde[j];
            ++out.p0_hat;
        }
    }
    return out;
}

ShrinkageState shrink(std::span<const double> beta_tilde, const SymMatrix& fisher, std::size_t n,
                      const ShrinkageConfig& cfg) {
    ShrinkageState state;
    state.L = compute_L(fisher);
    state.indicators = indicators(beta_tilde, state.L, n, cfg);
    Shrunk s = ase(beta_tilde, state.indicators);
    state.beta_hat = std::move(s.beta_hat);
    state.p0_hat = s.p0_hat;
    return state;
}

}  // namespace seqal
