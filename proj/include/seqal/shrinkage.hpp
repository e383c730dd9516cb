#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seqal/matrix.hpp"

namespace seqal {

/// Per-coordinate selection indicators, 1 = kept.
using Indicators = std::vector<int>;

/// Thresholds for the adaptive shrinkage rule. The tuning sequence is
/// lambda(n) = lambda_scale * n^(-lambda_exponent).
struct ShrinkageConfig {
    double epsilon = 0.5;
    double gamma = 2.0;
    double lambda_scale = 1.0;
    double lambda_exponent = 0.75;

    /// Throws InvalidArgument unless epsilon, gamma, scale > 0 and
    /// 0.5 < lambda_exponent < 0.5 + gamma / 2.
    void validate() const;
    double lambda(std::size_t n) const;
};

struct ShrinkageState {
    double L = 0.0;
    Indicators indicators;
    Vector beta_hat;
    int p0_hat = 0;
};

/// nu_min / log(nu_max) of the information matrix. Throws IllConditioned when
/// nu_min <= 0 or nu_max <= 1.
double compute_L(const SymMatrix& fisher);

/// Coordinate j is kept iff sqrt(L) * lambda(n) * |beta_j|^(-gamma) < epsilon.
/// An exact zero coefficient is never kept.
Indicators indicators(std::span<const double> beta_tilde, double L, std::size_t n,
                      const ShrinkageConfig& cfg);

struct Shrunk {
    Vector beta_hat;
    int p0_hat = 0;
};

/// Masked estimate: beta_tilde where the indicator is set, exactly 0 elsewhere.
Shrunk ase(std::span<const double> beta_tilde, std::span<const int> ind);

/// compute_L, indicators and ase in one pass.
ShrinkageState shrink(std::span<const double> beta_tilde, const SymMatrix& fisher, std::size_t n,
                      const ShrinkageConfig& cfg);

}  // namespace seqal
