#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "seqal/matrix.hpp"

namespace seqal {

/// Cholesky factor A = L L^T of a symmetric positive definite matrix.
///
/// A pivot at or below 1e-12 times the largest diagonal entry is reported as
/// NotPositiveDefinite, which keeps the test scale-aware.
class Cholesky {
public:
    explicit Cholesky(const SymMatrix& a);

    std::size_t dim() const noexcept { return dim_; }

    Vector solve(std::span<const double> b) const;
    /// v^T A^{-1} v, computed as |L^{-1} v|^2.
    double inverse_quadratic(std::span<const double> v) const;
    double log_determinant() const;
    double determinant() const;
    SymMatrix inverse() const;

private:
    void forward(std::span<const double> b, std::span<double> out) const;
    void backward(std::span<const double> b, std::span<double> out) const;

    std::size_t dim_;
    std::vector<double> lower_;  // row-major, lower triangle
};

/// Solve A x = b for symmetric positive definite A.
Vector spd_solve(const SymMatrix& a, std::span<const double> b);

struct EigenResult {
    Vector values;                ///< descending
    std::optional<Matrix> vectors;  ///< column k pairs with values[k]
};

/// All eigenvalues (and optionally eigenvectors) of a symmetric matrix by
/// cyclic Jacobi rotations, iterated until the off-diagonal Frobenius norm
/// drops to 1e-12 of the matrix norm.
EigenResult sym_eigen(const SymMatrix& a, bool want_vectors = false);

inline Vector sym_eigenvalues(const SymMatrix& a) { return sym_eigen(a, false).values; }

/// det(A + w v v^T) from det(A) and A^{-1} v by the matrix determinant lemma.
double det_rank1_update(double det_a, std::span<const double> a_inv_v, std::span<const double> v,
                        double w);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

double chi2_cdf(double x, int df);

/// Quantile of the chi-square distribution, by bisection on chi2_cdf to 1e-9
/// in probability. Throws InvalidProbability outside (0, 1).
double chi2_quantile(int df, double prob);

struct PcaModel {
    Vector mean;
    Vector variances;   ///< descending explained variance
    Matrix components;  ///< p x p, column k is the k-th loading vector
};

/// Principal components of the sample covariance. Each component's sign is
/// fixed so its largest-magnitude loading is positive.
PcaModel pca_fit(const Matrix& x);

/// Centered data projected on the components listed in `keep` (0-based,
/// ordered by descending variance). Throws DegenerateCovariance when a kept
/// component lies beyond the covariance rank.
Matrix pca_transform(const Matrix& x, std::span<const std::size_t> keep);
Matrix pca_project(const PcaModel& model, const Matrix& x, std::span<const std::size_t> keep);

}  // namespace seqal
