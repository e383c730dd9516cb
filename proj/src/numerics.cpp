#include "seqal/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "seqal/error.hpp"

namespace seqal {

Cholesky::Cholesky(const SymMatrix& a) : dim_(a.dim()), lower_(a.dim() * a.dim(), 0.0) {
    const double floor = 1e-12 * a.max_abs_diagonal();
    for (std::size_t j = 0; j < dim_; ++j) {
        double diag = a(j, j);
        for (std::size_t k = 0; k < j; ++k) diag -= lower_[j * dim_ + k] * lower_[j * dim_ + k];
        if (!(diag > floor))
            throw Error(ErrorCode::NotPositiveDefinite,
                        "Cholesky pivot " + std::to_string(j) + " is not positive");
        const double ljj = std::sqrt(diag);
        lower_[j * dim_ + j] = ljj;
        for (std::size_t i = j + 1; i < dim_; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= lower_[i * dim_ + k] * lower_[j * dim_ + k];
            lower_[i * dim_ + j] = s / ljj;
        }
    }
}

void Cholesky::forward(std::span<const double> b, std::span<double> out) const {
    for (std::size_t i = 0; i < dim_; ++i) {
        double s = b[i];
        const double* li = lower_.data() + i * dim_;
        for (std::size_t k = 0; k < i; ++k) s -= li[k] * out[k];
        out[i] = s / li[i];
    }
}

void Cholesky::backward(std::span<const double> b, std::span<double> out) const {
    for (std::size_t ii = dim_; ii-- > 0;) {
        double s = b[ii];
        for (std::size_t k = ii + 1; k < dim_; ++k) s -= lower_[k * dim_ + ii] * out[k];
        out[ii] = s / lower_[ii * dim_ + ii];
    }
}

Vector Cholesky::solve(std::span<const double> b) const {
    if (b.size() != dim_) throw Error(ErrorCode::InvalidArgument, "right-hand side length mismatch");
    Vector y(dim_), x(dim_);
    forward(b, y);
    backward(y, x);
    return x;
}

double Cholesky::inverse_quadratic(std::span<const double> v) const {
    double s = 0.0;
    double y[64];
    std::vector<double> heap;
    std::span<double> ys;
    if (dim_ <= 64) {
        ys = std::span<double>(y, dim_);
    } else {
        heap.resize(dim_);
        ys = heap;
    }
    forward(v, ys);
    for (double e : ys) s += e * e;
    return s;
}

double Cholesky::log_determinant() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) s += std::log(lower_[i * dim_ + i]);
    return 2.0 * s;
}

double Cholesky::determinant() const { return std::exp(log_determinant()); }

SymMatrix Cholesky::inverse() const {
    SymMatrix out(dim_);
    Vector e(dim_, 0.0);
    for (std::size_t j = 0; j < dim_; ++j) {
        std::fill(e.begin(), e.end(), 0.0);
        e[j] = 1.0;
        Vector col = solve(e);
        for (std::size_t i = j; i < dim_; ++i) out.set(i, j, col[i]);
    }
    return out;
}

Vector spd_solve(const SymMatrix& a, std::span<const double> b) { return Cholesky(a).solve(b); }

EigenResult sym_eigen(const SymMatrix& a, bool want_vectors) {
    const std::size_t p = a.dim();
    std::vector<double> m(a.data());
    Matrix v(p, p, 0.0);
    for (std::size_t i = 0; i < p; ++i) v(i, i) = 1.0;

    const double scale = a.frobenius_norm();
    const double target = 1e-12 * scale;
    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = 0; j < p; ++j)
                if (i != j) s += m[i * p + j] * m[i * p + j];
        return std::sqrt(s);
    };

    for (int sweep = 0; sweep < 100 && scale > 0.0; ++sweep) {
        if (off_norm() <= target) break;
        for (std::size_t i = 0; i + 1 < p; ++i) {
            for (std::size_t j = i + 1; j < p; ++j) {
                const double aij = m[i * p + j];
                if (aij == 0.0) continue;
                const double aii = m[i * p + i];
                const double ajj = m[j * p + j];
                const double theta = (ajj - aii) / (2.0 * aij);
                const double t = std::copysign(1.0, theta) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < p; ++k) {
                    const double mki = m[k * p + i];
                    const double mkj = m[k * p + j];
                    m[k * p + i] = c * mki - s * mkj;
                    m[k * p + j] = s * mki + c * mkj;
                }
                for (std::size_t k = 0; k < p; ++k) {
                    const double mik = m[i * p + k];
                    const double mjk = m[j * p + k];
                    m[i * p + k] = c * mik - s * mjk;
                    m[j * p + k] = s * mik + c * mjk;
                }
                if (want_vectors) {
                    for (std::size_t k = 0; k < p; ++k) {
                        const double vki = v(k, i);
                        const double vkj = v(k, j);
                        v(k, i) = c * vki - s * vkj;
                        v(k, j) = s * vki + c * vkj;
                    }
                }
            }
        }
    }

    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return m[x * p + x] > m[y * p + y]; });

    EigenResult out;
    out.values.resize(p);
    for (std::size_t k = 0; k < p; ++k) out.values[k] = m[order[k] * p + order[k]];
    if (want_vectors) {
        Matrix sorted(p, p);
        for (std::size_t k = 0; k < p; ++k)
            for (std::size_t r = 0; r < p; ++r) sorted(r, k) = v(r, order[k]);
        out.vectors = std::move(sorted);
    }
    return out;
}

double det_rank1_update(double det_a, std::span<const double> a_inv_v, std::span<const double> v,
                        double w) {
    return det_a * (1.0 + w * dot(v, a_inv_v));
}

namespace {

double gamma_series(double a, double x) {
    double sum = 1.0 / a;
    double term = sum;
    for (int n = 1; n < 10000; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-16) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Upper tail Q(a, x) by modified Lentz continued fraction.
double gamma_continued_fraction(double a, double x) {
    constexpr double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-16) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_p(double a, double x) {
    if (!(a > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma shape must be positive");
    if (x <= 0.0) return 0.0;
    if (x < a + 1.0) return gamma_series(a, x);
    return 1.0 - gamma_continued_fraction(a, x);
}

double chi2_cdf(double x, int df) { return regularized_gamma_p(0.5 * df, 0.5 * x); }

double chi2_quantile(int df, double prob) {
    if (df < 1) throw Error(ErrorCode::InvalidArgument, "chi-square df must be >= 1");
    if (!(prob > 0.0 && prob < 1.0))
        throw Error(ErrorCode::InvalidProbability, "probability must lie in (0, 1)");
    double lo = 0.0;
    double hi = df + 40.0 * std::sqrt(static_cast<double>(df));
    while (chi2_cdf(hi, df) < prob) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (chi2_cdf(mid, df) < prob)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-13 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

PcaModel pca_fit(const Matrix& x) {
    const std::size_t n = x.rows();
    const std::size_t p = x.cols();
    if (n <= p) throw Error(ErrorCode::InvalidArgument, "PCA needs more rows than columns");

    PcaModel model;
    model.mean.assign(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) model.mean[j] += x(i, j);
    for (double& m : model.mean) m /= static_cast<double>(n);

    SymMatrix cov(p);
    Vector centered(p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) centered[j] = x(i, j) - model.mean[j];
        cov.add_outer(centered, 1.0);
    }
    cov *= 1.0 / static_cast<double>(n - 1);

    EigenResult eig = sym_eigen(cov, true);
    model.variances = eig.values;
    model.components = std::move(*eig.vectors);
    for (std::size_t k = 0; k < p; ++k) {
        std::size_t arg = 0;
        for (std::size_t r = 1; r < p; ++r)
            if (std::abs(model.components(r, k)) > std::abs(model.components(arg, k))) arg = r;
        if (model.components(arg, k) < 0.0)
            for (std::size_t r = 0; r < p; ++r) model.components(r, k) = -model.components(r, k);
    }
    return model;
}

Matrix pca_project(const PcaModel& model, const Matrix& x, std::span<const std::size_t> keep) {
    const std::size_t p = model.mean.size();
    if (x.cols() != p) throw Error(ErrorCode::InvalidArgument, "PCA input width mismatch");
    const double top = model.variances.empty() ? 0.0 : model.variances.front();
    std::size_t rank = 0;
    for (double v : model.variances)
        if (v > 1e-12 * top) ++rank;
    for (std::size_t k : keep) {
        if (k >= p) throw Error(ErrorCode::InvalidArgument, "PCA component index out of range");
        if (k >= rank)
            throw Error(ErrorCode::DegenerateCovariance,
                        "component " + std::to_string(k + 1) + " exceeds covariance rank " +
                            std::to_string(rank));
    }
    Matrix out(x.rows(), keep.size());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t c = 0; c < keep.size(); ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < p; ++j) s += (x(i, j) - model.mean[j]) * model.components(j, keep[c]);
            out(i, c) = s;
        }
    }
    return out;
}

Matrix pca_transform(const Matrix& x, std::span<const std::size_t> keep) {
    return pca_project(pca_fit(x), x, keep);
}

}  // namespace seqal
