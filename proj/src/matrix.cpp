#include "seqal/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "seqal/error.hpp"

namespace seqal {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorCode::InvalidProbability: return "InvalidProbability";
        case ErrorCode::DegenerateCovariance: return "DegenerateCovariance";
        case ErrorCode::SingularInformation: return "SingularInformation";
        case ErrorCode::OneClassOnly: return "OneClassOnly";
        case ErrorCode::IllConditioned: return "IllConditioned";
        case ErrorCode::NoSelectedVariables: return "NoSelectedVariables";
        case ErrorCode::ZeroSupport: return "ZeroSupport";
        case ErrorCode::EmptyUncertaintySet: return "EmptyUncertaintySet";
        case ErrorCode::CannotBalance: return "CannotBalance";
        case ErrorCode::PoolExhausted: return "PoolExhausted";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::NonBinaryLabel: return "NonBinaryLabel";
        case ErrorCode::InsufficientClass: return "InsufficientClass";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw Error(ErrorCode::InvalidArgument, "ragged matrix literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

void Matrix::append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw Error(ErrorCode::InvalidArgument, "row length mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
}

Matrix Matrix::select_rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), cols_);
    for (std::size_t k = 0; k < idx.size(); ++k) {
        auto src = row(idx[k]);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> idx) const {
    Matrix out(rows_, idx.size());
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t k = 0; k < idx.size(); ++k) out(i, k) = (*this)(i, idx[k]);
    return out;
}

SymMatrix::SymMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : SymMatrix(from_matrix(Matrix(rows))) {}

SymMatrix SymMatrix::from_matrix(const Matrix& m) {
    if (m.rows() != m.cols() || m.rows() == 0)
        throw Error(ErrorCode::InvalidArgument, "symmetric matrix must be square and non-empty");
    const std::size_t p = m.rows();
    double scale = 0.0;
    for (double v : m.data()) scale = std::max(scale, std::abs(v));
    SymMatrix out(p);
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t j = i; j < p; ++j) {
            if (std::abs(m(i, j) - m(j, i)) > 1e-12 * std::max(scale, 1.0))
                throw Error(ErrorCode::InvalidArgument, "matrix is not symmetric");
            out.set(i, j, 0.5 * (m(i, j) + m(j, i)));
        }
    }
    return out;
}

SymMatrix SymMatrix::identity(std::size_t dim) {
    SymMatrix out(dim);
    for (std::size_t i = 0; i < dim; ++i) out.set(i, i, 1.0);
    return out;
}

SymMatrix SymMatrix::diagonal(std::span<const double> diag) {
    SymMatrix out(diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) out.set(i, i, diag[i]);
    return out;
}

void SymMatrix::add_outer(std::span<const double> v, double w) {
    for (std::size_t i = 0; i < dim_; ++i) {
        const double wi = w * v[i];
        double* rowp = data_.data() + i * dim_;
        for (std::size_t j = 0; j <= i; ++j) rowp[j] += wi * v[j];
    }
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = 0; j < i; ++j) data_[j * dim_ + i] = data_[i * dim_ + j];
}

SymMatrix& SymMatrix::operator+=(const SymMatrix& other) {
    if (other.dim_ != dim_) throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
    return *this;
}

SymMatrix& SymMatrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

Vector SymMatrix::multiply(std::span<const double> v) const {
    Vector out(dim_, 0.0);
    for (std::size_t i = 0; i < dim_; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) acc += data_[i * dim_ + j] * v[j];
        out[i] = acc;
    }
    return out;
}

double SymMatrix::trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
}

double SymMatrix::max_abs_diagonal() const {
    double m = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) m = std::max(m, std::abs((*this)(i, i)));
    return m;
}

double SymMatrix::frobenius_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

SymMatrix SymMatrix::submatrix(std::span<const std::size_t> idx) const {
    SymMatrix out(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a; b < idx.size(); ++b) out.set(a, b, (*this)(idx[a], idx[b]));
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace seqal
