#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace seqal {

using Vector = std::vector<double>;

/// Dense row-major matrix. Rows are subjects, columns are covariates.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    void append_row(std::span<const double> values);

    /// Rows picked by index, in the order given.
    Matrix select_rows(std::span<const std::size_t> idx) const;
    Matrix select_cols(std::span<const std::size_t> idx) const;

    const std::vector<double>& data() const noexcept { return data_; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Square symmetric matrix with full storage. Writes through set() keep both
/// triangles in sync.
class SymMatrix {
public:
    SymMatrix() = default;
    explicit SymMatrix(std::size_t dim, double fill = 0.0) : dim_(dim), data_(dim * dim, fill) {}
    SymMatrix(std::initializer_list<std::initializer_list<double>> rows);

    /// Throws InvalidArgument when `m` is not square or not symmetric to 1e-12 relative.
    static SymMatrix from_matrix(const Matrix& m);
    static SymMatrix identity(std::size_t dim);
    static SymMatrix diagonal(std::span<const double> diag);

    std::size_t dim() const noexcept { return dim_; }

    double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
    void set(std::size_t i, std::size_t j, double v) {
        data_[i * dim_ + j] = v;
        data_[j * dim_ + i] = v;
    }
    void add(std::size_t i, std::size_t j, double v) {
        data_[i * dim_ + j] += v;
        if (i != j) data_[j * dim_ + i] += v;
    }

    /// this += w * v v^T
    void add_outer(std::span<const double> v, double w);

    SymMatrix& operator+=(const SymMatrix& other);
    SymMatrix& operator*=(double s);

    Vector multiply(std::span<const double> v) const;
    double trace() const;
    double max_abs_diagonal() const;
    double frobenius_norm() const;

    /// Principal submatrix on the given index set.
    SymMatrix submatrix(std::span<const std::size_t> idx) const;

    const std::vector<double>& data() const noexcept { return data_; }

    friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a);

}  // namespace seqal
