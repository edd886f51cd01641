#pragma once

// Dense linear algebra for the coding-rate engine: Cholesky factorization,
// log-determinant, rank-one factor updates and triangular solves. All values
// are 64-bit; the log-det is conditioning-sensitive.

#include <cstddef>
#include <span>
#include <vector>

namespace byteflow::numkernel {

/// Row-major dense matrix of finite doubles.
class Matrix {
public:
    Matrix() = default;
    /// Zero-filled rows x cols matrix.
    Matrix(std::size_t rows, std::size_t cols);
    /// Takes ownership of row-major `values`; throws BadShape on a size
    /// mismatch and NonFinite on NaN/Inf.
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix identity(std::size_t n);

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] bool empty() const noexcept { return rows_ == 0 || cols_ == 0; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }
    [[nodiscard]] std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    [[nodiscard]] std::span<const double> values() const noexcept { return data_; }

    /// First `n` rows as a new matrix.
    [[nodiscard]] Matrix top_rows(std::size_t n) const;
    [[nodiscard]] Matrix transpose() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix multiply(const Matrix& a, const Matrix& b);

/// hᵀh (cols x cols).
Matrix gram(const Matrix& h);
/// h hᵀ (rows x rows).
Matrix outer_gram(const Matrix& h);

/// Lower-triangular factor L of an SPD matrix with L·Lᵀ = M.
class CholeskyFactor {
public:
    /// Factor of the n x n identity.
    static CholeskyFactor identity(std::size_t n);

    [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
    /// L(i, j); zero above the diagonal.
    [[nodiscard]] double lower(std::size_t i, std::size_t j) const noexcept { return lower_[j * dim_ + i]; }
    /// log det(L·Lᵀ) = 2 Σ log L(i, i).
    [[nodiscard]] double logdet() const noexcept { return logdet_; }
    /// Reconstructs L·Lᵀ.
    [[nodiscard]] Matrix reconstruct() const;

    /// In-place L·Lᵀ += alpha·v·vᵀ. Streaming callers use this to avoid a
    /// copy per step; rank_one_update() is the value-returning form.
    void update_in_place(std::span<const double> v, double alpha);

    /// Solves L·y = b.
    [[nodiscard]] std::vector<double> forward_substitute(std::span<const double> b) const;
    /// ‖L⁻¹b‖² = bᵀ(L·Lᵀ)⁻¹b without forming the solution.
    [[nodiscard]] double inverse_quadratic_form(std::span<const double> b) const;

private:
    friend CholeskyFactor cholesky(const Matrix& m);

    CholeskyFactor(std::size_t dim, std::vector<double> lower);
    void refresh_logdet() noexcept;

    std::size_t dim_ = 0;
    std::vector<double> lower_;
    double logdet_ = 0.0;
    std::vector<double> scratch_;
};

/// Factors a symmetric positive-definite matrix. The input must be symmetric
/// within 1e-12 absolute and is symmetrized as (M+Mᵀ)/2 first. Throws
/// NonPositiveDefinite when a pivot is not strictly positive.
CholeskyFactor cholesky(const Matrix& m);

/// Returns the factor of L·Lᵀ + alpha·v·vᵀ (alpha > 0).
CholeskyFactor rank_one_update(const CholeskyFactor& f, std::span<const double> v, double alpha);

/// Solves (L·Lᵀ)·x = b.
std::vector<double> solve(const CholeskyFactor& f, std::span<const double> b);

/// Eigenvalues of a symmetric matrix in ascending order. Reference oracle for
/// tests; not used on any production path.
std::vector<double> symmetric_eigenvalues(const Matrix& m);

}  // namespace byteflow::numkernel
