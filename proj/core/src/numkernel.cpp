#include "byteflow/numkernel.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>

#include "byteflow/error.hpp"

namespace byteflow::numkernel {

namespace {

constexpr double kSymmetryTolerance = 1e-12;

void require_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw Error(ErrorKind::NonFinite, "matrix contains a non-finite value");
        }
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows_ * cols_) {
        throw Error(ErrorKind::BadShape, "matrix " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                                             " given " + std::to_string(data_.size()) + " values");
    }
    require_finite(data_);
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::top_rows(std::size_t n) const {
    if (n > rows_) throw Error(ErrorKind::BadShape, "top_rows beyond matrix height");
    return Matrix(n, cols_, std::vector<double>(data_.begin(), data_.begin() + static_cast<std::ptrdiff_t>(n * cols_)));
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw Error(ErrorKind::BadShape, "multiply: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Matrix gram(const Matrix& h) {
    const std::size_t d = h.cols();
    Matrix g(d, d);
    for (std::size_t t = 0; t < h.rows(); ++t) {
        const auto row = h.row(t);
        for (std::size_t i = 0; i < d; ++i) {
            if (row[i] == 0.0) continue;
            for (std::size_t j = i; j < d; ++j) g(i, j) += row[i] * row[j];
        }
    }
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) g(i, j) = g(j, i);
    return g;
}

Matrix outer_gram(const Matrix& h) {
    const std::size_t n = h.rows();
    Matrix g(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double acc = 0.0;
            const auto ri = h.row(i);
            const auto rj = h.row(j);
            for (std::size_t k = 0; k < h.cols(); ++k) acc += ri[k] * rj[k];
            g(i, j) = acc;
            g(j, i) = acc;
        }
    }
    return g;
}

// Storage is column-major: both the rank-one sweep and forward substitution
// walk down columns.
CholeskyFactor::CholeskyFactor(std::size_t dim, std::vector<double> lower)
    : dim_(dim), lower_(std::move(lower)), scratch_(dim) {
    refresh_logdet();
}

CholeskyFactor CholeskyFactor::identity(std::size_t n) {
    std::vector<double> l(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) l[i * n + i] = 1.0;
    return CholeskyFactor(n, std::move(l));
}

void CholeskyFactor::refresh_logdet() noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) acc += std::log(lower_[i * dim_ + i]);
    logdet_ = 2.0 * acc;
}

Matrix CholeskyFactor::reconstruct() const {
    Matrix m(dim_, dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k <= j; ++k) acc += lower(i, k) * lower(j, k);
            m(i, j) = acc;
            m(j, i) = acc;
        }
    }
    return m;
}

void CholeskyFactor::update_in_place(std::span<const double> v, double alpha) {
    if (v.size() != dim_) throw Error(ErrorKind::BadShape, "rank-one update vector length differs from factor dim");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw Error(ErrorKind::InvalidArgument, "rank-one update requires finite alpha > 0");
    }
    require_finite(v);
    const double scale = std::sqrt(alpha);
    auto& x = scratch_;
    x.resize(dim_);
    bool nonzero = false;
    for (std::size_t i = 0; i < dim_; ++i) {
        x[i] = scale * v[i];
        nonzero = nonzero || x[i] != 0.0;
    }
    if (!nonzero) return;

    for (std::size_t k = 0; k < dim_; ++k) {
        double* col = lower_.data() + k * dim_;
        const double lkk = col[k];
        const double xk = x[k];
        if (xk == 0.0) continue;
        const double r = std::hypot(lkk, xk);
        const double c = r / lkk;
        const double s = xk / lkk;
        col[k] = r;
        for (std::size_t i = k + 1; i < dim_; ++i) {
            col[i] = (col[i] + s * x[i]) / c;
            x[i] = c * x[i] - s * col[i];
        }
    }
    refresh_logdet();
}

std::vector<double> CholeskyFactor::forward_substitute(std::span<const double> b) const {
    if (b.size() != dim_) throw Error(ErrorKind::BadShape, "solve: right-hand side length differs from factor dim");
    std::vector<double> y(b.begin(), b.end());
    for (std::size_t j = 0; j < dim_; ++j) {
        const double* col = lower_.data() + j * dim_;
        y[j] /= col[j];
        const double yj = y[j];
        if (yj == 0.0) continue;
        for (std::size_t i = j + 1; i < dim_; ++i) y[i] -= col[i] * yj;
    }
    return y;
}

double CholeskyFactor::inverse_quadratic_form(std::span<const double> b) const {
    if (b.size() != dim_) throw Error(ErrorKind::BadShape, "quadratic form: vector length differs from factor dim");
    std::vector<double> y(b.begin(), b.end());
    double acc = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
        const double* col = lower_.data() + j * dim_;
        y[j] /= col[j];
        const double yj = y[j];
        acc += yj * yj;
        if (yj == 0.0) continue;
        for (std::size_t i = j + 1; i < dim_; ++i) y[i] -= col[i] * yj;
    }
    return acc;
}

CholeskyFactor cholesky(const Matrix& m) {
    if (m.rows() != m.cols()) throw Error(ErrorKind::BadShape, "cholesky requires a square matrix");
    const std::size_t n = m.rows();
    // Column-major working copy of the symmetrized lower triangle.
    std::vector<double> l(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            const double a = m(i, j);
            const double b = m(j, i);
            if (std::abs(a - b) > kSymmetryTolerance) {
                throw Error(ErrorKind::InvalidArgument, "cholesky input is not symmetric at (" + std::to_string(i) +
                                                            ", " + std::to_string(j) + ")");
            }
            l[j * n + i] = 0.5 * (a + b);
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        double* colj = l.data() + j * n;
        double pivot = colj[j];
        for (std::size_t k = 0; k < j; ++k) {
            const double ljk = l[k * n + j];
            pivot -= ljk * ljk;
        }
        if (!(pivot > 0.0) || !std::isfinite(pivot)) {
            throw Error(ErrorKind::NonPositiveDefinite, "pivot " + std::to_string(j) + " is " + std::to_string(pivot));
        }
        const double ljj = std::sqrt(pivot);
        colj[j] = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double acc = colj[i];
            for (std::size_t k = 0; k < j; ++k) acc -= l[k * n + i] * l[k * n + j];
            colj[i] = acc / ljj;
        }
    }
    return CholeskyFactor(n, std::move(l));
}

CholeskyFactor rank_one_update(const CholeskyFactor& f, std::span<const double> v, double alpha) {
    CholeskyFactor out = f;
    out.update_in_place(v, alpha);
    return out;
}

std::vector<double> solve(const CholeskyFactor& f, std::span<const double> b) {
    std::vector<double> x = f.forward_substitute(b);
    const std::size_t n = f.dim();
    // Back substitution with Lᵀ.
    for (std::size_t ii = n; ii-- > 0;) {
        double acc = x[ii];
        for (std::size_t k = ii + 1; k < n; ++k) acc -= f.lower(k, ii) * x[k];
        x[ii] = acc / f.lower(ii, ii);
    }
    return x;
}

std::vector<double> symmetric_eigenvalues(const Matrix& m) {
    if (m.rows() != m.cols()) throw Error(ErrorKind::BadShape, "eigenvalues require a square matrix");
    const auto n = static_cast<Eigen::Index>(m.rows());
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            a(i, j) = 0.5 * (m(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) +
                             m(static_cast<std::size_t>(j), static_cast<std::size_t>(i)));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::NonFinite, "eigen solver did not converge");
    const auto& ev = solver.eigenvalues();
    return {ev.data(), ev.data() + ev.size()};
}

}  // namespace byteflow::numkernel
