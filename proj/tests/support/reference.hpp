#pragma once

// Brute-force oracles shared by the unit and acceptance tests. Nothing here
// reuses library code paths beyond plain tensor types.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

#include "byteflow/nn.hpp"
#include "byteflow/numkernel.hpp"

namespace byteflow::testing {

using nn::Tensor;

inline Eigen::MatrixXd to_eigen(const numkernel::Matrix& m) {
    Eigen::MatrixXd e(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) e(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = m(r, c);
    }
    return e;
}

inline numkernel::Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    numkernel::Matrix m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) m(r, c) = n(rng);
    }
    return m;
}

inline numkernel::Matrix random_spd(std::mt19937_64& rng, std::size_t n) {
    const auto a = random_matrix(rng, n, n);
    numkernel::Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = i == j ? static_cast<double>(n) : 0.0;
            for (std::size_t k = 0; k < n; ++k) s += a(i, k) * a(j, k);
            m(i, j) = s;
        }
    }
    return m;
}

inline Tensor random_tensor(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Tensor t(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
    return t;
}

/// ½ log det(I_T + c·h·hᵀ) from the eigenvalues of the T x T sequence-side
/// matrix.
inline double coding_rate_eigen(const numkernel::Matrix& h, double c) {
    if (h.rows() == 0) return 0.0;
    const Eigen::MatrixXd e = to_eigen(h);
    const Eigen::MatrixXd m =
        Eigen::MatrixXd::Identity(e.rows(), e.rows()) + c * e * e.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().array().log().sum();
}

/// Same quantity from the d x d Gram side.
inline double coding_rate_eigen_gram(const numkernel::Matrix& h, double c) {
    const Eigen::MatrixXd e = to_eigen(h);
    const Eigen::MatrixXd m = Eigen::MatrixXd::Identity(e.cols(), e.cols()) + c * e.transpose() * e;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
    return 0.5 * es.eigenvalues().array().log().sum();
}

/// R(h_{1:t}) − R(h_{1:t−1}) for t ≥ 1 (0-based), computed from scratch.
inline std::vector<double> batch_marginal_rates(const numkernel::Matrix& h, double c) {
    std::vector<double> out(h.rows(), 0.0);
    double prev = h.rows() > 0 ? coding_rate_eigen_gram(h.top_rows(1), c) : 0.0;
    for (std::size_t t = 1; t < h.rows(); ++t) {
        const double cur = coding_rate_eigen_gram(h.top_rows(t + 1), c);
        out[t] = cur - prev;
        prev = cur;
    }
    return out;
}

inline Tensor dense_rope(const Tensor& x, int heads, double theta) {
    Tensor out = x;
    const Eigen::Index hd = x.cols() / heads;
    for (Eigen::Index t = 0; t < x.rows(); ++t) {
        for (int h = 0; h < heads; ++h) {
            for (Eigen::Index m = 0; m < hd / 2; ++m) {
                const double freq = std::pow(theta, -2.0 * static_cast<double>(m) / static_cast<double>(hd));
                const double a = static_cast<double>(t) * freq;
                const Eigen::Index i = h * hd + 2 * m;
                const double x0 = x(t, i);
                const double x1 = x(t, i + 1);
                out(t, i) = x0 * std::cos(a) - x1 * std::sin(a);
                out(t, i + 1) = x0 * std::sin(a) + x1 * std::cos(a);
            }
        }
    }
    return out;
}

/// Full causal multi-head attention, one explicit loop per query.
inline Tensor dense_causal_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads, double theta) {
    const Tensor qr = dense_rope(q, heads, theta);
    const Tensor kr = dense_rope(k, heads, theta);
    const Eigen::Index t_len = q.rows();
    const Eigen::Index hd = q.cols() / heads;
    Tensor out = Tensor::Zero(t_len, q.cols());
    for (int h = 0; h < heads; ++h) {
        for (Eigen::Index t = 0; t < t_len; ++t) {
            std::vector<double> logits(static_cast<std::size_t>(t + 1));
            double mx = -INFINITY;
            for (Eigen::Index s = 0; s <= t; ++s) {
                double dot = 0.0;
                for (Eigen::Index j = 0; j < hd; ++j) dot += qr(t, h * hd + j) * kr(s, h * hd + j);
                logits[static_cast<std::size_t>(s)] = dot / std::sqrt(static_cast<double>(hd));
                mx = std::max(mx, logits[static_cast<std::size_t>(s)]);
            }
            double z = 0.0;
            for (auto& l : logits) z += (l = std::exp(l - mx));
            for (Eigen::Index s = 0; s <= t; ++s) {
                const double p = logits[static_cast<std::size_t>(s)] / z;
                for (Eigen::Index j = 0; j < hd; ++j) out(t, h * hd + j) += p * v(s, h * hd + j);
            }
        }
    }
    return out;
}

/// Σ out ⊙ weights, a 1 x 1 probe that mixes every output entry.
inline nn::Var weighted_sum(nn::Var x, const Tensor& weights) {
    Tensor s(1, 1);
    s(0, 0) = (x.value().array() * weights.array()).sum();
    return x.graph()->push(std::move(s), {x}, [x, weights](nn::Graph& g, const Tensor& grad) {
        if (Tensor* gx = g.grad_buffer(x)) *gx += grad(0, 0) * weights;
    });
}

/// ‖a − n‖ / max(‖n‖, floor), Frobenius norms.
inline double relative_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8) {
    return (analytic - numeric).norm() / std::max(numeric.norm(), floor);
}

using ScalarFn = std::function<nn::Var(nn::Graph&, const std::vector<nn::Var>&)>;

/// Largest per-input relative error between the tape gradient and central
/// differences of step `h`.
inline double gradient_check(std::vector<Tensor> inputs, const ScalarFn& f, double h = 1e-5) {
    std::vector<Tensor> analytic;
    {
        nn::Graph g;
        std::vector<nn::Var> leaves;
        for (auto& x : inputs) leaves.push_back(g.input(x, true));
        g.backward(f(g, leaves));
        for (auto& l : leaves) {
            analytic.push_back(l.grad().size() ? l.grad() : Tensor::Zero(l.rows(), l.cols()));
        }
    }
    const auto eval = [&] {
        nn::Graph g(false);
        std::vector<nn::Var> leaves;
        for (auto& x : inputs) leaves.push_back(g.input(x, false));
        return f(g, leaves).value()(0, 0);
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        Tensor numeric(inputs[i].rows(), inputs[i].cols());
        for (Eigen::Index j = 0; j < inputs[i].size(); ++j) {
            double& x = inputs[i].data()[j];
            const double keep = x;
            x = keep + h;
            const double up = eval();
            x = keep - h;
            const double down = eval();
            x = keep;
            numeric.data()[j] = (up - down) / (2.0 * h);
        }
        worst = std::max(worst, relative_error(analytic[i], numeric));
    }
    return worst;
}

}  // namespace byteflow::testing
