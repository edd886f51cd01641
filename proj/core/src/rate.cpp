#include "byteflow/rate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "byteflow/error.hpp"

namespace byteflow::rate {

namespace {

void check_width(const Matrix& h, const RateConfig& cfg) {
    cfg.validate();
    if (h.rows() > 0 && h.cols() != cfg.d_local) {
        throw Error(ErrorKind::BadShape, "representation width " + std::to_string(h.cols()) + " != d_local " +
                                             std::to_string(cfg.d_local));
    }
    for (double v : h.values()) {
        if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, "representation contains a non-finite value");
    }
}

}  // namespace

void RateConfig::validate() const {
    if (!(eps2 > 0.0) || !std::isfinite(eps2)) throw Error(ErrorKind::InvalidArgument, "eps2 must be finite and > 0");
    if (d_local < 1) throw Error(ErrorKind::InvalidArgument, "d_local must be >= 1");
    const double cc = c();
    if (!std::isfinite(cc) || !(cc > 0.0)) throw Error(ErrorKind::InvalidArgument, "d_local / eps2 is not finite");
}

std::vector<std::size_t> BoundarySet::positions() const {
    std::vector<std::size_t> out(indices.size());
    std::transform(indices.begin(), indices.end(), out.begin(), [](std::size_t i) { return i + 1; });
    return out;
}

double coding_rate_exact(const Matrix& h, const RateConfig& cfg) {
    check_width(h, cfg);
    if (h.rows() == 0) return 0.0;
    const double c = cfg.c();
    Matrix m = h.cols() <= h.rows() ? numkernel::gram(h) : numkernel::outer_gram(h);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) *= c;
        m(i, i) += 1.0;
    }
    return 0.5 * numkernel::cholesky(m).logdet();
}

RateProfile marginal_rates_stream(const Matrix& h, const RateConfig& cfg) {
    check_width(h, cfg);
    RateProfile out;
    out.scores.resize(h.rows());
    if (h.rows() == 0) return out;
    const double c = cfg.c();
    auto factor = numkernel::CholeskyFactor::identity(cfg.d_local);
    out.scores[0] = kAnchorScore;
    factor.update_in_place(h.row(0), c);
    for (std::size_t t = 1; t < h.rows(); ++t) {
        const auto row = h.row(t);
        const double q = factor.inverse_quadratic_form(row);
        out.scores[t] = 0.5 * std::log1p(c * q);
        factor.update_in_place(row, c);
    }
    return out;
}

RateProfile marginal_rates_l2(const Matrix& h, const RateConfig& cfg) {
    check_width(h, cfg);
    RateProfile out;
    out.scores.resize(h.rows());
    if (h.rows() == 0) return out;
    const double half_c = 0.5 * cfg.c();
    out.scores[0] = kAnchorScore;
    for (std::size_t t = 1; t < h.rows(); ++t) {
        const auto row = h.row(t);
        out.scores[t] = half_c * std::inner_product(row.begin(), row.end(), row.begin(), 0.0);
    }
    return out;
}

RateProfile marginal_rates(const Matrix& h, const RateConfig& cfg) {
    return cfg.use_approx ? marginal_rates_l2(h, cfg) : marginal_rates_stream(h, cfg);
}

BoundarySet select_topk(const RateProfile& profile, std::size_t k) {
    const std::size_t t = profile.size();
    if (k < 1 || k > t) {
        throw Error(ErrorKind::InvalidK, "K = " + std::to_string(k) + " outside [1, " + std::to_string(t) + "]");
    }
    for (std::size_t i = 1; i < t; ++i) {
        if (std::isnan(profile.scores[i])) throw Error(ErrorKind::NonFinite, "score at index " + std::to_string(i));
    }
    std::vector<std::size_t> order(t - 1);
    std::iota(order.begin(), order.end(), std::size_t{1});
    const auto better = [&](std::size_t a, std::size_t b) {
        const double sa = profile.scores[a];
        const double sb = profile.scores[b];
        return sa > sb || (sa == sb && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), better);

    BoundarySet s;
    s.indices.reserve(k);
    s.indices.push_back(0);
    s.indices.insert(s.indices.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1));
    std::sort(s.indices.begin(), s.indices.end());
    return s;
}

void validate_boundaries(const BoundarySet& s, std::size_t t) {
    if (s.indices.empty() || s.indices.front() != 0) {
        throw Error(ErrorKind::InvalidArgument, "boundary set must start at the anchor position");
    }
    for (std::size_t i = 1; i < s.indices.size(); ++i) {
        if (s.indices[i] <= s.indices[i - 1]) throw Error(ErrorKind::InvalidArgument, "boundaries not strictly increasing");
    }
    if (s.indices.back() >= t) throw Error(ErrorKind::InvalidArgument, "boundary beyond sequence end");
}

}  // namespace byteflow::rate
