#pragma once

// Lossy coding-rate chunking.
//
//   R(h_{1:T}) = ½ log det(I + c·h·hᵀ),   c = d_local / ε²
//   ΔR_t       = R(h_{1:t}) − R(h_{1:t−1})
//
// The streaming marginal rate uses the matrix determinant lemma on the d x d
// Gram side: with M_{t−1} = I_d + c·h_{1:t−1}ᵀh_{1:t−1},
//
//   ΔR_t = ½ log(1 + c·h_tᵀ M_{t−1}⁻¹ h_t)
//
// and M is carried as a Cholesky factor updated once per row, O(T·d²) total.
//
// Positions are 0-based in this API; index 0 is the anchor (BOS) position,
// called position 1 in user-facing output.

#include <cstddef>
#include <limits>
#include <vector>

#include "byteflow/numkernel.hpp"

namespace byteflow::rate {

using numkernel::Matrix;

struct RateConfig {
    double eps2 = 1.0;
    std::size_t d_local = 1;
    bool use_approx = false;

    /// c = d_local / ε².
    [[nodiscard]] double c() const noexcept { return static_cast<double>(d_local) / eps2; }
    /// Throws InvalidArgument unless eps2 > 0, d_local >= 1 and c is finite.
    void validate() const;
};

/// Score assigned to the anchor position; it always ranks first.
inline constexpr double kAnchorScore = std::numeric_limits<double>::infinity();

struct RateProfile {
    std::vector<double> scores;  // scores[0] == kAnchorScore

    [[nodiscard]] std::size_t size() const noexcept { return scores.size(); }
};

/// Chronologically sorted selected indices; indices.front() == 0.
struct BoundarySet {
    std::vector<std::size_t> indices;

    [[nodiscard]] std::size_t size() const noexcept { return indices.size(); }
    /// 1-based positions.
    [[nodiscard]] std::vector<std::size_t> positions() const;

    friend bool operator==(const BoundarySet&, const BoundarySet&) = default;
};

/// ½ log det(I + c·h·hᵀ), evaluated on whichever side of the
/// Weinstein-Aronszajn identity is smaller. Empty h gives 0.
double coding_rate_exact(const Matrix& h, const RateConfig& cfg);

/// Exact ΔR_t for every row via rank-one Cholesky updates.
RateProfile marginal_rates_stream(const Matrix& h, const RateConfig& cfg);

/// First-order trace approximation, ΔR_t ≈ (d_local / 2ε²)·‖h_t‖².
RateProfile marginal_rates_l2(const Matrix& h, const RateConfig& cfg);

/// Dispatches on cfg.use_approx.
RateProfile marginal_rates(const Matrix& h, const RateConfig& cfg);

/// Index 0 plus the K−1 highest-scoring later positions, sorted. Ties go to
/// the earlier position. Throws InvalidK unless 1 <= K <= T.
BoundarySet select_topk(const RateProfile& profile, std::size_t k);

/// Throws InvalidArgument unless the set is a valid K-subset of [0, t)
/// anchored at 0.
void validate_boundaries(const BoundarySet& s, std::size_t t);

}  // namespace byteflow::rate
