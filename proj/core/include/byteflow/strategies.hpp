#pragma once

// Chunking strategies behind one scoring interface. Every strategy yields a
// RateProfile whose index 0 carries the anchor score; segment() always
// returns exactly K boundaries so the downstream graph shape is fixed.
//
// Static strategies (fixed stride, word boundary, random) produce a native
// boundary set that is truncated to its K earliest members or padded with
// max-min-distance filler positions. Dynamic strategies rank their scores
// with select_topk.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "byteflow/bytes.hpp"
#include "byteflow/rate.hpp"

namespace byteflow::strategies {

using rate::BoundarySet;
using rate::Matrix;
using rate::RateConfig;
using rate::RateProfile;

enum class StrategyTag {
    FixedStride,
    WordBoundary,
    Random,
    NeuralBoundary,
    Entropy,
    Cosine,
    CodingRateExact,
    CodingRateL2,
};

inline constexpr std::array kAllTags = {
    StrategyTag::FixedStride, StrategyTag::WordBoundary, StrategyTag::Random,          StrategyTag::NeuralBoundary,
    StrategyTag::Entropy,     StrategyTag::Cosine,       StrategyTag::CodingRateExact, StrategyTag::CodingRateL2,
};

/// CLI spelling: fixed-stride, word-boundary, random, neural, entropy,
/// cosine, coding-rate, coding-rate-l2.
std::string_view tag_name(StrategyTag tag) noexcept;
std::optional<StrategyTag> parse_tag(std::string_view name) noexcept;

/// True for strategies that read h (neural, cosine, coding-rate*).
bool uses_representations(StrategyTag tag) noexcept;
/// True for strategies with a native boundary set (stride, word, random).
bool has_native_set(StrategyTag tag) noexcept;

struct StrategyKind {
    StrategyTag tag = StrategyTag::CodingRateExact;
    std::size_t stride = 4;     // FixedStride w
    double p = 1.0 / 2.56;      // Random boundary probability
    std::uint64_t seed = 0;     // Random / NeuralBoundary

    static StrategyKind fixed_stride(std::size_t w) { return {StrategyTag::FixedStride, w}; }
    static StrategyKind word_boundary() { return {StrategyTag::WordBoundary}; }
    static StrategyKind random(double p, std::uint64_t seed) { return {StrategyTag::Random, 4, p, seed}; }
    static StrategyKind neural(std::uint64_t seed) { return {StrategyTag::NeuralBoundary, 4, 1.0 / 2.56, seed}; }
    static StrategyKind entropy() { return {StrategyTag::Entropy}; }
    static StrategyKind cosine() { return {StrategyTag::Cosine}; }
    static StrategyKind coding_rate() { return {StrategyTag::CodingRateExact}; }
    static StrategyKind coding_rate_l2() { return {StrategyTag::CodingRateL2}; }

    /// Throws InvalidArgument for w < 1 or p outside (0, 1).
    void validate() const;
};

/// Add-one-smoothed byte bigram predictor P(next | current) used by the
/// entropy strategy in place of a separately trained entropy model.
class BigramModel {
public:
    BigramModel();
    /// Rebuilds a model from a kVocabSize² row-major count table.
    static BigramModel from_counts(std::span<const std::uint64_t> counts);

    void observe(const ByteSeq& bytes);
    [[nodiscard]] std::span<const std::uint64_t> counts() const noexcept { return counts_; }
    [[nodiscard]] double probability(Symbol current, Symbol next) const;
    /// −Σ_v P(v | current) log P(v | current), refreshed by observe().
    [[nodiscard]] double entropy(Symbol current) const;
    [[nodiscard]] std::uint64_t total() const noexcept { return total_; }

private:
    void refresh_entropy(std::size_t row);

    std::vector<std::uint64_t> counts_;  // kVocabSize x kVocabSize
    std::vector<std::uint64_t> row_totals_;
    std::vector<double> entropy_;
    std::uint64_t total_ = 0;
};

/// Per-call inputs beyond the sequence itself.
struct StrategyContext {
    const BigramModel* bigram = nullptr;  // null: uniform predictor
    std::uint64_t nonce = 0;              // mixed into seeded noise per sequence
};

/// Delimiters for the word-boundary strategy: ASCII space, tab, newline and
/// the POSIX punct class.
bool is_word_delimiter(Symbol s) noexcept;

/// Unit-variance gate vector for the neural strategy, derived from seed only.
std::vector<double> neural_gate_weights(std::size_t d, std::uint64_t seed);

RateProfile score_positions(const StrategyKind& kind, const ByteSeq& bytes, const Matrix& h, const RateConfig& cfg,
                            const StrategyContext& ctx = {});

BoundarySet segment(const StrategyKind& kind, const ByteSeq& bytes, const Matrix& h, const RateConfig& cfg,
                    std::size_t k, const StrategyContext& ctx = {});

/// Native set of a static strategy (indices, sorted, includes 0).
std::vector<std::size_t> native_boundaries(const RateProfile& profile);

/// Truncates a sorted anchored index set to its k earliest members, or pads
/// it with the positions farthest from any existing boundary (ties to the
/// earlier index).
BoundarySet fit_to_k(std::vector<std::size_t> native, std::size_t t, std::size_t k);

}  // namespace byteflow::strategies
