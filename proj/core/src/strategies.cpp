#include "byteflow/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "byteflow/error.hpp"
#include "byteflow/rng.hpp"

namespace byteflow::strategies {

namespace {

RateProfile indicator_profile(std::size_t t) {
    RateProfile p;
    p.scores.assign(t, 0.0);
    if (t > 0) p.scores[0] = rate::kAnchorScore;
    return p;
}

void require_representations(const StrategyKind& kind, const ByteSeq& bytes, const Matrix& h) {
    if (h.empty() && !bytes.empty()) {
        throw Error(ErrorKind::MissingRepresentations,
                    std::string(tag_name(kind.tag)) + " needs encoder representations");
    }
    if (h.rows() != bytes.size()) {
        throw Error(ErrorKind::BadShape, "representations have " + std::to_string(h.rows()) + " rows for " +
                                             std::to_string(bytes.size()) + " bytes");
    }
}

RateProfile fixed_stride_profile(std::size_t t, std::size_t w) {
    auto p = indicator_profile(t);
    // 1-based positions i·w map to indices i·w − 1.
    for (std::size_t pos = w; pos <= t; pos += w) {
        if (pos - 1 > 0) p.scores[pos - 1] = 1.0;
    }
    return p;
}

RateProfile word_boundary_profile(const ByteSeq& bytes) {
    auto p = indicator_profile(bytes.size());
    for (std::size_t i = 1; i < bytes.size(); ++i) {
        if (is_word_delimiter(bytes[i])) p.scores[i] = 1.0;
    }
    return p;
}

RateProfile random_profile(std::size_t t, double prob, std::uint64_t seed, std::uint64_t nonce) {
    auto p = indicator_profile(t);
    std::mt19937_64 gen(mix_seed(seed, nonce));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (std::size_t i = 1; i < t; ++i) {
        if (uniform(gen) < prob) p.scores[i] = 1.0;
    }
    return p;
}

RateProfile neural_profile(const Matrix& h, std::uint64_t seed, std::uint64_t nonce) {
    const auto w = neural_gate_weights(h.cols(), seed);
    auto p = indicator_profile(h.rows());
    std::mt19937_64 gen(mix_seed(seed ^ 0x6e657572616cULL, nonce));
    std::uniform_real_distribution<double> uniform(std::numeric_limits<double>::min(), 1.0);
    for (std::size_t i = 1; i < h.rows(); ++i) {
        const auto row = h.row(i);
        double logit = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j) logit += row[j] * w[j];
        // Difference of two Gumbel draws: the binary Gumbel-softmax relaxation
        // of b_t ~ Bernoulli(σ(logit)).
        const double g1 = -std::log(-std::log(uniform(gen)));
        const double g2 = -std::log(-std::log(uniform(gen)));
        p.scores[i] = logit + g1 - g2;
    }
    return p;
}

RateProfile entropy_profile(const ByteSeq& bytes, const BigramModel* bigram) {
    auto p = indicator_profile(bytes.size());
    const double uniform_entropy = std::log(static_cast<double>(kVocabSize));
    for (std::size_t i = 1; i < bytes.size(); ++i) {
        p.scores[i] = bigram != nullptr ? bigram->entropy(bytes[i]) : uniform_entropy;
    }
    return p;
}

RateProfile cosine_profile(const Matrix& h) {
    auto p = indicator_profile(h.rows());
    for (std::size_t i = 1; i < h.rows(); ++i) {
        const auto a = h.row(i);
        const auto b = h.row(i - 1);
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            dot += a[j] * b[j];
            na += a[j] * a[j];
            nb += b[j] * b[j];
        }
        double sim = 0.0;
        if (na == 0.0 && nb == 0.0) {
            sim = 1.0;
        } else if (na > 0.0 && nb > 0.0) {
            sim = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
        }
        p.scores[i] = 1.0 - sim;
    }
    return p;
}

}  // namespace

std::string_view tag_name(StrategyTag tag) noexcept {
    switch (tag) {
        case StrategyTag::FixedStride: return "fixed-stride";
        case StrategyTag::WordBoundary: return "word-boundary";
        case StrategyTag::Random: return "random";
        case StrategyTag::NeuralBoundary: return "neural";
        case StrategyTag::Entropy: return "entropy";
        case StrategyTag::Cosine: return "cosine";
        case StrategyTag::CodingRateExact: return "coding-rate";
        case StrategyTag::CodingRateL2: return "coding-rate-l2";
    }
    return "unknown";
}

std::optional<StrategyTag> parse_tag(std::string_view name) noexcept {
    for (auto tag : kAllTags) {
        if (tag_name(tag) == name) return tag;
    }
    return std::nullopt;
}

bool uses_representations(StrategyTag tag) noexcept {
    return tag == StrategyTag::NeuralBoundary || tag == StrategyTag::Cosine || tag == StrategyTag::CodingRateExact ||
           tag == StrategyTag::CodingRateL2;
}

bool has_native_set(StrategyTag tag) noexcept {
    return tag == StrategyTag::FixedStride || tag == StrategyTag::WordBoundary || tag == StrategyTag::Random;
}

void StrategyKind::validate() const {
    if (tag == StrategyTag::FixedStride && stride < 1) throw Error(ErrorKind::InvalidArgument, "stride must be >= 1");
    if (tag == StrategyTag::Random && !(p > 0.0 && p < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "random boundary probability must lie in (0, 1)");
    }
}

BigramModel::BigramModel()
    : counts_(kVocabSize * kVocabSize, 0),
      row_totals_(kVocabSize, 0),
      entropy_(kVocabSize, std::log(static_cast<double>(kVocabSize))) {}

void BigramModel::observe(const ByteSeq& bytes) {
    std::vector<bool> dirty(kVocabSize, false);
    for (std::size_t i = 1; i < bytes.size(); ++i) {
        ++counts_[bytes[i - 1] * kVocabSize + bytes[i]];
        ++row_totals_[bytes[i - 1]];
        dirty[bytes[i - 1]] = true;
        ++total_;
    }
    for (std::size_t row = 0; row < kVocabSize; ++row) {
        if (dirty[row]) refresh_entropy(row);
    }
}

BigramModel BigramModel::from_counts(std::span<const std::uint64_t> counts) {
    if (counts.size() != kVocabSize * kVocabSize) throw Error(ErrorKind::BadShape, "bigram count table size");
    BigramModel m;
    std::copy(counts.begin(), counts.end(), m.counts_.begin());
    for (std::size_t row = 0; row < kVocabSize; ++row) {
        std::uint64_t sum = 0;
        for (std::size_t v = 0; v < kVocabSize; ++v) sum += m.counts_[row * kVocabSize + v];
        m.row_totals_[row] = sum;
        m.total_ += sum;
        m.refresh_entropy(row);
    }
    return m;
}

void BigramModel::refresh_entropy(std::size_t row) {
    double h = 0.0;
    for (std::size_t v = 0; v < kVocabSize; ++v) {
        const double prob = probability(static_cast<Symbol>(row), static_cast<Symbol>(v));
        h -= prob * std::log(prob);
    }
    entropy_[row] = std::max(0.0, h);
}

double BigramModel::probability(Symbol current, Symbol next) const {
    const double num = static_cast<double>(counts_[current * kVocabSize + next]) + 1.0;
    const double den = static_cast<double>(row_totals_[current]) + static_cast<double>(kVocabSize);
    return num / den;
}

double BigramModel::entropy(Symbol current) const {
    if (current >= kVocabSize) throw Error(ErrorKind::OutOfVocab, "bigram context symbol");
    return entropy_[current];
}

bool is_word_delimiter(Symbol s) noexcept {
    if (s == ' ' || s == '\t' || s == '\n') return true;
    // POSIX [:punct:] in the C locale.
    return (s >= 33 && s <= 47) || (s >= 58 && s <= 64) || (s >= 91 && s <= 96) || (s >= 123 && s <= 126);
}

std::vector<double> neural_gate_weights(std::size_t d, std::uint64_t seed) {
    std::mt19937_64 gen(mix_seed(seed, 0x6761746557ULL));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> w(d);
    for (auto& v : w) v = normal(gen);
    return w;
}

RateProfile score_positions(const StrategyKind& kind, const ByteSeq& bytes, const Matrix& h, const RateConfig& cfg,
                            const StrategyContext& ctx) {
    kind.validate();
    if (uses_representations(kind.tag)) require_representations(kind, bytes, h);
    switch (kind.tag) {
        case StrategyTag::FixedStride: return fixed_stride_profile(bytes.size(), kind.stride);
        case StrategyTag::WordBoundary: return word_boundary_profile(bytes);
        case StrategyTag::Random: return random_profile(bytes.size(), kind.p, kind.seed, ctx.nonce);
        case StrategyTag::NeuralBoundary: return neural_profile(h, kind.seed, ctx.nonce);
        case StrategyTag::Entropy: return entropy_profile(bytes, ctx.bigram);
        case StrategyTag::Cosine: return cosine_profile(h);
        case StrategyTag::CodingRateExact: return rate::marginal_rates_stream(h, cfg);
        case StrategyTag::CodingRateL2: return rate::marginal_rates_l2(h, cfg);
    }
    throw Error(ErrorKind::InvalidArgument, "unknown strategy");
}

std::vector<std::size_t> native_boundaries(const RateProfile& profile) {
    std::vector<std::size_t> out;
    if (profile.size() == 0) return out;
    out.push_back(0);
    for (std::size_t i = 1; i < profile.size(); ++i) {
        if (profile.scores[i] > 0.5) out.push_back(i);
    }
    return out;
}

BoundarySet fit_to_k(std::vector<std::size_t> native, std::size_t t, std::size_t k) {
    if (k < 1 || k > t) {
        throw Error(ErrorKind::InvalidK, "K = " + std::to_string(k) + " outside [1, " + std::to_string(t) + "]");
    }
    if (native.empty() || native.front() != 0) native.insert(native.begin(), 0);
    BoundarySet s;
    if (native.size() >= k) {
        s.indices.assign(native.begin(), native.begin() + static_cast<std::ptrdiff_t>(k));
        return s;
    }
    // Greedy farthest-point padding: distance to the nearest boundary on
    // either side, updated incrementally after each insertion.
    std::vector<std::size_t> dist(t, std::numeric_limits<std::size_t>::max());
    std::vector<bool> taken(t, false);
    const auto place = [&](std::size_t q) {
        taken[q] = true;
        for (std::size_t i = 0; i < t; ++i) {
            const std::size_t d = i > q ? i - q : q - i;
            dist[i] = std::min(dist[i], d);
        }
    };
    for (auto q : native) place(q);
    std::vector<std::size_t> chosen = native;
    while (chosen.size() < k) {
        std::size_t best = t;
        for (std::size_t i = 0; i < t; ++i) {
            if (taken[i]) continue;
            if (best == t || dist[i] > dist[best]) best = i;
        }
        place(best);
        chosen.push_back(best);
    }
    std::sort(chosen.begin(), chosen.end());
    s.indices = std::move(chosen);
    return s;
}

BoundarySet segment(const StrategyKind& kind, const ByteSeq& bytes, const Matrix& h, const RateConfig& cfg,
                    std::size_t k, const StrategyContext& ctx) {
    const auto profile = score_positions(kind, bytes, h, cfg, ctx);
    if (has_native_set(kind.tag)) return fit_to_k(native_boundaries(profile), bytes.size(), k);
    return rate::select_topk(profile, k);
}

}  // namespace byteflow::strategies
