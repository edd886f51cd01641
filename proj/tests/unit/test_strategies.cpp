#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "byteflow/error.hpp"
#include "byteflow/strategies.hpp"
#include "reference.hpp"

using namespace byteflow;
using namespace byteflow::strategies;
using numkernel::Matrix;
using rate::RateConfig;

namespace {

ByteSeq random_bytes(std::mt19937_64& rng, std::size_t t) {
    std::vector<Symbol> s{kBos};
    for (std::size_t i = 1; i < t; ++i) s.push_back(static_cast<Symbol>(rng() % 256));
    return ByteSeq(std::move(s));
}

void check_contract(const rate::BoundarySet& s, std::size_t t, std::size_t k) {
    REQUIRE(s.size() == k);
    CHECK(s.indices.front() == 0);
    for (std::size_t i = 1; i < s.size(); ++i) CHECK(s.indices[i - 1] < s.indices[i]);
    CHECK(s.indices.back() < t);
}

}  // namespace

TEST_CASE("tag names round-trip") {
    for (auto tag : kAllTags) CHECK(parse_tag(tag_name(tag)) == tag);
    CHECK_FALSE(parse_tag("bpe").has_value());
    CHECK(kAllTags.size() == 8);
}

TEST_CASE("strategy kind validation") {
    CHECK_THROWS_AS(StrategyKind::fixed_stride(0).validate(), Error);
    CHECK_THROWS_AS(StrategyKind::random(0.0, 1).validate(), Error);
    CHECK_THROWS_AS(StrategyKind::random(1.0, 1).validate(), Error);
    CHECK_NOTHROW(StrategyKind::random(0.5, 1).validate());
}

TEST_CASE("fixed stride 4 over 10 bytes selects {1, 4, 8}") {
    const auto bytes = ByteSeq::from_text("abcdefghij");
    const RateConfig cfg{1.0, 4, false};
    const auto profile = score_positions(StrategyKind::fixed_stride(4), bytes, Matrix(), cfg);
    CHECK(std::isinf(profile.scores[0]));
    const auto native = native_boundaries(profile);
    const rate::BoundarySet s{native};
    CHECK(s.positions() == std::vector<std::size_t>{1, 4, 8});
    CHECK(segment(StrategyKind::fixed_stride(4), bytes, Matrix(), cfg, 3).positions() ==
          std::vector<std::size_t>{1, 4, 8});
}

TEST_CASE("word boundary fires at the space and the period") {
    const auto bytes = ByteSeq::from_text("ab cd.");
    const auto p = score_positions(StrategyKind::word_boundary(), bytes, Matrix(), RateConfig{});
    CHECK(p.scores[1] == 0.0);
    CHECK(p.scores[2] == 1.0);  // ' '
    CHECK(p.scores[3] == 0.0);
    CHECK(p.scores[4] == 0.0);
    CHECK(p.scores[5] == 1.0);  // '.'
}

TEST_CASE("word delimiter set") {
    for (char c : std::string(" \t\n!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")) CHECK(is_word_delimiter(static_cast<Symbol>(c)));
    for (char c : std::string("azAZ09")) CHECK_FALSE(is_word_delimiter(static_cast<Symbol>(c)));
    CHECK_FALSE(is_word_delimiter(kBos));
}

TEST_CASE("word boundary pads with farthest filler positions") {
    const auto bytes = ByteSeq::from_text("abcdefgh ij");  // one delimiter at index 8
    const auto s = segment(StrategyKind::word_boundary(), bytes, Matrix(), RateConfig{}, 4);
    check_contract(s, bytes.size(), 4);
    CHECK(std::find(s.indices.begin(), s.indices.end(), 8) != s.indices.end());
    // Largest gap is 0..8; its midpoint is the first filler.
    CHECK(std::find(s.indices.begin(), s.indices.end(), 4) != s.indices.end());
}

TEST_CASE("fit_to_k truncates to the earliest members and pads deterministically") {
    CHECK(fit_to_k({0, 2, 4, 6, 8}, 10, 3).indices == std::vector<std::size_t>{0, 2, 4});
    CHECK(fit_to_k({0}, 9, 3).indices == std::vector<std::size_t>{0, 4, 8});
    CHECK(fit_to_k({0}, 4, 4).indices == std::vector<std::size_t>{0, 1, 2, 3});
    CHECK(fit_to_k({}, 5, 1).indices == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(fit_to_k({0}, 4, 5), Error);
}

TEST_CASE("random strategy is deterministic under its seed") {
    const auto bytes = ByteSeq::from_text(std::string(200, 'x'));
    const auto a = segment(StrategyKind::random(0.3, 11), bytes, Matrix(), RateConfig{}, 50, {nullptr, 5});
    const auto b = segment(StrategyKind::random(0.3, 11), bytes, Matrix(), RateConfig{}, 50, {nullptr, 5});
    CHECK(a == b);
    const auto c = segment(StrategyKind::random(0.3, 12), bytes, Matrix(), RateConfig{}, 50, {nullptr, 5});
    CHECK_FALSE(a == c);
    const auto native = native_boundaries(score_positions(StrategyKind::random(0.3, 11), bytes, Matrix(), RateConfig{}));
    const double rate = static_cast<double>(native.size() - 1) / 199.0;
    CHECK(rate == doctest::Approx(0.3).epsilon(0.35));
}

TEST_CASE("coding rate picks the novel direction") {
    Matrix h(3, 4);
    h(0, 0) = h(1, 0) = h(2, 1) = 1.0;
    const auto bytes = ByteSeq::from_text("abc");
    const RateConfig cfg{1.0, 4, false};
    const auto p = score_positions(StrategyKind::coding_rate(), bytes, h, cfg);
    CHECK(p.scores[2] == doctest::Approx(0.5 * std::log(5.0)));
    CHECK(p.scores[1] == doctest::Approx(0.5 * std::log(9.0 / 5.0)));
    CHECK(segment(StrategyKind::coding_rate(), bytes, h, cfg, 2).positions() == std::vector<std::size_t>{1, 3});
}

TEST_CASE("cosine extremes") {
    Matrix same(5, 3);
    Matrix orth(5, 3);
    for (std::size_t t = 0; t < 5; ++t) {
        for (std::size_t c = 0; c < 3; ++c) same(t, c) = 1.0 + static_cast<double>(c);
        orth(t, t % 2) = 1.0;
    }
    const auto bytes = ByteSeq::from_text("abcde");
    const auto ps = score_positions(StrategyKind::cosine(), bytes, same, RateConfig{1.0, 3, false});
    const auto po = score_positions(StrategyKind::cosine(), bytes, orth, RateConfig{1.0, 3, false});
    for (std::size_t t = 1; t < 5; ++t) {
        CHECK(ps.scores[t] == doctest::Approx(0.0).epsilon(1e-15));
        CHECK(po.scores[t] == 1.0);
    }
}

TEST_CASE("entropy under a uniform predictor is log 258 and ties resolve earliest") {
    const auto bytes = ByteSeq::from_text("hello world");
    const auto p = score_positions(StrategyKind::entropy(), bytes, Matrix(), RateConfig{});
    for (std::size_t t = 1; t < bytes.size(); ++t) CHECK(p.scores[t] == doctest::Approx(std::log(258.0)));
    CHECK(std::log(258.0) == doctest::Approx(5.5530).epsilon(1e-4));
    CHECK(segment(StrategyKind::entropy(), bytes, Matrix(), RateConfig{}, 4).positions() ==
          std::vector<std::size_t>{1, 2, 3, 4});
}

TEST_CASE("bigram entropy is bounded and counts round-trip") {
    BigramModel m;
    m.observe(ByteSeq::from_text("abababababababab aaaa"));
    CHECK(m.entropy('a') < std::log(258.0));
    CHECK(m.entropy('z') == doctest::Approx(std::log(258.0)));
    for (Symbol s = 0; s < kVocabSize; ++s) {
        CHECK(m.entropy(s) >= 0.0);
        CHECK(m.entropy(s) <= std::log(258.0) + 1e-12);
    }
    const auto copy = BigramModel::from_counts(m.counts());
    CHECK(copy.total() == m.total());
    CHECK(copy.entropy('a') == m.entropy('a'));
    CHECK(copy.probability('a', 'b') == m.probability('a', 'b'));
}

TEST_CASE("representation strategies require h") {
    const auto bytes = ByteSeq::from_text("abc");
    for (auto tag : kAllTags) {
        if (!uses_representations(tag)) continue;
        try {
            score_positions(StrategyKind{tag}, bytes, Matrix(), RateConfig{});
            FAIL("expected MissingRepresentations");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::MissingRepresentations);
        }
    }
    CHECK_THROWS_AS(score_positions(StrategyKind::cosine(), bytes, Matrix(2, 4), RateConfig{}), Error);
}

TEST_CASE("property: every strategy returns exactly K anchored sorted positions") {
    std::mt19937_64 rng(8);
    BigramModel bigram;
    bigram.observe(ByteSeq::from_text("the cat sat on the mat. the dog sat on the log."));
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t t = 1 + rng() % 80;
        const std::size_t d = 1 + rng() % 8;
        const auto bytes = random_bytes(rng, t);
        const auto h = testing::random_matrix(rng, t, d);
        const RateConfig cfg{1.0, d, false};
        const std::size_t k = 1 + rng() % t;
        for (auto tag : kAllTags) {
            StrategyKind kind{tag};
            kind.stride = 1 + rng() % 6;
            kind.seed = trial;
            check_contract(segment(kind, bytes, h, cfg, k, {&bigram, rng()}), t, k);
        }
    }
}

TEST_CASE("property: byte-only strategies ignore h, representation strategies ignore bytes") {
    std::mt19937_64 rng(21);
    const std::size_t t = 40;
    const std::size_t d = 6;
    const auto bytes_a = random_bytes(rng, t);
    const auto bytes_b = random_bytes(rng, t);
    const auto h_a = testing::random_matrix(rng, t, d);
    const auto h_b = testing::random_matrix(rng, t, d);
    const RateConfig cfg{1.0, d, false};
    for (auto tag : kAllTags) {
        const StrategyKind kind{tag};
        const StrategyContext ctx{nullptr, 3};
        if (uses_representations(tag)) {
            CHECK(score_positions(kind, bytes_a, h_a, cfg, ctx).scores ==
                  score_positions(kind, bytes_b, h_a, cfg, ctx).scores);
        } else {
            CHECK(score_positions(kind, bytes_a, h_a, cfg, ctx).scores ==
                  score_positions(kind, bytes_a, h_b, cfg, ctx).scores);
        }
    }
}

TEST_CASE("neural gate weights are seeded and unit variance") {
    const auto w = neural_gate_weights(4000, 9);
    CHECK(w == neural_gate_weights(4000, 9));
    double s2 = 0.0;
    for (double v : w) s2 += v * v;
    CHECK(s2 / 4000.0 == doctest::Approx(1.0).epsilon(0.1));
}
