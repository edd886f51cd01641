#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "byteflow/error.hpp"
#include "byteflow/model.hpp"
#include "reference.hpp"

using namespace byteflow;
using namespace byteflow::model;

namespace {

ByteSeq random_bytes(std::mt19937_64& rng, std::size_t t) {
    std::vector<Symbol> s{kBos};
    for (std::size_t i = 1; i < t; ++i) s.push_back(static_cast<Symbol>(rng() % 256));
    return ByteSeq(std::move(s));
}

ModelConfig small_config() {
    ModelConfig c = ModelConfig::micro();
    c.d_local = 8;
    c.d_global = 8;
    c.global_length = 6;
    c.window = 3;
    return c;
}

/// Perturbs every parameter so identity-initialized gates and small readouts
/// do not hide gradient paths.
void jitter(ModelParams& p, std::uint64_t seed, double scale) {
    std::mt19937_64 rng(seed);
    for (auto& t : p.tensors()) t.value += testing::random_tensor(rng, t.value.rows(), t.value.cols(), scale);
}

}  // namespace

TEST_CASE("config validation and presets") {
    for (const auto& c : {ModelConfig::desk(), ModelConfig::micro(), ModelConfig::full_600m(), ModelConfig::full_1_3b()}) {
        CHECK_NOTHROW(c.validate());
    }
    const auto d = ModelConfig::desk();
    CHECK(d.d_local == 64);
    CHECK(d.d_global == 128);
    CHECK(d.global_length == 100);
    CHECK(d.bins == 16);
    CHECK(d.window == 32);
    CHECK(d.rope_theta_local == 5e5);

    ModelConfig bad = d;
    bad.d_global = 32;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = d;
    bad.bins = 0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = d;
    bad.heads_local = 3;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("config key-value round trip") {
    ModelConfig c = ModelConfig::micro();
    c.eps2 = 0.37;
    c.canon = false;
    c.chunker = strategies::StrategyKind::random(0.25, 42);
    ModelConfig back;
    back.apply(config::KeyValues::parse(c.to_key_values().format()));
    CHECK(back.to_key_values().format() == c.to_key_values().format());
    CHECK(back.eps2 == 0.37);
    CHECK(back.chunker.tag == strategies::StrategyTag::Random);
    CHECK(back.chunker.p == 0.25);

    config::KeyValues kv;
    kv.set("chunker", "bpe");
    CHECK_THROWS_AS(back.apply(kv), Error);
}

TEST_CASE("parameter shapes and names") {
    const auto cfg = ModelConfig::desk();
    const auto p = ModelParams::init(cfg);
    std::set<std::string> names;
    for (const auto& t : p.tensors()) {
        CHECK(names.insert(t.name).second);
        CHECK(t.value.allFinite());
    }
    CHECK(p.at(p.embedding).value.rows() == 258);
    CHECK(p.at(p.proj).value.rows() == 64);
    CHECK(p.at(p.proj).value.cols() == 128);
    CHECK(p.upsample.size() == 16);
    CHECK(p.at(p.upsample[0]).value.rows() == 128);
    CHECK(p.at(p.upsample[0]).value.cols() == 64);
    CHECK(p.at(p.out).value.cols() == 258);
    CHECK(p.encoder.size() == 2);
    CHECK(p.global.size() == 4);
    CHECK(p.decoder.size() == 2);
    const auto& gate = p.at(p.encoder[0].canon1).value;
    CHECK(gate.row(0).isOnes());
    CHECK(gate.bottomRows(3).isZero());
    CHECK_THROWS_AS((void)p.named("nope"), Error);
    CHECK(p.named("proj").value.cols() == 128);

    const auto q = ModelParams::init(cfg);
    CHECK(p.at(p.proj).value == q.at(q.proj).value);
}

TEST_CASE("chunk map follows the last boundary at or before t") {
    const auto chunk = chunk_map(BoundarySet{{0, 3, 6}}, 9);
    CHECK(chunk[4] == 1);  // position 5 uses g₂
    CHECK(chunk == std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 2, 2, 2});
}

TEST_CASE("bin map gives equal-width bins") {
    const auto bins = bin_map(16, 4);
    for (std::size_t t = 0; t < 16; ++t) CHECK(bins[t] == t / 4);
    const auto uneven = bin_map(10, 3);
    CHECK(uneven.front() == 0);
    CHECK(uneven.back() == 2);
    CHECK(std::is_sorted(uneven.begin(), uneven.end()));
    CHECK(bin_map(5, 1) == std::vector<std::size_t>(5, 0));
}

TEST_CASE("encoder with no layers returns raw embeddings") {
    ModelConfig cfg = small_config();
    cfg.encoder_layers = 0;
    auto p = ModelParams::init(cfg);
    const auto bytes = ByteSeq::with_bos("hello");
    nn::Graph g(false);
    const auto h = encode_local(g, p, cfg, bytes).value();
    for (std::size_t t = 0; t < bytes.size(); ++t) {
        CHECK(h.row(static_cast<Eigen::Index>(t)) == p.at(p.embedding).value.row(bytes[t]));
    }
}

TEST_CASE("encoder is causal and rejects long input") {
    const auto cfg = small_config();
    auto p = ModelParams::init(cfg);
    std::mt19937_64 rng(1);
    auto bytes = random_bytes(rng, 20);
    nn::Graph g(false);
    const auto base = encode_local(g, p, cfg, bytes).value();
    std::vector<Symbol> flipped(bytes.begin(), bytes.end());
    flipped.back() ^= 0x55;
    const auto moved = encode_local(g, p, cfg, ByteSeq(flipped)).value();
    CHECK((base.topRows(19) - moved.topRows(19)).isZero(0.0));
    CHECK_FALSE((base.row(19) - moved.row(19)).isZero(0.0));

    ModelConfig tiny = cfg;
    tiny.max_seq_len = 10;
    try {
        encode_local(g, p, tiny, bytes);
        FAIL("expected SequenceTooLong");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::SequenceTooLong);
    }
}

TEST_CASE("downsample with K = T keeps every row in order") {
    ModelConfig cfg = small_config();
    cfg.global_length = 7;
    auto p = ModelParams::init(cfg);
    const auto bytes = ByteSeq::with_bos("abcdef");
    nn::Graph g(false);
    auto h = encode_local(g, p, cfg, bytes);
    const auto ds = downsample(g, h, p, cfg, bytes);
    CHECK(ds.boundaries.positions() == std::vector<std::size_t>{1, 2, 3, 4, 5, 6, 7});
    const Tensor expect = h.value() * p.at(p.proj).value;
    CHECK((ds.latents.value() - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("L2 chunker keeps a dominant-norm row") {
    ModelConfig cfg = small_config();
    cfg.encoder_layers = 0;
    cfg.global_length = 2;
    cfg.chunker = strategies::StrategyKind::coding_rate_l2();
    auto p = ModelParams::init(cfg);
    p.at(p.embedding).value.row('z') *= 50.0;
    const auto bytes = ByteSeq::with_bos("abczdef");
    nn::Graph g(false);
    auto h = encode_local(g, p, cfg, bytes);
    const auto ds = downsample(g, h, p, cfg, bytes);
    CHECK(ds.boundaries.positions() == std::vector<std::size_t>{1, 5});
}

TEST_CASE("boundary selection is deterministic for every chunker") {
    std::mt19937_64 rng(2);
    const auto bytes = random_bytes(rng, 24);
    for (auto tag : strategies::kAllTags) {
        ModelConfig cfg = small_config();
        cfg.chunker = strategies::StrategyKind{tag};
        auto p = ModelParams::init(cfg);
        nn::Graph g1(false), g2(false);
        const auto a = forward(g1, p, cfg, bytes).boundaries;
        const auto b = forward(g2, p, cfg, bytes).boundaries;
        CHECK(a == b);
        CHECK(a.size() == cfg.global_length);
    }
}

TEST_CASE("upsample with a zero global signal returns h") {
    const auto cfg = small_config();
    auto p = ModelParams::init(cfg);
    std::mt19937_64 rng(3);
    const auto bytes = random_bytes(rng, 12);
    nn::Graph g(false);
    auto h = encode_local(g, p, cfg, bytes);
    auto zero = g.input(Tensor::Zero(static_cast<Eigen::Index>(cfg.global_length), static_cast<Eigen::Index>(cfg.d_global)));
    const auto out = upsample(g, zero, BoundarySet{{0, 2, 4, 6, 8, 10}}, h, p, cfg).value();
    CHECK(out == h.value());
}

TEST_CASE("zeroed global path leaves a finite loss") {
    const auto cfg = small_config();
    auto p = ModelParams::init(cfg);
    std::mt19937_64 rng(4);
    const auto bytes = random_bytes(rng, 16);
    ForwardOptions opts;
    opts.zero_global = true;
    const auto r = forward_loss(p, cfg, bytes, opts);
    CHECK(std::isfinite(r.loss_nats));
    CHECK(r.loss_nats != forward_loss(p, cfg, bytes).loss_nats);
}

TEST_CASE("forward checks its arguments") {
    const auto cfg = small_config();
    auto p = ModelParams::init(cfg);
    nn::Graph g;
    CHECK_THROWS_AS(forward(g, p, cfg, ByteSeq::from_text("a")), Error);
    try {
        forward(g, p, cfg, ByteSeq::from_text("abc"));
        FAIL("expected InvalidK");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InvalidK);
    }
    ForwardOptions opts;
    opts.fixed_boundaries = BoundarySet{{0, 1}};
    CHECK_THROWS_AS(forward(g, p, cfg, ByteSeq::from_text("abcdefgh"), opts), Error);
}

TEST_CASE("untrained model predicts close to uniform") {
    const auto cfg = ModelConfig::desk();
    auto p = ModelParams::init(cfg);
    std::mt19937_64 rng(5);
    const auto r = forward_loss(p, cfg, random_bytes(rng, 256));
    CHECK(r.targets == 255);
    CHECK(r.bpb() >= 7.5);
    CHECK(r.bpb() <= 8.3);
    CHECK(std::log(258.0) / std::numbers::ln2 == doctest::Approx(8.0112).epsilon(1e-4));
}

TEST_CASE("bits per byte identity") {
    CHECK(bits_per_byte(std::numbers::ln2 * 37.0, 37) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(bits_per_byte(std::log(258.0) * 4.0, 4) == doctest::Approx(8.0112).epsilon(1e-4));
    CHECK_THROWS_AS(bits_per_byte(1.0, 0), Error);
}

TEST_CASE("conditional causality with fixed boundaries") {
    const auto cfg = small_config();
    auto p = ModelParams::init(cfg);
    jitter(p, 9, 0.2);
    std::mt19937_64 rng(6);
    const auto bytes = random_bytes(rng, 18);
    ForwardOptions opts;
    opts.fixed_boundaries = BoundarySet{{0, 3, 5, 9, 12, 16}};
    nn::Graph g(false);
    const Tensor base = forward(g, p, cfg, bytes, opts).logits.value();
    for (std::size_t j = 1; j < bytes.size(); ++j) {
        std::vector<Symbol> changed(bytes.begin(), bytes.end());
        changed[j] = static_cast<Symbol>((changed[j] + 17) % 256);
        nn::Graph gj(false);
        const Tensor moved = forward(gj, p, cfg, ByteSeq(changed), opts).logits.value();
        // Logit row r predicts byte r + 1 from bytes 0..r.
        CHECK((base.topRows(static_cast<Eigen::Index>(j)) - moved.topRows(static_cast<Eigen::Index>(j))).isZero(0.0));
        CHECK_FALSE((base.row(static_cast<Eigen::Index>(j)) - moved.row(static_cast<Eigen::Index>(j))).isZero(0.0));
    }
}

TEST_CASE("static graph shapes across inputs") {
    const auto cfg = small_config();
    auto p = ModelParams::init(cfg);
    std::mt19937_64 rng(7);
    nn::Graph first;
    forward(first, p, cfg, random_bytes(rng, 20));
    const auto shapes = first.shapes();
    for (int i = 0; i < 10; ++i) {
        nn::Graph g;
        forward(g, p, cfg, random_bytes(rng, 20));
        CHECK(g.shapes() == shapes);
    }
}

TEST_CASE("end-to-end gradient check on the micro model") {
    const auto cfg = ModelConfig::micro();
    auto p = ModelParams::init(cfg);
    jitter(p, 11, 0.3);
    std::mt19937_64 rng(8);
    const auto bytes = random_bytes(rng, 12);

    p.zero_grad();
    nn::Graph g;
    auto r = forward(g, p, cfg, bytes);
    g.backward(r.loss);
    ForwardOptions fixed;
    fixed.fixed_boundaries = r.boundaries;

    const double h = 1e-5;
    for (auto& t : p.tensors()) {
        if (t.grad.isZero(0.0)) continue;
        Tensor numeric(t.value.rows(), t.value.cols());
        for (Eigen::Index i = 0; i < t.value.size(); ++i) {
            double& x = t.value.data()[i];
            const double keep = x;
            x = keep + h;
            const double up = forward_loss(p, cfg, bytes, fixed).loss_nats;
            x = keep - h;
            const double down = forward_loss(p, cfg, bytes, fixed).loss_nats;
            x = keep;
            numeric.data()[i] = (up - down) / (2.0 * h);
        }
        INFO(t.name);
        CHECK(testing::relative_error(t.grad, numeric) <= 1e-3);
    }
}
