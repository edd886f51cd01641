#include "byteflow/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "byteflow/error.hpp"
#include "byteflow/rng.hpp"

namespace byteflow::model {

namespace {

using config::format_double;

[[noreturn]] void invalid(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

Tensor random_tensor(std::mt19937_64& gen, std::size_t rows, std::size_t cols, double stddev) {
    std::normal_distribution<double> normal(0.0, stddev);
    Tensor t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = normal(gen);
    return t;
}

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Tensor ones_row(std::size_t d) { return Tensor::Ones(1, static_cast<Eigen::Index>(d)); }

Tensor canon_identity(std::size_t d) {
    Tensor w = Tensor::Zero(4, static_cast<Eigen::Index>(d));
    w.row(0).setOnes();
    return w;
}

nn::Var local_block(nn::Graph& g, nn::Var h, ModelParams& p, const LocalBlock& b, const ModelConfig& cfg) {
    nn::Var u = nn::layer_norm(h, g.param(p.at(b.norm1)));
    const nn::AttentionWeights aw{&p.at(b.wq), &p.at(b.wk), &p.at(b.wv), &p.at(b.wo)};
    nn::Var attn = nn::swa_attention(u, aw, cfg.heads_local, cfg.window, cfg.rope_theta_local);
    nn::Var hhat = nn::add(h, attn);
    if (cfg.canon) hhat = nn::canon(hhat, g.param(p.at(b.canon1)));
    nn::Var v = nn::layer_norm(hhat, g.param(p.at(b.norm2)));
    nn::Var ff = nn::swiglu(v, p.at(b.w1), p.at(b.w2), p.at(b.w3));
    nn::Var out = nn::add(hhat, ff);
    if (cfg.canon) out = nn::canon(out, g.param(p.at(b.canon2)));
    return out;
}

nn::Var global_block(nn::Graph& g, nn::Var x, ModelParams& p, const GlobalBlock& b, const ModelConfig& cfg) {
    nn::Var u = nn::layer_norm(x, g.param(p.at(b.norm1)));
    const nn::AttentionWeights aw{&p.at(b.wq), &p.at(b.wk), &p.at(b.wv), &p.at(b.wo)};
    // Full causal attention: the window covers every earlier latent.
    const std::size_t window = static_cast<std::size_t>(std::max<Eigen::Index>(x.rows(), 1));
    nn::Var attn = nn::swa_attention(u, aw, cfg.heads_global, window, cfg.rope_theta_global);
    nn::Var h = nn::add(x, attn);
    nn::Var v = nn::layer_norm(h, g.param(p.at(b.norm2)));
    return nn::add(h, nn::swiglu(v, p.at(b.w1), p.at(b.w2), p.at(b.w3)));
}

numkernel::Matrix to_matrix(const Tensor& t) {
    std::vector<double> values(t.data(), t.data() + t.size());
    return numkernel::Matrix(static_cast<std::size_t>(t.rows()), static_cast<std::size_t>(t.cols()), std::move(values));
}

}  // namespace

// --- config -----------------------------------------------------------------

void ModelConfig::validate() const {
    if (d_local < 1 || d_global < 1) invalid("widths must be >= 1");
    if (d_global < d_local) invalid("d_global must be >= d_local");
    if (d_ff_local < 1 || d_ff_global < 1) invalid("feed-forward widths must be >= 1");
    if (bins < 1) invalid("bins must be >= 1");
    if (window < 1) invalid("window must be >= 1");
    if (global_length < 1) invalid("global_length must be >= 1");
    if (heads_local < 1 || d_local % static_cast<std::size_t>(heads_local) != 0) {
        invalid("heads_local must divide d_local");
    }
    if (heads_global < 1 || d_global % static_cast<std::size_t>(heads_global) != 0) {
        invalid("heads_global must divide d_global");
    }
    if (!(eps2 > 0.0) || !std::isfinite(eps2)) invalid("eps2 must be > 0");
    if (!(rope_theta_local > 0.0) || !(rope_theta_global > 0.0)) invalid("rope bases must be > 0");
    try {
        chunker.validate();
    } catch (const Error& e) {
        invalid(e.what());
    }
}

rate::RateConfig ModelConfig::rate_config() const {
    return {eps2, d_local, chunker.tag == strategies::StrategyTag::CodingRateL2};
}

config::KeyValues ModelConfig::to_key_values() const {
    config::KeyValues kv;
    kv.set("d_local", std::to_string(d_local));
    kv.set("d_global", std::to_string(d_global));
    kv.set("d_ff_local", std::to_string(d_ff_local));
    kv.set("d_ff_global", std::to_string(d_ff_global));
    kv.set("encoder_layers", std::to_string(encoder_layers));
    kv.set("global_layers", std::to_string(global_layers));
    kv.set("decoder_layers", std::to_string(decoder_layers));
    kv.set("window", std::to_string(window));
    kv.set("global_length", std::to_string(global_length));
    kv.set("bins", std::to_string(bins));
    kv.set("max_seq_len", std::to_string(max_seq_len));
    kv.set("eps2", format_double(eps2));
    kv.set("rope_theta_local", format_double(rope_theta_local));
    kv.set("rope_theta_global", format_double(rope_theta_global));
    kv.set("heads_local", std::to_string(heads_local));
    kv.set("heads_global", std::to_string(heads_global));
    kv.set("canon", canon ? "true" : "false");
    kv.set("chunker", std::string(strategies::tag_name(chunker.tag)));
    kv.set("stride", std::to_string(chunker.stride));
    kv.set("random_p", format_double(chunker.p));
    kv.set("chunker_seed", std::to_string(chunker.seed));
    kv.set("init_seed", std::to_string(init_seed));
    return kv;
}

void ModelConfig::apply(const config::KeyValues& kv) {
    using config::read;
    read(kv, "d_local", d_local);
    read(kv, "d_global", d_global);
    read(kv, "d_ff_local", d_ff_local);
    read(kv, "d_ff_global", d_ff_global);
    read(kv, "encoder_layers", encoder_layers);
    read(kv, "global_layers", global_layers);
    read(kv, "decoder_layers", decoder_layers);
    read(kv, "window", window);
    read(kv, "global_length", global_length);
    read(kv, "bins", bins);
    read(kv, "max_seq_len", max_seq_len);
    read(kv, "eps2", eps2);
    read(kv, "rope_theta_local", rope_theta_local);
    read(kv, "rope_theta_global", rope_theta_global);
    read(kv, "heads_local", heads_local);
    read(kv, "heads_global", heads_global);
    read(kv, "canon", canon);
    if (auto tag = kv.get("chunker")) {
        auto parsed = strategies::parse_tag(*tag);
        if (!parsed) invalid("unknown chunker '" + *tag + "'");
        chunker.tag = *parsed;
    }
    read(kv, "stride", chunker.stride);
    read(kv, "random_p", chunker.p);
    read(kv, "chunker_seed", chunker.seed);
    read(kv, "init_seed", init_seed);
}

ModelConfig ModelConfig::desk() { return {}; }

ModelConfig ModelConfig::full_600m() {
    ModelConfig c;
    c.d_local = 512;
    c.d_global = 1536;
    c.d_ff_local = 1536;
    c.d_ff_global = 4096;
    c.encoder_layers = 3;
    c.decoder_layers = 3;
    c.global_layers = 20;
    c.window = 512;
    c.global_length = 3200;
    c.heads_local = 8;
    c.heads_global = 12;
    return c;
}

ModelConfig ModelConfig::full_1_3b() {
    ModelConfig c = full_600m();
    c.d_global = 2048;
    c.d_ff_global = 5504;
    c.global_layers = 24;
    c.heads_global = 16;
    return c;
}

ModelConfig ModelConfig::micro() {
    ModelConfig c;
    c.d_local = 4;
    c.d_global = 8;
    c.d_ff_local = 6;
    c.d_ff_global = 8;
    c.encoder_layers = 1;
    c.global_layers = 1;
    c.decoder_layers = 1;
    c.window = 4;
    c.global_length = 5;
    c.bins = 3;
    c.heads_local = 2;
    c.heads_global = 2;
    return c;
}

// --- params -----------------------------------------------------------------

std::size_t ModelParams::add(std::string name, Tensor value, bool decay) {
    tensors_.emplace_back(std::move(name), std::move(value), decay);
    return tensors_.size() - 1;
}

ModelParams ModelParams::init(const ModelConfig& cfg) {
    cfg.validate();
    ModelParams p;
    std::mt19937_64 gen(mix_seed(cfg.init_seed, 0x696e6974ULL));
    const std::size_t dl = cfg.d_local;
    const std::size_t dg = cfg.d_global;

    const auto make_local = [&](const std::string& prefix) {
        LocalBlock b{};
        b.norm1 = p.add(prefix + ".norm1", ones_row(dl), false);
        b.wq = p.add(prefix + ".attn.wq", random_tensor(gen, dl, dl, fan_in_std(dl)), true);
        b.wk = p.add(prefix + ".attn.wk", random_tensor(gen, dl, dl, fan_in_std(dl)), true);
        b.wv = p.add(prefix + ".attn.wv", random_tensor(gen, dl, dl, fan_in_std(dl)), true);
        b.wo = p.add(prefix + ".attn.wo", random_tensor(gen, dl, dl, fan_in_std(dl)), true);
        b.canon1 = p.add(prefix + ".canon1", canon_identity(dl), false);
        b.norm2 = p.add(prefix + ".norm2", ones_row(dl), false);
        b.w1 = p.add(prefix + ".ff.w1", random_tensor(gen, dl, cfg.d_ff_local, fan_in_std(dl)), true);
        b.w2 = p.add(prefix + ".ff.w2", random_tensor(gen, dl, cfg.d_ff_local, fan_in_std(dl)), true);
        b.w3 = p.add(prefix + ".ff.w3", random_tensor(gen, cfg.d_ff_local, dl, fan_in_std(cfg.d_ff_local)), true);
        b.canon2 = p.add(prefix + ".canon2", canon_identity(dl), false);
        return b;
    };

    p.embedding = p.add("embed", random_tensor(gen, kVocabSize, dl, 1.0), true);
    for (std::size_t l = 0; l < cfg.encoder_layers; ++l) p.encoder.push_back(make_local("enc." + std::to_string(l)));
    p.proj = p.add("proj", random_tensor(gen, dl, dg, fan_in_std(dl)), true);
    for (std::size_t l = 0; l < cfg.global_layers; ++l) {
        const std::string prefix = "glob." + std::to_string(l);
        GlobalBlock b{};
        b.norm1 = p.add(prefix + ".norm1", ones_row(dg), false);
        b.wq = p.add(prefix + ".attn.wq", random_tensor(gen, dg, dg, fan_in_std(dg)), true);
        b.wk = p.add(prefix + ".attn.wk", random_tensor(gen, dg, dg, fan_in_std(dg)), true);
        b.wv = p.add(prefix + ".attn.wv", random_tensor(gen, dg, dg, fan_in_std(dg)), true);
        b.wo = p.add(prefix + ".attn.wo", random_tensor(gen, dg, dg, fan_in_std(dg)), true);
        b.norm2 = p.add(prefix + ".norm2", ones_row(dg), false);
        b.w1 = p.add(prefix + ".ff.w1", random_tensor(gen, dg, cfg.d_ff_global, fan_in_std(dg)), true);
        b.w2 = p.add(prefix + ".ff.w2", random_tensor(gen, dg, cfg.d_ff_global, fan_in_std(dg)), true);
        b.w3 = p.add(prefix + ".ff.w3", random_tensor(gen, cfg.d_ff_global, dg, fan_in_std(cfg.d_ff_global)), true);
        p.global.push_back(b);
    }
    for (std::size_t b = 0; b < cfg.bins; ++b) {
        p.upsample.push_back(p.add("up." + std::to_string(b), random_tensor(gen, dg, dl, fan_in_std(dg)), true));
    }
    for (std::size_t l = 0; l < cfg.decoder_layers; ++l) p.decoder.push_back(make_local("dec." + std::to_string(l)));
    p.final_norm = p.add("final_norm", ones_row(dl), false);
    // Small readout: logits start near zero so the untrained model is close
    // to the uniform distribution over 258 symbols.
    p.out = p.add("out", random_tensor(gen, dl, kVocabSize, 0.1 * fan_in_std(dl)), true);
    return p;
}

const Parameter& ModelParams::named(std::string_view name) const {
    for (const auto& t : tensors_) {
        if (t.name == name) return t;
    }
    throw Error(ErrorKind::InvalidArgument, "no parameter named " + std::string(name));
}

Parameter& ModelParams::named(std::string_view name) {
    return const_cast<Parameter&>(static_cast<const ModelParams&>(*this).named(name));
}

void ModelParams::zero_grad() {
    for (auto& t : tensors_) t.zero_grad();
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
    return n;
}

// --- stages -----------------------------------------------------------------

std::vector<std::size_t> chunk_map(const BoundarySet& s, std::size_t t_len) {
    rate::validate_boundaries(s, t_len);
    std::vector<std::size_t> out(t_len);
    std::size_t i = 0;
    for (std::size_t t = 0; t < t_len; ++t) {
        while (i + 1 < s.indices.size() && s.indices[i + 1] <= t) ++i;
        out[t] = i;
    }
    return out;
}

std::vector<std::size_t> bin_map(std::size_t t_len, std::size_t bins) {
    std::vector<std::size_t> out(t_len);
    for (std::size_t t = 0; t < t_len; ++t) out[t] = std::min(bins - 1, (t * bins) / t_len);
    return out;
}

nn::Var encode_local(nn::Graph& g, ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes) {
    if (bytes.empty()) throw Error(ErrorKind::InvalidArgument, "empty byte sequence");
    if (bytes.size() > cfg.max_seq_len) {
        throw Error(ErrorKind::SequenceTooLong,
                    std::to_string(bytes.size()) + " > max_seq_len " + std::to_string(cfg.max_seq_len));
    }
    nn::Var h = nn::embed(g.param(params.at(params.embedding)), bytes.symbols());
    for (const auto& b : params.encoder) h = local_block(g, h, params, b, cfg);
    return h;
}

Downsampled downsample(nn::Graph& g, nn::Var h, ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes,
                       const ForwardOptions& opts) {
    const std::size_t t_len = bytes.size();
    const std::size_t k = cfg.global_length;
    BoundarySet s;
    if (opts.fixed_boundaries) {
        s = *opts.fixed_boundaries;
        rate::validate_boundaries(s, t_len);
        if (s.size() != k) throw Error(ErrorKind::InvalidK, "fixed boundary set size differs from K");
    } else {
        const auto hm = to_matrix(h.value());
        strategies::StrategyContext ctx{opts.bigram, opts.nonce != 0 ? opts.nonce : content_hash(bytes)};
        s = strategies::segment(cfg.chunker, bytes, hm, cfg.rate_config(), k, ctx);
    }
    nn::Var selected = nn::gather_rows(h, s.indices);
    nn::Var z = nn::matmul(selected, g.param(params.at(params.proj)));
    return {z, std::move(s)};
}

nn::Var global_transform(nn::Graph& g, nn::Var z, ModelParams& params, const ModelConfig& cfg) {
    for (const auto& b : params.global) z = global_block(g, z, params, b, cfg);
    return z;
}

nn::Var upsample(nn::Graph& g, nn::Var global_out, const BoundarySet& s, nn::Var h, ModelParams& params,
                 const ModelConfig& cfg) {
    const std::size_t t_len = static_cast<std::size_t>(h.rows());
    const auto chunk = chunk_map(s, t_len);
    const auto bin = bin_map(t_len, cfg.bins);
    std::vector<nn::Var> banks;
    banks.reserve(params.upsample.size());
    for (std::size_t idx : params.upsample) banks.push_back(g.param(params.at(idx)));
    nn::Var up = nn::binned_upsample(global_out, chunk, bin, banks);
    return nn::add(h, up);
}

ForwardResult forward(nn::Graph& g, ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes,
                      const ForwardOptions& opts) {
    if (bytes.size() < 2) throw Error(ErrorKind::InvalidArgument, "forward needs at least two symbols");
    if (cfg.global_length > bytes.size()) {
        throw Error(ErrorKind::InvalidK, "K = " + std::to_string(cfg.global_length) + " exceeds T = " +
                                             std::to_string(bytes.size()));
    }
    nn::Var h = encode_local(g, params, cfg, bytes);
    auto [z, s] = downsample(g, h, params, cfg, bytes, opts);
    nn::Var gout = global_transform(g, z, params, cfg);
    if (opts.zero_global) gout = g.input(Tensor::Zero(gout.rows(), gout.cols()));
    nn::Var x = upsample(g, gout, s, h, params, cfg);
    for (const auto& b : params.decoder) x = local_block(g, x, params, b, cfg);
    x = nn::layer_norm(x, g.param(params.at(params.final_norm)));

    const std::size_t t_len = bytes.size();
    std::vector<std::size_t> pred_rows(t_len - 1);
    for (std::size_t t = 0; t + 1 < t_len; ++t) pred_rows[t] = t;
    nn::Var pred = nn::gather_rows(x, pred_rows);
    nn::Var logits = nn::matmul(pred, g.param(params.at(params.out)));
    nn::Var loss = nn::cross_entropy(logits, bytes.symbols().subspan(1), /*mean=*/false);

    ForwardResult r;
    r.loss = loss;
    r.logits = logits;
    r.loss_nats = loss.value()(0, 0);
    r.targets = t_len - 1;
    r.boundaries = std::move(s);
    return r;
}

double LossReport::bpb() const { return bits_per_byte(loss_nats, targets); }

LossReport forward_loss(ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes, const ForwardOptions& opts) {
    nn::Graph g(/*record_gradients=*/false);
    const auto r = forward(g, params, cfg, bytes, opts);
    return {r.loss_nats, r.targets};
}

numkernel::Matrix representations(ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes) {
    nn::Graph g(/*record_gradients=*/false);
    return to_matrix(encode_local(g, params, cfg, bytes).value());
}

double bits_per_byte(double nats, std::size_t n_bytes) {
    if (n_bytes == 0) throw Error(ErrorKind::InvalidArgument, "bits per byte over zero bytes");
    return nats / (std::numbers::ln2 * static_cast<double>(n_bytes));
}

}  // namespace byteflow::model
