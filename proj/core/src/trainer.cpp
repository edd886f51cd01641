#include "byteflow/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <ostream>
#include <sstream>

#include "byteflow/checkpoint.hpp"
#include "byteflow/error.hpp"
#include "byteflow/rng.hpp"

namespace byteflow::trainer {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorKind::Config, what); }

}  // namespace

std::string_view framing_name(Framing f) noexcept {
    return f == Framing::Document ? "document" : "contiguous";
}

Framing parse_framing(std::string_view name) {
    if (name == "document") return Framing::Document;
    if (name == "contiguous") return Framing::Contiguous;
    invalid("unknown framing '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
    if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) invalid("peak_lr must be > 0");
    if (total_steps < 1) invalid("total_steps must be >= 1");
    if (warmup_steps > total_steps) invalid("warmup_steps must be <= total_steps");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) invalid("betas must lie in (0, 1)");
    if (!(weight_decay >= 0.0)) invalid("weight_decay must be >= 0");
    if (!(adam_eps > 0.0)) invalid("adam_eps must be > 0");
    if (!(grad_clip >= 0.0)) invalid("grad_clip must be >= 0");
    if (batch_size < 1) invalid("batch_size must be >= 1");
    if (seq_len < 2) invalid("seq_len must be >= 2");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) invalid("val_fraction must lie in [0, 1)");
}

config::KeyValues TrainConfig::to_key_values() const {
    using config::format_double;
    config::KeyValues kv;
    kv.set("peak_lr", format_double(peak_lr));
    kv.set("warmup_steps", std::to_string(warmup_steps));
    kv.set("total_steps", std::to_string(total_steps));
    kv.set("weight_decay", format_double(weight_decay));
    kv.set("beta1", format_double(beta1));
    kv.set("beta2", format_double(beta2));
    kv.set("adam_eps", format_double(adam_eps));
    kv.set("grad_clip", format_double(grad_clip));
    kv.set("batch_size", std::to_string(batch_size));
    kv.set("seq_len", std::to_string(seq_len));
    kv.set("seed", std::to_string(seed));
    kv.set("eval_interval", std::to_string(eval_interval));
    kv.set("eval_windows", std::to_string(eval_windows));
    kv.set("checkpoint_interval", std::to_string(checkpoint_interval));
    kv.set("val_fraction", format_double(val_fraction));
    kv.set("stop_below_bpb", format_double(stop_below_bpb));
    kv.set("framing", std::string(framing_name(framing)));
    kv.set("log_wall_time", log_wall_time ? "true" : "false");
    return kv;
}

void TrainConfig::apply(const config::KeyValues& kv) {
    using config::read;
    read(kv, "peak_lr", peak_lr);
    read(kv, "warmup_steps", warmup_steps);
    read(kv, "total_steps", total_steps);
    read(kv, "weight_decay", weight_decay);
    read(kv, "beta1", beta1);
    read(kv, "beta2", beta2);
    read(kv, "adam_eps", adam_eps);
    read(kv, "grad_clip", grad_clip);
    read(kv, "batch_size", batch_size);
    read(kv, "seq_len", seq_len);
    read(kv, "seed", seed);
    read(kv, "eval_interval", eval_interval);
    read(kv, "eval_windows", eval_windows);
    read(kv, "checkpoint_interval", checkpoint_interval);
    read(kv, "val_fraction", val_fraction);
    read(kv, "stop_below_bpb", stop_below_bpb);
    if (auto f = kv.get("framing")) framing = parse_framing(*f);
    read(kv, "log_wall_time", log_wall_time);
}

TrainConfig TrainConfig::desk() {
    TrainConfig tc;
    tc.peak_lr = 3e-3;
    tc.warmup_steps = 100;
    tc.total_steps = 5000;
    tc.batch_size = 4;
    tc.eval_interval = 100;
    tc.eval_windows = 8;
    return tc;
}

double lr_at(std::size_t step, const TrainConfig& tc) {
    if (step >= tc.total_steps) return 0.0;
    if (step < tc.warmup_steps) {
        return tc.peak_lr * static_cast<double>(step) / static_cast<double>(tc.warmup_steps);
    }
    const double span = static_cast<double>(tc.total_steps - tc.warmup_steps);
    const double progress = static_cast<double>(step - tc.warmup_steps) / span;
    return std::max(0.0, tc.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

AdamState AdamState::init(const std::vector<Parameter>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const auto& p : params) {
        s.m.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
        s.v.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
    }
    return s;
}

StepStats optimizer_step(std::vector<Parameter>& params, AdamState& state, const TrainConfig& tc, std::size_t step,
                         double lr) {
    if (step < 1) throw Error(ErrorKind::InvalidArgument, "optimizer step count starts at 1");
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw Error(ErrorKind::BadShape, "optimizer state does not match the parameter list");
    }

    double sq = 0.0;
    for (const auto& p : params) {
        if (p.grad.size() == 0) continue;
        if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
            throw Error(ErrorKind::BadShape, "gradient shape differs from " + p.name);
        }
        if (!p.grad.allFinite()) throw Error(ErrorKind::NonFiniteGradient, "non-finite gradient in " + p.name);
        sq += p.grad.squaredNorm();
    }

    StepStats stats;
    stats.grad_norm = std::sqrt(sq);
    if (tc.grad_clip > 0.0 && stats.grad_norm > tc.grad_clip) stats.clip_scale = tc.grad_clip / stats.grad_norm;

    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i];
        if (p.decay && tc.weight_decay > 0.0) p.value *= 1.0 - lr * tc.weight_decay;
        if (p.grad.size() == 0) continue;
        auto& m = state.m[i];
        auto& v = state.v[i];
        const auto g = (p.grad.array() * stats.clip_scale).eval();
        m.array() = tc.beta1 * m.array() + (1.0 - tc.beta1) * g;
        v.array() = tc.beta2 * v.array() + (1.0 - tc.beta2) * g.square();
        p.value.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + tc.adam_eps);
    }
    return stats;
}

std::vector<std::string> read_documents(const std::vector<std::filesystem::path>& paths) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    for (const auto& p : paths) {
        std::error_code ec;
        if (fs::is_directory(p, ec)) {
            for (const auto& entry : fs::recursive_directory_iterator(p, ec)) {
                if (entry.is_regular_file()) files.push_back(entry.path());
            }
            if (ec) throw Error(ErrorKind::Io, "cannot list " + p.string());
        } else {
            files.push_back(p);
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<std::string> docs;
    std::size_t total = 0;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw Error(ErrorKind::Io, "cannot read " + f.string());
        std::string doc((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        total += doc.size();
        if (!doc.empty()) docs.push_back(std::move(doc));
    }
    if (total == 0) throw Error(ErrorKind::EmptyCorpus, "no bytes in the given corpus paths");
    return docs;
}

std::vector<Symbol> frame_documents(const std::vector<std::string>& docs, Framing framing) {
    std::vector<Symbol> out;
    for (const auto& d : docs) {
        for (unsigned char c : d) out.push_back(c);
        if (framing == Framing::Document) out.push_back(kEos);
    }
    return out;
}

CorpusStream::CorpusStream(std::vector<Symbol> stream, std::size_t seq_len, Framing framing)
    : stream_(std::move(stream)), seq_len_(seq_len), framing_(framing) {
    if (seq_len_ < 2) throw Error(ErrorKind::InvalidArgument, "seq_len must be >= 2");
    for (Symbol s : stream_) {
        if (s >= kVocabSize) throw Error(ErrorKind::OutOfVocab, "symbol " + std::to_string(s) + " in corpus stream");
    }
}

std::size_t CorpusStream::content_len() const noexcept {
    return framing_ == Framing::Document ? seq_len_ - 1 : seq_len_;
}

std::size_t CorpusStream::window_count() const noexcept { return stream_.size() / content_len(); }

ByteSeq CorpusStream::at_offset(std::size_t offset) const {
    std::vector<Symbol> w;
    w.reserve(seq_len_);
    if (framing_ == Framing::Document) w.push_back(kBos);
    const auto first = stream_.begin() + static_cast<std::ptrdiff_t>(offset);
    w.insert(w.end(), first, first + static_cast<std::ptrdiff_t>(content_len()));
    return ByteSeq(std::move(w));
}

ByteSeq CorpusStream::window(std::size_t i) const {
    if (i >= window_count()) throw Error(ErrorKind::InvalidArgument, "window index out of range");
    return at_offset(i * content_len());
}

ByteSeq CorpusStream::sample(std::mt19937_64& rng) const {
    if (empty()) throw Error(ErrorKind::EmptyCorpus, "corpus stream shorter than one window");
    const std::size_t span = stream_.size() - content_len() + 1;
    return at_offset(static_cast<std::size_t>(rng() % span));
}

std::optional<ByteSeq> CorpusStream::next() {
    if (cursor_ >= window_count()) return std::nullopt;
    return window(cursor_++);
}

std::pair<CorpusStream, CorpusStream> CorpusStream::split(double fraction) const {
    if (!(fraction >= 0.0 && fraction < 1.0)) throw Error(ErrorKind::InvalidArgument, "split fraction must lie in [0, 1)");
    const auto cut = static_cast<std::size_t>(std::floor(static_cast<double>(stream_.size()) * (1.0 - fraction)));
    const auto mid = stream_.begin() + static_cast<std::ptrdiff_t>(cut);
    return {CorpusStream({stream_.begin(), mid}, seq_len_, framing_),
            CorpusStream({mid, stream_.end()}, seq_len_, framing_)};
}

strategies::BigramModel fit_bigram(const CorpusStream& stream) {
    strategies::BigramModel bigram;
    if (!stream.stream().empty()) bigram.observe(ByteSeq(stream.stream()));
    return bigram;
}

double evaluate_bpb(const CorpusStream& stream, ModelParams& params, const ModelConfig& cfg, std::size_t max_windows,
                    const strategies::BigramModel* bigram) {
    if (stream.empty()) throw Error(ErrorKind::EmptyCorpus, "evaluation stream holds no complete window");
    const std::size_t n = max_windows == 0 ? stream.window_count() : std::min(max_windows, stream.window_count());
    model::ForwardOptions opts;
    opts.bigram = bigram;
    double nats = 0.0;
    std::size_t targets = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = model::forward_loss(params, cfg, stream.window(i), opts);
        nats += r.loss_nats;
        targets += r.targets;
    }
    return model::bits_per_byte(nats, targets);
}

std::string metrics_line(std::size_t step, double loss_nats, double bpb, double lr, double wall_ms) {
    using config::format_double;
    std::string s = "step=" + std::to_string(step);
    s += " loss=" + format_double(loss_nats);
    s += " bpb=" + format_double(bpb);
    s += " lr=" + format_double(lr);
    s += " wall_ms=" + format_double(wall_ms);
    return s;
}

namespace {

void write_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                      const TrainConfig& tc, std::size_t step, const strategies::BigramModel* bigram) {
    auto meta = tc.to_key_values();
    meta.set("step", std::to_string(step));
    std::vector<model::NamedTensor> extras;
    if (bigram != nullptr) extras.push_back(model::bigram_tensor(*bigram));
    model::save_checkpoint(path, cfg, params, meta, extras);
}

}  // namespace

TrainResult train(ModelParams& params, const ModelConfig& cfg, const TrainConfig& tc, const CorpusStream& train_stream,
                  const CorpusStream* val_stream, const TrainOptions& opts) {
    cfg.validate();
    tc.validate();
    if (train_stream.empty()) throw Error(ErrorKind::EmptyCorpus, "training stream holds no complete window");
    if (val_stream != nullptr && val_stream->empty()) val_stream = nullptr;

    const auto started = std::chrono::steady_clock::now();
    const auto wall_ms = [&] {
        if (!tc.log_wall_time) return 0.0;
        const auto d = std::chrono::steady_clock::now() - started;
        return std::round(std::chrono::duration<double, std::milli>(d).count());
    };
    const auto log = [&](const std::string& line) {
        if (opts.metrics != nullptr) *opts.metrics << line << '\n' << std::flush;
    };
    const auto validate_now = [&](std::size_t step) {
        const double bpb = evaluate_bpb(*val_stream, params, cfg, tc.eval_windows, opts.bigram);
        log("eval step=" + std::to_string(step) + " val_bpb=" + config::format_double(bpb));
        if (opts.on_eval) opts.on_eval(step, bpb);
        return bpb;
    };

    TrainResult result;
    if (val_stream != nullptr) result.initial_val_bpb = result.final_val_bpb = validate_now(0);

    std::mt19937_64 rng(mix_seed(tc.seed, 0x62617463ULL));
    AdamState state = AdamState::init(params.tensors());
    model::ForwardOptions fopts;
    fopts.bigram = opts.bigram;

    for (std::size_t step = 1; step <= tc.total_steps; ++step) {
        params.zero_grad();
        double nats = 0.0;
        std::size_t targets = 0;
        for (std::size_t b = 0; b < tc.batch_size; ++b) {
            const ByteSeq seq = train_stream.sample(rng);
            nn::Graph g;
            auto r = model::forward(g, params, cfg, seq, fopts);
            if (!std::isfinite(r.loss_nats)) {
                throw Error(ErrorKind::NonFinite, "non-finite loss at step " + std::to_string(step));
            }
            g.backward(r.loss);
            nats += r.loss_nats;
            targets += r.targets;
        }
        // Mean over predicted positions in the batch.
        const double inv = 1.0 / static_cast<double>(targets);
        for (auto& p : params.tensors()) {
            if (p.grad.size() != 0) p.grad *= inv;
        }

        const double lr = lr_at(step, tc);
        optimizer_step(params.tensors(), state, tc, step, lr);

        const double loss = nats * inv;
        const double bpb = loss / std::numbers::ln2;
        result.train_bpb.push_back(bpb);
        result.steps = step;
        log(metrics_line(step, loss, bpb, lr, wall_ms()));

        const bool last = step == tc.total_steps;
        bool stop = false;
        if (val_stream != nullptr && ((tc.eval_interval > 0 && step % tc.eval_interval == 0) || last)) {
            result.final_val_bpb = validate_now(step);
            stop = tc.stop_below_bpb > 0.0 && result.final_val_bpb < tc.stop_below_bpb;
        }
        if (!opts.checkpoint_path.empty() && tc.checkpoint_interval > 0 && step % tc.checkpoint_interval == 0) {
            write_checkpoint(opts.checkpoint_path, cfg, params, tc, step, opts.bigram);
        }
        if (stop) {
            result.stopped_early = !last;
            break;
        }
    }
    if (!opts.checkpoint_path.empty()) {
        write_checkpoint(opts.checkpoint_path, cfg, params, tc, result.steps, opts.bigram);
    }
    return result;
}

std::string synthetic_corpus(std::size_t bytes, std::uint64_t seed) {
    static constexpr std::string_view kPhrases[] = {
        "the quick brown fox jumps over the lazy dog. ",
        "a stitch in time saves nine. ",
        "all that glitters is not gold. ",
        "the early bird catches the worm. ",
        "actions speak louder than words. ",
        "knowledge is power and power is knowledge. ",
        "rome was not built in a day. ",
        "when in doubt, leave it out. ",
        "measure twice and cut once. ",
        "slow and steady wins the race.\n",
        "bytes flow into chunks, chunks flow into meaning.\n",
        "every boundary marks a change in the stream.\n",
    };
    constexpr std::size_t kCount = std::size(kPhrases);
    std::mt19937_64 rng(mix_seed(seed, 0x73796e74ULL));
    std::string out;
    out.reserve(bytes + 64);
    while (out.size() < bytes) {
        const std::uint64_t r = rng();
        if (r % 8 == 0) {
            const std::size_t reps = 2 + static_cast<std::size_t>((r >> 8) % 5);
            for (std::size_t i = 0; i < reps; ++i) out += "abc";
            out += ' ';
        } else {
            out += kPhrases[(r >> 16) % kCount];
        }
    }
    out.resize(bytes);
    return out;
}

}  // namespace byteflow::trainer
