#pragma once

// Corpus framing, AdamW with global-norm clipping, warmup + cosine schedule,
// and bits-per-byte evaluation.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "byteflow/bytes.hpp"
#include "byteflow/config.hpp"
#include "byteflow/model.hpp"
#include "byteflow/nn.hpp"
#include "byteflow/strategies.hpp"

namespace byteflow::trainer {

using model::ModelConfig;
using model::ModelParams;
using nn::Parameter;
using nn::Tensor;

enum class Framing {
    Document,    // documents joined by EOS; every window starts with BOS
    Contiguous,  // raw byte windows
};

std::string_view framing_name(Framing f) noexcept;
/// Throws Config for unknown names.
Framing parse_framing(std::string_view name);

struct TrainConfig {
    double peak_lr = 4e-4;
    std::size_t warmup_steps = 10000;
    std::size_t total_steps = 100000;
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double adam_eps = 1e-8;
    double grad_clip = 0.2;
    std::size_t batch_size = 8;
    std::size_t seq_len = 256;
    std::uint64_t seed = 0;
    std::size_t eval_interval = 1000;
    std::size_t eval_windows = 16;  // 0: the whole validation stream
    std::size_t checkpoint_interval = 0;  // 0: only the final checkpoint
    double val_fraction = 0.05;
    double stop_below_bpb = 0.0;  // > 0: stop once validation bpb drops below
    Framing framing = Framing::Document;
    bool log_wall_time = true;  // false writes wall_ms=0

    /// Throws Config.
    void validate() const;

    [[nodiscard]] config::KeyValues to_key_values() const;
    void apply(const config::KeyValues& kv);

    /// Short schedule and higher step size for CPU-scale runs.
    static TrainConfig desk();
};

/// Linear warmup to peak_lr at step == warmup_steps, then cosine decay to 0
/// at total_steps. Steps beyond total_steps clamp to 0.
double lr_at(std::size_t step, const TrainConfig& tc);

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState init(const std::vector<Parameter>& params);
};

struct StepStats {
    double grad_norm = 0.0;  // before clipping
    double clip_scale = 1.0;
};

/// One AdamW update from the gradients stored in `params`. `step` >= 1 drives
/// bias correction. Throws NonFiniteGradient naming the first offending
/// tensor, leaving parameters and state untouched.
StepStats optimizer_step(std::vector<Parameter>& params, AdamState& state, const TrainConfig& tc, std::size_t step,
                         double lr);

/// Reads every regular file under the given paths (directories recursively,
/// sorted by path) as one document each. Throws Io, or EmptyCorpus when no
/// bytes were found.
std::vector<std::string> read_documents(const std::vector<std::filesystem::path>& paths);

/// Flattens documents into one symbol stream under the framing.
std::vector<Symbol> frame_documents(const std::vector<std::string>& docs, Framing framing);

/// Fixed-length windows over a symbol stream.
class CorpusStream {
public:
    /// Throws InvalidArgument when seq_len < 2.
    CorpusStream(std::vector<Symbol> stream, std::size_t seq_len, Framing framing);

    [[nodiscard]] std::size_t seq_len() const noexcept { return seq_len_; }
    [[nodiscard]] Framing framing() const noexcept { return framing_; }
    [[nodiscard]] const std::vector<Symbol>& stream() const noexcept { return stream_; }
    /// Non-overlapping windows available for sequential reads.
    [[nodiscard]] std::size_t window_count() const noexcept;
    [[nodiscard]] bool empty() const noexcept { return window_count() == 0; }

    /// i-th non-overlapping window.
    [[nodiscard]] ByteSeq window(std::size_t i) const;
    /// Window at a uniformly drawn offset.
    [[nodiscard]] ByteSeq sample(std::mt19937_64& rng) const;

    /// Sequential cursor over window(0), window(1), ...
    std::optional<ByteSeq> next();
    void reset() noexcept { cursor_ = 0; }

    /// Splits the stream at (1 − fraction) of its length.
    [[nodiscard]] std::pair<CorpusStream, CorpusStream> split(double fraction) const;

private:
    [[nodiscard]] std::size_t content_len() const noexcept;
    [[nodiscard]] ByteSeq at_offset(std::size_t offset) const;

    std::vector<Symbol> stream_;
    std::size_t seq_len_;
    Framing framing_;
    std::size_t cursor_ = 0;
};

/// Bigram statistics of a stream, for the entropy chunker.
strategies::BigramModel fit_bigram(const CorpusStream& stream);

/// Σ nats / (ln 2 · Σ targets) over the first `max_windows` sequential
/// windows (0: all). Throws EmptyCorpus.
double evaluate_bpb(const CorpusStream& stream, ModelParams& params, const ModelConfig& cfg,
                    std::size_t max_windows = 0, const strategies::BigramModel* bigram = nullptr);

struct TrainOptions {
    std::ostream* metrics = nullptr;             // metrics log lines
    std::filesystem::path checkpoint_path;       // empty: no checkpoints
    const strategies::BigramModel* bigram = nullptr;
    std::function<void(std::size_t step, double val_bpb)> on_eval;
};

struct TrainResult {
    std::size_t steps = 0;
    double initial_val_bpb = 0.0;
    double final_val_bpb = 0.0;
    bool stopped_early = false;
    std::vector<double> train_bpb;  // per step
};

/// Runs up to tc.total_steps updates. Each step averages the loss over
/// batch_size sampled windows. Throws NonFinite on a non-finite loss.
TrainResult train(ModelParams& params, const ModelConfig& cfg, const TrainConfig& tc, const CorpusStream& train_stream,
                  const CorpusStream* val_stream, const TrainOptions& opts = {});

/// Deterministic synthetic text: repeated phrases drawn from a small fixed
/// vocabulary of sentences, mixed with runs of "abc".
std::string synthetic_corpus(std::size_t bytes, std::uint64_t seed);

/// Formats one metrics log line.
std::string metrics_line(std::size_t step, double loss_nats, double bpb, double lr, double wall_ms);

}  // namespace byteflow::trainer
