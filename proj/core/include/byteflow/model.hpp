#pragma once

// The five-stage hierarchy:
//
//   bytes ─► local encoder ─► chunker (K rows) ─► W_proj ─► global transformer
//         ─► binned upsample + residual h ─► decoder ─► W_out ─► next-byte logits
//
// Local blocks (encoder and decoder) follow the printed pre-norm recurrence
//
//   u = LN(h);  ĥ = Canon(h + SWA(u));  v = LN(ĥ);  h' = Canon(ĥ + SwiGLU(v))
//
// Global blocks are plain pre-norm causal transformer blocks over the K
// selected rows. Boundary selection is a hard, non-differentiable index set
// computed from detached encoder values.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "byteflow/bytes.hpp"
#include "byteflow/config.hpp"
#include "byteflow/nn.hpp"
#include "byteflow/rate.hpp"
#include "byteflow/strategies.hpp"

namespace byteflow::model {

using nn::Parameter;
using nn::Tensor;
using rate::BoundarySet;
using strategies::StrategyKind;

struct ModelConfig {
    std::size_t d_local = 64;
    std::size_t d_global = 128;
    std::size_t d_ff_local = 128;
    std::size_t d_ff_global = 256;
    std::size_t encoder_layers = 2;
    std::size_t global_layers = 4;
    std::size_t decoder_layers = 2;
    std::size_t window = 32;
    std::size_t global_length = 100;  // K
    std::size_t bins = 16;            // B
    std::size_t max_seq_len = 8192;
    double eps2 = 1.0;
    double rope_theta_local = 5e5;
    double rope_theta_global = 5e5;
    int heads_local = 4;
    int heads_global = 8;
    bool canon = true;  // false drops both Canon mixes (ablation)
    StrategyKind chunker = StrategyKind::coding_rate();
    std::uint64_t init_seed = 0;

    /// Throws Config when an invariant fails (d_global >= d_local, B >= 1,
    /// head counts divide widths, ...).
    void validate() const;

    [[nodiscard]] rate::RateConfig rate_config() const;

    [[nodiscard]] config::KeyValues to_key_values() const;
    /// Overrides fields named in `kv`; unknown keys are ignored.
    void apply(const config::KeyValues& kv);

    /// T = 256, K = 100 micro model.
    static ModelConfig desk();
    /// Widths and depths of the 600M / 1.3B hierarchical configurations.
    static ModelConfig full_600m();
    static ModelConfig full_1_3b();
    /// Tiny shapes for gradient checks.
    static ModelConfig micro();
};

/// Parameter indices of one local (encoder/decoder) block.
struct LocalBlock {
    std::size_t norm1, wq, wk, wv, wo, canon1, norm2, w1, w2, w3, canon2;
};

/// Parameter indices of one global block.
struct GlobalBlock {
    std::size_t norm1, wq, wk, wv, wo, norm2, w1, w2, w3;
};

class ModelParams {
public:
    /// Seeded fan-in-scaled init; Canon gates start at identity and W_out
    /// starts small so an untrained model predicts close to uniform.
    static ModelParams init(const ModelConfig& cfg);

    [[nodiscard]] std::vector<Parameter>& tensors() noexcept { return tensors_; }
    [[nodiscard]] const std::vector<Parameter>& tensors() const noexcept { return tensors_; }
    Parameter& at(std::size_t i) { return tensors_[i]; }
    [[nodiscard]] const Parameter& at(std::size_t i) const { return tensors_[i]; }
    /// Throws InvalidArgument if no tensor has this name.
    [[nodiscard]] const Parameter& named(std::string_view name) const;
    Parameter& named(std::string_view name);

    void zero_grad();
    [[nodiscard]] std::size_t parameter_count() const;

    std::size_t embedding = 0;
    std::vector<LocalBlock> encoder;
    std::size_t proj = 0;
    std::vector<GlobalBlock> global;
    std::vector<std::size_t> upsample;
    std::vector<LocalBlock> decoder;
    std::size_t final_norm = 0;
    std::size_t out = 0;

private:
    std::size_t add(std::string name, Tensor value, bool decay);

    std::vector<Parameter> tensors_;
};

/// Per-call knobs that are not part of the architecture.
struct ForwardOptions {
    std::optional<BoundarySet> fixed_boundaries;  // bypass the chunker
    bool zero_global = false;                     // drop the global signal
    const strategies::BigramModel* bigram = nullptr;
    std::uint64_t nonce = 0;  // 0: derive from the content hash
};

struct ForwardResult {
    nn::Var loss;            // summed nats over targets, 1 x 1
    nn::Var logits;          // (T−1) x 258
    double loss_nats = 0.0;  // value of `loss`
    std::size_t targets = 0;
    BoundarySet boundaries;
};

/// chunk(t): index of the last boundary at or before t (0-based).
std::vector<std::size_t> chunk_map(const BoundarySet& s, std::size_t t_len);
/// bin(t) = ⌊t / (T/B)⌋ over 0-based t, giving B equal-width bins.
std::vector<std::size_t> bin_map(std::size_t t_len, std::size_t bins);

/// Local encoder output h (T x d_local). Throws SequenceTooLong.
nn::Var encode_local(nn::Graph& g, ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes);

/// Boundary selection on detached h, then z = h[S]·W_proj (K x d_global).
struct Downsampled {
    nn::Var latents;
    BoundarySet boundaries;
};
Downsampled downsample(nn::Graph& g, nn::Var h, ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes,
                       const ForwardOptions& opts = {});

nn::Var global_transform(nn::Graph& g, nn::Var z, ModelParams& params, const ModelConfig& cfg);

/// s_t = h_t + g_{chunk(t)}·W_{bin(t)}.
nn::Var upsample(nn::Graph& g, nn::Var global_out, const BoundarySet& s, nn::Var h, ModelParams& params,
                 const ModelConfig& cfg);

/// Full pass; loss over targets bytes[1..T−1]. Requires T >= 2.
ForwardResult forward(nn::Graph& g, ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes,
                      const ForwardOptions& opts = {});

struct LossReport {
    double loss_nats = 0.0;  // summed
    std::size_t targets = 0;
    [[nodiscard]] double bpb() const;
};

/// Forward only, no gradients retained beyond the call.
LossReport forward_loss(ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes,
                        const ForwardOptions& opts = {});

/// Detached encoder output as a plain matrix.
numkernel::Matrix representations(ModelParams& params, const ModelConfig& cfg, const ByteSeq& bytes);

/// bits-per-byte = nats / (ln 2 · n_bytes).
double bits_per_byte(double nats, std::size_t n_bytes);

}  // namespace byteflow::model
