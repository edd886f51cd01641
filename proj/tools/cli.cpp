#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "byteflow/checkpoint.hpp"
#include "byteflow/config.hpp"
#include "byteflow/model.hpp"
#include "byteflow/strategies.hpp"
#include "byteflow/trainer.hpp"

namespace byteflow::cli {

namespace {

using json = nlohmann::ordered_json;
using model::ModelConfig;
using trainer::TrainConfig;

constexpr double kDefaultRatio = 2.56;

/// Flags shared by every subcommand.
struct GlobalFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    std::string chunker;
    std::size_t k = 0;
    double ratio = 0.0;
    double eps2 = 0.0;
    std::string checkpoint;
    std::string out;
    std::size_t stride = 0;
    std::vector<std::string> sets;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* k_opt = nullptr;
    CLI::Option* ratio_opt = nullptr;
    CLI::Option* eps2_opt = nullptr;
    CLI::Option* stride_opt = nullptr;
};

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

/// Config file named by --config, else by the environment, else nothing.
config::KeyValues config_file(const GlobalFlags& g) {
    if (!g.config_path.empty()) return config::KeyValues::load(g.config_path);
    if (const char* env = std::getenv(config::kConfigEnvVar); env != nullptr && *env != '\0') {
        return config::KeyValues::load(env);
    }
    return {};
}

config::KeyValues overrides(const GlobalFlags& g) {
    config::KeyValues kv = config_file(g);
    for (const auto& s : g.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) config_error("--set expects key=value, got '" + s + "'");
        kv.merge(config::KeyValues::parse(s.substr(0, eq) + " = " + s.substr(eq + 1)));
    }
    const std::set<std::string> known = [] {
        std::set<std::string> keys;
        const auto model_kv = ModelConfig{}.to_key_values();
        const auto train_kv = TrainConfig{}.to_key_values();
        for (const auto& [k, v] : model_kv.entries()) keys.insert(k);
        for (const auto& [k, v] : train_kv.entries()) keys.insert(k);
        return keys;
    }();
    for (const auto& [k, v] : kv.entries()) {
        if (!known.contains(k)) config_error("unknown configuration key '" + k + "'");
    }
    return kv;
}

void apply_flags(const GlobalFlags& g, ModelConfig& cfg) {
    if (!g.chunker.empty()) {
        const auto tag = strategies::parse_tag(g.chunker);
        if (!tag) config_error("unknown chunker '" + g.chunker + "'");
        cfg.chunker.tag = *tag;
    }
    if (g.stride_opt->count() > 0) cfg.chunker.stride = g.stride;
    if (g.eps2_opt->count() > 0) cfg.eps2 = g.eps2;
    if (g.seed_opt->count() > 0) {
        cfg.init_seed = g.seed;
        cfg.chunker.seed = g.seed;
    }
}

void apply_flags(const GlobalFlags& g, TrainConfig& tc) {
    if (g.seed_opt->count() > 0) tc.seed = g.seed;
}

/// K from --K, else --ratio, else `fallback` (0 means "use the ratio default").
std::size_t resolve_k(const GlobalFlags& g, std::size_t t_len, std::size_t fallback) {
    std::size_t k = fallback;
    if (g.k_opt->count() > 0) {
        k = g.k;
    } else if (g.ratio_opt->count() > 0) {
        if (!(g.ratio >= 1.0)) config_error("--ratio must be >= 1");
        k = static_cast<std::size_t>(std::llround(static_cast<double>(t_len) / g.ratio));
    }
    if (k == 0) k = static_cast<std::size_t>(std::llround(static_cast<double>(t_len) / kDefaultRatio));
    k = std::max<std::size_t>(k, 1);
    if (k > t_len) config_error("K = " + std::to_string(k) + " exceeds the input length " + std::to_string(t_len));
    return k;
}

struct Resolved {
    ModelConfig model;
    TrainConfig train;
};

Resolved resolve_configs(const GlobalFlags& g) {
    Resolved r{ModelConfig::desk(), TrainConfig::desk()};
    const auto kv = overrides(g);
    r.model.apply(kv);
    r.train.apply(kv);
    apply_flags(g, r.model);
    apply_flags(g, r.train);
    if (g.k_opt->count() > 0 || g.ratio_opt->count() > 0) {
        r.model.global_length = resolve_k(g, r.train.seq_len, 0);
    }
    r.model.validate();
    r.train.validate();
    if (r.model.global_length > r.train.seq_len) config_error("global_length exceeds seq_len");
    if (r.train.seq_len > r.model.max_seq_len) config_error("seq_len exceeds max_seq_len");
    return r;
}

std::string read_input(const std::string& path) {
    std::string data;
    if (path == "-") {
        data.assign(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
        return data;
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read input " + path);
    data.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return data;
}

/// Writes to --out when given, else to `fallback`.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) : stream_(&fallback) {
        if (!path.empty()) {
            file_.open(path, std::ios::binary | std::ios::trunc);
            if (!file_) throw Error(ErrorKind::Io, "cannot write " + path);
            stream_ = &file_;
        }
    }
    std::ostream& operator*() { return *stream_; }

private:
    std::ofstream file_;
    std::ostream* stream_;
};

json kv_json(const config::KeyValues& kv) {
    json j = json::object();
    for (const auto& [k, v] : kv.entries()) j[k] = v;
    return j;
}

/// Model and auxiliary state for commands that may run with or without a
/// trained checkpoint.
struct LoadedModel {
    ModelConfig config;
    model::ModelParams params;
    std::optional<strategies::BigramModel> bigram;
    config::KeyValues metadata;
    bool from_checkpoint = false;
};

LoadedModel load_or_init(const GlobalFlags& g) {
    if (!g.checkpoint.empty()) {
        auto ck = model::load_checkpoint(g.checkpoint);
        LoadedModel m{ck.config, std::move(ck.params), std::nullopt, std::move(ck.metadata), true};
        for (const auto& e : ck.extras) {
            if (e.name == model::kBigramTensorName) m.bigram = model::bigram_from_tensor(e.value);
        }
        // Chunker and rate settings may be overridden at inference time.
        apply_flags(g, m.config);
        m.config.init_seed = ck.config.init_seed;
        m.config.validate();
        return m;
    }
    const auto r = resolve_configs(g);
    return {r.model, model::ModelParams::init(r.model), std::nullopt, {}, false};
}

// --- segment ---------------------------------------------------------------

int cmd_segment(const GlobalFlags& g, const std::string& input, std::ostream& out) {
    const std::string text = read_input(input);
    if (text.empty()) throw Error(ErrorKind::Config, "segment needs a non-empty input");
    const ByteSeq bytes = ByteSeq::from_text(text);
    auto m = load_or_init(g);
    const auto& kind = m.config.chunker;

    numkernel::Matrix h;
    std::string reps_source = "none";
    if (strategies::uses_representations(kind.tag)) {
        h = model::representations(m.params, m.config, bytes);
        reps_source = m.from_checkpoint ? "checkpoint" : "random-init";
    }
    std::string predictor = "none";
    if (kind.tag == strategies::StrategyTag::Entropy) {
        if (!m.bigram) {
            m.bigram.emplace();
            m.bigram->observe(bytes);
            predictor = "bigram-add-one (fitted on input)";
        } else {
            predictor = "bigram-add-one (checkpoint)";
        }
    }
    const strategies::StrategyContext ctx{m.bigram ? &*m.bigram : nullptr, content_hash(bytes)};
    const auto rate_cfg = m.config.rate_config();
    const auto profile = strategies::score_positions(kind, bytes, h, rate_cfg, ctx);

    std::size_t native = 0;
    if (strategies::has_native_set(kind.tag)) native = strategies::native_boundaries(profile).size();
    const std::size_t k = resolve_k(g, bytes.size(), native);
    const auto s = strategies::has_native_set(kind.tag)
                       ? strategies::fit_to_k(strategies::native_boundaries(profile), bytes.size(), k)
                       : rate::select_topk(profile, k);

    json header;
    header["type"] = "header";
    header["strategy"] = strategies::tag_name(kind.tag);
    header["T"] = bytes.size();
    header["K"] = k;
    header["eps2"] = m.config.eps2;
    header["seed"] = kind.seed;
    header["representations"] = reps_source;
    header["predictor"] = predictor;
    if (strategies::has_native_set(kind.tag)) {
        header["native_size"] = native;
        header["fit_to_k"] = native == k ? "none" : (native > k ? "truncated-earliest" : "padded-farthest");
    }
    header["config"] = kv_json(m.config.to_key_values());
    out << header.dump() << '\n';

    std::vector<bool> selected(bytes.size(), false);
    for (auto i : s.indices) selected[i] = true;
    for (std::size_t t = 0; t < bytes.size(); ++t) {
        json rec;
        rec["pos"] = t + 1;
        rec["byte"] = bytes[t];
        const double score = profile.scores[t];
        rec["score"] = std::isfinite(score) ? json(score) : json(nullptr);
        rec["selected"] = static_cast<bool>(selected[t]);
        rec["strategy"] = strategies::tag_name(kind.tag);
        out << rec.dump() << '\n';
    }
    json summary;
    summary["type"] = "summary";
    summary["K"] = k;
    summary["T"] = bytes.size();
    summary["ratio"] = static_cast<double>(bytes.size()) / static_cast<double>(k);
    out << summary.dump() << '\n';
    return kExitOk;
}

// --- dump-reps ---------------------------------------------------------------

int cmd_dump_reps(const GlobalFlags& g, const std::string& input, std::ostream& out) {
    const std::string text = read_input(input);
    if (text.empty()) throw Error(ErrorKind::Config, "dump-reps needs a non-empty input");
    const ByteSeq bytes = ByteSeq::from_text(text);
    auto m = load_or_init(g);
    const auto h = model::representations(m.params, m.config, bytes);
    json header;
    header["type"] = "header";
    header["T"] = h.rows();
    header["d"] = h.cols();
    header["representations"] = m.from_checkpoint ? "checkpoint" : "random-init";
    out << header.dump() << '\n';
    for (std::size_t t = 0; t < h.rows(); ++t) {
        json rec;
        rec["pos"] = t + 1;
        rec["byte"] = bytes[t];
        rec["h"] = std::vector<double>(h.row(t).begin(), h.row(t).end());
        out << rec.dump() << '\n';
    }
    return kExitOk;
}

// --- train / eval ------------------------------------------------------------

struct Corpus {
    trainer::CorpusStream train;
    trainer::CorpusStream val;
};

Corpus load_corpus(const std::vector<std::string>& paths, const TrainConfig& tc) {
    std::vector<std::filesystem::path> ps(paths.begin(), paths.end());
    const auto docs = trainer::read_documents(ps);
    trainer::CorpusStream all(trainer::frame_documents(docs, tc.framing), tc.seq_len, tc.framing);
    auto [tr, va] = all.split(tc.val_fraction);
    if (tr.empty()) throw Error(ErrorKind::EmptyCorpus, "corpus shorter than one training window");
    return {std::move(tr), std::move(va)};
}

std::optional<strategies::BigramModel> bigram_for(const ModelConfig& cfg, const trainer::CorpusStream& train) {
    if (cfg.chunker.tag != strategies::StrategyTag::Entropy) return std::nullopt;
    return trainer::fit_bigram(train);
}

int cmd_train(const GlobalFlags& g, const std::vector<std::string>& corpus, std::size_t steps, std::ostream& out) {
    auto r = resolve_configs(g);
    if (steps > 0) {
        r.train.total_steps = steps;
        r.train.warmup_steps = std::min(r.train.warmup_steps, steps);
    }
    if (g.checkpoint.empty()) config_error("train needs --checkpoint for its output");
    auto data = load_corpus(corpus, r.train);
    const auto bigram = bigram_for(r.model, data.train);

    Sink sink(g.out, out);
    auto params = model::ModelParams::init(r.model);
    trainer::TrainOptions opts;
    opts.metrics = &*sink;
    opts.checkpoint_path = g.checkpoint;
    opts.bigram = bigram ? &*bigram : nullptr;
    const auto result = trainer::train(params, r.model, r.train, data.train, data.val.empty() ? nullptr : &data.val, opts);
    if (!g.out.empty()) {
        out << "steps=" << result.steps << " val_bpb=" << config::format_double(result.final_val_bpb)
            << " checkpoint=" << g.checkpoint << '\n';
    }
    return kExitOk;
}

int cmd_eval(const GlobalFlags& g, const std::vector<std::string>& corpus, std::size_t windows, std::ostream& out) {
    if (g.checkpoint.empty()) config_error("eval needs --checkpoint");
    auto ck = model::load_checkpoint(g.checkpoint);
    TrainConfig tc;
    tc.apply(ck.metadata);
    const auto kv = overrides(g);
    tc.apply(kv);
    tc.validate();
    std::optional<strategies::BigramModel> bigram;
    for (const auto& e : ck.extras) {
        if (e.name == model::kBigramTensorName) bigram = model::bigram_from_tensor(e.value);
    }
    std::vector<std::filesystem::path> ps(corpus.begin(), corpus.end());
    const trainer::CorpusStream stream(trainer::frame_documents(trainer::read_documents(ps), tc.framing), tc.seq_len,
                                       tc.framing);
    const double bpb = trainer::evaluate_bpb(stream, ck.params, ck.config, windows, bigram ? &*bigram : nullptr);
    out << "bpb=" << config::format_double(bpb) << '\n';
    return kExitOk;
}

// --- ablate --------------------------------------------------------------------

std::vector<std::string> split_list(const std::vector<std::string>& items) {
    std::vector<std::string> out;
    for (const auto& item : items) {
        std::stringstream ss(item);
        std::string part;
        while (std::getline(ss, part, ',')) {
            if (!part.empty()) out.push_back(part);
        }
    }
    return out;
}

int cmd_ablate(const GlobalFlags& g, const std::vector<std::string>& corpus, const std::vector<std::string>& list,
               std::size_t seeds, std::ostream& out, std::ostream& err) {
    const auto names = split_list(list);
    if (names.empty()) config_error("ablate needs a non-empty --strategies list");
    if (seeds < 1) config_error("--seeds must be >= 1");
    const auto base = resolve_configs(g);
    auto data = load_corpus(corpus, base.train);
    if (data.val.empty()) config_error("validation split holds no complete window; raise val_fraction");

    Sink sink(g.out, out);
    json header;
    header["type"] = "header";
    header["strategies"] = names;
    header["seeds"] = seeds;
    header["entropy_predictor"] = "bigram-add-one fitted on the training split";
    header["static_fit_to_k"] = "truncate to earliest, pad farthest-from-boundary";
    header["model"] = kv_json(base.model.to_key_values());
    header["train"] = kv_json(base.train.to_key_values());
    *sink << header.dump() << '\n' << std::flush;

    int status = kExitOk;
    for (const auto& name : names) {
        double sum = 0.0;
        std::size_t ok = 0;
        for (std::size_t i = 0; i < seeds; ++i) {
            const std::uint64_t seed = base.train.seed + i;
            json row;
            row["type"] = "run";
            row["strategy"] = name;
            row["seed"] = seed;
            try {
                const auto tag = strategies::parse_tag(name);
                if (!tag) config_error("unknown chunker '" + name + "'");
                ModelConfig cfg = base.model;
                cfg.chunker.tag = *tag;
                cfg.chunker.seed = seed;
                cfg.init_seed = seed;
                TrainConfig tc = base.train;
                tc.seed = seed;
                const auto bigram = bigram_for(cfg, data.train);
                auto params = model::ModelParams::init(cfg);
                trainer::TrainOptions opts;
                opts.bigram = bigram ? &*bigram : nullptr;
                const auto res = trainer::train(params, cfg, tc, data.train, &data.val, opts);
                row["status"] = "ok";
                row["steps"] = res.steps;
                row["initial_val_bpb"] = res.initial_val_bpb;
                row["val_bpb"] = res.final_val_bpb;
                sum += res.final_val_bpb;
                ++ok;
            } catch (const Error& e) {
                row["status"] = "error";
                row["error"] = e.what();
                err << "ablate: " << name << " (seed " << seed << "): " << e.what() << '\n';
                if (status == kExitOk) status = exit_code_for(e.kind());
            }
            *sink << row.dump() << '\n' << std::flush;
        }
        json mean;
        mean["type"] = "mean";
        mean["strategy"] = name;
        mean["runs"] = ok;
        mean["mean_val_bpb"] = ok > 0 ? json(sum / static_cast<double>(ok)) : json(nullptr);
        *sink << mean.dump() << '\n' << std::flush;
    }
    return status;
}

}  // namespace

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Io:
        case ErrorKind::EmptyCorpus: return kExitIo;
        case ErrorKind::NonFinite:
        case ErrorKind::NonFiniteGradient:
        case ErrorKind::NonPositiveDefinite: return kExitNumeric;
        default: return kExitConfig;
    }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"byteflow: coding-rate byte segmentation and hierarchical byte language models", "byteflow"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags g;
    app.add_option("--config", g.config_path, std::string("key = value config file (default: $") +
                                                  config::kConfigEnvVar + ")");
    g.seed_opt = app.add_option("--seed", g.seed, "seed for initialization, chunker noise and sampling");
    app.add_option("--chunker", g.chunker, "fixed-stride, word-boundary, random, neural, entropy, cosine, "
                                           "coding-rate or coding-rate-l2");
    g.k_opt = app.add_option("--K", g.k, "number of selected positions");
    g.ratio_opt = app.add_option("--ratio", g.ratio, "compression ratio, K = round(T / ratio)");
    g.k_opt->excludes(g.ratio_opt);
    g.eps2_opt = app.add_option("--eps2", g.eps2, "coding-rate noise variance");
    app.add_option("--checkpoint", g.checkpoint, "checkpoint to read (segment, eval, dump-reps) or write (train)");
    app.add_option("--out", g.out, "output file (default: stdout)");
    g.stride_opt = app.add_option("--stride", g.stride, "fixed-stride width");
    app.add_option("--set", g.sets, "override one config key, key=value (repeatable)");

    std::string input;
    std::vector<std::string> corpus;
    std::vector<std::string> strategies_list;
    std::size_t steps = 0;
    std::size_t windows = 0;
    std::size_t seeds = 1;

    auto* segment = app.add_subcommand("segment", "score and select boundary positions of one input");
    segment->add_option("input", input, "input file, or - for stdin")->required();
    auto* dump = app.add_subcommand("dump-reps", "write encoder representations of one input");
    dump->add_option("input", input, "input file, or - for stdin")->required();
    auto* train = app.add_subcommand("train", "train a model and write checkpoints and a metrics log");
    train->add_option("corpus", corpus, "corpus files or directories")->required();
    train->add_option("--steps", steps, "override total_steps");
    auto* eval = app.add_subcommand("eval", "print the bits-per-byte of a checkpoint on a corpus");
    eval->add_option("corpus", corpus, "corpus files or directories")->required();
    eval->add_option("--windows", windows, "evaluate only the first N windows");
    auto* ablate = app.add_subcommand("ablate", "train one model per chunking strategy and compare");
    ablate->add_option("corpus", corpus, "corpus files or directories")->required();
    ablate->add_option("--strategies", strategies_list, "comma-separated chunker list")->required();
    ablate->add_option("--seeds", seeds, "seeds per strategy, starting at --seed");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (segment->parsed()) return cmd_segment(g, input, *Sink(g.out, out));
        if (dump->parsed()) return cmd_dump_reps(g, input, *Sink(g.out, out));
        if (train->parsed()) return cmd_train(g, corpus, steps, out);
        if (eval->parsed()) return cmd_eval(g, corpus, windows, out);
        if (ablate->parsed()) return cmd_ablate(g, corpus, strategies_list, seeds, out, err);
    } catch (const Error& e) {
        err << "byteflow: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "byteflow: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}

}  // namespace byteflow::cli
