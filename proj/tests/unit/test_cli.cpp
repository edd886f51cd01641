#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

using namespace byteflow;
using json = nlohmann::json;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir() {
    const auto dir = fs::temp_directory_path() / "byteflow_cli_test";
    fs::create_directories(dir);
    return dir;
}

fs::path write_file(const std::string& name, const std::string& content) {
    const auto p = scratch_dir() / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
}

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(std::vector<std::string> args) {
    args.insert(args.begin(), "byteflow");
    std::ostringstream out, err;
    const int code = cli::run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::vector<json> json_lines(const std::string& text) {
    std::vector<json> rows;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) rows.push_back(json::parse(line));
    return rows;
}

std::vector<std::size_t> selected_positions(const std::vector<json>& rows) {
    std::vector<std::size_t> pos;
    for (const auto& r : rows) {
        if (r.contains("selected") && r["selected"].get<bool>()) pos.push_back(r["pos"].get<std::size_t>());
    }
    return pos;
}

const char* kTinyConfig = R"(d_local = 16
d_global = 16
d_ff_local = 32
d_ff_global = 32
encoder_layers = 1
global_layers = 1
decoder_layers = 1
heads_local = 2
heads_global = 2
window = 8
global_length = 13
bins = 4
seq_len = 32
batch_size = 4
total_steps = 80
warmup_steps = 5
eval_interval = 40
eval_windows = 4
val_fraction = 0.1
checkpoint_interval = 40
log_wall_time = false
)";

std::string corpus_text() {
    std::string s;
    for (int i = 0; i < 300; ++i) s += (i % 3 == 0) ? "the cat sat on the mat. " : "abcabc dog ran. ";
    return s;
}

}  // namespace

TEST_CASE("segment fixed-stride on eight bytes selects the anchor and multiples of 3") {
    const auto in = write_file("eight.txt", "abcdefgh");
    const auto r = run({"segment", in.string(), "--chunker", "fixed-stride", "--stride", "3"});
    REQUIRE(r.code == 0);
    const auto rows = json_lines(r.out);
    CHECK(rows.size() == 8 + 2);
    CHECK(selected_positions(rows) == std::vector<std::size_t>{1, 3, 6});
    CHECK(rows.front()["type"] == "header");
    CHECK(rows.back()["type"] == "summary");
    CHECK(rows.back()["K"] == 3);
}

TEST_CASE("segment with K = 1 keeps only the first position") {
    const auto in = write_file("k1.txt", "hello world");
    for (const char* tag : {"coding-rate", "coding-rate-l2", "cosine", "entropy", "word-boundary", "random"}) {
        CAPTURE(tag);
        const auto r = run({"segment", in.string(), "--chunker", tag, "--K", "1"});
        REQUIRE(r.code == 0);
        CHECK(selected_positions(json_lines(r.out)) == std::vector<std::size_t>{1});
    }
}

TEST_CASE("segment is deterministic for a fixed seed") {
    const auto in = write_file("det.txt", "the quick brown fox jumps over the lazy dog");
    const auto a = run({"segment", in.string(), "--chunker", "coding-rate", "--seed", "7", "--ratio", "4"});
    const auto b = run({"segment", in.string(), "--chunker", "coding-rate", "--seed", "7", "--ratio", "4"});
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(selected_positions(json_lines(a.out)).size() == 11);
}

TEST_CASE("flags given after the subcommand apply") {
    const auto in = write_file("after.txt", "abcdefgh");
    const auto a = run({"--chunker", "fixed-stride", "--stride", "3", "segment", in.string()});
    const auto b = run({"segment", in.string(), "--chunker", "fixed-stride", "--stride", "3"});
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
}

TEST_CASE("exit codes by failure kind") {
    const auto in = write_file("codes.txt", "abc");
    CHECK(run({"segment", (scratch_dir() / "missing.txt").string()}).code == cli::kExitIo);
    CHECK(run({"segment", in.string(), "--K", "4"}).code == cli::kExitConfig);
    CHECK(run({"segment", in.string(), "--K", "2", "--ratio", "2"}).code == cli::kExitConfig);
    CHECK(run({"segment", in.string(), "--chunker", "bogus"}).code == cli::kExitConfig);
    CHECK(run({"segment", in.string(), "--set", "no_such_key=1"}).code == cli::kExitConfig);
    CHECK(run({"ablate", in.string(), "--strategies", ""}).code == cli::kExitConfig);
    CHECK(run({"ablate", in.string()}).code == cli::kExitConfig);
    CHECK(run({"frobnicate"}).code == cli::kExitConfig);
    CHECK(run({"--help"}).code == cli::kExitOk);

    const auto missing = (scratch_dir() / "no_checkpoint.bin").string();
    const auto r = run({"eval", in.string(), "--checkpoint", missing});
    CHECK(r.code == cli::kExitIo);
    CHECK(r.err.find(missing) != std::string::npos);

    CHECK(cli::exit_code_for(ErrorKind::EmptyCorpus) == cli::kExitIo);
    CHECK(cli::exit_code_for(ErrorKind::NonFiniteGradient) == cli::kExitNumeric);
    CHECK(cli::exit_code_for(ErrorKind::NonPositiveDefinite) == cli::kExitNumeric);
    CHECK(cli::exit_code_for(ErrorKind::InvalidK) == cli::kExitConfig);
}

TEST_CASE("train writes a checkpoint that eval scores reproducibly") {
    const auto cfg = write_file("tiny.cfg", kTinyConfig);
    const auto corpus = write_file("corpus.txt", corpus_text());
    const auto ck = (scratch_dir() / "model.bin").string();
    const auto log = (scratch_dir() / "metrics.log").string();

    const auto t = run({"--config", cfg.string(), "--seed", "3", "train", corpus.string(), "--checkpoint", ck, "--out",
                        log});
    REQUIRE(t.code == 0);
    const auto e1 = run({"--config", cfg.string(), "eval", corpus.string(), "--checkpoint", ck});
    const auto e2 = run({"--config", cfg.string(), "eval", corpus.string(), "--checkpoint", ck});
    REQUIRE(e1.code == 0);
    CHECK(e1.out == e2.out);
    const double bpb = std::stod(e1.out.substr(e1.out.find('=') + 1));
    CHECK(bpb < 7.0);

    // The same seed gives the same metrics log.
    const auto log2 = (scratch_dir() / "metrics2.log").string();
    const auto ck2 = (scratch_dir() / "model2.bin").string();
    REQUIRE(run({"--config", cfg.string(), "--seed", "3", "train", corpus.string(), "--checkpoint", ck2, "--out", log2})
                .code == 0);
    std::ifstream a(log), b(log2);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(!sa.str().empty());
    CHECK(sa.str() == sb.str());
}

TEST_CASE("ablate records one run per strategy and seed") {
    const auto cfg = write_file("tiny_ablate.cfg", kTinyConfig);
    const auto corpus = write_file("corpus_ablate.txt", corpus_text());
    const auto r = run({"--config", cfg.string(), "--set", "total_steps=10", "ablate", corpus.string(), "--strategies",
                        "random,random,fixed-stride", "--seeds", "2"});
    REQUIRE(r.code == 0);
    const auto rows = json_lines(r.out);
    std::vector<json> runs, means;
    for (const auto& row : rows) {
        if (row["type"] == "run") runs.push_back(row);
        if (row["type"] == "mean") means.push_back(row);
    }
    CHECK(runs.size() == 6);
    CHECK(means.size() == 3);
    // The same strategy with the same seeds gives the same numbers.
    CHECK(means[0]["mean_val_bpb"] == means[1]["mean_val_bpb"]);
}

TEST_CASE("ablate keeps going after a failing strategy") {
    const auto cfg = write_file("tiny_fail.cfg", kTinyConfig);
    const auto corpus = write_file("corpus_fail.txt", corpus_text());
    const auto r = run({"--config", cfg.string(), "--set", "total_steps=5", "ablate", corpus.string(), "--strategies",
                        "nope,random"});
    CHECK(r.code == cli::kExitConfig);
    std::size_t ok = 0;
    for (const auto& row : json_lines(r.out)) {
        if (row["type"] == "run" && row["status"] == "ok") ++ok;
    }
    CHECK(ok == 1);
}
