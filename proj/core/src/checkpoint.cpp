#include "byteflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "byteflow/error.hpp"

namespace byteflow::model {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
        if (!out_) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    }

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw Error(ErrorKind::Io, "write failed on " + path_.string());
    }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void text(const std::string& s) { bytes(s.data(), s.size()); }

    void tensor(const std::string& name, const Tensor& t) {
        u32(static_cast<std::uint32_t>(name.size()));
        text(name);
        u32(2);
        u64(static_cast<std::uint64_t>(t.rows()));
        u64(static_cast<std::uint64_t>(t.cols()));
        bytes(t.data(), static_cast<std::size_t>(t.size()) * sizeof(double));
    }

    void close() {
        out_.close();
        if (!out_) throw Error(ErrorKind::Io, "closing " + path_.string());
    }

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : path_(path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorKind::Io, "cannot read checkpoint " + path.string());
        data_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }

    void bytes(void* dst, std::size_t n) {
        if (n > data_.size() - pos_) throw Error(ErrorKind::Io, "truncated checkpoint " + path_.string());
        std::memcpy(dst, data_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        bytes(&v, sizeof v);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        bytes(&v, sizeof v);
        return v;
    }
    std::string text(std::size_t n) {
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    [[nodiscard]] bool done() const noexcept { return pos_ == data_.size(); }

    NamedTensor tensor() {
        NamedTensor nt;
        nt.name = text(u32());
        const std::uint32_t rank = u32();
        if (rank != 2) throw Error(ErrorKind::Io, "tensor " + nt.name + " has unsupported rank " + std::to_string(rank));
        const std::uint64_t rows = u64();
        const std::uint64_t cols = u64();
        if (cols != 0 && rows > (data_.size() - pos_) / sizeof(double) / cols) {
            throw Error(ErrorKind::Io, "tensor " + nt.name + " larger than the file");
        }
        nt.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        bytes(nt.value.data(), static_cast<std::size_t>(rows * cols) * sizeof(double));
        return nt;
    }

private:
    std::vector<char> data_;
    std::size_t pos_ = 0;
    std::filesystem::path path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                     const config::KeyValues& metadata, const std::vector<NamedTensor>& extras) {
    config::KeyValues header = cfg.to_key_values();
    header.merge(metadata);
    const std::string header_text = header.format();

    Writer w(path);
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u64(header_text.size());
    w.text(header_text);
    w.u64(params.tensors().size() + extras.size());
    for (const auto& p : params.tensors()) w.tensor(p.name, p.value);
    for (const auto& e : extras) w.tensor(e.name, e.value);
    w.close();
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    Reader r(path);
    char magic[sizeof kCheckpointMagic];
    r.bytes(magic, sizeof magic);
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw Error(ErrorKind::Io, path.string() + " is not a checkpoint (bad magic)");
    }
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::Io, "unsupported checkpoint version " + std::to_string(version));
    }
    const std::string header_text = r.text(r.u64());
    const auto header = config::KeyValues::parse(header_text);

    ModelConfig cfg;
    cfg.apply(header);
    const auto known = cfg.to_key_values();
    config::KeyValues metadata;
    for (const auto& [k, v] : header.entries()) {
        if (!known.contains(k)) metadata.set(k, v);
    }

    Checkpoint ck{cfg, ModelParams::init(cfg), std::move(metadata), {}};
    const std::uint64_t count = r.u64();
    auto& tensors = ck.params.tensors();
    if (count < tensors.size()) throw Error(ErrorKind::Config, "checkpoint holds fewer tensors than the model needs");
    for (auto& p : tensors) {
        NamedTensor nt = r.tensor();
        if (nt.name != p.name) throw Error(ErrorKind::Config, "expected tensor " + p.name + ", found " + nt.name);
        if (nt.value.rows() != p.value.rows() || nt.value.cols() != p.value.cols()) {
            throw Error(ErrorKind::Config, "shape mismatch for " + p.name);
        }
        p.value = std::move(nt.value);
        p.zero_grad();
    }
    for (std::uint64_t i = tensors.size(); i < count; ++i) ck.extras.push_back(r.tensor());
    if (!r.done()) throw Error(ErrorKind::Io, "trailing bytes in checkpoint " + path.string());
    return ck;
}

NamedTensor bigram_tensor(const strategies::BigramModel& bigram) {
    const auto counts = bigram.counts();
    Tensor t(static_cast<Eigen::Index>(kVocabSize), static_cast<Eigen::Index>(kVocabSize));
    for (std::size_t i = 0; i < counts.size(); ++i) t.data()[i] = static_cast<double>(counts[i]);
    return {kBigramTensorName, std::move(t)};
}

strategies::BigramModel bigram_from_tensor(const Tensor& t) {
    if (t.rows() != static_cast<Eigen::Index>(kVocabSize) || t.cols() != static_cast<Eigen::Index>(kVocabSize)) {
        throw Error(ErrorKind::Config, "bigram table must be 258 x 258");
    }
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(t.size()));
    for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = static_cast<std::uint64_t>(t.data()[i]);
    return strategies::BigramModel::from_counts(counts);
}

}  // namespace byteflow::model
