#pragma once

// Binary checkpoint layout (all integers and reals little-endian):
//
//   "BYTEFLOW"                      8-byte magic
//   u32  format version             currently 1
//   u64  header length, then header bytes (UTF-8 `key = value` text: the full
//        ModelConfig followed by any metadata entries)
//   u64  tensor count
//   per tensor, in declaration order:
//     u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values
//
// Model parameters come first in ModelParams order; auxiliary tensors (for
// example the entropy chunker's bigram counts) follow.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "byteflow/config.hpp"
#include "byteflow/model.hpp"

namespace byteflow::model {

inline constexpr char kCheckpointMagic[8] = {'B', 'Y', 'T', 'E', 'F', 'L', 'O', 'W'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
    config::KeyValues metadata;     // header entries beyond the model config
    std::vector<NamedTensor> extras;
};

/// Throws Io on write failure.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params,
                     const config::KeyValues& metadata = {}, const std::vector<NamedTensor>& extras = {});

/// Throws Io when unreadable or malformed, Config when the stored tensors do
/// not match the stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Bigram counts as a 258 x 258 tensor and back.
NamedTensor bigram_tensor(const strategies::BigramModel& bigram);
strategies::BigramModel bigram_from_tensor(const Tensor& t);
inline constexpr const char* kBigramTensorName = "aux.bigram_counts";

}  // namespace byteflow::model
