#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace byteflow {

using Symbol = std::uint16_t;

inline constexpr std::size_t kVocabSize = 258;
inline constexpr Symbol kBos = 256;
inline constexpr Symbol kEos = 257;

/// Sequence of byte symbols over the 258-entry vocabulary (256 bytes + BOS/EOS).
class ByteSeq {
public:
    ByteSeq() = default;
    /// Throws OutOfVocab if any id >= 258.
    explicit ByteSeq(std::vector<Symbol> symbols);

    static ByteSeq from_text(std::string_view text);
    /// BOS followed by the raw bytes of `text`.
    static ByteSeq with_bos(std::string_view text);

    [[nodiscard]] std::size_t size() const noexcept { return symbols_.size(); }
    [[nodiscard]] bool empty() const noexcept { return symbols_.empty(); }
    Symbol operator[](std::size_t i) const noexcept { return symbols_[i]; }
    [[nodiscard]] std::span<const Symbol> symbols() const noexcept { return symbols_; }
    [[nodiscard]] auto begin() const noexcept { return symbols_.begin(); }
    [[nodiscard]] auto end() const noexcept { return symbols_.end(); }

    friend bool operator==(const ByteSeq&, const ByteSeq&) = default;

private:
    std::vector<Symbol> symbols_;
};

/// FNV-1a over the symbol stream; seeds per-sequence randomness.
std::uint64_t content_hash(const ByteSeq& bytes) noexcept;

}  // namespace byteflow
