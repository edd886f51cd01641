#include "byteflow/bytes.hpp"

#include <string>

#include "byteflow/error.hpp"

namespace byteflow {

ByteSeq::ByteSeq(std::vector<Symbol> symbols) : symbols_(std::move(symbols)) {
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
        if (symbols_[i] >= kVocabSize) {
            throw Error(ErrorKind::OutOfVocab,
                        "symbol " + std::to_string(symbols_[i]) + " at index " + std::to_string(i));
        }
    }
}

ByteSeq ByteSeq::from_text(std::string_view text) {
    std::vector<Symbol> s;
    s.reserve(text.size());
    for (char ch : text) s.push_back(static_cast<unsigned char>(ch));
    return ByteSeq(std::move(s));
}

ByteSeq ByteSeq::with_bos(std::string_view text) {
    std::vector<Symbol> s;
    s.reserve(text.size() + 1);
    s.push_back(kBos);
    for (char ch : text) s.push_back(static_cast<unsigned char>(ch));
    return ByteSeq(std::move(s));
}

std::uint64_t content_hash(const ByteSeq& bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Symbol s : bytes) {
        h ^= static_cast<std::uint64_t>(s & 0xff);
        h *= 0x100000001b3ULL;
        h ^= static_cast<std::uint64_t>(s >> 8);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace byteflow
