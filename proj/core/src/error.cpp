#include "byteflow/error.hpp"

namespace byteflow {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::NonPositiveDefinite: return "NonPositiveDefinite";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::InvalidK: return "InvalidK";
        case ErrorKind::MissingRepresentations: return "MissingRepresentations";
        case ErrorKind::OutOfVocab: return "OutOfVocab";
        case ErrorKind::BadShape: return "BadShape";
        case ErrorKind::SequenceTooLong: return "SequenceTooLong";
        case ErrorKind::EmptyCorpus: return "EmptyCorpus";
        case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorKind::Io: return "Io";
        case ErrorKind::Config: return "Config";
    }
    return "Unknown";
}

}  // namespace byteflow
