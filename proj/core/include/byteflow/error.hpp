#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace byteflow {

enum class ErrorKind {
    NonPositiveDefinite,
    NonFinite,
    InvalidArgument,
    InvalidK,
    MissingRepresentations,
    OutOfVocab,
    BadShape,
    SequenceTooLong,
    EmptyCorpus,
    NonFiniteGradient,
    Io,
    Config,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Single exception type for the library; callers switch on kind() to map
// failures onto exit codes or retry policy.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace byteflow
