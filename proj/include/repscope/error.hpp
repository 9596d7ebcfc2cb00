#ifndef REPSCOPE_ERROR_HPP
#define REPSCOPE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace repscope {

/**
 * Failure categories reported by every operation in the toolkit.
 * The CLI maps these onto exit codes.
 */
enum class ErrorKind {
    InvalidInput,
    ShapeMismatch,
    DegenerateInput,
    NumericalInstability,
    IoError,
    FormatError,
    CorruptFile,
    ManifestError,
    MissingUpstream,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidInput: return "InvalidInput";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::DegenerateInput: return "DegenerateInput";
        case ErrorKind::NumericalInstability: return "NumericalInstability";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::FormatError: return "FormatError";
        case ErrorKind::CorruptFile: return "CorruptFile";
        case ErrorKind::ManifestError: return "ManifestError";
        case ErrorKind::MissingUpstream: return "MissingUpstream";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind), message_(message) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// The message without the kind prefix.
    const std::string& message() const noexcept { return message_; }

    Error with_context(const std::string& context) const { return Error(kind_, context + ": " + message_); }

private:
    ErrorKind kind_;
    std::string message_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

} // namespace repscope

#endif
