#pragma once

#include <stdexcept>
#include <string>

namespace fedah {

enum class ErrorKind {
    config,   // invalid parameters or infeasible setup
    shape,    // dimension mismatch between matrices, models or batches
    usage,    // call made outside its precondition (e.g. empty batch)
    format,   // malformed input file
    runtime,  // failure during a run that is not a caller mistake
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config: return "configuration error";
    case ErrorKind::shape: return "shape error";
    case ErrorKind::usage: return "usage error";
    case ErrorKind::format: return "format error";
    case ErrorKind::runtime: return "runtime error";
    }
    return "error";
}

/// Single exception type for the library. The kind tells callers (and the
/// CLI exit-code mapping) what went wrong; the message says where.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

    /// Same kind, message prefixed with `context: `.
    Error with_context(const std::string& context) const {
        return Error(kind_, context + ": " + what());
    }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void throw_config(const std::string& msg) { throw Error(ErrorKind::config, msg); }
[[noreturn]] inline void throw_shape(const std::string& msg) { throw Error(ErrorKind::shape, msg); }
[[noreturn]] inline void throw_usage(const std::string& msg) { throw Error(ErrorKind::usage, msg); }
[[noreturn]] inline void throw_format(const std::string& msg) { throw Error(ErrorKind::format, msg); }

}  // namespace fedah
