#pragma once

#include <stdexcept>
#include <string>

namespace modfuse {

enum class ErrorCode {
    format,
    unsupported_encoding,
    rate_mismatch,
    empty_input,
    parameter,
    shape,
    geometry,
    io,
    truncation,
    data,
    parse,
    label,
    duplicate,
    schema,
    empty_manifest,
    degenerate,
    numeric,
    poisoned_gradient,
    probe,
    manifest,
    cache_invalid,
    undefined_improvement,
    empty_result,
    usage,
};

const char* error_code_name(ErrorCode code);

// Process exit status for an error category: 1 usage, 2 data, 3 numeric.
int exit_code_for(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace modfuse
