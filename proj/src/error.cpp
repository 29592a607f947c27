#include "modfuse/error.hpp"

namespace modfuse {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::format: return "format";
        case ErrorCode::unsupported_encoding: return "unsupported-encoding";
        case ErrorCode::rate_mismatch: return "rate-mismatch";
        case ErrorCode::empty_input: return "empty-input";
        case ErrorCode::parameter: return "parameter";
        case ErrorCode::shape: return "shape";
        case ErrorCode::geometry: return "geometry";
        case ErrorCode::io: return "io";
        case ErrorCode::truncation: return "truncation";
        case ErrorCode::data: return "data";
        case ErrorCode::parse: return "parse";
        case ErrorCode::label: return "label";
        case ErrorCode::duplicate: return "duplicate";
        case ErrorCode::schema: return "schema";
        case ErrorCode::empty_manifest: return "empty-manifest";
        case ErrorCode::degenerate: return "degenerate";
        case ErrorCode::numeric: return "numeric";
        case ErrorCode::poisoned_gradient: return "poisoned-gradient";
        case ErrorCode::probe: return "probe";
        case ErrorCode::manifest: return "manifest";
        case ErrorCode::cache_invalid: return "cache-invalid";
        case ErrorCode::undefined_improvement: return "undefined-improvement";
        case ErrorCode::empty_result: return "empty-result";
        case ErrorCode::usage: return "usage";
    }
    return "unknown";
}

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::usage:
        case ErrorCode::parameter:
            return 1;
        case ErrorCode::numeric:
        case ErrorCode::poisoned_gradient:
        case ErrorCode::probe:
            return 3;
        default:
            return 2;
    }
}

}  // namespace modfuse
