#include "fapm/error.hpp"

namespace fapm {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::format: return "format error";
        case ErrorKind::unsupported_encoding: return "unsupported encoding";
        case ErrorKind::validation: return "validation error";
        case ErrorKind::grid_mismatch: return "grid mismatch";
        case ErrorKind::io: return "i/o error";
        case ErrorKind::undefined_metric: return "undefined metric";
        case ErrorKind::configuration: return "configuration error";
        case ErrorKind::incompatible: return "incompatible artifacts";
    }
    return "error";
}

void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, std::string(to_string(kind)) + ": " + message);
}

}  // namespace fapm
