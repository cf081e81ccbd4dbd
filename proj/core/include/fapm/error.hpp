#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fapm {

enum class ErrorKind {
    format,
    unsupported_encoding,
    validation,
    grid_mismatch,
    io,
    undefined_metric,
    configuration,
    incompatible,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the engine carries a kind so that callers (the CLI
/// in particular) can map it onto an exit status without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace fapm
