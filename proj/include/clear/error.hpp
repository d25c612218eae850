#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace clear {

// Mirrors clr_status in clear.h; keep the numeric values in sync.
enum class ErrorKind {
    argument = 1,
    shape = 2,
    not_found = 3,
    conflict = 4,
    validation = 5,
    io = 6,
    parse = 7,
    divergence = 8,
    incompatible_snapshot = 9,
    strategy = 10,
    schema = 11,
    ordering = 12,
    internal = 13,
    missing_target = 14,
    scenario = 15,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
public:
    DivergenceError(std::size_t epoch, const std::string& message)
        : Error(ErrorKind::divergence, message), epoch_(epoch) {}

    std::size_t epoch() const noexcept { return epoch_; }

private:
    std::size_t epoch_;
};

}  // namespace clear
