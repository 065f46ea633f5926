#pragma once

#include <stdexcept>
#include <string>

namespace nbm {

// Error taxonomy used across the library. The CLI maps these to exit codes:
// input 2, divergence 3, mismatch 4, empty result 5.

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when training produces a non-finite parameter, error or objective.
// Carries the position of the offending sample when known.
struct DivergenceError : std::runtime_error {
    int epoch = -1;
    int user = -1;
    int item = -1;
    DivergenceError(const std::string& msg, int epoch_ = -1, int user_ = -1, int item_ = -1)
        : std::runtime_error(msg), epoch(epoch_), user(user_), item(item_) {}
};

struct MismatchError : std::runtime_error {
    explicit MismatchError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyResultError : std::runtime_error {
    explicit EmptyResultError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace nbm
