#pragma once

#include <stdexcept>
#include <string>

namespace jppo {

/// Argument outside the documented domain of an operation.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Configuration file or config object that fails validation.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The link carries no bits under the current power and fading draw.
class OutageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what)
{
    if (!ok) {
        throw InvalidArgument(what);
    }
}

} // namespace detail
} // namespace jppo
