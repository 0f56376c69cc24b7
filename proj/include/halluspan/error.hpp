#pragma once

#include <stdexcept>
#include <string>

namespace halluspan {

/// Bad configuration: unknown placeholder, missing API key, invalid threshold.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A model response that could not be turned into candidates or a probability.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::string raw)
        : std::runtime_error(what), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// Data that violates a domain invariant (span bounds, probability range, id mismatch).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Network failure after retries were exhausted.
class TransportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failure; the message carries the offending path.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace halluspan
