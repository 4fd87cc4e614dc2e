#pragma once

#include <stdexcept>
#include <string>

namespace expcast {

// Error taxonomy maps onto CLI exit codes:
//   ValidationError -> 1, TransportError -> 2, anything else -> 3.

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Malformed model output or unreadable structured file.
class ParseError : public ValidationError {
public:
    explicit ParseError(const std::string& what) : ValidationError(what) {}
};

// Backend misconfiguration (missing script, missing credentials, ...).
class ConfigError : public ValidationError {
public:
    explicit ConfigError(const std::string& what) : ValidationError(what) {}
};

// Network/backend failure after retries were exhausted.
class TransportError : public std::runtime_error {
public:
    explicit TransportError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace expcast
