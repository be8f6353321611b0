#pragma once

#include <stdexcept>
#include <string>

namespace agritag {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, int line = 0)
        : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

class InvariantViolation : public Error { using Error::Error; };
class OutOfBounds : public Error { using Error::Error; };
class NoData : public Error { using Error::Error; };
class BelowMinDistance : public Error { using Error::Error; };
class InvalidDt : public Error { using Error::Error; };
class NonceReuse : public Error { using Error::Error; };
class AuthFailure : public Error { using Error::Error; };
class DecodeError : public Error { using Error::Error; };
class StorageFull : public Error { using Error::Error; };
class CorruptLog : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

class SchemaError : public Error {
public:
    SchemaError(const std::string& what, std::string key)
        : Error(key.empty() ? what : what + " (key '" + key + "')"), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

} // namespace agritag
