#pragma once

#include <stdexcept>
#include <string>

namespace gcttt {

/// Failure categories. The CLI maps each one onto a distinct exit code.
enum class ErrorKind : int {
    config = 2,     // invalid configuration, schema violation, bad arguments
    io = 3,         // missing or unreadable file
    integrity = 4,  // bad magic, version mismatch, checksum failure
    numeric = 5,    // non-finite loss or gradient
    shape = 1,      // dimension mismatch between tensors (internal misuse)
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class IntegrityError : public Error {
public:
    explicit IntegrityError(const std::string& what) : Error(ErrorKind::integrity, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, what) {}
};

}  // namespace gcttt
