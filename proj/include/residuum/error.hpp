#pragma once

#include <stdexcept>
#include <string>

namespace residuum {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments or options (CLI exit code 1).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed, inconsistent or numerically invalid data (CLI exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

/// Failure decoding or encoding an EMBX file. Each failure mode has its own kind.
class EmbxError : public DataError {
public:
    enum class Kind { Io, BadMagic, VersionMismatch, BadReserved, Truncated, TrailingBytes, NonFinite, BadShape };

    EmbxError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

} // namespace residuum
