#pragma once

#include <stdexcept>
#include <string>

namespace meat {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or batch shapes that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

// A value outside its documented domain (negative epsilon, label >= C, ...).
class ArgumentError : public Error {
public:
    using Error::Error;
};

// API misuse: misaligned parameter sets, stale forward caches.
class UsageError : public Error {
public:
    using Error::Error;
};

// An operation whose precondition on accumulated state is unmet (empty ensemble window).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// A histogram selector matched nothing.
class SelectorError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk content (IDX headers, checkpoint framing, metrics log lines).
class FormatError : public Error {
public:
    using Error::Error;
};

class ChecksumError : public FormatError {
public:
    using FormatError::FormatError;
};

class VersionError : public FormatError {
public:
    using FormatError::FormatError;
};

class TruncatedError : public FormatError {
public:
    using FormatError::FormatError;
};

} // namespace meat
