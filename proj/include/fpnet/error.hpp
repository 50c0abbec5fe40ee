#pragma once

#include <stdexcept>
#include <string>

namespace fpnet {

// Base class for every error the library raises on purpose.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Incompatible tensor shapes or an element count that cannot be represented.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid layer/model/run configuration (bad spec fields, rejected configs).
class ConfigError : public Error {
public:
    using Error::Error;
};

// A caller broke an API precondition (non-scalar backward, label out of range).
class ContractError : public Error {
public:
    using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failures; the message names the offending file.
class IoError : public Error {
public:
    using Error::Error;
};

// A file exists but its bytes do not match the expected format.
class FormatError : public Error {
public:
    using Error::Error;
};

}  // namespace fpnet
