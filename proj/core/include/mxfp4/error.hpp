// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mxfp4 {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite or otherwise unusable numeric input.
class InvalidInputError : public Error {
public:
    using Error::Error;
};

// A value fell outside the representable range of the operation.
class RangeError : public Error {
public:
    using Error::Error;
};

// Malformed or truncated serialized data.
class FormatError : public Error {
public:
    using Error::Error;
};

// Violated API contract: axis orientation, shapes, stale tapes.
class ContractError : public Error {
public:
    using Error::Error;
};

// Rejected configuration. `keys` names the offending config keys.
class ConfigError : public Error {
public:
    ConfigError(const std::string& keys, const std::string& what)
        : Error(keys + ": " + what), keys_(keys) {}
    const std::string& keys() const noexcept { return keys_; }

private:
    std::string keys_;
};

// Training produced a non-finite loss or state.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace mxfp4
