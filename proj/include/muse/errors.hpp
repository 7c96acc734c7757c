#pragma once

#include <stdexcept>
#include <string>

namespace muse {

/// Violated precondition of a public operation.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Tensor shapes incompatible with an op signature.
class ShapeError : public ContractError {
public:
    using ContractError::ContractError;
};

/// A computation produced NaN or Inf.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed binary or text input. `offset` is the byte offset (or line
/// number for text formats) where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : std::runtime_error(what + " (at offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A stored artifact does not match what the caller expects
/// (checkpoint vs model spec, for example).
class ArtifactMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A configuration key is unknown, missing or holds an unusable value.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what)
        : std::runtime_error("config key '" + key + "': " + what), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

}  // namespace muse
