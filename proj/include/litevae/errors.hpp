#pragma once

#include <stdexcept>
#include <string>

namespace litevae {

// Shape/dimension mismatches between tensors or layer configs.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// API contract violations (non-scalar backward, missing graph, ...).
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid config file contents or unknown keys.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unreadable or malformed data files (images, datasets).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Checkpoint integrity failures, with the failure class preserved.
class CheckpointError : public std::runtime_error {
public:
    enum class Kind { BadMagic, BadVersion, Truncated, ShapeMismatch, Io };

    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}

    Kind kind;
};

// Non-finite losses or failed numerical checks during a run.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace litevae
