#pragma once

#include <stdexcept>
#include <string>

namespace gforest {

/// Bad node id or a broken pointer chain.
class StructuralError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Caller violated a precondition (dimension mismatch, stale tape, ...).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file contents.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite quantity.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace gforest
