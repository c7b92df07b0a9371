#pragma once

#include <stdexcept>
#include <string>

namespace sentinel {

// Shape disagreement between operands; the message names the axis.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Non-finite values surfaced during training or optimisation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Configuration file problems (unknown keys, bad values, incompatible keys).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input data problems (missing file, malformed cell, empty dataset).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace sentinel
