#pragma once

#include <stdexcept>
#include <string>

namespace reviewguard {

// Bad arguments or flags. The CLI maps this to exit code 1.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Unreadable, malformed or inconsistent input data. Exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Numerical failure during training or inference (NaN/Inf, divergence).
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace reviewguard
