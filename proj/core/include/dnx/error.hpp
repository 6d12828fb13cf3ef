#pragma once

#include <stdexcept>
#include <string>

namespace dnx {

// Base for every error the library raises. The CLI maps the three
// subclasses onto exit codes 1 (usage), 2 (data) and 3 (divergence).
class Error : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
    using Error::Error;
};

// Malformed files, inconsistent dimensions, invalid graphs.
class DataError : public Error {
 public:
    using Error::Error;
};

// Non-finite loss or objective during an optimization.
class DivergenceError : public Error {
 public:
    using Error::Error;
};

}  // namespace dnx
