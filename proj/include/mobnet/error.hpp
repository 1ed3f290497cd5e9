#pragma once

#include <stdexcept>
#include <string>

namespace mobnet {

// Bad or missing input data (unreadable files, malformed tables, unknown
// regions). Maps to CLI exit status 2.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A numerical procedure could not produce a result (singular systems,
// rank-deficient designs). Maps to CLI exit status 3.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mobnet
