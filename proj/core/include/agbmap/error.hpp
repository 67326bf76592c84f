#pragma once

#include <stdexcept>
#include <string>

namespace agbmap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Two grids whose geometry differs were combined.
class AlignmentError : public Error {
public:
    using Error::Error;
};

/// Input that violates an operation's precondition (empty sample, zero
/// variance, bad parameter).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

} // namespace agbmap
