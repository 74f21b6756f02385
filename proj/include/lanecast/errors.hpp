#pragma once

#include <stdexcept>
#include <string>

namespace lanecast {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes, reported with the offending node or argument.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity appeared where only finite values are allowed.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// A numerical procedure could not produce a meaningful result.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed input files (CSV panels, graph files, checkpoints, configs).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Data that parses but violates a precondition (too short, fully missing, ...).
class DataError : public Error {
public:
    using Error::Error;
};

} // namespace lanecast
