#pragma once

#include <stdexcept>
#include <string>

namespace quoka {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shape or layout disagreement between operands.
class DimensionError : public Error {
public:
    using Error::Error;
};

// Index outside the addressed range.
class BoundsError : public Error {
public:
    using Error::Error;
};

// Fully masked softmax row, zero-length reduction axis, empty top-k input.
class DegenerateError : public Error {
public:
    using Error::Error;
};

class NonFiniteError : public Error {
public:
    using Error::Error;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class StreamError : public Error {
public:
    using Error::Error;
};

class SpecError : public Error {
public:
    using Error::Error;
};

class MeasurementError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace quoka
