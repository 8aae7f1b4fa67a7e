#ifndef DFQ_ERRORS_HPP
#define DFQ_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace dfq {

/// Incompatible tensor extents.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Invalid hyperparameter or layer configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Operation called in the wrong state (e.g. backward without a training cache).
class StateError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Dataset ingestion failure.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Image bytes that cannot be decoded.
class DecodeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dfq

#endif  // DFQ_ERRORS_HPP
