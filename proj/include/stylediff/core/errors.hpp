#pragma once

#include <stdexcept>
#include <string>

namespace stylediff {

// Error taxonomy shared by the library and the CLI. The CLI maps each class
// onto a distinct exit code (see tools/stylediff.cpp).

/// Shape, dimension or range violation in a call.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or empty user input (audio, sequences).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dataset or file content that fails validation.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint missing, corrupt, or incompatible with the requested model.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerically undefined quantity (e.g. cosine similarity of a zero vector).
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

template <class E>
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw E(msg);
}

}  // namespace detail
}  // namespace stylediff
