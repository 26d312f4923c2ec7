#pragma once

#include <stdexcept>
#include <string>

namespace ivos {

/// A caller broke a documented precondition (shape mismatch, out-of-range index, ...).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// User-supplied data failed validation (scribbles out of bounds, unknown object, ...).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A persisted file has a bad header, wrong dimensions, or is truncated.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A resource could not be read (missing file, missing frame entry).
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Global matching was asked to match against an empty reference set.
class EmptyReferenceError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced non-finite gradients.
class TrainingAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}
}  // namespace detail

}  // namespace ivos
