// idevc/errors.hpp
//
// Exception hierarchy shared by every module. Each error class maps onto one
// CLI exit code (see tools/idevc.cpp).

#ifndef IDEVC_ERRORS_HPP
#define IDEVC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace idevc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes of operands do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf appeared where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition (too few samples, bad group, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// API misuse, e.g. calling backward on a non-scalar node.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Configuration or spec fields failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Operation is not defined for the data regime (e.g. oracle on MLP mixing).
class UnsupportedRegimeError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss. Carries the last good checkpoint.
class NumericAbort : public Error {
 public:
  NumericAbort(const std::string& what, std::string last_checkpoint)
      : Error(what), last_checkpoint_(std::move(last_checkpoint)) {}
  const std::string& last_checkpoint() const noexcept { return last_checkpoint_; }

 private:
  std::string last_checkpoint_;
};

}  // namespace idevc

#endif  // IDEVC_ERRORS_HPP
