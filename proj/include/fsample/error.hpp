#pragma once

#include <stdexcept>
#include <string>

namespace fsample {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user-supplied parameter (bad probabilities, infeasible counts, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input data that violates a structural invariant (edge index out of range).
class MalformedInputError : public Error {
 public:
  using Error::Error;
};

/// Caller broke a documented precondition (duplicate seeds, node out of range).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public FormatError {
 public:
  using FormatError::FormatError;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Failure of the collective transport; `rank()` names the peer that failed.
class TransportError : public Error {
 public:
  TransportError(int rank, const std::string& what)
      : Error("rank " + std::to_string(rank) + ": " + what), rank_(rank) {}

  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

/// A peer sent a message that is well-framed but semantically invalid.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace fsample
