#pragma once

#include <stdexcept>
#include <string>

namespace magkey {

// Exit-code classes used by the CLI: data/format problems map to 3,
// precondition violations to 4.
enum class ErrorKind {
  kDomain,
  kInsufficientData,
  kIncompleteFingerprint,
  kAmbiguousPolarity,
  kIllConditionedAnchors,
  kFormat,
  kNotFound,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class DomainError : public Error {
 public:
  explicit DomainError(const std::string& message) : Error(ErrorKind::kDomain, message) {}
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& message)
      : Error(ErrorKind::kInsufficientData, message) {}
};

class IncompleteFingerprintError : public Error {
 public:
  explicit IncompleteFingerprintError(const std::string& message)
      : Error(ErrorKind::kIncompleteFingerprint, message) {}
};

class AmbiguousPolarityError : public Error {
 public:
  explicit AmbiguousPolarityError(const std::string& message)
      : Error(ErrorKind::kAmbiguousPolarity, message) {}
};

class IllConditionedAnchorsError : public Error {
 public:
  IllConditionedAnchorsError(int axis, const std::string& message)
      : Error(ErrorKind::kIllConditionedAnchors, message), axis_(axis) {}

  /// Offending axis index (0=x, 1=y, 2=z).
  int axis() const noexcept { return axis_; }

 private:
  int axis_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& message) : Error(ErrorKind::kFormat, message) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& message) : Error(ErrorKind::kNotFound, message) {}
};

}  // namespace magkey
