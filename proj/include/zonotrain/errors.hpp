#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace zonotrain {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes do not agree with an op's contract (inner dims, channels, axes).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A value falls outside an op's mathematical domain (log of a nonpositive
/// value, division by zero, activation undefined on an interval).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity produced where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed graph: cycles, dangling tensor ids, unreached outputs.
class StructureError : public Error {
 public:
  using Error::Error;
};

/// The requested output does not depend on the requested input.
class ReachabilityError : public StructureError {
 public:
  using StructureError::StructureError;
};

/// An op has no transformer (or no derivative) for the requested domain.
class UnsupportedOpError : public Error {
 public:
  UnsupportedOpError(std::string op, std::string where)
      : Error("unsupported op " + op + " (" + where + ")"), op_(std::move(op)) {}

  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// A precondition on arguments was violated (non-scalar loss, negative eps...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// A property was asked for a domain it does not list as supported.
class PropertyDomainError : public Error {
 public:
  using Error::Error;
};

/// Corrupt or inconsistent file content. Carries the byte offset when known.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what, std::size_t offset = npos)
      : Error(offset == npos ? what : what + " (at byte " + std::to_string(offset) + ")"),
        offset_(offset) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Invalid run configuration (CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace zonotrain
