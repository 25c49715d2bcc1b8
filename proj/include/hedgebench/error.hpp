#pragma once

#include <stdexcept>
#include <string>

namespace hedgebench {

enum class ErrorKind {
  InvalidArgument,
  Parse,
  Validation,
  Numeric,
  Degenerate,
  Shape,
  Io,
  Determinism,
};

/// Base exception for the toolkit. The kind maps one-to-one onto the C API
/// status codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace hedgebench
