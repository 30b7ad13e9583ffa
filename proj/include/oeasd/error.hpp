#pragma once

#include <stdexcept>
#include <string>

namespace oeasd {

// Categories surfaced on the command line as `error: kind=<name> ...`.
enum class ErrorKind {
  file,         // unreadable / unwritable path
  parse,        // malformed name or text
  format,       // well-formed but unsupported content (e.g. stereo WAV)
  data,         // non-finite samples and similar bad values
  validation,   // precondition on arguments violated
  quota,        // not enough clips to satisfy a requested draw
  config,       // inconsistent configuration
  numeric,      // NaN/Inf or factorization failure during computation
  shape,        // mismatched container sizes
  artifact,     // checkpoint / detector inconsistency
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace oeasd
