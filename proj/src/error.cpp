#include "oeasd/error.hpp"

namespace oeasd {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::file: return "file";
    case ErrorKind::parse: return "parse";
    case ErrorKind::format: return "format";
    case ErrorKind::data: return "data";
    case ErrorKind::validation: return "validation";
    case ErrorKind::quota: return "quota";
    case ErrorKind::config: return "config";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::shape: return "shape";
    case ErrorKind::artifact: return "artifact";
  }
  return "unknown";
}

}  // namespace oeasd
