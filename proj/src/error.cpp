#include "pmix/error.hpp"

namespace pmix {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_index: return "invalid-index";
    case ErrorKind::shape: return "shape";
    case ErrorKind::size_limit: return "size-limit";
    case ErrorKind::arity: return "arity";
    case ErrorKind::unsupported_distribution: return "unsupported-distribution";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::empty_sample: return "empty-sample";
    case ErrorKind::sample_size: return "sample-size";
    case ErrorKind::separation_too_small: return "separation-too-small";
    case ErrorKind::placement: return "placement";
    case ErrorKind::no_signal: return "no-signal-found";
    case ErrorKind::refine_failed: return "refine-failed";
    case ErrorKind::isolate_failed: return "isolate-failed";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace pmix
