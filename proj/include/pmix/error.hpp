#pragma once

#include <stdexcept>
#include <string>

namespace pmix {

enum class ErrorKind {
  invalid_index,
  shape,
  size_limit,
  arity,
  unsupported_distribution,
  numeric,
  empty_sample,
  sample_size,
  separation_too_small,
  placement,
  no_signal,
  refine_failed,
  isolate_failed,
  config,
  io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what);
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

}  // namespace pmix
