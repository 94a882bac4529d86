#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace babyhgrn {

// Every failure raised by the library carries one of these categories; the
// CLI maps them onto distinct exit codes.
enum class ErrorKind {
  dimension,
  numeric,
  usage,
  data,
  config,
  plan,
  ingestion,
};

std::string_view to_string(ErrorKind kind);

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

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace babyhgrn
