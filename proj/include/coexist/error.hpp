#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace coexist {

enum class ErrorCode {
  kInvalidArgument,
  kParse,
  kNotFound,
  kConflict,
  kNotReady,
  kUnknownEntity,
  kPolicyGap,
  kContextUnavailable,
  kModelValidity,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; `code` drives HTTP status mapping and
// CLI exit messages, `detail` carries machine-readable extras (offending ids).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::vector<std::string> detail_;
};

}  // namespace coexist
