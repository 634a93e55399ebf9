#include "coexist/error.hpp"

namespace coexist {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kNotReady: return "not_ready";
    case ErrorCode::kUnknownEntity: return "unknown_entity";
    case ErrorCode::kPolicyGap: return "policy_gap";
    case ErrorCode::kContextUnavailable: return "context_unavailable";
    case ErrorCode::kModelValidity: return "model_validity";
    case ErrorCode::kIo: return "io_error";
  }
  return "unknown";
}

}  // namespace coexist
