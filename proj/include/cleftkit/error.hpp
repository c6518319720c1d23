#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cleftkit {

enum class ErrorCode {
  shape,
  bounds,
  codec,
  io,
  type,
  empty_class,
  contract,
  sampling,
  config,
  asymmetric_context,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::shape: return "shape";
    case ErrorCode::bounds: return "bounds";
    case ErrorCode::codec: return "codec";
    case ErrorCode::io: return "io";
    case ErrorCode::type: return "type";
    case ErrorCode::empty_class: return "empty_class";
    case ErrorCode::contract: return "contract";
    case ErrorCode::sampling: return "sampling";
    case ErrorCode::config: return "config";
    case ErrorCode::asymmetric_context: return "asymmetric_context";
  }
  return "unknown";
}

// Every failure raised by the library. `context` names the object involved
// (a chunk path, a block id, a layer) and may be empty.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string context = {})
      : std::runtime_error(message), code_(code), context_(std::move(context)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& context() const noexcept { return context_; }

 private:
  ErrorCode code_;
  std::string context_;
};

}  // namespace cleftkit
