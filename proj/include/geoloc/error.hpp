#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace geoloc {

enum class ErrorCode {
  io,          // missing or unreadable file
  format,      // malformed input file
  config,      // invalid configuration value
  data,        // data incompatible with the requested operation
  dimension,   // shape mismatch between operands
  numeric,     // NaN/Inf encountered
  model,       // corrupt or incompatible model container
};

std::string_view error_code_name(ErrorCode code);

/// Exception carrying a machine-greppable code. what() holds only the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// "E_FORMAT: <message>" on one line.
  std::string formatted() const;

 private:
  ErrorCode code_;
};

}  // namespace geoloc
