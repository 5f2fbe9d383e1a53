#include "geoloc/error.hpp"

#include <algorithm>

namespace geoloc {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "E_IO";
    case ErrorCode::format: return "E_FORMAT";
    case ErrorCode::config: return "E_CONFIG";
    case ErrorCode::data: return "E_DATA";
    case ErrorCode::dimension: return "E_DIMENSION";
    case ErrorCode::numeric: return "E_NUMERIC";
    case ErrorCode::model: return "E_MODEL";
  }
  return "E_UNKNOWN";
}

std::string Error::formatted() const {
  std::string line(error_code_name(code_));
  line += ": ";
  line += what();
  std::replace(line.begin(), line.end(), '\n', ' ');
  return line;
}

}  // namespace geoloc
