#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace earmark {

/// Failure categories raised by the library. Each kind maps onto one of the
/// CLI exit codes through exit_code().
enum class ErrorKind {
  parameter,
  config,
  design,
  length,
  data,
  parse,
  normalization,
  detection,
  template_,
  estimation,
  resolution,
  state,
  degenerate,
  completeness,
  training,
  shape,
  fold,
  validation,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::config: return "config";
    case ErrorKind::design: return "design";
    case ErrorKind::length: return "length";
    case ErrorKind::data: return "data";
    case ErrorKind::parse: return "parse";
    case ErrorKind::normalization: return "normalization";
    case ErrorKind::detection: return "detection";
    case ErrorKind::template_: return "template";
    case ErrorKind::estimation: return "estimation";
    case ErrorKind::resolution: return "resolution";
    case ErrorKind::state: return "state";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::completeness: return "completeness";
    case ErrorKind::training: return "training";
    case ErrorKind::shape: return "shape";
    case ErrorKind::fold: return "fold";
    case ErrorKind::validation: return "validation";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

/// 2 = configuration, 3 = data, 4 = numeric.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::parameter:
    case ErrorKind::config:
    case ErrorKind::resolution:
    case ErrorKind::state:
      return 2;
    case ErrorKind::design:
    case ErrorKind::normalization:
    case ErrorKind::degenerate:
    case ErrorKind::estimation:
      return 4;
    default:
      return 3;
  }
}

}  // namespace earmark
