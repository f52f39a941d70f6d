#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cuter {

enum class ErrorKind {
  invalid_input,
  degenerate_feature,
  isolated_node,
  size_limit,
  ambiguous_cut,
  degenerate_partition,
  empty_mask,
  empty_region,
  zero_division,
  oversize,
  configuration,
  format,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid input";
    case ErrorKind::degenerate_feature: return "degenerate feature";
    case ErrorKind::isolated_node: return "isolated node";
    case ErrorKind::size_limit: return "size limit";
    case ErrorKind::ambiguous_cut: return "ambiguous cut";
    case ErrorKind::degenerate_partition: return "degenerate partition";
    case ErrorKind::empty_mask: return "empty mask";
    case ErrorKind::empty_region: return "empty region";
    case ErrorKind::zero_division: return "zero division";
    case ErrorKind::oversize: return "oversize item";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::format: return "format";
  }
  return "unknown";
}

// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), message_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  // The text without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

}  // namespace cuter
