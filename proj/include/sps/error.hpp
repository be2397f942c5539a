#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sps {

enum class Errc {
  unbalanced,
  empty_node,
  malformed,
  unknown_label,
  inventory_overlap,
  root_promotion,
  invalid_argument,
  unmapped_node,
  duplicate_priority,
  empty_features,
  missing_reference,
  token_mismatch,
  length_mismatch,
  empty_corpus,
  empty_treebank,
  invalid_model,
  empty_generation,
  service_unavailable,
  io,
  config,
};

std::string_view to_string(Errc code) noexcept;

/// Data error raised by the toolkit. `line()` is 1-based when the error is
/// tied to an input line and 0 otherwise.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), code_(code), line_(line) {}

  Errc code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Errc code_;
  std::size_t line_;
};

}  // namespace sps
