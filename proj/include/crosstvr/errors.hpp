#pragma once

#include <stdexcept>
#include <string>

namespace crosstvr {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when something tries to write into a frozen tensor or hand one to an
// optimizer.
class FrozenError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class FormatErrc {
  bad_magic,
  unsupported_version,
  wrong_kind,
  truncated,
  extent_overflow,
  checksum_mismatch,
  io,
};

const char* to_string(FormatErrc code);

class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}
  FormatErrc code() const { return code_; }

 private:
  FormatErrc code_;
};

// Missing corpus / checkpoint inputs for the CLI workflow.
class MissingInputError : public std::runtime_error {
 public:
  enum class Input { corpus, checkpoint };
  MissingInputError(Input input, const std::string& detail)
      : std::runtime_error(detail), input_(input) {}
  Input input() const { return input_; }

 private:
  Input input_;
};

}  // namespace crosstvr
