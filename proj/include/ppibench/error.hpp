#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ppibench {

/// Base class for every error raised by the harness.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or invariant-violating corpus input. `line()` is 1-based, 0 when
/// the error is not tied to an input line.
class CorpusError : public Error {
 public:
  CorpusError(const std::string& message, std::size_t line = 0, std::string sentence_id = {})
      : Error(line ? "line " + std::to_string(line) + ": " + message : message),
        line_(line),
        sentence_id_(std::move(sentence_id)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& sentence_id() const noexcept { return sentence_id_; }

 private:
  std::size_t line_;
  std::string sentence_id_;
};

class MaskError : public Error {
 public:
  MaskError(const std::string& message, std::string sentence_id)
      : Error(sentence_id + ": " + message), sentence_id_(std::move(sentence_id)) {}

  const std::string& sentence_id() const noexcept { return sentence_id_; }

 private:
  std::string sentence_id_;
};

class FoldError : public Error {
 public:
  using Error::Error;
};

class PromptError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppibench
