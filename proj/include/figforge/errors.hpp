#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace figforge {

// Base error. `code` is a stable machine-readable identifier, `context`
// carries structured details (paths, offsets, offending ids).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message,
        std::map<std::string, std::string> context = {})
      : std::runtime_error(message), code_(std::move(code)),
        context_(std::move(context)) {}

  const std::string& code() const { return code_; }
  const std::map<std::string, std::string>& context() const { return context_; }

 private:
  std::string code_;
  std::map<std::string, std::string> context_;
};

// Invalid configuration or violated config invariant. CLI exit code 1.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message,
                       std::map<std::string, std::string> context = {})
      : Error("config_error", message, std::move(context)) {}
};

// Invalid input data (bad file contents, violated preconditions). Exit code 1.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& message,
                           std::map<std::string, std::string> context = {})
      : Error("validation_error", message, std::move(context)) {}
};

// Filesystem or codec failure. CLI exit code 2.
class IoError : public Error {
 public:
  explicit IoError(const std::string& message,
                   std::map<std::string, std::string> context = {})
      : Error("io_error", message, std::move(context)) {}
};

}  // namespace figforge
