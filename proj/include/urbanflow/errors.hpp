#pragma once

#include <stdexcept>
#include <string>

namespace urbanflow {

// Base for everything raised while reading or validating a scenario.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input. `line` is 1-based, 0 when unknown.
class ParseError : public ScenarioError {
 public:
  ParseError(const std::string& what, std::size_t line, std::string field)
      : ScenarioError(format(what, line, field)), line_(line), field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  static std::string format(const std::string& what, std::size_t line, const std::string& field) {
    std::string out = "parse error";
    if (line > 0) out += " at line " + std::to_string(line);
    if (!field.empty()) out += " (field '" + field + "')";
    return out + ": " + what;
  }

  std::size_t line_;
  std::string field_;
};

// A named invariant does not hold.
class ValidationError : public ScenarioError {
 public:
  ValidationError(std::string invariant, const std::string& detail)
      : ScenarioError("validation failed [" + invariant + "]: " + detail),
        invariant_(std::move(invariant)) {}

  const std::string& invariant() const noexcept { return invariant_; }

 private:
  std::string invariant_;
};

// Quantities that cannot be placed on the simulation time grid.
class UnitError : public ScenarioError {
 public:
  using ScenarioError::ScenarioError;
};

// A movement or phase references something that does not exist.
class TopologyError : public ValidationError {
 public:
  explicit TopologyError(const std::string& detail) : ValidationError("topology", detail) {}
};

class IndexMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyHistory : public std::invalid_argument {
 public:
  EmptyHistory() : std::invalid_argument("predictor history is empty") {}
};

class DivergedTraining : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidThresholds : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace urbanflow
