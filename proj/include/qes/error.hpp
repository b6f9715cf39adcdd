#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qes {

/// Vector lengths that must agree do not.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;

  static DimensionError mismatch(const char* what, std::size_t expected, std::size_t got) {
    return DimensionError(std::string(what) + ": expected length " + std::to_string(expected) +
                          ", got " + std::to_string(got));
  }
};

/// Invalid hyperparameter, config field or precondition on scalar inputs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A task evaluation failed for one population member; the generation is aborted.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(std::size_t member, const std::string& reason)
      : std::runtime_error("evaluation failed for member " + std::to_string(member) + ": " + reason),
        member_(member) {}

  std::size_t member() const noexcept { return member_; }

 private:
  std::size_t member_;
};

}  // namespace qes
