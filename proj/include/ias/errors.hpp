#pragma once

#include <stdexcept>
#include <string>

namespace ias {

/// Invalid or inconsistent input: malformed configs, dangling references,
/// shape mismatches, bad flag values. Maps to CLI exit code 2.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// The resource budget cannot be met even with every width at its floor.
/// Maps to CLI exit code 3.
struct InfeasibleBudgetError : std::runtime_error {
  explicit InfeasibleBudgetError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ias
