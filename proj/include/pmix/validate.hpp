#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace pmix {

struct ValidateOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  std::size_t inputs = 50;
  std::size_t draws = 200000;
  std::size_t moment_draws = 20000;
  std::size_t directions = 20;
  std::size_t specs = 10;
  std::size_t trials = 400;
  std::size_t seeds = 20;
};

void to_json(nlohmann::json& j, const ValidateOptions& o);
// Strict: unknown keys are config errors.
void from_json(const nlohmann::json& j, ValidateOptions& o);

// rank1-identity, hermite, unbiasedness, variance, projection,
// oracle-projection, test-discrimination, reduction.
const std::vector<std::string>& validation_selectors();

// Report with "selector", "passed" and the suite metrics; "seconds" is timing.
// Unknown selectors are config errors.
nlohmann::json run_validation(const std::string& selector, const ValidateOptions& opts);

}  // namespace pmix
