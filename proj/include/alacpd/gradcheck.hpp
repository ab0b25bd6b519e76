#pragma once

// Numerical verification of the TAEnet backward pass: analytic gradients
// against central differences over a grid of small random configurations.

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "alacpd/taenet.hpp"

namespace alacpd {

struct GradcheckCase {
  TAEnetConfig config;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  double tolerance = 1e-4;
  double epsilon = 1e-5;
  std::vector<GradcheckCase> cases;

  bool passed() const;
  double worst() const;
};

// Every combination of U in {2,4}, w in {3,4}, D in {1,2}, S in {1,2}, with
// the AR branch active. Weights, alpha, gates and inputs are random.
GradcheckReport run_gradcheck(std::uint64_t seed = 2024, double tolerance = 1e-4,
                              double epsilon = 1e-5);

nlohmann::json to_json(const GradcheckReport& report);

}  // namespace alacpd
