#pragma once

// Fixed composite Gauss-Legendre rule for expectations over a standard normal.
// The node set is frozen, so averaged models stay smooth in their parameters.

#include <vector>

namespace rfmag {

struct NormalRule {
  std::vector<double> nodes;    // standardized offsets z
  std::vector<double> weights;  // sum to 1
};

/// 20-point Gauss-Legendre on each of `panels` equal panels of [-half_range, half_range],
/// weighted by the normal density and renormalized to unit mass.
NormalRule normal_rule(int panels, double half_range = 8.0);

}  // namespace rfmag
