#pragma once
// Gradient driver: evaluates an objective graph over a ParamStore, fills
// gradient slots by reverse-mode accumulation, and verifies them against
// central finite differences.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vrf/param_store.hpp"
#include "vrf/tape.hpp"

namespace vrf {

// An objective is a recipe that builds a scalar graph from bound parameters.
// It must be deterministic: any internal randomness (MC noise, dropout) must
// be derived from seeds it carries, so repeated builds agree bit-for-bit.
using GraphBuilder = std::function<ad::Id(ad::Tape&, const BoundParams&)>;

// Builds the graph, runs one reverse sweep, and fills every trainable grad
// slot (previous grads are cleared first — never stale). Returns the value.
double compute_gradients(const GraphBuilder& objective, ParamStore& params);

// Forward value only; gradients are left untouched.
double evaluate_objective(const GraphBuilder& objective, const ParamStore& params);

struct FdCoord {
  std::string name;    // parameter entry
  std::size_t index;   // flat index within the entry
  double analytic;     // reverse-mode gradient
  double numeric;      // central difference
  double rel_error;    // |a-n| / max(1e-8, |a|+|n|)
  bool kink;           // curvature blew up at this point; excluded from pass/fail
};

struct FdReport {
  std::vector<FdCoord> coords;
  double max_rel_error = 0.0;  // over non-kink coordinates
  std::size_t kink_count = 0;
  bool pass(double tol) const { return max_rel_error <= tol; }
};

// Samples `sample` distinct trainable coordinates (seeded), compares the
// analytic gradient against (f(x+eps)-f(x-eps))/2eps per coordinate, and
// reports the max relative error. Coordinates sitting on a non-smooth point
// (detected by a second-difference blowup) are flagged as kinks and excluded
// from the statistic. epsilon must lie in [1e-7, 1e-3].
FdReport fd_check(const GraphBuilder& objective, ParamStore& params,
                  double epsilon, std::size_t sample, std::uint64_t seed = 1);

}  // namespace vrf
