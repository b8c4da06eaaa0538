#pragma once

#include <functional>
#include <string>
#include <vector>

#include "pn/tape.hpp"

namespace pn {

struct NamedMatrix {
  std::string name;
  Matrix value;
};

/// Builds a scalar loss from leaf parameters on a fresh tape. The function
/// must be deterministic so the central-difference probes see the same
/// computation at perturbed points.
using ScalarFn = std::function<Value(Tape&, const std::vector<Value>&)>;

/// Compares analytic gradients against central differences
/// (f(x+h) - f(x-h)) / 2h for every entry of every parameter. Returns the
/// maximum of |analytic - numeric| / max(1, |numeric|). Throws if any probe
/// produces a non-finite value, naming the offending parameter.
double grad_check(const ScalarFn& f, const std::vector<NamedMatrix>& params, double h);

}  // namespace pn
