#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xflood/config.hpp"
#include "xflood/graph.hpp"
#include "xflood/params.hpp"

namespace xflood {

struct GradcheckOptions {
  /// At least one coordinate per trainable tensor, and at least this many overall.
  std::size_t min_coordinates = 20;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double relative_floor = 1e-5;
  std::uint64_t seed = 7;
};

struct GradcheckReport {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::string worst_coordinate;
  /// Coordinates replaced because the central differences at `step` and
  /// `step / 10` disagree. More than half of `coordinates` fails the check.
  std::size_t unresolved = 0;
  bool passed = true;
};

/// Builds the forward graph and returns its output (any shape). Must be a pure
/// function of the parameter values.
using GradcheckForward = std::function<Var(Graph&, ParamStore&)>;

/// Compares reverse-mode gradients of sum(output * R), for a fixed random R,
/// with central differences on sampled parameter coordinates.
GradcheckReport gradcheck(const std::string& name, ParamStore& params, const GradcheckForward& forward,
                          const GradcheckOptions& options = {});

/// Module selectors accepted by run_gradcheck_suite.
const std::vector<std::string>& gradcheck_selectors();

/// Runs the checks of one selector ("tensor_core", "mfim", "hcamam", "cctfrm",
/// "uffm", "model" or "all") at the dimensions of `config`.
/// Throws ConfigError for an unknown selector.
std::vector<GradcheckReport> run_gradcheck_suite(const ModelConfig& config, const std::string& selector,
                                                 const GradcheckOptions& options = {});

}  // namespace xflood
