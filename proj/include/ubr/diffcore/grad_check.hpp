#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ubr/diffcore/graph.hpp"

namespace ubr::diff {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Builds a scalar-valued graph from parameter leaves. Must be deterministic:
/// it is invoked once for the analytic pass and twice per perturbed element.
using GraphBuilder = std::function<Var(Graph&, const std::vector<Var>& params)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Relative error is |a - n| / max(|a|, |n|, denominator_floor, noise / tolerance),
  /// where noise = roundoff_ulps * eps * max(|f+|, |f-|) / (2 step) is the
  /// rounding noise of the difference quotient itself.
  double denominator_floor = 1e-6;
  double roundoff_ulps = 16.0;
  /// 0 checks every element; otherwise an evenly strided subset per tensor.
  std::size_t max_checks_per_tensor = 0;
  /// Skip elements whose +-step probe changes the graph's branch signature
  /// (the difference quotient straddles a relu/maxpool kink there).
  bool skip_kink_crossings = true;
  /// Test hook: tampers with the analytic gradients before comparison.
  std::function<void(std::vector<Tensor>&)> corrupt_analytic;
};

struct TensorGradReport {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
  std::size_t kinks_skipped = 0;
};

struct GradCheckReport {
  std::vector<TensorGradReport> tensors;
  double tolerance = 0.0;

  double max_relative_error() const;
  std::size_t kinks_skipped() const;
  bool passed() const { return max_relative_error() < tolerance; }
};

/// Compares backward() against central finite differences, element by element.
GradCheckReport grad_check(const std::vector<NamedTensor>& params, const GraphBuilder& build,
                           const GradCheckOptions& options = {});

}  // namespace ubr::diff
