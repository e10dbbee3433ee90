#include "ubr/diffcore/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ubr/error.hpp"

namespace ubr::diff {

double GradCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& t : tensors) worst = std::max(worst, t.max_relative_error);
  return worst;
}

std::size_t GradCheckReport::kinks_skipped() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.kinks_skipped;
  return n;
}

namespace {

struct Probe {
  double value = 0.0;
  std::vector<std::size_t> signature;
};

Probe evaluate(const std::vector<NamedTensor>& params, const GraphBuilder& build, bool with_signature) {
  Graph graph;
  std::vector<Var> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(graph.constant(p.value));
  const Var out = build(graph, leaves);
  Probe probe{graph.value(out).item(), {}};
  if (with_signature) probe.signature = graph.branch_signature();
  return probe;
}

}  // namespace

GradCheckReport grad_check(const std::vector<NamedTensor>& params, const GraphBuilder& build,
                           const GradCheckOptions& options) {
  std::vector<Tensor> analytic;
  std::vector<std::size_t> signature;
  {
    Graph graph;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(graph.parameter(p.value));
    const Var out = build(graph, leaves);
    graph.backward(out);
    if (options.skip_kink_crossings) signature = graph.branch_signature();
    for (auto leaf : leaves) analytic.push_back(graph.grad(leaf));
  }
  if (options.corrupt_analytic) options.corrupt_analytic(analytic);

  GradCheckReport report;
  report.tolerance = options.tolerance;
  std::vector<NamedTensor> probe = params;
  for (std::size_t t = 0; t < params.size(); ++t) {
    TensorGradReport entry;
    entry.name = params[t].name;
    const std::size_t count = params[t].value.size();
    const std::size_t checks =
        options.max_checks_per_tensor == 0 ? count : std::min(count, options.max_checks_per_tensor);
    for (std::size_t c = 0; c < checks; ++c) {
      const std::size_t i = checks == count ? c : c * count / checks;
      const double original = params[t].value[i];
      probe[t].value[i] = original + options.step;
      const Probe plus = evaluate(probe, build, options.skip_kink_crossings);
      probe[t].value[i] = original - options.step;
      const Probe minus = evaluate(probe, build, options.skip_kink_crossings);
      probe[t].value[i] = original;
      if (options.skip_kink_crossings && (plus.signature != signature || minus.signature != signature)) {
        ++entry.kinks_skipped;
        continue;
      }
      ++entry.checked;

      const double numeric = (plus.value - minus.value) / (2.0 * options.step);
      const double a = analytic[t][i];
      const double noise = options.roundoff_ulps * std::numeric_limits<double>::epsilon() *
                           std::max(std::fabs(plus.value), std::fabs(minus.value)) / (2.0 * options.step);
      const double denom =
          std::max({std::fabs(a), std::fabs(numeric), options.denominator_floor, noise / options.tolerance});
      const double rel = std::fabs(a - numeric) / denom;
      if (!(rel <= entry.max_relative_error)) {
        entry.max_relative_error = std::isnan(rel) ? INFINITY : rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.tensors.push_back(entry);
  }
  return report;
}

}  // namespace ubr::diff
