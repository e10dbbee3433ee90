#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ubr/dataset.hpp"
#include "ubr/diffcore/tensor.hpp"
#include "ubr/rng.hpp"

namespace ubr {

struct SamplerConfig {
  std::size_t g = 6;             // volumes per group
  std::size_t m = 8;             // equidistant slices per volume
  std::size_t max_interval = 0;  // cap on the slice interval k; 0 = uncapped

  void validate() const;
  bool operator==(const SamplerConfig&) const = default;
};

struct SliceRef {
  std::string volume_id;
  std::size_t slice = 0;

  bool operator==(const SliceRef&) const = default;
};

/// g rows of m slice references; within a row the indices ascend with one
/// constant interval k >= 1.
struct SampleGroup {
  std::vector<std::vector<SliceRef>> entries;
  diff::Tensor pixels;  // [g*m,1,H,W], volume-major

  bool operator==(const SampleGroup&) const = default;
};

/// Draws g volumes uniformly (with replacement) from those with >= m slices,
/// then per volume k uniform on its feasible range and start j uniform given k.
SampleGroup sample_group(const Dataset& dataset, const SamplerConfig& config, Rng& rng);

/// Slice references only, without pixel assembly.
std::vector<std::vector<SliceRef>> sample_entries(const Dataset& dataset, const SamplerConfig& config, Rng& rng);

/// Stacks the referenced slices volume-major, rejecting rows whose indices
/// do not strictly ascend.
diff::Tensor assemble_pixels(const Dataset& dataset, const std::vector<std::vector<SliceRef>>& entries);

/// Largest feasible interval for a volume of n slices.
std::size_t max_feasible_interval(std::size_t n, std::size_t m, std::size_t cap);

}  // namespace ubr
