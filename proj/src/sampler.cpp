#include "ubr/sampler.hpp"

#include <algorithm>

#include "ubr/error.hpp"

namespace ubr {

void SamplerConfig::validate() const {
  if (g < 1) throw usage_error("sampler needs g >= 1");
  if (m < 2) throw usage_error("sampler needs m >= 2, got " + std::to_string(m));
}

std::size_t max_feasible_interval(std::size_t n, std::size_t m, std::size_t cap) {
  if (n < m || m < 2) return 0;
  const std::size_t k = (n - 1) / (m - 1);
  return cap > 0 ? std::min(k, cap) : k;
}

std::vector<std::vector<SliceRef>> sample_entries(const Dataset& dataset, const SamplerConfig& config, Rng& rng) {
  config.validate();
  std::vector<std::size_t> eligible;
  std::size_t longest = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const std::size_t n = dataset[i].slice_count();
    longest = std::max(longest, n);
    if (n >= config.m) eligible.push_back(i);
  }
  if (eligible.empty()) {
    throw data_error("no volume has at least m = " + std::to_string(config.m) + " slices (longest has " +
                     std::to_string(longest) + ")");
  }

  std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
  std::vector<std::vector<SliceRef>> entries;
  entries.reserve(config.g);
  for (std::size_t v = 0; v < config.g; ++v) {
    const Volume& vol = dataset[eligible[pick(rng)]];
    const std::size_t n = vol.slice_count();
    std::uniform_int_distribution<std::size_t> interval(1, max_feasible_interval(n, config.m, config.max_interval));
    const std::size_t k = interval(rng);
    std::uniform_int_distribution<std::size_t> start(0, n - 1 - k * (config.m - 1));
    const std::size_t j = start(rng);
    std::vector<SliceRef> row;
    row.reserve(config.m);
    for (std::size_t s = 0; s < config.m; ++s) row.push_back({vol.id, j + s * k});
    entries.push_back(std::move(row));
  }
  return entries;
}

SampleGroup sample_group(const Dataset& dataset, const SamplerConfig& config, Rng& rng) {
  SampleGroup group;
  group.entries = sample_entries(dataset, config, rng);
  group.pixels = assemble_pixels(dataset, group.entries);
  return group;
}

diff::Tensor assemble_pixels(const Dataset& dataset, const std::vector<std::vector<SliceRef>>& entries) {
  if (entries.empty() || entries.front().empty()) throw usage_error("cannot assemble an empty sample group");
  const auto& first = dataset.find(entries.front().front().volume_id);
  const std::size_t height = first.height;
  const std::size_t width = first.width;
  const std::size_t plane = height * width;
  std::size_t rows = 0;
  for (const auto& row : entries) rows += row.size();

  diff::Tensor pixels({rows, 1, height, width});
  std::size_t out = 0;
  for (const auto& row : entries) {
    for (std::size_t s = 0; s < row.size(); ++s) {
      if (s > 0 && row[s].slice <= row[s - 1].slice) {
        throw usage_error("sample row for volume " + row[s].volume_id + " must list slice indices in ascending order");
      }
      const Volume& vol = dataset.find(row[s].volume_id);
      if (vol.height != height || vol.width != width) {
        throw ShapeError("height", "volume " + vol.id + " slice size differs from the rest of the group");
      }
      const auto slice = vol.slice(row[s].slice);
      std::copy(slice.begin(), slice.end(), pixels.data().begin() + static_cast<std::ptrdiff_t>(out * plane));
      ++out;
    }
  }
  return pixels;
}

}  // namespace ubr
