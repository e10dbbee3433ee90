#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ubr/rng.hpp"

namespace ubr {

/// Generator settings for synthetic body volumes. The latent body axis runs
/// over [0,1]; each volume covers a random subinterval [a,b].
struct PhantomSpec {
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  std::size_t min_slices = 40;
  std::size_t max_slices = 200;
  double min_span = 0.35;  // bounds on b - a
  double max_span = 1.0;
  double spacing_jitter = 0.1;
  double noise_sigma = 0.05;
  double translate_max = 4.0;  // pixels
  double scale_min = 0.9;
  double scale_max = 1.1;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const PhantomSpec&) const = default;
};

/// In-plane body pose, fixed for all slices of one volume.
struct Placement {
  double dx = 0.0;
  double dy = 0.0;
  double scale = 1.0;
};

enum class AnomalyKind { none, reversed_segment, duplicated_slices, shuffled, corrupted_slices };

std::string to_string(AnomalyKind kind);
AnomalyKind anomaly_kind_from_string(const std::string& name);

struct AnomalySpec {
  AnomalyKind kind = AnomalyKind::none;
  std::size_t begin = 0;   // first affected slice
  std::size_t length = 0;  // affected slice count
  double amplitude = 1.0;  // corrupted-slices only
};

struct Volume {
  std::string id;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // n x H x W, row-major, values in [0,1]
  std::vector<double> latent;  // ground-truth coordinate per slice; empty when loaded for training
  double spacing = 0.0;        // latent step between consecutive slices
  AnomalyKind anomaly = AnomalyKind::none;

  std::size_t slice_count() const { return height * width == 0 ? 0 : pixels.size() / (height * width); }
  std::span<const double> slice(std::size_t index) const;
};

struct RenderedSlice {
  std::vector<double> pixels;  // H x W
  std::size_t structure_count = 0;
};

/// Draws a random placement within the PhantomSpec translation and scale ranges.
Placement random_placement(const PhantomSpec& spec, Rng& rng);

/// Renders the anatomy at latent `z` under `placement`, plus Gaussian noise
/// of std `noise_sigma` drawn from `rng`; clipped to [0,1]. Every pixel is a
/// non-decreasing function of z when noise is off.
RenderedSlice render_slice(double z, const PhantomSpec& spec, const Placement& placement, double noise_sigma, Rng& rng);
RenderedSlice render_slice(double z, const PhantomSpec& spec, Rng& rng);

Volume generate_volume(const PhantomSpec& spec, Rng& rng, std::string id = "volume");

/// Draws feasible parameters for `kind` on a volume of `n` slices.
AnomalySpec random_anomaly(AnomalyKind kind, std::size_t n, Rng& rng);

/// Applies `anomaly`; `rng` drives the shuffle permutation and corruption pattern.
Volume inject_anomaly(const Volume& volume, const AnomalySpec& anomaly, Rng& rng);
Volume inject_anomaly(const Volume& volume, AnomalyKind kind, Rng& rng);

/// Latent-thirds body zone: 0 for [0,1/3), 1 for [1/3,2/3), 2 for [2/3,1].
int latent_band(double z);

}  // namespace ubr
