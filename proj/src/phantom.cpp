#include "ubr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ubr/error.hpp"

namespace ubr {

void PhantomSpec::validate() const {
  if (image_height < 8 || image_width < 8) throw usage_error("phantom images must be at least 8x8");
  if (min_slices < 2 || min_slices > max_slices) {
    throw usage_error("phantom slice range needs 2 <= min_slices <= max_slices");
  }
  if (!(min_span > 0.0) || min_span > max_span || max_span > 1.0) {
    throw usage_error("phantom coordinate span needs 0 < min_span <= max_span <= 1");
  }
  if (!(spacing_jitter >= 0.0) || spacing_jitter >= 1.0) throw usage_error("spacing_jitter must lie in [0,1)");
  if (!(noise_sigma >= 0.0)) throw usage_error("noise_sigma must be >= 0");
  if (!(translate_max >= 0.0)) throw usage_error("translate_max must be >= 0");
  if (!(scale_min > 0.0) || scale_min > scale_max) throw usage_error("scale range needs 0 < scale_min <= scale_max");
}

std::string to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::none: return "none";
    case AnomalyKind::reversed_segment: return "reversed-segment";
    case AnomalyKind::duplicated_slices: return "duplicated-slices";
    case AnomalyKind::shuffled: return "shuffled";
    case AnomalyKind::corrupted_slices: return "corrupted-slices";
  }
  return "none";
}

AnomalyKind anomaly_kind_from_string(const std::string& name) {
  for (auto kind : {AnomalyKind::none, AnomalyKind::reversed_segment, AnomalyKind::duplicated_slices,
                    AnomalyKind::shuffled, AnomalyKind::corrupted_slices}) {
    if (to_string(kind) == name) return kind;
  }
  throw data_error("unknown anomaly kind '" + name + "'");
}

std::span<const double> Volume::slice(std::size_t index) const {
  const std::size_t plane = height * width;
  if (index >= slice_count()) {
    throw data_error("volume " + id + ": slice " + std::to_string(index) + " out of range (" +
                     std::to_string(slice_count()) + " slices)");
  }
  return std::span<const double>(pixels).subspan(index * plane, plane);
}

int latent_band(double z) {
  if (z < 1.0 / 3.0) return 0;
  if (z < 2.0 / 3.0) return 1;
  return 2;
}

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Anti-aliased coverage of an ellipse with semi-axes (ax, ay); shrinks to
// nothing as the axes go to zero.
double ellipse_coverage(double x, double y, double ax, double ay) {
  const double minor = std::min(ax, ay);
  if (minor <= 0.0) return 0.0;
  const double r = std::sqrt((x * x) / (ax * ax) + (y * y) / (ay * ay));
  const double edge = clamp01((1.0 - r) * minor + 0.5);
  return edge * std::min(1.0, 2.0 * minor);
}

struct Anatomy {
  double organ_level;
  double organ_radius;
  double lung_scale;
};

// Every term is monotone in z: the organ grows, the (dark) lungs shrink.
// Both areas are linear in z.
Anatomy anatomy_at(double z) {
  return {0.5, std::sqrt(2.25 + 33.75 * z), std::sqrt(1.0 - 0.9 * z)};
}

}  // namespace

Placement random_placement(const PhantomSpec& spec, Rng& rng) {
  std::uniform_real_distribution<double> shift(-spec.translate_max, spec.translate_max);
  std::uniform_real_distribution<double> scale(spec.scale_min, spec.scale_max);
  Placement p;
  p.dx = shift(rng);
  p.dy = shift(rng);
  p.scale = spec.scale_max > spec.scale_min ? scale(rng) : spec.scale_min;
  return p;
}

RenderedSlice render_slice(double z, const PhantomSpec& spec, const Placement& placement, double noise_sigma,
                           Rng& rng) {
  if (!(z >= 0.0 && z <= 1.0)) throw usage_error("latent coordinate must lie in [0,1]");
  const Anatomy a = anatomy_at(z);
  const double s = placement.scale;
  const double cx = 0.5 * static_cast<double>(spec.image_width - 1) + placement.dx;
  const double cy = 0.5 * static_cast<double>(spec.image_height - 1) + placement.dy;

  RenderedSlice out;
  out.pixels.assign(spec.image_height * spec.image_width, 0.0);
  std::normal_distribution<double> noise(0.0, noise_sigma > 0.0 ? noise_sigma : 1.0);
  for (std::size_t row = 0; row < spec.image_height; ++row) {
    for (std::size_t col = 0; col < spec.image_width; ++col) {
      // pixel offsets from the body center; scale widens the outline and
      // spreads the organs apart without resizing them
      const double x = static_cast<double>(col) - cx;
      const double y = static_cast<double>(row) - cy;
      double v = 0.375 * ellipse_coverage(x, y, 10.0 * s, 9.0 * s);
      v += 0.2 * ellipse_coverage(x, y - 5.5 * s, 1.6, 1.6);                                 // spine
      v += a.organ_level * ellipse_coverage(x + 3.0 * s, y + 1.0 * s, a.organ_radius, a.organ_radius);  // organ
      const double lung_ax = 3.5 * a.lung_scale;
      const double lung_ay = 4.5 * a.lung_scale;
      v -= 0.25 * ellipse_coverage(x - 5.0 * s, y + 2.5 * s, lung_ax, lung_ay);
      v -= 0.25 * ellipse_coverage(x + 5.0 * s, y + 2.5 * s, lung_ax, lung_ay);
      if (noise_sigma > 0.0) v += noise(rng);
      out.pixels[row * spec.image_width + col] = clamp01(v);
    }
  }
  // body, spine, organ, and the lung pair while it has visible extent
  out.structure_count = 3 + (a.lung_scale * 3.5 >= 0.25 ? 2 : 0);
  return out;
}

RenderedSlice render_slice(double z, const PhantomSpec& spec, Rng& rng) {
  const Placement placement = random_placement(spec, rng);
  return render_slice(z, spec, placement, spec.noise_sigma, rng);
}

Volume generate_volume(const PhantomSpec& spec, Rng& rng, std::string id) {
  spec.validate();
  std::uniform_int_distribution<std::size_t> count(spec.min_slices, spec.max_slices);
  std::uniform_real_distribution<double> span_dist(spec.min_span, spec.max_span);
  std::uniform_real_distribution<double> jitter(-spec.spacing_jitter, spec.spacing_jitter);

  const std::size_t n = count(rng);
  const double nominal_span = span_dist(rng);
  double step = nominal_span / static_cast<double>(n - 1) * (1.0 + jitter(rng));
  step = std::min(step, 1.0 / static_cast<double>(n - 1));
  const double span = step * static_cast<double>(n - 1);
  // Start drawn from a widened range and clamped, so volumes reach both ends
  // of the body axis with non-vanishing probability.
  const double room = std::max(0.0, 1.0 - span);
  std::uniform_real_distribution<double> start(-0.15, room + 0.15);
  const double lo = std::clamp(start(rng), 0.0, room);

  Volume vol;
  vol.id = std::move(id);
  vol.height = spec.image_height;
  vol.width = spec.image_width;
  vol.spacing = step;
  vol.latent.resize(n);
  for (std::size_t i = 0; i < n; ++i) vol.latent[i] = std::min(1.0, lo + static_cast<double>(i) * step);

  const Placement placement = random_placement(spec, rng);
  vol.pixels.reserve(n * spec.image_height * spec.image_width);
  for (std::size_t i = 0; i < n; ++i) {
    const auto slice = render_slice(vol.latent[i], spec, placement, spec.noise_sigma, rng);
    vol.pixels.insert(vol.pixels.end(), slice.pixels.begin(), slice.pixels.end());
  }
  return vol;
}

namespace {

std::size_t fraction_of(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
}

}  // namespace

AnomalySpec random_anomaly(AnomalyKind kind, std::size_t n, Rng& rng) {
  AnomalySpec a;
  a.kind = kind;
  auto draw_length = [&](double lo, double hi) {
    std::uniform_int_distribution<std::size_t> d(std::max<std::size_t>(1, fraction_of(n, lo)),
                                                 std::max<std::size_t>(1, fraction_of(n, hi)));
    return d(rng);
  };
  auto draw_begin = [&](std::size_t span) {
    std::uniform_int_distribution<std::size_t> d(0, n - span);
    return d(rng);
  };
  switch (kind) {
    case AnomalyKind::none:
      break;
    case AnomalyKind::reversed_segment:
      a.length = std::min(n, draw_length(0.3, 0.6));
      a.begin = draw_begin(a.length);
      break;
    case AnomalyKind::duplicated_slices:
      a.length = std::min(n / 2, draw_length(0.2, 0.3));
      if (a.length == 0) throw data_error("volume too short for a duplicated block");
      a.begin = draw_begin(2 * a.length);
      break;
    case AnomalyKind::shuffled:
      a.length = n;
      break;
    case AnomalyKind::corrupted_slices: {
      a.length = std::min(n, draw_length(0.1, 0.2));
      a.begin = draw_begin(a.length);
      std::uniform_real_distribution<double> amp(0.6, 1.0);
      a.amplitude = amp(rng);
      break;
    }
  }
  return a;
}

Volume inject_anomaly(const Volume& volume, const AnomalySpec& anomaly, Rng& rng) {
  const std::size_t n = volume.slice_count();
  const std::size_t plane = volume.height * volume.width;
  const bool has_latent = volume.latent.size() == n;
  auto infeasible = [&](const std::string& why) {
    return data_error("cannot inject " + to_string(anomaly.kind) + " into " + volume.id + " (" +
                      std::to_string(n) + " slices): " + why);
  };
  if (anomaly.begin + anomaly.length > n) throw infeasible("segment exceeds volume bounds");

  Volume out = volume;
  out.anomaly = anomaly.kind;
  auto copy_slice = [&](std::size_t from, std::size_t to) {
    std::copy_n(volume.pixels.begin() + static_cast<std::ptrdiff_t>(from * plane), plane,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(to * plane));
    if (has_latent) out.latent[to] = volume.latent[from];
  };

  switch (anomaly.kind) {
    case AnomalyKind::none:
      break;
    case AnomalyKind::reversed_segment:
      if (anomaly.length < 2) throw infeasible("segment needs at least 2 slices");
      for (std::size_t k = 0; k < anomaly.length; ++k) copy_slice(anomaly.begin + k, anomaly.begin + anomaly.length - 1 - k);
      break;
    case AnomalyKind::duplicated_slices:
      if (anomaly.length == 0 || anomaly.begin + 2 * anomaly.length > n) {
        throw infeasible("duplicated block and its copy must fit in the volume");
      }
      for (std::size_t k = 0; k < anomaly.length; ++k) copy_slice(anomaly.begin + k, anomaly.begin + anomaly.length + k);
      break;
    case AnomalyKind::shuffled: {
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t k = 0; k < n; ++k) copy_slice(order[k], k);
      break;
    }
    case AnomalyKind::corrupted_slices: {
      if (anomaly.length == 0) throw infeasible("corrupted block is empty");
      std::uniform_real_distribution<double> phase_dist(0.0, 6.283185307179586);
      std::normal_distribution<double> grain(0.0, 0.25);
      for (std::size_t k = anomaly.begin; k < anomaly.begin + anomaly.length; ++k) {
        const double phase = phase_dist(rng);
        for (std::size_t r = 0; r < volume.height; ++r) {
          for (std::size_t c = 0; c < volume.width; ++c) {
            const double stripes = 0.5 * std::sin(0.9 * static_cast<double>(c) + 0.4 * static_cast<double>(r) + phase);
            out.pixels[k * plane + r * volume.width + c] = clamp01(0.5 + anomaly.amplitude * (stripes + grain(rng)));
          }
        }
      }
      break;
    }
  }
  return out;
}

Volume inject_anomaly(const Volume& volume, AnomalyKind kind, Rng& rng) {
  return inject_anomaly(volume, random_anomaly(kind, volume.slice_count(), rng), rng);
}

}  // namespace ubr
