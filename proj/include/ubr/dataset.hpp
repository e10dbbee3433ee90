#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ubr/phantom.hpp"

namespace ubr {

/// Volume container: magic "UBRV", u32 version, u32 n_slices, u32 H, u32 W,
/// f64 spacing, then n*H*W little-endian f64 intensities. Carries no latent.
inline constexpr std::uint32_t kVolumeVersion = 1;

void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path, const std::string& id);

/// One manifest line: id, relative path, slice count, anomaly kind or "none".
struct ManifestEntry {
  std::string id;
  std::string path;
  std::size_t n_slices = 0;
  AnomalyKind anomaly = AnomalyKind::none;
};

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Latent sidecar: magic "UBRZ", u32 version, u32 record count, then per
/// volume a length-prefixed id, u32 n and n f64 coordinates.
using LatentTable = std::map<std::string, std::vector<double>>;
void write_latents(const std::filesystem::path& path, const std::vector<Volume>& volumes);
LatentTable read_latents(const std::filesystem::path& path);

/// Per-slice zone labels, CSV "volume_id,slice_index,class".
using SliceLabels = std::map<std::string, std::vector<int>>;
void write_labels(const std::filesystem::path& path, const std::vector<Volume>& volumes);
SliceLabels read_labels(const std::filesystem::path& path);

inline constexpr const char* kManifestName = "manifest.txt";
inline constexpr const char* kLatentsName = "latents.ubrz";
inline constexpr const char* kLabelsName = "labels.csv";

/// Unlabeled volumes as the trainer and evaluators see them.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Volume> volumes);

  /// Loads every volume listed in `dir`/manifest.txt. Never reads the sidecar.
  static Dataset open(const std::filesystem::path& dir);

  std::size_t size() const noexcept { return volumes_.size(); }
  const Volume& operator[](std::size_t index) const { return volumes_.at(index); }
  const Volume& find(const std::string& id) const;
  std::size_t index_of(const std::string& id) const;
  const std::vector<Volume>& volumes() const noexcept { return volumes_; }
  const std::vector<ManifestEntry>& manifest() const noexcept { return manifest_; }

 private:
  std::vector<Volume> volumes_;
  std::vector<ManifestEntry> manifest_;
};

std::vector<AnomalyKind> default_anomaly_kinds();

struct GeneratedDataset {
  std::vector<ManifestEntry> manifest;
  std::vector<Volume> volumes;  // with latents
};

/// Deterministic in-memory generation; each volume is independently
/// anomalous with probability `anomaly_fraction`, kind uniform over `kinds`.
GeneratedDataset generate_volumes(std::size_t n_volumes, const PhantomSpec& spec, double anomaly_fraction,
                                  std::uint64_t seed, const std::vector<AnomalyKind>& kinds);

/// Writes volumes/, manifest.txt, latents.ubrz and labels.csv under `dir`.
GeneratedDataset generate_dataset(const std::filesystem::path& dir, std::size_t n_volumes, const PhantomSpec& spec,
                                  double anomaly_fraction, std::uint64_t seed,
                                  const std::vector<AnomalyKind>& kinds = default_anomaly_kinds());

}  // namespace ubr
