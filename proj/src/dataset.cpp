#include "ubr/dataset.hpp"

#include <fstream>
#include <sstream>

#include "ubr/binary_io.hpp"
#include "ubr/error.hpp"

namespace ubr {

namespace fs = std::filesystem;

void write_volume(const fs::path& path, const Volume& volume) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out.write("UBRV", 4);
  io::write_u32(out, kVolumeVersion);
  io::write_u32(out, static_cast<std::uint32_t>(volume.slice_count()));
  io::write_u32(out, static_cast<std::uint32_t>(volume.height));
  io::write_u32(out, static_cast<std::uint32_t>(volume.width));
  io::write_f64(out, volume.spacing);
  io::write_f64_array(out, volume.pixels);
  if (!out) throw data_error(path.string() + ": write failed");
}

Volume read_volume(const fs::path& path, const std::string& id) {
  const std::string ctx = "volume " + id + " (" + path.string() + ")";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(ctx + ": cannot open volume file");
  io::expect_magic(in, "UBRV", ctx);
  const auto version = io::read_u32(in, ctx);
  if (version != kVolumeVersion) throw data_error(ctx + ": unsupported version " + std::to_string(version));
  Volume vol;
  vol.id = id;
  const auto n = io::read_u32(in, ctx);
  vol.height = io::read_u32(in, ctx);
  vol.width = io::read_u32(in, ctx);
  if (n == 0 || vol.height == 0 || vol.width == 0) throw data_error(ctx + ": empty volume");
  vol.spacing = io::read_f64(in, ctx);
  vol.pixels.resize(static_cast<std::size_t>(n) * vol.height * vol.width);
  io::read_f64_array(in, vol.pixels, ctx);
  if (in.peek() != std::char_traits<char>::eof()) throw data_error(ctx + ": trailing bytes after pixel data");
  return vol;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out << "# id\tpath\tn_slices\tanomaly\n";
  for (const auto& e : entries) out << e.id << '\t' << e.path << '\t' << e.n_slices << '\t' << to_string(e.anomaly) << '\n';
  if (!out) throw data_error(path.string() + ": write failed");
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path.string() + ": cannot open manifest");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    ManifestEntry e;
    std::string anomaly;
    if (!(fields >> e.id >> e.path >> e.n_slices >> anomaly)) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": expected id, path, n_slices, anomaly");
    }
    e.anomaly = anomaly_kind_from_string(anomaly);
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_latents(const fs::path& path, const std::vector<Volume>& volumes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out.write("UBRZ", 4);
  io::write_u32(out, 1);
  io::write_u32(out, static_cast<std::uint32_t>(volumes.size()));
  for (const auto& v : volumes) {
    io::write_string(out, v.id);
    io::write_u32(out, static_cast<std::uint32_t>(v.latent.size()));
    io::write_f64_array(out, v.latent);
  }
  if (!out) throw data_error(path.string() + ": write failed");
}

LatentTable read_latents(const fs::path& path) {
  const std::string ctx = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error(ctx + ": cannot open latent sidecar");
  io::expect_magic(in, "UBRZ", ctx);
  if (io::read_u32(in, ctx) != 1) throw data_error(ctx + ": unsupported sidecar version");
  const auto count = io::read_u32(in, ctx);
  LatentTable table;
  for (std::uint32_t r = 0; r < count; ++r) {
    auto id = io::read_string(in, ctx, 4096);
    std::vector<double> z(io::read_u32(in, ctx));
    io::read_f64_array(in, z, ctx + " record " + id);
    table.emplace(std::move(id), std::move(z));
  }
  return table;
}

void write_labels(const fs::path& path, const std::vector<Volume>& volumes) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out << "volume_id,slice_index,class\n";
  for (const auto& v : volumes) {
    for (std::size_t i = 0; i < v.latent.size(); ++i) out << v.id << ',' << i << ',' << latent_band(v.latent[i]) << '\n';
  }
}

SliceLabels read_labels(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path.string() + ": cannot open labels file");
  SliceLabels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.starts_with("volume_id")) continue;
    std::istringstream fields(line);
    std::string id, index_text, class_text;
    if (!std::getline(fields, id, ',') || !std::getline(fields, index_text, ',') || !std::getline(fields, class_text)) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": expected volume_id,slice_index,class");
    }
    std::size_t index = 0;
    int cls = 0;
    try {
      index = std::stoul(index_text);
      cls = std::stoi(class_text);
    } catch (const std::exception&) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": non-numeric slice_index or class");
    }
    if (cls < 0 || cls > 2) throw data_error(path.string() + ":" + std::to_string(line_no) + ": class must be 0, 1 or 2");
    auto& row = labels[id];
    if (index != row.size()) {
      throw data_error(path.string() + ":" + std::to_string(line_no) + ": slice indices of " + id +
                       " must be listed in order from 0");
    }
    row.push_back(cls);
  }
  return labels;
}

Dataset::Dataset(std::vector<Volume> volumes) : volumes_(std::move(volumes)) {
  for (const auto& v : volumes_) {
    manifest_.push_back({v.id, "", v.slice_count(), v.anomaly});
  }
}

Dataset Dataset::open(const fs::path& dir) {
  Dataset ds;
  ds.manifest_ = read_manifest(dir / kManifestName);
  for (const auto& e : ds.manifest_) {
    if (!fs::exists(dir / e.path)) throw data_error("volume " + e.id + ": missing file " + (dir / e.path).string());
    Volume v = read_volume(dir / e.path, e.id);
    if (v.slice_count() != e.n_slices) {
      throw data_error("volume " + e.id + ": manifest lists " + std::to_string(e.n_slices) + " slices, file has " +
                       std::to_string(v.slice_count()));
    }
    v.anomaly = e.anomaly;
    ds.volumes_.push_back(std::move(v));
  }
  return ds;
}

const Volume& Dataset::find(const std::string& id) const { return volumes_[index_of(id)]; }

std::size_t Dataset::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < volumes_.size(); ++i) {
    if (volumes_[i].id == id) return i;
  }
  throw data_error("dataset has no volume '" + id + "'");
}

std::vector<AnomalyKind> default_anomaly_kinds() {
  return {AnomalyKind::shuffled, AnomalyKind::reversed_segment, AnomalyKind::duplicated_slices};
}

namespace {

std::string volume_id(std::size_t index) {
  std::ostringstream id;
  id << "vol";
  id.width(4);
  id.fill('0');
  id << index;
  return id.str();
}

}  // namespace

GeneratedDataset generate_volumes(std::size_t n_volumes, const PhantomSpec& spec, double anomaly_fraction,
                                  std::uint64_t seed, const std::vector<AnomalyKind>& kinds) {
  if (n_volumes == 0) throw usage_error("dataset needs at least one volume");
  if (!(anomaly_fraction >= 0.0 && anomaly_fraction <= 1.0)) throw usage_error("anomaly fraction must lie in [0,1]");
  if (anomaly_fraction > 0.0 && kinds.empty()) throw usage_error("anomaly fraction > 0 needs at least one anomaly kind");
  spec.validate();

  GeneratedDataset out;
  for (std::size_t i = 0; i < n_volumes; ++i) {
    const std::string id = volume_id(i);
    Rng volume_rng = make_rng(seed, "phantom.volume." + std::to_string(i));
    Volume vol = generate_volume(spec, volume_rng, id);

    Rng anomaly_rng = make_rng(seed, "phantom.anomaly." + std::to_string(i));
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(anomaly_rng) < anomaly_fraction) {
      std::uniform_int_distribution<std::size_t> pick(0, kinds.size() - 1);
      vol = inject_anomaly(vol, kinds[pick(anomaly_rng)], anomaly_rng);
    }
    out.manifest.push_back({id, "volumes/" + id + ".ubrv", vol.slice_count(), vol.anomaly});
    out.volumes.push_back(std::move(vol));
  }
  return out;
}

GeneratedDataset generate_dataset(const fs::path& dir, std::size_t n_volumes, const PhantomSpec& spec,
                                  double anomaly_fraction, std::uint64_t seed, const std::vector<AnomalyKind>& kinds) {
  auto out = generate_volumes(n_volumes, spec, anomaly_fraction, seed, kinds);
  std::error_code ec;
  fs::create_directories(dir / "volumes", ec);
  if (ec) throw data_error(dir.string() + ": cannot create dataset directory: " + ec.message());
  for (std::size_t i = 0; i < out.volumes.size(); ++i) write_volume(dir / out.manifest[i].path, out.volumes[i]);
  write_manifest(dir / kManifestName, out.manifest);
  write_latents(dir / kLatentsName, out.volumes);
  write_labels(dir / kLabelsName, out.volumes);
  return out;
}

}  // namespace ubr
