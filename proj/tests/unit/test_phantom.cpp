#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

#include "ubr/dataset.hpp"
#include "ubr/error.hpp"
#include "ubr/stats.hpp"

using namespace ubr;
namespace fs = std::filesystem;

namespace {

PhantomSpec quiet_spec() {
  PhantomSpec s;
  s.noise_sigma = 0.0;
  return s;
}

double mean_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

std::vector<double> index_axis(std::size_t n) {
  std::vector<double> x(n);
  std::iota(x.begin(), x.end(), 0.0);
  return x;
}

fs::path temp_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("ubr_unit_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("render is deterministic without noise") {
  Rng a(1), b(2);
  const auto s = quiet_spec();
  const Placement p;
  CHECK(render_slice(0.37, s, p, 0.0, a).pixels == render_slice(0.37, s, p, 0.0, b).pixels);
  CHECK_THROWS(render_slice(1.5, s, p, 0.0, a));
}

TEST_CASE("render is clipped to the unit interval") {
  Rng rng(3);
  PhantomSpec s;
  s.noise_sigma = 0.5;
  for (double z : {0.0, 0.5, 1.0}) {
    const auto r = render_slice(z, s, rng);
    CHECK(*std::min_element(r.pixels.begin(), r.pixels.end()) >= 0.0);
    CHECK(*std::max_element(r.pixels.begin(), r.pixels.end()) <= 1.0);
  }
}

TEST_CASE("structural distance grows with latent offset") {
  Rng rng(4);
  const auto s = quiet_spec();
  const Placement p;
  for (double z0 : {0.0, 0.2, 0.45, 0.7}) {
    const auto base = render_slice(z0, s, p, 0.0, rng).pixels;
    double prev = 0.0;
    for (double d = 0.01; d <= 0.3 + 1e-9 && z0 + d <= 1.0; d += 0.01) {
      const double now = mean_abs_diff(base, render_slice(z0 + d, s, p, 0.0, rng).pixels);
      INFO("z0 " << z0 << " delta " << d);
      CHECK(now > prev);
      prev = now;
    }
  }
}

TEST_CASE("render is injective on a 1/256 grid") {
  Rng rng(5);
  const auto s = quiet_spec();
  const Placement p;
  std::vector<std::vector<double>> renders;
  for (int i = 0; i <= 256; ++i) renders.push_back(render_slice(i / 256.0, s, p, 0.0, rng).pixels);
  for (std::size_t i = 1; i < renders.size(); ++i) CHECK(renders[i] != renders[i - 1]);
}

TEST_CASE("pixels are non-decreasing in z per placement") {
  Rng rng(6);
  const auto s = quiet_spec();
  const Placement p{1.3, -0.7, 1.05};
  auto prev = render_slice(0.0, s, p, 0.0, rng).pixels;
  std::size_t decreases = 0;
  for (int i = 1; i <= 100; ++i) {
    const auto cur = render_slice(i / 100.0, s, p, 0.0, rng).pixels;
    for (std::size_t k = 0; k < cur.size(); ++k) decreases += cur[k] < prev[k] - 1e-12 ? 1 : 0;
    prev = cur;
  }
  CHECK(decreases == 0);
}

TEST_CASE("shifted renders share the shape census") {
  Rng rng(7);
  const auto s = quiet_spec();
  const auto a = render_slice(0.4, s, Placement{0, 0, 1}, 0.0, rng);
  const auto b = render_slice(0.4, s, Placement{3, -2, 1}, 0.0, rng);
  CHECK(a.pixels != b.pixels);
  CHECK(a.structure_count == b.structure_count);
}

TEST_CASE("volume latent layout") {
  PhantomSpec s;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    const auto v = generate_volume(s, rng, "v");
    const std::size_t n = v.slice_count();
    REQUIRE(v.latent.size() == n);
    CHECK(n >= s.min_slices);
    CHECK(n <= s.max_slices);
    CHECK(v.latent.front() >= 0.0);
    CHECK(v.latent.back() <= 1.0);
    const double span = v.latent.back() - v.latent.front();
    CHECK(span > 0.0);
    for (std::size_t i = 1; i < n; ++i) CHECK(v.latent[i] - v.latent[i - 1] == doctest::Approx(v.spacing).epsilon(1e-9));
    CHECK(stats::pearson(index_axis(n), v.latent).r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*std::min_element(v.pixels.begin(), v.pixels.end()) >= 0.0);
    CHECK(*std::max_element(v.pixels.begin(), v.pixels.end()) <= 1.0);
  }
  Rng a(11), b(11);
  const auto va = generate_volume(s, a, "x"), vb = generate_volume(s, b, "x");
  CHECK(va.pixels == vb.pixels);
  CHECK(va.latent == vb.latent);
}

TEST_CASE("100 volumes cover the body axis") {
  const auto gen = generate_volumes(100, PhantomSpec{}, 0.0, 17, default_anomaly_kinds());
  std::vector<std::pair<double, double>> iv;
  for (const auto& v : gen.volumes) iv.push_back({v.latent.front(), v.latent.back()});
  std::sort(iv.begin(), iv.end());
  double covered = 0, lo = iv[0].first, hi = iv[0].second;
  for (const auto& [a, b] : iv) {
    if (a > hi) {
      covered += hi - lo;
      lo = a;
    }
    hi = std::max(hi, b);
  }
  covered += hi - lo;
  CHECK(covered >= 0.99);
}

TEST_CASE("anomaly injection") {
  PhantomSpec s;
  s.min_slices = 60;
  s.max_slices = 60;
  Rng rng(8);
  const auto v = generate_volume(s, rng, "v");

  const auto rev = inject_anomaly(v, AnomalySpec{AnomalyKind::reversed_segment, 0, 60, 1.0}, rng);
  for (std::size_t i = 1; i < 60; ++i) CHECK(rev.latent[i] < rev.latent[i - 1]);
  CHECK(rev.anomaly == AnomalyKind::reversed_segment);

  const auto dup = inject_anomaly(v, AnomalySpec{AnomalyKind::duplicated_slices, 10, 5, 1.0}, rng);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(dup.latent[15 + k] == v.latent[10 + k]);
    CHECK(std::equal(dup.slice(15 + k).begin(), dup.slice(15 + k).end(), v.slice(10 + k).begin()));
  }

  const auto cor = inject_anomaly(v, AnomalySpec{AnomalyKind::corrupted_slices, 5, 8, 0.9}, rng);
  CHECK(cor.latent == v.latent);
  CHECK_FALSE(std::equal(cor.slice(6).begin(), cor.slice(6).end(), v.slice(6).begin()));
  CHECK(std::equal(cor.slice(20).begin(), cor.slice(20).end(), v.slice(20).begin()));

  CHECK_THROWS(inject_anomaly(v, AnomalySpec{AnomalyKind::reversed_segment, 50, 20, 1.0}, rng));
  CHECK_THROWS(inject_anomaly(v, AnomalySpec{AnomalyKind::duplicated_slices, 40, 15, 1.0}, rng));

  for (auto kind : {AnomalyKind::reversed_segment, AnomalyKind::duplicated_slices, AnomalyKind::corrupted_slices}) {
    for (std::size_t n : {std::size_t{4}, std::size_t{40}, std::size_t{200}}) {
      for (int t = 0; t < 50; ++t) {
        const auto a = random_anomaly(kind, n, rng);
        const std::size_t extent = kind == AnomalyKind::duplicated_slices ? 2 * a.length : a.length;
        CHECK(a.begin + extent <= n);
      }
    }
  }
  for (int t = 0; t < 200; ++t) {
    const auto a = random_anomaly(AnomalyKind::reversed_segment, 100, rng);
    CHECK(a.length >= 30);
    CHECK(a.length <= 60);
    const auto d = random_anomaly(AnomalyKind::duplicated_slices, 100, rng);
    CHECK(d.length >= 20);
    CHECK(d.length <= 30);
  }
}

TEST_CASE("shuffled latents decorrelate from slice index") {
  Rng rng(9);
  std::size_t weak = 0;
  const int trials = 2000;
  for (int t = 0; t < trials; ++t) {
    Volume v;
    v.id = "s";
    v.height = v.width = 1;
    v.pixels.assign(40, 0.0);
    v.latent.resize(40);
    for (std::size_t i = 0; i < 40; ++i) v.latent[i] = static_cast<double>(i) / 39.0;
    const auto s = inject_anomaly(v, AnomalyKind::shuffled, rng);
    weak += std::fabs(stats::pearson(index_axis(40), s.latent).r) < 0.5 ? 1 : 0;
  }
  CHECK(static_cast<double>(weak) / trials > 0.99);
}

TEST_CASE("anomaly kind names") {
  for (auto k : {AnomalyKind::none, AnomalyKind::reversed_segment, AnomalyKind::duplicated_slices, AnomalyKind::shuffled,
                 AnomalyKind::corrupted_slices}) {
    CHECK(anomaly_kind_from_string(to_string(k)) == k);
  }
  CHECK_THROWS(anomaly_kind_from_string("sideways"));
}

TEST_CASE("latent bands") {
  CHECK(latent_band(0.0) == 0);
  CHECK(latent_band(0.3333) == 0);
  CHECK(latent_band(1.0 / 3.0) == 1);
  CHECK(latent_band(0.6666) == 1);
  CHECK(latent_band(2.0 / 3.0) == 2);
  CHECK(latent_band(1.0) == 2);
}

TEST_CASE("dataset on disk") {
  PhantomSpec s;
  s.min_slices = 20;
  s.max_slices = 40;
  const auto dir = temp_dir("dataset");
  const auto gen = generate_dataset(dir, 12, s, 0.5, 21);
  const auto ds = Dataset::open(dir);
  CHECK(ds.size() == 12);
  CHECK(read_manifest(dir / kManifestName).size() == 12);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(ds[i].pixels == gen.volumes[i].pixels);
    CHECK(ds[i].latent.empty());
    CHECK(ds[i].id == gen.volumes[i].id);
    CHECK(ds.manifest()[i].anomaly == gen.volumes[i].anomaly);
  }
  const auto latents = read_latents(dir / kLatentsName);
  CHECK(latents.at(gen.volumes[3].id) == gen.volumes[3].latent);
  const auto labels = read_labels(dir / kLabelsName);
  CHECK(labels.at(gen.volumes[0].id)[0] == latent_band(gen.volumes[0].latent[0]));

  // volume containers carry no sidecar section
  for (const auto& e : ds.manifest()) {
    const auto bytes = slurp(dir / e.path);
    CHECK(bytes.find("UBRZ") == std::string::npos);
    CHECK(bytes.size() == 4 + 4 * 4 + 8 + 8 * e.n_slices * 32 * 32);
  }

  const auto again = temp_dir("dataset_again");
  generate_dataset(again, 12, s, 0.5, 21);
  for (const auto& name : {kManifestName, kLatentsName, kLabelsName}) CHECK(slurp(dir / name) == slurp(again / name));
  for (const auto& e : ds.manifest()) CHECK(slurp(dir / e.path) == slurp(again / e.path));

  fs::remove(dir / ds.manifest()[2].path);
  try {
    Dataset::open(dir);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(ds.manifest()[2].id) != std::string::npos);
  }
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST_CASE("anomaly fraction") {
  PhantomSpec s;
  s.min_slices = s.max_slices = 40;
  s.image_height = s.image_width = 8;
  const auto none = generate_volumes(50, s, 0.0, 1, default_anomaly_kinds());
  for (const auto& e : none.manifest) CHECK(e.anomaly == AnomalyKind::none);
  const auto all = generate_volumes(30, s, 1.0, 1, default_anomaly_kinds());
  for (const auto& e : all.manifest) CHECK(e.anomaly != AnomalyKind::none);
  const auto some = generate_volumes(200, s, 0.1, 5, default_anomaly_kinds());
  const auto count = std::count_if(some.manifest.begin(), some.manifest.end(),
                                   [](const ManifestEntry& e) { return e.anomaly != AnomalyKind::none; });
  CHECK(std::fabs(static_cast<double>(count) - 20.0) <= 3.0 * std::sqrt(200 * 0.1 * 0.9));
}
