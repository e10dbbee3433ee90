#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "ubr/error.hpp"
#include "ubr/sampler.hpp"

using namespace ubr;
using diff::Tensor;

namespace {

Volume ramp_volume(const std::string& id, std::size_t n, std::size_t hw = 2) {
  Volume v;
  v.id = id;
  v.height = v.width = hw;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < hw * hw; ++p) v.pixels.push_back(static_cast<double>(i) + 0.01 * static_cast<double>(p));
  return v;
}

// Upper tail of the chi-squared distribution via the regularized gamma series.
double chi_squared_sf(double x, double dof) {
  const double a = dof / 2.0, z = x / 2.0;
  if (z <= 0) return 1.0;
  if (z < a + 1) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 500; ++n) {
      term *= z / (a + n);
      sum += term;
    }
    return 1.0 - sum * std::exp(-z + a * std::log(z) - std::lgamma(a));
  }
  double b = z + 1 - a, c = 1e300, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    c = b + an / c;
    d = 1.0 / d;
    h *= d * c;
  }
  return std::exp(-z + a * std::log(z) - std::lgamma(a)) * h;
}

}  // namespace

TEST_CASE("feasible interval") {
  CHECK(max_feasible_interval(8, 8, 0) == 1);
  CHECK(max_feasible_interval(30, 8, 0) == 4);
  CHECK(max_feasible_interval(30, 8, 2) == 2);
  CHECK(max_feasible_interval(100, 2, 0) == 99);
}

TEST_CASE("n equal to m forces k=1 and j=0") {
  const Dataset ds({ramp_volume("a", 8)});
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const auto e = sample_entries(ds, {1, 8, 0}, rng);
    for (std::size_t j = 0; j < 8; ++j) CHECK(e[0][j].slice == j);
  }
}

TEST_CASE("enumeration covers exactly the feasible set") {
  const Dataset ds({ramp_volume("a", 30)});
  Rng rng(2);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (int t = 0; t < 100000; ++t) {
    const auto e = sample_entries(ds, {1, 8, 0}, rng);
    seen.insert({e[0][1].slice - e[0][0].slice, e[0][0].slice});
  }
  std::set<std::pair<std::size_t, std::size_t>> feasible;
  for (std::size_t k = 1; k <= 4; ++k)
    for (std::size_t j = 0; j <= 29 - 7 * k; ++j) feasible.insert({k, j});
  CHECK(seen == feasible);
}

TEST_CASE("every group is equidistant and in bounds") {
  std::vector<Volume> vols;
  for (std::size_t i = 0; i < 6; ++i) vols.push_back(ramp_volume("v" + std::to_string(i), 8 + 13 * i));
  vols.push_back(ramp_volume("short", 5));
  const Dataset ds(vols);
  Rng rng(3);
  std::size_t violations = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto e = sample_entries(ds, {6, 8, 0}, rng);
    for (const auto& row : e) {
      const std::size_t n = ds.find(row[0].volume_id).slice_count();
      const std::size_t k = row[1].slice - row[0].slice;
      if (k < 1 || row.back().slice >= n || row[0].volume_id == "short") ++violations;
      for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j].slice != row[j - 1].slice + k || row[j].volume_id != row[0].volume_id) ++violations;
      }
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("volume choice is uniform over eligible volumes") {
  std::vector<Volume> vols;
  for (std::size_t i = 0; i < 5; ++i) vols.push_back(ramp_volume("v" + std::to_string(i), 20));
  vols.push_back(ramp_volume("short", 4));
  const Dataset ds(vols);
  Rng rng(4);
  std::map<std::string, std::size_t> counts;
  const std::size_t draws = 100000;
  for (std::size_t t = 0; t < draws; ++t) counts[sample_entries(ds, {1, 8, 0}, rng)[0][0].volume_id]++;
  CHECK(counts.count("short") == 0);
  const double p = 0.2, expect = draws * p, sigma = std::sqrt(draws * p * (1 - p));
  for (const auto& [id, c] : counts) {
    INFO(id);
    CHECK(std::fabs(static_cast<double>(c) - expect) < 3 * sigma);
  }
}

TEST_CASE("interval marginal is uniform on the feasible range") {
  const Dataset ds({ramp_volume("a", 50)});
  Rng rng(5);
  const std::size_t kmax = max_feasible_interval(50, 8, 0);
  CHECK(kmax == 7);
  std::vector<double> counts(kmax, 0.0);
  const std::size_t draws = 70000;
  for (std::size_t t = 0; t < draws; ++t) {
    const auto e = sample_entries(ds, {1, 8, 0}, rng);
    counts[e[0][1].slice - e[0][0].slice - 1] += 1;
  }
  double chi2 = 0;
  const double expect = static_cast<double>(draws) / kmax;
  for (double c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi_squared_sf(chi2, kmax - 1) > 0.01);
}

TEST_CASE("chi-squared tail helper") {
  CHECK(chi_squared_sf(3.841458820694124, 1) == doctest::Approx(0.05).epsilon(1e-6));
  CHECK(chi_squared_sf(16.811893829770927, 6) == doctest::Approx(0.01).epsilon(1e-6));
}

TEST_CASE("same rng state gives the same group") {
  const Dataset ds({ramp_volume("a", 40), ramp_volume("b", 60)});
  Rng a(9), b(9);
  CHECK(sample_group(ds, {3, 8, 0}, a) == sample_group(ds, {3, 8, 0}, b));
}

TEST_CASE("assemble pixels") {
  const Dataset ds({ramp_volume("a", 12)});
  std::vector<std::vector<SliceRef>> rows(1);
  for (std::size_t j = 0; j < 4; ++j) rows[0].push_back({"a", j});
  const Tensor px = assemble_pixels(ds, rows);
  CHECK(px.shape() == Tensor::Shape{4, 1, 2, 2});
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t p = 0; p < 4; ++p) CHECK(px[j * 4 + p] == ds[0].slice(j)[p]);

  std::swap(rows[0][1], rows[0][2]);
  CHECK_THROWS(assemble_pixels(ds, rows));
  rows[0] = {{"missing", 0}, {"missing", 1}};
  try {
    assemble_pixels(ds, rows);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing") != std::string::npos);
  }
}

TEST_CASE("no eligible volume") {
  const Dataset ds({ramp_volume("a", 5)});
  Rng rng(1);
  try {
    sample_entries(ds, {1, 8, 0}, rng);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find('8') != std::string::npos);
    CHECK(msg.find('5') != std::string::npos);
  }
}
