#include "ubr/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ubr/config.hpp"
#include "ubr/error.hpp"
#include "ubr/stats.hpp"

namespace ubr {

namespace {

constexpr std::size_t kInferenceChunk = 64;

std::vector<double> slice_positions(std::size_t n) {
  std::vector<double> x(n);
  std::iota(x.begin(), x.end(), 0.0);
  return x;
}

Tensor slice_batch(const Volume& volume, std::size_t begin, std::size_t end) {
  const std::size_t plane = volume.height * volume.width;
  Tensor batch({end - begin, 1, volume.height, volume.width});
  std::copy(volume.pixels.begin() + static_cast<std::ptrdiff_t>(begin * plane),
            volume.pixels.begin() + static_cast<std::ptrdiff_t>(end * plane), batch.data().begin());
  return batch;
}

}  // namespace

ScoreCurve make_curve(std::string volume_id, std::vector<double> scores) {
  ScoreCurve curve;
  curve.volume_id = std::move(volume_id);
  curve.scores = std::move(scores);
  const auto x = slice_positions(curve.scores.size());
  const auto r = stats::pearson(x, curve.scores);
  curve.pearson_r = r.r;
  curve.degenerate = r.degenerate;
  const auto fit = stats::least_squares(x, curve.scores);
  curve.slope = fit.slope;
  curve.intercept = fit.intercept;
  return curve;
}

ScoreCurve score_volume(const ModelParams& params, const Volume& volume) {
  if (volume.height != params.config.input_height || volume.width != params.config.input_width) {
    throw ShapeError("height", "volume " + volume.id + " has " + std::to_string(volume.height) + "x" +
                                   std::to_string(volume.width) + " slices, network expects " +
                                   std::to_string(params.config.input_height) + "x" +
                                   std::to_string(params.config.input_width));
  }
  const std::size_t n = volume.slice_count();
  std::vector<double> scores;
  scores.reserve(n);
  for (std::size_t begin = 0; begin < n; begin += kInferenceChunk) {
    const std::size_t end = std::min(n, begin + kInferenceChunk);
    const auto out = forward(params, slice_batch(volume, begin, end));
    scores.insert(scores.end(), out.scores.data().begin(), out.scores.data().end());
  }
  return make_curve(volume.id, std::move(scores));
}

Calibration calibrate_thresholds(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw usage_error("calibration needs one label per score (" + std::to_string(scores.size()) + " scores, " +
                      std::to_string(labels.size()) + " labels)");
  }
  std::size_t totals[3] = {0, 0, 0};
  for (int l : labels) {
    if (l < 0 || l > 2) throw data_error("calibration labels must be 0, 1 or 2, got " + std::to_string(l));
    ++totals[l];
  }
  for (int c = 0; c < 3; ++c) {
    if (totals[c] == 0) throw data_error("calibration slices lack class " + std::to_string(c));
  }

  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // prefix[c][k]: slices of class c among the k lowest scores
  std::vector<std::size_t> prefix[3];
  for (auto& p : prefix) p.assign(n + 1, 0);
  for (std::size_t k = 0; k < n; ++k) {
    for (int c = 0; c < 3; ++c) prefix[c][k + 1] = prefix[c][k] + (labels[order[k]] == c ? 1 : 0);
  }
  // cut k sits between sorted positions k-1 and k
  std::vector<std::size_t> cuts;
  for (std::size_t k = 1; k < n; ++k) {
    if (scores[order[k - 1]] < scores[order[k]]) cuts.push_back(k);
  }
  if (cuts.size() < 2) throw data_error("calibration needs at least three distinct scores");

  auto gap = [&](std::size_t k) { return scores[order[k]] - scores[order[k - 1]]; };
  auto midpoint = [&](std::size_t k) { return 0.5 * (scores[order[k - 1]] + scores[order[k]]); };

  std::size_t best_correct = 0;
  double best_gap = -1.0;
  std::size_t best_a = 0, best_b = 0;
  for (std::size_t a = 0; a < cuts.size(); ++a) {
    const std::size_t ka = cuts[a];
    const std::size_t below = prefix[0][ka];
    for (std::size_t b = a + 1; b < cuts.size(); ++b) {
      const std::size_t kb = cuts[b];
      const std::size_t correct = below + (prefix[1][kb] - prefix[1][ka]) + (totals[2] - prefix[2][kb]);
      const double gaps = gap(ka) + gap(kb);
      const double tol = 1e-9 * std::max(std::fabs(gaps), std::fabs(best_gap));
      if (correct > best_correct || (correct == best_correct && gaps > best_gap + tol)) {
        best_correct = correct;
        best_gap = gaps;
        best_a = ka;
        best_b = kb;
      }
    }
  }
  Calibration out;
  out.thresholds = {midpoint(best_a), midpoint(best_b)};
  out.accuracy = static_cast<double>(best_correct) / static_cast<double>(n);
  return out;
}

Calibration calibrate_thresholds(const std::vector<ScoreCurve>& curves, const std::vector<std::vector<int>>& labels) {
  if (curves.size() != labels.size()) throw usage_error("calibration needs one label row per scored volume");
  std::vector<double> scores;
  std::vector<int> flat;
  for (std::size_t v = 0; v < curves.size(); ++v) {
    if (curves[v].scores.size() != labels[v].size()) {
      throw data_error("volume " + curves[v].volume_id + ": " + std::to_string(labels[v].size()) + " labels for " +
                       std::to_string(curves[v].scores.size()) + " slices");
    }
    scores.insert(scores.end(), curves[v].scores.begin(), curves[v].scores.end());
    flat.insert(flat.end(), labels[v].begin(), labels[v].end());
  }
  return calibrate_thresholds(scores, flat);
}

std::vector<int> classify_slices(std::span<const double> scores, const Thresholds& thresholds) {
  if (!(thresholds.t1 < thresholds.t2) || !std::isfinite(thresholds.t1) || !std::isfinite(thresholds.t2)) {
    throw usage_error("thresholds must be finite with t1 < t2");
  }
  std::vector<int> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = scores[i] < thresholds.t1 ? 0 : (scores[i] < thresholds.t2 ? 1 : 2);
  }
  return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw usage_error("accuracy needs equally long label sequences");
  if (predicted.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

AnomalyReport assess_curve(const ScoreCurve& curve, double threshold_r) {
  AnomalyReport report;
  report.volume_id = curve.volume_id;
  report.pearson_r = curve.pearson_r;
  report.threshold_r = threshold_r;
  report.flagged = curve.pearson_r < threshold_r;
  report.degenerate = curve.degenerate;
  report.direction = curve.slope > 0.0 ? 1 : (curve.slope < 0.0 ? -1 : 0);
  return report;
}

std::vector<AnomalyReport> assess_curves(const std::vector<ScoreCurve>& curves, double threshold_r) {
  std::vector<AnomalyReport> reports;
  reports.reserve(curves.size());
  for (const auto& c : curves) reports.push_back(assess_curve(c, threshold_r));
  std::sort(reports.begin(), reports.end(), [](const AnomalyReport& a, const AnomalyReport& b) {
    if (a.pearson_r != b.pearson_r) return a.pearson_r < b.pearson_r;
    return a.volume_id < b.volume_id;
  });
  return reports;
}

std::vector<AnomalyReport> detect_anomalies(const ModelParams& params, const std::vector<Volume>& volumes,
                                            double threshold_r) {
  std::vector<ScoreCurve> curves;
  curves.reserve(volumes.size());
  for (const auto& v : volumes) curves.push_back(score_volume(params, v));
  return assess_curves(curves, threshold_r);
}

OrderingMetrics ordering_metrics(std::span<const double> scores, std::span<const double> latent) {
  if (scores.size() != latent.size()) {
    throw usage_error("ordering metrics need one latent per score (" + std::to_string(scores.size()) + " vs " +
                      std::to_string(latent.size()) + ")");
  }
  OrderingMetrics m;
  double agree = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    for (std::size_t j = i + 1; j < scores.size(); ++j) {
      if (latent[i] == latent[j]) continue;
      ++pairs;
      const double dz = latent[j] - latent[i];
      const double ds = scores[j] - scores[i];
      if (ds == 0.0) {
        agree += 0.5;
      } else if ((dz > 0.0) == (ds > 0.0)) {
        agree += 1.0;
      }
    }
  }
  m.pairwise_accuracy = pairs > 0 ? agree / static_cast<double>(pairs) : 0.0;
  m.spearman = stats::spearman(scores, latent).r;
  const double r = stats::pearson(latent, scores).r;
  m.r_squared = r * r;
  return m;
}

std::vector<HistogramBin> histogram(std::span<const double> scores, std::span<const int> labels, double bin_width) {
  if (!(bin_width > 0.0)) throw usage_error("histogram bin width must be > 0");
  if (scores.size() != labels.size()) throw usage_error("histogram needs one label per score");
  if (scores.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const auto first = static_cast<long long>(std::floor(*lo_it / bin_width));
  const auto last = static_cast<long long>(std::floor(*hi_it / bin_width));
  const auto bins = static_cast<std::size_t>(last - first + 1);

  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  std::vector<HistogramBin> out;
  for (int c : classes) {
    std::vector<std::size_t> counts(bins, 0);
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (labels[i] != c) continue;
      const auto b = static_cast<long long>(std::floor(scores[i] / bin_width)) - first;
      ++counts[static_cast<std::size_t>(std::clamp<long long>(b, 0, static_cast<long long>(bins) - 1))];
    }
    for (std::size_t b = 0; b < bins; ++b) {
      const double low = static_cast<double>(first + static_cast<long long>(b)) * bin_width;
      out.push_back({c, low, low + bin_width, counts[b]});
    }
  }
  return out;
}

Tensor extract_features(const ModelParams& params, const Volume& volume) {
  const std::size_t n = volume.slice_count();
  const std::size_t channels = params.config.conv6_channels;
  Tensor features({n, channels});
  for (std::size_t begin = 0; begin < n; begin += kInferenceChunk) {
    const std::size_t end = std::min(n, begin + kInferenceChunk);
    const auto out = forward(params, slice_batch(volume, begin, end));
    std::copy(out.pooled.data().begin(), out.pooled.data().end(),
              features.data().begin() + static_cast<std::ptrdiff_t>(begin * channels));
  }
  return features;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  return out;
}

}  // namespace

void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreCurve>& curves) {
  auto out = open_csv(path);
  out << "volume_id,slice_index,score\n";
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.scores.size(); ++i) out << c.volume_id << ',' << i << ',' << format_double(c.scores[i]) << '\n';
  }
}

void write_anomaly_csv(const std::filesystem::path& path, const std::vector<AnomalyReport>& reports) {
  auto out = open_csv(path);
  out << "volume_id,pearson_r,flagged,slope_sign\n";
  for (const auto& r : reports) {
    out << r.volume_id << ',' << format_double(r.pearson_r) << ',' << (r.flagged ? 1 : 0) << ',' << r.direction << '\n';
  }
}

void write_histogram_csv(const std::filesystem::path& path, const std::vector<HistogramBin>& bins) {
  auto out = open_csv(path);
  out << "class,bin_low,bin_high,count\n";
  for (const auto& b : bins) out << b.label << ',' << format_double(b.low) << ',' << format_double(b.high) << ',' << b.count << '\n';
}

void write_thresholds(const std::filesystem::path& path, const Calibration& calibration) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error(path.string() + ": cannot open for writing");
  out << "[thresholds]\nt1 = " << format_double(calibration.thresholds.t1)
      << "\nt2 = " << format_double(calibration.thresholds.t2)
      << "\ncalibration_accuracy = " << format_double(calibration.accuracy) << '\n';
}

Thresholds read_thresholds(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error(path.string() + ": cannot open thresholds file");
  Thresholds t;
  bool have_t1 = false, have_t2 = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      if (key == "t1") {
        t.t1 = std::stod(value);
        have_t1 = true;
      } else if (key == "t2") {
        t.t2 = std::stod(value);
        have_t2 = true;
      }
    } catch (const std::exception&) {
      throw data_error(path.string() + ": field " + key + " is not a number");
    }
  }
  if (!have_t1) throw data_error(path.string() + ": missing field t1");
  if (!have_t2) throw data_error(path.string() + ": missing field t2");
  if (!(t.t1 < t.t2)) throw data_error(path.string() + ": thresholds need t1 < t2");
  return t;
}

}  // namespace ubr
