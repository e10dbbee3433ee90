#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ubr/dataset.hpp"
#include "ubr/network.hpp"

namespace ubr {

/// Per-slice scores of one volume against slice index.
struct ScoreCurve {
  std::string volume_id;
  std::vector<double> scores;  // scores[i] belongs to slice i
  double pearson_r = 0.0;      // r(slice index, score); 0 when degenerate
  bool degenerate = false;     // zero score variance
  double slope = 0.0;
  double intercept = 0.0;
};

/// Fits r, slope and intercept to an existing score sequence.
ScoreCurve make_curve(std::string volume_id, std::vector<double> scores);

ScoreCurve score_volume(const ModelParams& params, const Volume& volume);

/// Cut points of the three zones: [.., t1) -> 0, [t1, t2) -> 1, [t2, ..) -> 2.
struct Thresholds {
  double t1 = 0.0;
  double t2 = 0.0;
};

struct Calibration {
  Thresholds thresholds;
  double accuracy = 0.0;
};

/// Exhaustive scan over midpoints between adjacent distinct sorted scores.
/// Among equally accurate pairs the one sitting in the widest gaps wins.
Calibration calibrate_thresholds(std::span<const double> scores, std::span<const int> labels);
Calibration calibrate_thresholds(const std::vector<ScoreCurve>& curves, const std::vector<std::vector<int>>& labels);

std::vector<int> classify_slices(std::span<const double> scores, const Thresholds& thresholds);
double accuracy(std::span<const int> predicted, std::span<const int> truth);

struct AnomalyReport {
  std::string volume_id;
  double pearson_r = 0.0;
  double threshold_r = 0.99;
  bool flagged = false;
  bool degenerate = false;
  int direction = 0;  // sign of the fitted slope
};

inline constexpr double kDefaultRThreshold = 0.99;

AnomalyReport assess_curve(const ScoreCurve& curve, double threshold_r = kDefaultRThreshold);

/// One report per volume, sorted ascending by r (then by id).
std::vector<AnomalyReport> detect_anomalies(const ModelParams& params, const std::vector<Volume>& volumes,
                                            double threshold_r = kDefaultRThreshold);
std::vector<AnomalyReport> assess_curves(const std::vector<ScoreCurve>& curves, double threshold_r = kDefaultRThreshold);

struct OrderingMetrics {
  double pairwise_accuracy = 0.0;  // latent-tied pairs skipped, score ties count half
  double spearman = 0.0;
  double r_squared = 0.0;  // of the linear fit score ~ latent
};

OrderingMetrics ordering_metrics(std::span<const double> scores, std::span<const double> latent);

struct HistogramBin {
  int label = 0;
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

/// Bins aligned across classes on multiples of `bin_width`; every class gets
/// the same bin range, including empty bins.
std::vector<HistogramBin> histogram(std::span<const double> scores, std::span<const int> labels, double bin_width);

/// Pooled post-Conv6 features, [n_slices, conv6_channels].
Tensor extract_features(const ModelParams& params, const Volume& volume);

// CSV exports.
void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreCurve>& curves);
void write_anomaly_csv(const std::filesystem::path& path, const std::vector<AnomalyReport>& reports);
void write_histogram_csv(const std::filesystem::path& path, const std::vector<HistogramBin>& bins);

void write_thresholds(const std::filesystem::path& path, const Calibration& calibration);
Thresholds read_thresholds(const std::filesystem::path& path);

}  // namespace ubr
