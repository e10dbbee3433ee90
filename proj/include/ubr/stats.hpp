#pragma once

#include <span>
#include <vector>

namespace ubr::stats {

double mean(std::span<const double> x);
double median(std::vector<double> x);

struct Correlation {
  double r = 0.0;
  bool degenerate = false;  // one of the inputs has zero variance; r is reported as 0
};

Correlation pearson(std::span<const double> x, std::span<const double> y);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares y ~ slope * x + intercept.
LinearFit least_squares(std::span<const double> x, std::span<const double> y);

/// 1-based ranks with ties sharing their average rank.
std::vector<double> average_ranks(std::span<const double> x);

Correlation spearman(std::span<const double> x, std::span<const double> y);

}  // namespace ubr::stats
