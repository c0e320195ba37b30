#pragma once

#include <array>
#include <cstddef>
#include <ostream>
#include <span>
#include <vector>

namespace tsda {

/// Fraction of predictions equal to the truth.
double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> truths);

struct PRPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

/// Precision-recall points, one per distinct score, by descending threshold.
/// A point at threshold t counts every sample scoring >= t as a detection.
struct PRCurve {
  std::vector<PRPoint> points;
  std::size_t positives = 0;
  std::size_t total = 0;
};

PRCurve pr_curve(std::span<const double> scores, std::span<const bool> truths);

/// Trapezoidal area under precision(recall). Points with zero recall are
/// skipped and the curve is anchored at recall 0 with the precision of the
/// first point of positive recall.
double average_precision(const PRCurve& curve);

/// threshold,precision,recall rows with a header line.
void write_pr_csv(const PRCurve& curve, std::ostream& out);

using Point2 = std::array<double, 2>;
using LandmarkSet = std::vector<Point2>;

struct PcpScore {
  std::vector<double> per_landmark;
  double mean = 0.0;
};

/// Per-landmark fraction of predictions within `radius` (inclusive) of the
/// ground truth, and the mean over landmarks.
PcpScore pcp_score(std::span<const LandmarkSet> predicted, std::span<const LandmarkSet> truth,
                   double radius = 2.0);

}  // namespace tsda
