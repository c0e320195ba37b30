#include "tsda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "tsda/data.hpp"

namespace tsda {

double accuracy(std::span<const std::size_t> predictions, std::span<const std::size_t> truths) {
  if (predictions.size() != truths.size()) {
    throw std::invalid_argument("accuracy: " + std::to_string(predictions.size()) +
                                " predictions for " + std::to_string(truths.size()) + " truths");
  }
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) correct += predictions[i] == truths[i];
  return static_cast<double>(correct) / static_cast<double>(truths.size());
}

PRCurve pr_curve(std::span<const double> scores, std::span<const bool> truths) {
  if (scores.size() != truths.size()) throw std::invalid_argument("pr_curve: score/truth length mismatch");
  PRCurve curve;
  curve.total = truths.size();
  curve.positives = static_cast<std::size_t>(std::count(truths.begin(), truths.end(), true));
  if (curve.positives == 0) throw std::invalid_argument("pr_curve: no positive examples");
  for (double s : scores) {
    if (std::isnan(s)) throw std::invalid_argument("pr_curve: NaN score");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t tp = 0, detections = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double threshold = scores[order[k]];
    while (k < order.size() && scores[order[k]] == threshold) {
      tp += truths[order[k]];
      ++detections;
      ++k;
    }
    curve.points.push_back({threshold, static_cast<double>(tp) / static_cast<double>(curve.positives),
                            static_cast<double>(tp) / static_cast<double>(detections)});
  }
  return curve;
}

double average_precision(const PRCurve& curve) {
  double area = 0.0;
  bool anchored = false;
  double prev_r = 0.0, prev_p = 0.0;
  for (const auto& pt : curve.points) {
    if (pt.recall <= 0.0) continue;
    if (!anchored) {
      prev_p = pt.precision;
      anchored = true;
    }
    area += 0.5 * (pt.recall - prev_r) * (pt.precision + prev_p);
    prev_r = pt.recall;
    prev_p = pt.precision;
  }
  return area;
}

void write_pr_csv(const PRCurve& curve, std::ostream& out) {
  out << "threshold,precision,recall\n";
  for (const auto& pt : curve.points) {
    out << format_double(pt.threshold) << ',' << format_double(pt.precision) << ','
        << format_double(pt.recall) << '\n';
  }
}

PcpScore pcp_score(std::span<const LandmarkSet> predicted, std::span<const LandmarkSet> truth,
                   double radius) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("pcp_score: " + std::to_string(predicted.size()) +
                                " predicted sets for " + std::to_string(truth.size()) + " truths");
  }
  if (predicted.empty()) throw std::invalid_argument("pcp_score: empty input");
  if (!(radius > 0.0)) throw std::invalid_argument("pcp_score: radius must be positive");
  const std::size_t n_landmarks = truth.front().size();
  if (n_landmarks == 0) throw std::invalid_argument("pcp_score: no landmarks");

  std::vector<std::size_t> hits(n_landmarks, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i].size() != n_landmarks || truth[i].size() != n_landmarks) {
      throw std::invalid_argument("pcp_score: sample " + std::to_string(i) + " has a different landmark count");
    }
    for (std::size_t l = 0; l < n_landmarks; ++l) {
      const double dx = predicted[i][l][0] - truth[i][l][0];
      const double dy = predicted[i][l][1] - truth[i][l][1];
      if (dx * dx + dy * dy <= radius * radius) ++hits[l];
    }
  }
  PcpScore score;
  for (std::size_t h : hits) score.per_landmark.push_back(static_cast<double>(h) / static_cast<double>(truth.size()));
  score.mean = std::accumulate(score.per_landmark.begin(), score.per_landmark.end(), 0.0) /
               static_cast<double>(n_landmarks);
  return score;
}

}  // namespace tsda
