#pragma once

// Calibration and selective-prediction metrics over (confidence, correctness)
// pairs. Means use pairwise summation so results do not depend on how a
// caller chunks the input.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace basecal {

struct EvalPair {
  double confidence = 0.0;
  int correct = 0;
};

inline constexpr std::size_t kDefaultBins = 10;

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::optional<double> confidence;  // empty when count == 0
  std::optional<double> accuracy;
};

struct ReliabilityBins {
  std::size_t total = 0;
  std::vector<ReliabilityBin> bins;
};

struct SelectivePoint {
  double threshold = 0.0;
  double coverage = 0.0;
  std::optional<double> accuracy;  // empty when nothing is retained
};

double pairwise_sum(std::span<const double> values);

// Bin m (0-based) covers [m/M, (m+1)/M); the last bin also holds 1.0.
std::size_t bin_index(double confidence, std::size_t bins);

// Throws ValidationError on an empty list, confidences outside [0,1] or
// labels other than 0/1, and bins == 0.
void check_pairs(std::span<const EvalPair> pairs);

ReliabilityBins reliability(std::span<const EvalPair> pairs, std::size_t bins = kDefaultBins);
// Weighted |acc - conf| over the bins; empty bins contribute zero.
double ece_from_bins(const ReliabilityBins& bins);
double ece(std::span<const EvalPair> pairs, std::size_t bins = kDefaultBins);
double brier(std::span<const EvalPair> pairs);
// Positive when out-of-domain calibration is better than in-domain.
double delta_ece(double ece_id, double ece_ood);

// Coverage counts confidences >= threshold. Thresholds must be ascending.
std::vector<SelectivePoint> selective_curve(std::span<const EvalPair> pairs, std::span<const double> thresholds);

// start, start + step, ..., up to stop inclusive (with a small tolerance),
// each rounded to 12 decimals.
std::vector<double> threshold_range(double start, double stop, double step);

}  // namespace basecal
