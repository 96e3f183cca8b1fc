#include "basecal/metrics.hpp"

#include <cmath>
#include <string>

#include "basecal/errors.hpp"

namespace basecal {

double pairwise_sum(std::span<const double> values) {
  if (values.size() <= 8) {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  const std::size_t half = values.size() / 2;
  return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

std::size_t bin_index(double confidence, std::size_t bins) {
  const double m = static_cast<double>(bins);
  auto idx = static_cast<std::size_t>(std::floor(confidence * m));
  if (idx >= bins) idx = bins - 1;
  // Align with the edge comparison lo = k / M exactly.
  while (idx > 0 && confidence < static_cast<double>(idx) / m) --idx;
  while (idx + 1 < bins && confidence >= static_cast<double>(idx + 1) / m) ++idx;
  return idx;
}

void check_pairs(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw ValidationError("metric over an empty pair list");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (!(p.confidence >= 0.0 && p.confidence <= 1.0)) {
      throw ValidationError("pair " + std::to_string(i) + ": confidence " + std::to_string(p.confidence) +
                            " outside [0, 1]");
    }
    if (p.correct != 0 && p.correct != 1) {
      throw ValidationError("pair " + std::to_string(i) + ": correctness must be 0 or 1");
    }
  }
}

ReliabilityBins reliability(std::span<const EvalPair> pairs, std::size_t bins) {
  check_pairs(pairs);
  if (bins == 0) throw ValidationError("bin count must be >= 1");
  std::vector<std::vector<double>> conf(bins), acc(bins);
  for (const auto& p : pairs) {
    const auto b = bin_index(p.confidence, bins);
    conf[b].push_back(p.confidence);
    acc[b].push_back(static_cast<double>(p.correct));
  }
  ReliabilityBins out;
  out.total = pairs.size();
  out.bins.resize(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    auto& bin = out.bins[b];
    bin.lo = static_cast<double>(b) / static_cast<double>(bins);
    bin.hi = static_cast<double>(b + 1) / static_cast<double>(bins);
    bin.count = conf[b].size();
    if (bin.count == 0) continue;
    const double n = static_cast<double>(bin.count);
    bin.confidence = pairwise_sum(conf[b]) / n;
    bin.accuracy = pairwise_sum(acc[b]) / n;
  }
  return out;
}

double ece_from_bins(const ReliabilityBins& bins) {
  std::vector<double> terms;
  terms.reserve(bins.bins.size());
  const double n = static_cast<double>(bins.total);
  for (const auto& b : bins.bins) {
    if (b.count == 0) {
      terms.push_back(0.0);
      continue;
    }
    terms.push_back(static_cast<double>(b.count) / n * std::abs(*b.accuracy - *b.confidence));
  }
  return pairwise_sum(terms);
}

double ece(std::span<const EvalPair> pairs, std::size_t bins) { return ece_from_bins(reliability(pairs, bins)); }

double brier(std::span<const EvalPair> pairs) {
  check_pairs(pairs);
  std::vector<double> sq(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const double e = pairs[i].confidence - pairs[i].correct;
    sq[i] = e * e;
  }
  return pairwise_sum(sq) / static_cast<double>(pairs.size());
}

double delta_ece(double ece_id, double ece_ood) { return ece_id - ece_ood; }

std::vector<SelectivePoint> selective_curve(std::span<const EvalPair> pairs, std::span<const double> thresholds) {
  check_pairs(pairs);
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] >= 0.0 && thresholds[i] <= 1.0)) throw ValidationError("threshold outside [0, 1]");
    if (i > 0 && thresholds[i] < thresholds[i - 1]) throw ValidationError("thresholds must be ascending");
  }
  std::vector<SelectivePoint> out;
  out.reserve(thresholds.size());
  std::vector<double> kept;
  for (double t : thresholds) {
    kept.clear();
    for (const auto& p : pairs)
      if (p.confidence >= t) kept.push_back(static_cast<double>(p.correct));
    SelectivePoint pt;
    pt.threshold = t;
    pt.coverage = static_cast<double>(kept.size()) / static_cast<double>(pairs.size());
    if (!kept.empty()) pt.accuracy = pairwise_sum(kept) / static_cast<double>(kept.size());
    out.push_back(pt);
  }
  return out;
}

std::vector<double> threshold_range(double start, double stop, double step) {
  if (!(step > 0.0) || !(stop >= start)) throw ValidationError("threshold range needs step > 0 and stop >= start");
  const auto count = static_cast<std::size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(std::round((start + static_cast<double>(i) * step) * 1e12) / 1e12);
  }
  return out;
}

}  // namespace basecal
