#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "mnemo/types.hpp"

namespace mnemo {

struct Agreement {
  double agreement = 0.0;
  std::size_t sample_size = 0;
};

/// Fraction of positions where both labels exist, neither is TIE, and they match.
/// nullopt when no position survives the restriction. ArgumentError on a length mismatch.
std::optional<Agreement> raw_agreement(std::span<const std::optional<Choice>> x,
                                       std::span<const std::optional<Choice>> y);

/// nullopt with fewer than two points or zero variance on either side.
std::optional<double> pearson_r(std::span<const double> xs, std::span<const double> ys);

/// (rating, turns) for every user who both rated a side of a pair and learned with it.
/// A user's last rating on that side is used.
std::vector<std::pair<double, double>> rating_turn_pairs(const std::vector<FeedbackBundle>& bundles);

struct ChannelNoise {
  std::optional<double> observed;
  std::optional<double> random_baseline;
  std::size_t items = 0;
};

struct NoiseReport {
  ChannelNoise pairwise;  // mean vote entropy in nats over pairs with votes
  ChannelNoise rating;    // mean sample variance over sides with at least two ratings
  ChannelNoise learning;  // mean sample variance over sides with at least two turn counts
};

/// Observed annotation noise with Monte-Carlo baselines. ArgumentError on empty input or
/// replicates < 1. Results do not depend on the thread count.
NoiseReport noise_metrics(const std::vector<FeedbackBundle>& bundles, std::uint64_t seed,
                          int replicates = 10000);

/// Combines verdicts from both presentation orders. `ba` is in swapped order, so its A is
/// the original B.
Choice debias_judge(Choice ab, Choice ba);

/// Two-sided exact binomial test of p = 0.5. nullopt when there are no outcomes.
/// ArgumentError on negative counts.
std::optional<double> sign_test(std::int64_t wins_a, std::int64_t wins_b);

/// The statistics reported by the `analyze` command.
struct AnalysisReport {
  std::size_t pairs = 0;
  std::optional<Agreement> pair_vs_rate;
  std::optional<Agreement> rate_vs_learn;
  std::optional<Agreement> pair_vs_learn;
  std::optional<double> rating_turn_correlation;
  std::size_t rating_turn_points = 0;
  NoiseReport noise;
};

AnalysisReport analyze(const std::vector<FeedbackBundle>& bundles, int min_labels,
                       std::uint64_t seed, int replicates = 10000);

}  // namespace mnemo
