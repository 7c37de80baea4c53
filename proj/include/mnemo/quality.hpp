#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mnemo/dataset.hpp"
#include "mnemo/inference.hpp"
#include "mnemo/types.hpp"

namespace mnemo {

/// Posterior over the probability that a submitted mnemonic is high quality.
struct QualityEstimate {
  std::string mnemonic_id;
  double q_mean = 0.0;
  std::vector<double> q_samples;  // pooled post-warmup draws
  double ess = 0.0;
  /// Monte-Carlo standard error of q_mean (posterior sd / sqrt(ess)).
  double mcse = 0.0;
};

struct QualityPosterior {
  double alpha_post;
  double beta_post;
  double mean;
};

/// Closed-form Beta posterior implied by the Beta prior and Binomial upvote likelihood.
QualityPosterior quality_posterior_analytic(const VoteTally& tally, const ModelHyperparams& hyper);

/// One-dimensional density over logit(q) for a single tally.
inference::DensityModel quality_density(const VoteTally& tally, const ModelHyperparams& hyper);

/// Samples each item's posterior independently with NUTS. Deterministic for a seed.
/// Throws ArgumentError on empty input or negative counts.
std::vector<QualityEstimate> fit_quality(const std::vector<TallyRecord>& items,
                                         const ModelHyperparams& hyper, std::uint64_t seed);

/// Ids of the k largest posterior means, descending; equal means go to the smaller id.
/// Throws ArgumentError when k is zero or exceeds the number of estimates.
std::vector<std::string> select_top_k(const std::vector<QualityEstimate>& estimates,
                                      std::size_t k);

}  // namespace mnemo
