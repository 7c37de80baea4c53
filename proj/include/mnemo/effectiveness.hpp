#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mnemo/inference.hpp"
#include "mnemo/types.hpp"

namespace mnemo {

/// Link parameters shared by all pairs.
struct LinkParams {
  double alpha_pair = 0.0;
  double beta_pair = 0.0;
  double tau = 0.5;
  std::array<double, 5> alpha_rate{};
  std::array<double, 5> beta_rate{};
  double alpha_learn = 0.0;
  double beta_learn = 0.0;
};

/// Full parameter set of the effectiveness model in constrained space.
///
/// Every link is sigmoid(alpha * (theta - 0.5) + beta).
///
/// Unconstrained layout: [logit theta_a_0, logit theta_b_0, ..., alpha_pair, beta_pair,
/// logit tau, alpha_rate[5], beta_rate[5], alpha_learn, beta_learn].
struct EffectivenessParams {
  std::vector<double> theta_a;
  std::vector<double> theta_b;
  LinkParams links;

  static std::size_t dimension(std::size_t pairs) { return 2 * pairs + 2 + 1 + 10 + 2; }
  std::vector<double> to_unconstrained() const;
  static EffectivenessParams from_unconstrained(std::span<const double> x, std::size_t pairs);
};

/// Probabilities the model assigns to one pair's observations.
struct PairwiseProbabilities {
  double a;
  double b;
  double tie;
};
PairwiseProbabilities pairwise_probabilities(double theta_a, double theta_b, const LinkParams& links);
/// Normalized 5-category rating distribution for a mnemonic of effectiveness theta.
std::array<double, 5> rating_probabilities(double theta, const LinkParams& links);
/// Per-turn success probability of the geometric turn model.
double learn_probability(double theta, const LinkParams& links);

/// Sufficient statistics of one bundle.
struct PairSummary {
  int votes_a = 0;
  int votes_b = 0;
  int votes_tie = 0;
  std::array<int, 5> ratings_a{};
  std::array<int, 5> ratings_b{};
  int turn_obs_a = 0;
  long long turn_sum_a = 0;
  int turn_obs_b = 0;
  long long turn_sum_b = 0;
};

/// Throws DataError on ratings outside 1..5 or turn counts below 1.
PairSummary summarize(const FeedbackBundle& bundle);

/// Joint log density of the model over `data` at unconstrained point `x`, gradient
/// written to `grad`. Priors: Beta(1,1) on thetas and tau (with logit Jacobians),
/// Normal(0,1) on every link coefficient.
double effectiveness_log_density(std::span<const PairSummary> data, std::span<const double> x,
                                 std::span<double> grad);

/// Maps theta -> 1 - theta and every alpha -> -alpha in place. The density is invariant
/// under this map.
void reflect_unconstrained(std::span<double> x, std::size_t pairs);

/// alpha_pair + alpha_learn + alpha_rate[5] - alpha_rate[1]. Fitted draws are reflected
/// so that this is non-negative: higher theta means a more effective mnemonic.
double orientation_score(std::span<const double> x, std::size_t pairs);

struct LogDensityResult {
  double logp;
  std::vector<double> grad;  // with respect to the unconstrained parameters
};
LogDensityResult effectiveness_logp(const EffectivenessParams& params,
                                    const std::vector<FeedbackBundle>& data);

/// Density over all pairs jointly. Parameter names follow the unconstrained layout.
inference::DensityModel effectiveness_density(const std::vector<FeedbackBundle>& data);

struct EffectivenessFitOptions {
  /// Fraction of each chain's draws kept when forming per-pair summaries; nullopt keeps all.
  std::optional<double> thinning_fraction;
};

struct EffectivenessFit {
  std::vector<EffectivenessPosterior> posteriors;
  ConvergenceReport report;
  /// Pooled post-warmup draws of the shared link parameters.
  std::vector<LinkParams> link_draws;
};

/// Samples the joint posterior, orients every draw (see orientation_score) and summarizes
/// it per pair. Per-pair means pool all chains.
///
/// Swapping A and B in any bundle swaps that pair's draws and leaves every other draw
/// unchanged. A pair whose two sides carry identical evidence reports equal means (so a
/// TIE label) and prob_a_gt_b averaged over both orders; its raw samples are untouched.
/// Throws ArgumentError when `data` is empty or carries no observations at all.
EffectivenessFit fit_effectiveness(const std::vector<FeedbackBundle>& data,
                                   const ModelHyperparams& hyper, std::uint64_t seed,
                                   const EffectivenessFitOptions& options = {});

/// A if theta_a_mean > theta_b_mean, B if smaller, TIE only on exact equality.
Choice bayes_label(const EffectivenessPosterior& posterior);

struct ChannelLoglik {
  double mean = 0.0;        // mean per-observation log-likelihood across items
  double std_error = 0.0;   // standard error of that mean across items
  std::size_t items = 0;
};

struct HeldoutReport {
  std::optional<ChannelLoglik> pairwise;
  std::optional<ChannelLoglik> rating;
  std::optional<ChannelLoglik> learning;
};

/// Predictive log-likelihood of `bundles` under fitted link parameters. Each item's
/// thetas are integrated out by fresh Uniform(0,1) draws paired with the link draws.
/// Items are pairs (pairwise channel) or pair-sides (rating, learning); each item
/// contributes log p(item) / (observations in item). Channels with no items are absent.
HeldoutReport heldout_loglik(const std::vector<LinkParams>& link_draws,
                             const std::vector<FeedbackBundle>& bundles, std::uint64_t seed);

}  // namespace mnemo
