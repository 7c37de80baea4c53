#include "mnemo/quality.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mnemo/diagnostics.hpp"
#include "mnemo/error.hpp"

namespace mnemo {

QualityPosterior quality_posterior_analytic(const VoteTally& tally, const ModelHyperparams& hyper) {
  const double a = hyper.quality_prior_alpha + static_cast<double>(tally.upvotes);
  const double b = hyper.quality_prior_beta + static_cast<double>(tally.downvotes);
  return {a, b, a / (a + b)};
}

inference::DensityModel quality_density(const VoteTally& tally, const ModelHyperparams& hyper) {
  if (tally.upvotes < 0 || tally.downvotes < 0)
    throw ArgumentError("vote counts must be non-negative");
  const double up = static_cast<double>(tally.upvotes);
  const double down = static_cast<double>(tally.downvotes);
  const double a = hyper.quality_prior_alpha;
  const double b = hyper.quality_prior_beta;
  // log Beta(q | a, b) + log Binomial(up | up + down, q) + log|dq/dy|, with q = inv_logit(y).
  const double constant = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          std::lgamma(up + down + 1.0) - std::lgamma(up + 1.0) -
                          std::lgamma(down + 1.0);
  const double success = a + up;
  const double failure = b + down;

  inference::DensityModel model;
  model.dim = 1;
  model.parameter_names = {"logit_q"};
  model.logp_and_grad = [=](std::span<const double> x, std::span<double> grad) {
    const double y = x[0];
    const double q = inference::inverse_logit(y);
    grad[0] = success * (1.0 - q) - failure * q;
    return constant + success * inference::log_inverse_logit(y) +
           failure * inference::log1m_inverse_logit(y);
  };
  return model;
}

std::vector<QualityEstimate> fit_quality(const std::vector<TallyRecord>& items,
                                         const ModelHyperparams& hyper, std::uint64_t seed) {
  if (items.empty()) throw ArgumentError("fit_quality needs at least one item");
  hyper.validate();

  std::vector<QualityEstimate> out;
  out.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto model = quality_density(items[i].tally, hyper);
    const auto chains = inference::nuts_sample(model, hyper, seed + 0x9e3779b97f4a7c15ULL * (i + 1));

    QualityEstimate est;
    est.mnemonic_id = items[i].mnemonic_id;
    inference::ChainDraws draws;
    for (const auto& c : chains) {
      auto col = c.column(0);
      for (auto& y : col) y = inference::inverse_logit(y);
      est.q_samples.insert(est.q_samples.end(), col.begin(), col.end());
      draws.push_back(std::move(col));
    }
    const double n = static_cast<double>(est.q_samples.size());
    est.q_mean = std::accumulate(est.q_samples.begin(), est.q_samples.end(), 0.0) / n;
    double ss = 0.0;
    for (double q : est.q_samples) ss += (q - est.q_mean) * (q - est.q_mean);
    const double sd = std::sqrt(ss / std::max(1.0, n - 1.0));
    if (draws.size() >= 2 && draws.front().size() >= 4) {
      est.ess = inference::effective_sample_size(draws);
    } else {
      est.ess = n;
    }
    est.mcse = sd / std::sqrt(est.ess);
    out.push_back(std::move(est));
  }
  return out;
}

std::vector<std::string> select_top_k(const std::vector<QualityEstimate>& estimates,
                                      std::size_t k) {
  if (k == 0) throw ArgumentError("k must be positive");
  if (k > estimates.size())
    throw ArgumentError("k = " + std::to_string(k) + " exceeds the " +
                        std::to_string(estimates.size()) + " available estimates");
  std::vector<const QualityEstimate*> order;
  order.reserve(estimates.size());
  for (const auto& e : estimates) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const QualityEstimate* x, const QualityEstimate* y) {
    if (x->q_mean != y->q_mean) return x->q_mean > y->q_mean;
    return x->mnemonic_id < y->mnemonic_id;
  });
  std::vector<std::string> ids;
  ids.reserve(k);
  for (std::size_t i = 0; i < k; ++i) ids.push_back(order[i]->mnemonic_id);
  return ids;
}

}  // namespace mnemo
