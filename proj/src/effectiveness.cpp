#include "mnemo/effectiveness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <tuple>

#include "mnemo/diagnostics.hpp"
#include "mnemo/error.hpp"

namespace mnemo {
namespace {

using inference::inverse_logit;
using inference::log1m_inverse_logit;
using inference::log_inverse_logit;

constexpr double kHalfLog2Pi = 0.91893853320467274178;
// Every link is a sigmoid of alpha * (theta - kCentre) + beta.
constexpr double kCentre = 0.5;

// Offsets of the shared parameters after the 2 * pairs thetas.
constexpr std::size_t kAlphaPair = 0;
constexpr std::size_t kBetaPair = 1;
constexpr std::size_t kTau = 2;
constexpr std::size_t kAlphaRate = 3;
constexpr std::size_t kBetaRate = 8;
constexpr std::size_t kAlphaLearn = 13;
constexpr std::size_t kBetaLearn = 14;
constexpr std::size_t kShared = 15;

double log_multinomial_coefficient(std::span<const int> counts) {
  int n = 0;
  double out = 0.0;
  for (int c : counts) {
    n += c;
    out -= std::lgamma(c + 1.0);
  }
  return out + std::lgamma(n + 1.0);
}

/// Rating channel for one side. Adds d/dx_k into dx and returns the log-likelihood.
double rating_term(const std::array<int, 5>& counts, double theta, std::span<const double> alpha,
                   std::span<const double> beta, std::array<double, 5>& dx) {
  const int n = std::accumulate(counts.begin(), counts.end(), 0);
  dx.fill(0.0);
  if (n == 0) return 0.0;
  std::array<double, 5> s{};
  double total = 0.0;
  double ll = log_multinomial_coefficient(counts);
  for (std::size_t k = 0; k < 5; ++k) {
    const double x = alpha[k] * (theta - kCentre) + beta[k];
    s[k] = inverse_logit(x);
    total += s[k];
    if (counts[k] > 0) ll += counts[k] * log_inverse_logit(x);
  }
  ll -= n * std::log(total);
  for (std::size_t k = 0; k < 5; ++k)
    dx[k] = counts[k] * (1.0 - s[k]) - n * s[k] * (1.0 - s[k]) / total;
  return ll;
}

/// Geometric turn channel for one side; writes d/dx into dx.
double learning_term(int obs, long long turn_sum, double x, double& dx) {
  dx = 0.0;
  if (obs == 0) return 0.0;
  const double p = inverse_logit(x);
  const double failures = static_cast<double>(turn_sum - obs);
  dx = obs * (1.0 - p) - failures * p;
  return obs * log_inverse_logit(x) + failures * log1m_inverse_logit(x);
}

// Orthonormal Helmert basis of R^5; column 0 is the constant direction.
std::array<std::array<double, 5>, 5> helmert5() {
  std::array<std::array<double, 5>, 5> q{};
  for (std::size_t r = 0; r < 5; ++r) q[r][0] = 1.0 / std::sqrt(5.0);
  for (std::size_t c = 1; c < 5; ++c) {
    const double norm = std::sqrt(static_cast<double>(c * (c + 1)));
    for (std::size_t r = 0; r < c; ++r) q[r][c] = 1.0 / norm;
    q[c][c] = -static_cast<double>(c) / norm;
  }
  return q;
}

/// Orthogonal change of sampling coordinates on the shared block. Rotates
/// (beta_pair, logit tau) by 45 degrees and beta_rate onto the Helmert basis.
/// `forward` maps sampler coordinates to the model layout; the inverse is the transpose
/// (the 45 degree block is its own inverse).
void rotate_shared(std::span<double> v, std::size_t pairs, bool forward) {
  static const auto q = helmert5();
  const std::size_t o = 2 * pairs;
  const double h = 1.0 / std::sqrt(2.0);
  const double u = v[o + kBetaPair];
  const double w = v[o + kTau];
  v[o + kBetaPair] = h * (u + w);
  v[o + kTau] = h * (u - w);
  std::array<double, 5> in{};
  for (std::size_t k = 0; k < 5; ++k) in[k] = v[o + kBetaRate + k];
  for (std::size_t r = 0; r < 5; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 5; ++c) acc += (forward ? q[r][c] : q[c][r]) * in[c];
    v[o + kBetaRate + r] = acc;
  }
}

}  // namespace

std::vector<double> EffectivenessParams::to_unconstrained() const {
  if (theta_a.size() != theta_b.size()) throw ArgumentError("theta_a and theta_b differ in length");
  const std::size_t pairs = theta_a.size();
  std::vector<double> x(dimension(pairs));
  for (std::size_t i = 0; i < pairs; ++i) {
    x[2 * i] = inference::logit_transform(theta_a[i]).value;
    x[2 * i + 1] = inference::logit_transform(theta_b[i]).value;
  }
  const std::size_t o = 2 * pairs;
  x[o + kAlphaPair] = links.alpha_pair;
  x[o + kBetaPair] = links.beta_pair;
  x[o + kTau] = inference::logit_transform(links.tau).value;
  for (std::size_t k = 0; k < 5; ++k) {
    x[o + kAlphaRate + k] = links.alpha_rate[k];
    x[o + kBetaRate + k] = links.beta_rate[k];
  }
  x[o + kAlphaLearn] = links.alpha_learn;
  x[o + kBetaLearn] = links.beta_learn;
  return x;
}

void reflect_unconstrained(std::span<double> x, std::size_t pairs) {
  if (x.size() != EffectivenessParams::dimension(pairs))
    throw ArgumentError("unconstrained vector has wrong length");
  for (std::size_t i = 0; i < 2 * pairs; ++i) x[i] = -x[i];
  const std::size_t o = 2 * pairs;
  x[o + kAlphaPair] = -x[o + kAlphaPair];
  for (std::size_t k = 0; k < 5; ++k) x[o + kAlphaRate + k] = -x[o + kAlphaRate + k];
  x[o + kAlphaLearn] = -x[o + kAlphaLearn];
}

double orientation_score(std::span<const double> x, std::size_t pairs) {
  const std::size_t o = 2 * pairs;
  return x[o + kAlphaPair] + x[o + kAlphaLearn] + x[o + kAlphaRate + 4] - x[o + kAlphaRate];
}

EffectivenessParams EffectivenessParams::from_unconstrained(std::span<const double> x,
                                                            std::size_t pairs) {
  if (x.size() != dimension(pairs)) throw ArgumentError("unconstrained vector has wrong length");
  EffectivenessParams p;
  p.theta_a.resize(pairs);
  p.theta_b.resize(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    p.theta_a[i] = inverse_logit(x[2 * i]);
    p.theta_b[i] = inverse_logit(x[2 * i + 1]);
  }
  const std::size_t o = 2 * pairs;
  p.links.alpha_pair = x[o + kAlphaPair];
  p.links.beta_pair = x[o + kBetaPair];
  p.links.tau = inverse_logit(x[o + kTau]);
  for (std::size_t k = 0; k < 5; ++k) {
    p.links.alpha_rate[k] = x[o + kAlphaRate + k];
    p.links.beta_rate[k] = x[o + kBetaRate + k];
  }
  p.links.alpha_learn = x[o + kAlphaLearn];
  p.links.beta_learn = x[o + kBetaLearn];
  return p;
}

PairwiseProbabilities pairwise_probabilities(double theta_a, double theta_b,
                                             const LinkParams& links) {
  const double pa = inverse_logit(links.alpha_pair * (theta_a - kCentre) + links.beta_pair);
  const double pb = inverse_logit(links.alpha_pair * (theta_b - kCentre) + links.beta_pair);
  const double z = pa + pb + links.tau;
  return {pa / z, pb / z, links.tau / z};
}

std::array<double, 5> rating_probabilities(double theta, const LinkParams& links) {
  std::array<double, 5> p{};
  double total = 0.0;
  for (std::size_t k = 0; k < 5; ++k) {
    p[k] = inverse_logit(links.alpha_rate[k] * (theta - kCentre) + links.beta_rate[k]);
    total += p[k];
  }
  for (auto& v : p) v /= total;
  return p;
}

double learn_probability(double theta, const LinkParams& links) {
  return inverse_logit(links.alpha_learn * (theta - kCentre) + links.beta_learn);
}

PairSummary summarize(const FeedbackBundle& bundle) {
  PairSummary s;
  for (const auto& v : bundle.pairwise_votes) {
    switch (v.choice) {
      case Choice::A:
        ++s.votes_a;
        break;
      case Choice::B:
        ++s.votes_b;
        break;
      case Choice::Tie:
        ++s.votes_tie;
        break;
    }
  }
  auto add_ratings = [&](const std::vector<Rating>& ratings, std::array<int, 5>& counts) {
    for (const auto& r : ratings) {
      if (r.value < 1 || r.value > 5)
        throw DataError("pair " + bundle.pair_id + ": Likert rating " + std::to_string(r.value) +
                        " outside 1..5");
      ++counts[static_cast<std::size_t>(r.value - 1)];
    }
  };
  add_ratings(bundle.likert_a, s.ratings_a);
  add_ratings(bundle.likert_b, s.ratings_b);
  auto add_turns = [&](const std::vector<TurnCount>& turns, int& obs, long long& sum) {
    for (const auto& t : turns) {
      if (t.turns < 1)
        throw DataError("pair " + bundle.pair_id + ": turn count " + std::to_string(t.turns) +
                        " below 1");
      ++obs;
      sum += t.turns;
    }
  };
  add_turns(bundle.turns_a, s.turn_obs_a, s.turn_sum_a);
  add_turns(bundle.turns_b, s.turn_obs_b, s.turn_sum_b);
  return s;
}

double effectiveness_log_density(std::span<const PairSummary> data, std::span<const double> x,
                                 std::span<double> grad) {
  const std::size_t pairs = data.size();
  const std::size_t o = 2 * pairs;
  std::fill(grad.begin(), grad.end(), 0.0);

  const double a_pair = x[o + kAlphaPair];
  const double b_pair = x[o + kBetaPair];
  const double tau = inverse_logit(x[o + kTau]);
  const std::span<const double> a_rate = x.subspan(o + kAlphaRate, 5);
  const std::span<const double> b_rate = x.subspan(o + kBetaRate, 5);
  const double a_learn = x[o + kAlphaLearn];
  const double b_learn = x[o + kBetaLearn];

  double lp = 0.0;
  // Normal(0, 1) priors on the link coefficients.
  for (std::size_t k = 0; k < kShared; ++k) {
    if (k == kTau) continue;
    lp -= 0.5 * x[o + k] * x[o + k] + kHalfLog2Pi;
    grad[o + k] -= x[o + k];
  }
  // tau ~ Beta(1, 1): only the logit Jacobian remains.
  lp += log_inverse_logit(x[o + kTau]) + log1m_inverse_logit(x[o + kTau]);
  double dtau = 0.0;  // d logp / d tau (constrained)

  std::array<double, 5> dx{};
  for (std::size_t i = 0; i < pairs; ++i) {
    const PairSummary& s = data[i];
    const double ya = x[2 * i];
    const double yb = x[2 * i + 1];
    const double ta = inverse_logit(ya);
    const double tb = inverse_logit(yb);
    lp += log_inverse_logit(ya) + log1m_inverse_logit(ya);
    lp += log_inverse_logit(yb) + log1m_inverse_logit(yb);
    double dta = 0.0;
    double dtb = 0.0;

    const int n = s.votes_a + s.votes_b + s.votes_tie;
    if (n > 0) {
      const double xa = a_pair * (ta - kCentre) + b_pair;
      const double xb = a_pair * (tb - kCentre) + b_pair;
      const double pa = inverse_logit(xa);
      const double pb = inverse_logit(xb);
      const double z = pa + pb + tau;
      const std::array<int, 3> counts{s.votes_a, s.votes_b, s.votes_tie};
      lp += log_multinomial_coefficient(counts);
      lp += s.votes_a * log_inverse_logit(xa) + s.votes_b * log_inverse_logit(xb);
      if (s.votes_tie > 0) lp += s.votes_tie * std::log(tau);
      lp -= n * std::log(z);
      const double ga = s.votes_a * (1.0 - pa) - n * pa * (1.0 - pa) / z;
      const double gb = s.votes_b * (1.0 - pb) - n * pb * (1.0 - pb) / z;
      grad[o + kAlphaPair] += ga * (ta - kCentre) + gb * (tb - kCentre);
      grad[o + kBetaPair] += ga + gb;
      dta += ga * a_pair;
      dtb += gb * a_pair;
      dtau += s.votes_tie / tau - n / z;
    }

    auto rating_side = [&](const std::array<int, 5>& counts, double theta, double& dtheta) {
      lp += rating_term(counts, theta, a_rate, b_rate, dx);
      for (std::size_t k = 0; k < 5; ++k) {
        grad[o + kAlphaRate + k] += dx[k] * (theta - kCentre);
        grad[o + kBetaRate + k] += dx[k];
        dtheta += dx[k] * a_rate[k];
      }
    };
    rating_side(s.ratings_a, ta, dta);
    rating_side(s.ratings_b, tb, dtb);

    auto learning_side = [&](int obs, long long sum, double theta, double& dtheta) {
      double d = 0.0;
      lp += learning_term(obs, sum, a_learn * (theta - kCentre) + b_learn, d);
      grad[o + kAlphaLearn] += d * (theta - kCentre);
      grad[o + kBetaLearn] += d;
      dtheta += d * a_learn;
    };
    learning_side(s.turn_obs_a, s.turn_sum_a, ta, dta);
    learning_side(s.turn_obs_b, s.turn_sum_b, tb, dtb);

    // Chain rule through theta = inv_logit(y), plus the Jacobian derivative 1 - 2 theta.
    grad[2 * i] = dta * ta * (1.0 - ta) + (1.0 - 2.0 * ta);
    grad[2 * i + 1] = dtb * tb * (1.0 - tb) + (1.0 - 2.0 * tb);
  }
  grad[o + kTau] = dtau * tau * (1.0 - tau) + (1.0 - 2.0 * tau);
  return lp;
}

LogDensityResult effectiveness_logp(const EffectivenessParams& params,
                                    const std::vector<FeedbackBundle>& data) {
  if (params.theta_a.size() != data.size())
    throw ArgumentError("parameter count does not match the number of pairs");
  std::vector<PairSummary> summaries;
  summaries.reserve(data.size());
  for (const auto& b : data) summaries.push_back(summarize(b));
  const auto x = params.to_unconstrained();
  LogDensityResult out{0.0, std::vector<double>(x.size())};
  out.logp = effectiveness_log_density(summaries, x, out.grad);
  return out;
}

inference::DensityModel effectiveness_density(const std::vector<FeedbackBundle>& data) {
  std::vector<PairSummary> summaries;
  summaries.reserve(data.size());
  for (const auto& b : data) summaries.push_back(summarize(b));

  inference::DensityModel model;
  model.dim = EffectivenessParams::dimension(data.size());
  for (const auto& b : data) {
    model.parameter_names.push_back("theta_a[" + b.pair_id + "]");
    model.parameter_names.push_back("theta_b[" + b.pair_id + "]");
  }
  for (const char* name : {"alpha_pair", "beta_pair", "tau"}) model.parameter_names.push_back(name);
  for (int k = 1; k <= 5; ++k) model.parameter_names.push_back("alpha_rate[" + std::to_string(k) + "]");
  for (int k = 1; k <= 5; ++k) model.parameter_names.push_back("beta_rate[" + std::to_string(k) + "]");
  model.parameter_names.push_back("alpha_learn");
  model.parameter_names.push_back("beta_learn");

  model.logp_and_grad = [summaries = std::move(summaries)](std::span<const double> x,
                                                           std::span<double> grad) {
    return effectiveness_log_density(summaries, x, grad);
  };
  return model;
}

Choice bayes_label(const EffectivenessPosterior& posterior) {
  if (posterior.theta_a_mean > posterior.theta_b_mean) return Choice::A;
  if (posterior.theta_a_mean < posterior.theta_b_mean) return Choice::B;
  return Choice::Tie;
}

EffectivenessFit fit_effectiveness(const std::vector<FeedbackBundle>& data,
                                   const ModelHyperparams& hyper, std::uint64_t seed,
                                   const EffectivenessFitOptions& options) {
  if (data.empty()) throw ArgumentError("fit_effectiveness needs at least one pair");
  if (std::all_of(data.begin(), data.end(), [](const FeedbackBundle& b) { return b.empty(); }))
    throw ArgumentError("fit_effectiveness needs at least one observation");
  if (options.thinning_fraction &&
      !(*options.thinning_fraction > 0.0 && *options.thinning_fraction <= 1.0))
    throw ArgumentError("thinning fraction must lie in (0, 1]");

  const std::size_t pairs = data.size();

  // Each pair is sampled with its sides in a canonical order, so relabelling A and B
  // permutes the draws instead of changing them.
  std::vector<FeedbackBundle> canonical = data;
  std::vector<bool> flipped(pairs, false), symmetric(pairs, false);
  for (std::size_t i = 0; i < pairs; ++i) {
    const PairSummary s = summarize(data[i]);
    const auto key_a = std::tie(s.votes_a, s.ratings_a, s.turn_obs_a, s.turn_sum_a);
    const auto key_b = std::tie(s.votes_b, s.ratings_b, s.turn_obs_b, s.turn_sum_b);
    symmetric[i] = key_a == key_b;
    flipped[i] = key_a < key_b;
    if (flipped[i]) canonical[i] = swap_sides(data[i]);
  }
  auto model = effectiveness_density(canonical);
  model.parameter_names = effectiveness_density(data).parameter_names;

  inference::DensityModel rotated = model;
  rotated.logp_and_grad = [&model, pairs](std::span<const double> z, std::span<double> grad) {
    std::vector<double> x(z.begin(), z.end());
    rotate_shared(x, pairs, true);
    const double lp = model.logp_and_grad(x, grad);
    rotate_shared(grad, pairs, false);
    return lp;
  };
  auto chains = inference::nuts_sample(rotated, hyper, seed);
  for (auto& c : chains) {
    for (std::size_t it = 0; it < c.iterations(); ++it) {
      const std::span<double> row(&c.samples[it * c.dim], c.dim);
      rotate_shared(row, pairs, true);
      if (orientation_score(row, pairs) < 0.0) reflect_unconstrained(row, pairs);
      for (std::size_t i = 0; i < pairs; ++i)
        if (flipped[i]) std::swap(row[2 * i], row[2 * i + 1]);
    }
  }
  const std::size_t n_chains = chains.size();
  const std::size_t draws = chains.front().iterations();

  EffectivenessFit fit;

  // Convergence diagnostics on every parameter.
  ConvergenceReport& report = fit.report;
  report.parameter_names = model.parameter_names;
  for (const auto& c : chains) report.divergences += c.divergences;
  if (n_chains >= 2 && draws >= 4) {
    for (std::size_t j = 0; j < model.dim; ++j) {
      inference::ChainDraws column;
      for (const auto& c : chains) column.push_back(c.column(j));
      report.r_hat.push_back(inference::r_hat(column));
      report.ess.push_back(inference::effective_sample_size(column));
    }
  }

  // Draws kept for per-pair summaries.
  std::vector<std::vector<std::size_t>> kept(n_chains);
  std::mt19937_64 thin_rng(seed ^ 0x7468696e6e696e67ULL);
  for (auto& k : kept) {
    k.resize(draws);
    std::iota(k.begin(), k.end(), std::size_t{0});
    if (options.thinning_fraction) {
      const auto keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(*options.thinning_fraction * draws)));
      std::shuffle(k.begin(), k.end(), thin_rng);
      k.resize(keep);
      std::sort(k.begin(), k.end());
    }
  }

  std::vector<std::vector<int>> chain_labels(n_chains, std::vector<int>(pairs));
  fit.posteriors.reserve(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    EffectivenessPosterior post;
    post.pair_id = data[i].pair_id;
    double sum_a = 0.0, sum_b = 0.0;
    std::size_t wins = 0, total = 0;
    for (std::size_t c = 0; c < n_chains; ++c) {
      std::vector<double> ta, tb;
      ta.reserve(kept[c].size());
      tb.reserve(kept[c].size());
      double chain_a = 0.0, chain_b = 0.0;
      for (std::size_t it : kept[c]) {
        const double a = inverse_logit(chains[c].at(it, 2 * i));
        const double b = inverse_logit(chains[c].at(it, 2 * i + 1));
        ta.push_back(a);
        tb.push_back(b);
        chain_a += a;
        chain_b += b;
        if (a > b) ++wins;
        ++total;
      }
      sum_a += chain_a;
      sum_b += chain_b;
      chain_labels[c][i] = chain_a > chain_b ? 0 : chain_a < chain_b ? 1 : 2;
      post.theta_a_samples.push_back(std::move(ta));
      post.theta_b_samples.push_back(std::move(tb));
    }
    post.theta_a_mean = sum_a / static_cast<double>(total);
    post.theta_b_mean = sum_b / static_cast<double>(total);
    post.prob_a_gt_b = static_cast<double>(wins) / static_cast<double>(total);
    if (symmetric[i]) {
      // Identical evidence on both sides: the exact posterior is exchangeable.
      std::size_t losses = 0;
      for (std::size_t c = 0; c < n_chains; ++c)
        for (std::size_t k = 0; k < post.theta_a_samples[c].size(); ++k)
          losses += post.theta_b_samples[c][k] > post.theta_a_samples[c][k];
      post.theta_a_mean = post.theta_b_mean = 0.5 * (post.theta_a_mean + post.theta_b_mean);
      post.prob_a_gt_b = 0.5 * static_cast<double>(wins + losses) / static_cast<double>(total);
    }
    fit.posteriors.push_back(std::move(post));
  }

  report.krippendorff_alpha =
      n_chains >= 2 ? inference::krippendorff_alpha_nominal(chain_labels) : 1.0;
  report.converged = !report.r_hat.empty() && meets_convergence_thresholds(report);

  for (std::size_t i = 0; i < pairs; ++i) {
    ConvergenceReport& local = fit.posteriors[i].diagnostics;
    local.parameter_names = {report.parameter_names[2 * i], report.parameter_names[2 * i + 1]};
    if (!report.r_hat.empty()) {
      local.r_hat = {report.r_hat[2 * i], report.r_hat[2 * i + 1]};
      local.ess = {report.ess[2 * i], report.ess[2 * i + 1]};
    }
    local.krippendorff_alpha = report.krippendorff_alpha;
    local.divergences = report.divergences;
    local.converged = report.converged;
  }

  fit.link_draws.reserve(n_chains * draws);
  for (const auto& c : chains) {
    for (std::size_t it = 0; it < draws; ++it) {
      const std::span<const double> row(&c.samples[it * c.dim], c.dim);
      fit.link_draws.push_back(
          EffectivenessParams::from_unconstrained(row, pairs).links);
    }
  }
  return fit;
}

HeldoutReport heldout_loglik(const std::vector<LinkParams>& link_draws,
                             const std::vector<FeedbackBundle>& bundles, std::uint64_t seed) {
  HeldoutReport report;
  if (bundles.empty()) return report;
  if (link_draws.empty()) throw ArgumentError("heldout_loglik needs posterior link draws");

  // At most 1000 evenly spaced link draws.
  std::vector<const LinkParams*> used;
  const std::size_t stride = std::max<std::size_t>(1, link_draws.size() / 1000);
  for (std::size_t s = 0; s < link_draws.size(); s += stride) used.push_back(&link_draws[s]);
  const double log_s = std::log(static_cast<double>(used.size()));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto log_mean_exp = [&](const std::vector<double>& v) {
    const double hi = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - hi);
    return hi + std::log(acc) - log_s;
  };

  std::vector<double> pair_items, rating_items, learn_items;
  std::vector<double> ll(used.size());
  for (const auto& bundle : bundles) {
    const PairSummary s = summarize(bundle);
    // Fresh thetas per item, shared across channels of the same pair.
    std::vector<double> theta_a(used.size()), theta_b(used.size());
    for (std::size_t k = 0; k < used.size(); ++k) {
      theta_a[k] = unif(rng);
      theta_b[k] = unif(rng);
    }

    const int n = s.votes_a + s.votes_b + s.votes_tie;
    if (n > 0) {
      const std::array<int, 3> counts{s.votes_a, s.votes_b, s.votes_tie};
      const double coef = log_multinomial_coefficient(counts);
      for (std::size_t k = 0; k < used.size(); ++k) {
        const auto p = pairwise_probabilities(theta_a[k], theta_b[k], *used[k]);
        ll[k] = coef + s.votes_a * std::log(p.a) + s.votes_b * std::log(p.b) +
                (s.votes_tie > 0 ? s.votes_tie * std::log(p.tie) : 0.0);
      }
      pair_items.push_back(log_mean_exp(ll) / n);
    }

    for (Side side : {Side::A, Side::B}) {
      const auto& counts = side == Side::A ? s.ratings_a : s.ratings_b;
      const auto& thetas = side == Side::A ? theta_a : theta_b;
      const int m = std::accumulate(counts.begin(), counts.end(), 0);
      if (m > 0) {
        const double coef = log_multinomial_coefficient(counts);
        for (std::size_t k = 0; k < used.size(); ++k) {
          const auto p = rating_probabilities(thetas[k], *used[k]);
          double v = coef;
          for (std::size_t c = 0; c < 5; ++c)
            if (counts[c] > 0) v += counts[c] * std::log(p[c]);
          ll[k] = v;
        }
        rating_items.push_back(log_mean_exp(ll) / m);
      }

      const int obs = side == Side::A ? s.turn_obs_a : s.turn_obs_b;
      const long long sum = side == Side::A ? s.turn_sum_a : s.turn_sum_b;
      if (obs > 0) {
        for (std::size_t k = 0; k < used.size(); ++k) {
          const double x = used[k]->alpha_learn * (thetas[k] - kCentre) + used[k]->beta_learn;
          ll[k] = obs * log_inverse_logit(x) + static_cast<double>(sum - obs) * log1m_inverse_logit(x);
        }
        learn_items.push_back(log_mean_exp(ll) / obs);
      }
    }
  }

  auto summarize_items = [](const std::vector<double>& items) -> std::optional<ChannelLoglik> {
    if (items.empty()) return std::nullopt;
    ChannelLoglik c;
    c.items = items.size();
    c.mean = std::accumulate(items.begin(), items.end(), 0.0) / static_cast<double>(items.size());
    if (items.size() > 1) {
      double ss = 0.0;
      for (double v : items) ss += (v - c.mean) * (v - c.mean);
      c.std_error = std::sqrt(ss / static_cast<double>(items.size() - 1) /
                              static_cast<double>(items.size()));
    }
    return c;
  };
  report.pairwise = summarize_items(pair_items);
  report.rating = summarize_items(rating_items);
  report.learning = summarize_items(learn_items);
  return report;
}

}  // namespace mnemo
