#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "mnemo/effectiveness.hpp"
#include "mnemo/error.hpp"
#include "support/synthetic.hpp"

using namespace mnemo;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double log_norm(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * M_PI); }

double lfact(int n) { return std::lgamma(n + 1.0); }

/// Joint log density written directly from the model definition, in constrained terms
/// plus the logit Jacobians of theta and tau.
double oracle_logp(const EffectivenessParams& p, const std::vector<FeedbackBundle>& data) {
  const LinkParams& l = p.links;
  double lp = log_norm(l.alpha_pair) + log_norm(l.beta_pair) + log_norm(l.alpha_learn) +
              log_norm(l.beta_learn) + std::log(l.tau * (1.0 - l.tau));
  for (int k = 0; k < 5; ++k) lp += log_norm(l.alpha_rate[k]) + log_norm(l.beta_rate[k]);
  auto link = [](double a, double b, double t) { return sig(a * (t - 0.5) + b); };
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double ta = p.theta_a[i], tb = p.theta_b[i];
    lp += std::log(ta * (1 - ta)) + std::log(tb * (1 - tb));
    const auto& b = data[i];
    int na = 0, nb = 0, nt = 0;
    for (const auto& v : b.pairwise_votes)
      (v.choice == Choice::A ? na : v.choice == Choice::B ? nb : nt)++;
    if (na + nb + nt > 0) {
      const double wa = link(l.alpha_pair, l.beta_pair, ta);
      const double wb = link(l.alpha_pair, l.beta_pair, tb);
      const double z = wa + wb + l.tau;
      lp += lfact(na + nb + nt) - lfact(na) - lfact(nb) - lfact(nt);
      lp += na * std::log(wa / z) + nb * std::log(wb / z) + nt * std::log(l.tau / z);
    }
    for (auto [ratings, theta] : {std::pair{&b.likert_a, ta}, std::pair{&b.likert_b, tb}}) {
      if (ratings->empty()) continue;
      int counts[5] = {0, 0, 0, 0, 0};
      for (const auto& r : *ratings) counts[r.value - 1]++;
      double w[5], total = 0;
      for (int k = 0; k < 5; ++k) total += (w[k] = link(l.alpha_rate[k], l.beta_rate[k], theta));
      lp += lfact(static_cast<int>(ratings->size()));
      for (int k = 0; k < 5; ++k) lp += counts[k] * std::log(w[k] / total) - lfact(counts[k]);
    }
    for (auto [turns, theta] : {std::pair{&b.turns_a, ta}, std::pair{&b.turns_b, tb}}) {
      const double q = link(l.alpha_learn, l.beta_learn, theta);
      for (const auto& t : *turns) lp += std::log(q) + (t.turns - 1) * std::log(1 - q);
    }
  }
  return lp;
}

EffectivenessParams random_params(std::size_t pairs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.02, 0.98), coef(-3, 3);
  EffectivenessParams p;
  for (std::size_t i = 0; i < pairs; ++i) {
    p.theta_a.push_back(unit(rng));
    p.theta_b.push_back(unit(rng));
  }
  p.links.alpha_pair = coef(rng);
  p.links.beta_pair = coef(rng);
  p.links.tau = unit(rng);
  for (int k = 0; k < 5; ++k) {
    p.links.alpha_rate[k] = coef(rng);
    p.links.beta_rate[k] = coef(rng);
  }
  p.links.alpha_learn = coef(rng);
  p.links.beta_learn = coef(rng);
  return p;
}

/// Synthetic data with a few channels knocked out.
std::vector<FeedbackBundle> patchy_data() {
  auto data = synthetic::generate(8, 77).bundles;
  data[1].pairwise_votes.clear();
  data[2].likert_a.clear();
  data[2].turns_b.clear();
  data[3] = FeedbackBundle{"empty", {}, {}, {}, {}, {}};
  data[4].likert_a.clear();
  data[4].likert_b.clear();
  return data;
}

ModelHyperparams quick(int chains, int iters) {
  ModelHyperparams h;
  h.chains = chains;
  h.warmup_iters = iters;
  h.sample_iters = iters;
  return h;
}

const synthetic::Dataset& desk_data() {
  static const auto d = synthetic::generate(100, 20240611);
  return d;
}

const EffectivenessFit& desk_fit() {
  static const auto fit = fit_effectiveness(desk_data().bundles, ModelHyperparams{}, 20240611);
  return fit;
}

}  // namespace

TEST_CASE("unconstrained layout and round trip") {
  CHECK(EffectivenessParams::dimension(0) == 15);
  CHECK(EffectivenessParams::dimension(100) == 215);
  std::mt19937_64 rng(1);
  const auto p = random_params(3, rng);
  const auto x = p.to_unconstrained();
  REQUIRE(x.size() == 21);
  const auto back = EffectivenessParams::from_unconstrained(x, 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.theta_a[i] == doctest::Approx(p.theta_a[i]).epsilon(1e-12));
    CHECK(back.theta_b[i] == doctest::Approx(p.theta_b[i]).epsilon(1e-12));
  }
  CHECK(back.links.tau == doctest::Approx(p.links.tau).epsilon(1e-12));
  CHECK(back.links.beta_rate == p.links.beta_rate);
  CHECK_THROWS_AS(EffectivenessParams::from_unconstrained(x, 2), ArgumentError);
}

TEST_CASE("pairwise and rating probabilities form simplices") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const auto p = random_params(1, rng);
    const auto pw = pairwise_probabilities(unit(rng), unit(rng), p.links);
    CHECK(std::abs(pw.a + pw.b + pw.tie - 1.0) < 1e-12);
    const auto r = rating_probabilities(unit(rng), p.links);
    CHECK(std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0) < 1e-12);
    for (double v : r) CHECK(v > 0.0);
  }
}

TEST_CASE("log density matches a direct evaluation of the model") {
  std::mt19937_64 rng(3);
  const auto data = patchy_data();
  for (int i = 0; i < 25; ++i) {
    const auto p = random_params(data.size(), rng);
    CHECK(effectiveness_logp(p, data).logp ==
          doctest::Approx(oracle_logp(p, data)).epsilon(1e-10));
  }
}

TEST_CASE("learning-only pair at theta 0.5 with a flat link") {
  EffectivenessParams p;
  p.theta_a = {0.5};
  p.theta_b = {0.5};
  p.links.alpha_learn = 0.0;
  p.links.beta_learn = 0.0;
  FeedbackBundle empty{"p", {}, {}, {}, {}, {}};
  FeedbackBundle learned = empty;
  learned.turns_a = {{"u1", 1}, {"u2", 3}};
  learned.turns_b = {{"u1", 4}};
  const double base = effectiveness_logp(p, {empty}).logp;
  const double with = effectiveness_logp(p, {learned}).logp;
  CHECK(with - base == doctest::Approx(-(1 + 3 + 4) * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("swapping A and B in the data mirrors the density") {
  std::mt19937_64 rng(4);
  const auto data = patchy_data();
  std::vector<FeedbackBundle> swapped;
  for (const auto& b : data) swapped.push_back(swap_sides(b));
  for (int i = 0; i < 25; ++i) {
    auto p = random_params(data.size(), rng);
    auto q = p;
    std::swap(q.theta_a, q.theta_b);
    CHECK(effectiveness_logp(p, data).logp ==
          doctest::Approx(effectiveness_logp(q, swapped).logp).epsilon(1e-12));
  }

  // Equal strengths and a balanced vote: the pair itself is label-symmetric.
  EffectivenessParams p;
  p.theta_a = {0.4};
  p.theta_b = {0.4};
  p.links.alpha_pair = 1.3;
  p.links.tau = 0.2;
  FeedbackBundle balanced{"p", {{"u1", Choice::A}, {"u2", Choice::B}, {"u3", Choice::Tie}}, {}, {}, {}, {}};
  CHECK(effectiveness_logp(p, {balanced}).logp ==
        doctest::Approx(effectiveness_logp(p, {swap_sides(balanced)}).logp).epsilon(1e-14));
}

TEST_CASE("the reflection leaves the density unchanged") {
  std::mt19937_64 rng(5);
  const auto data = patchy_data();
  for (int i = 0; i < 25; ++i) {
    const auto p = random_params(data.size(), rng);
    auto x = p.to_unconstrained();
    const double before = effectiveness_logp(p, data).logp;
    const double score = orientation_score(x, data.size());
    reflect_unconstrained(x, data.size());
    CHECK(orientation_score(x, data.size()) == doctest::Approx(-score));
    const auto r = EffectivenessParams::from_unconstrained(x, data.size());
    CHECK(r.theta_a[0] == doctest::Approx(1.0 - p.theta_a[0]).epsilon(1e-12));
    CHECK(effectiveness_logp(r, data).logp == doctest::Approx(before).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradient matches finite differences") {
  const auto model = effectiveness_density(patchy_data());
  REQUIRE(model.dim == 31);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-3, 3);
  std::vector<inference::Vector> points;
  for (int i = 0; i < 100; ++i) {
    inference::Vector x(model.dim);
    for (auto& v : x) v = u(rng);
    points.push_back(x);
  }
  CHECK(inference::check_gradient(model, points) < 1e-5);
  CHECK(model.parameter_names[0] == "theta_a[syn-0]");
  CHECK(model.parameter_names[16] == "alpha_pair");
  CHECK(model.parameter_names.back() == "beta_learn");
}

TEST_CASE("bad feedback values are data errors") {
  FeedbackBundle b{"bad", {}, {{"u", 6}}, {}, {}, {}};
  CHECK_THROWS_AS(summarize(b), DataError);
  b = FeedbackBundle{"bad", {}, {}, {}, {{"u", 0}}, {}};
  CHECK_THROWS_AS(summarize(b), DataError);
}

TEST_CASE("bayes_label follows the posterior means") {
  EffectivenessPosterior p;
  p.theta_a_mean = 0.7;
  p.theta_b_mean = 0.3;
  CHECK(bayes_label(p) == Choice::A);
  p.theta_a_mean = 0.3;
  p.theta_b_mean = 0.7;
  CHECK(bayes_label(p) == Choice::B);
  p.theta_a_mean = 0.5;
  p.theta_b_mean = 0.5;
  CHECK(bayes_label(p) == Choice::Tie);
}

TEST_CASE("fit_effectiveness argument errors") {
  CHECK_THROWS_AS(fit_effectiveness({}, quick(2, 50), 1), ArgumentError);
  std::vector<FeedbackBundle> blank{{"a", {}, {}, {}, {}, {}}, {"b", {}, {}, {}, {}, {}}};
  CHECK_THROWS_AS(fit_effectiveness(blank, quick(2, 50), 1), ArgumentError);
  EffectivenessFitOptions bad;
  bad.thinning_fraction = 0.0;
  CHECK_THROWS_AS(fit_effectiveness(synthetic::generate(2, 1).bundles, quick(2, 50), 1, bad),
                  ArgumentError);
}

TEST_CASE("a pair that is unanimous in every channel favours A") {
  FeedbackBundle b;
  b.pair_id = "unanimous";
  for (int i = 0; i < 10; ++i) b.pairwise_votes.push_back({"v" + std::to_string(i), Choice::A});
  for (int i = 0; i < 5; ++i) {
    b.likert_a.push_back({"r" + std::to_string(i), 5});
    b.likert_b.push_back({"r" + std::to_string(i), 1});
    b.turns_a.push_back({"t" + std::to_string(i), 1});
    b.turns_b.push_back({"t" + std::to_string(i), 5});
  }
  const auto fit = fit_effectiveness({b}, ModelHyperparams{}, 31);
  REQUIRE(fit.posteriors.size() == 1);
  CHECK(fit.posteriors[0].prob_a_gt_b > 0.9);
  CHECK(bayes_label(fit.posteriors[0]) == Choice::A);
}

TEST_CASE("a pair without feedback keeps its prior mean") {
  auto data = synthetic::generate(20, 8).bundles;
  data.push_back({"silent", {}, {}, {}, {}, {}});
  const auto fit = fit_effectiveness(data, ModelHyperparams{}, 8);
  const auto& silent = fit.posteriors.back();
  CHECK(silent.pair_id == "silent");
  CHECK(std::abs(silent.theta_a_mean - 0.5) < 0.05);
  CHECK(std::abs(silent.theta_b_mean - 0.5) < 0.05);
}

TEST_CASE("fit is reproducible and thinning keeps the requested share") {
  const auto data = synthetic::generate(10, 12).bundles;
  const auto a = fit_effectiveness(data, quick(2, 150), 3);
  const auto b = fit_effectiveness(data, quick(2, 150), 3);
  CHECK(a.posteriors[4].theta_a_samples == b.posteriors[4].theta_a_samples);
  CHECK(a.link_draws.size() == 300);

  EffectivenessFitOptions thin;
  thin.thinning_fraction = 0.1;
  const auto t = fit_effectiveness(data, quick(2, 150), 3, thin);
  REQUIRE(t.posteriors[0].theta_a_samples.size() == 2);
  CHECK(t.posteriors[0].theta_a_samples[0].size() == 15);
  // Thinning only changes the per-pair summaries, not the sampler or its diagnostics.
  CHECK(t.report.r_hat == a.report.r_hat);
  for (std::size_t c = 0; c < 2; ++c)
    for (double v : t.posteriors[0].theta_a_samples[c]) {
      const auto& all = a.posteriors[0].theta_a_samples[c];
      CHECK(std::find(all.begin(), all.end(), v) != all.end());
    }
}

TEST_CASE("desk-scale synthetic recovery and convergence") {
  const auto& truth = desk_data();
  const auto& fit = desk_fit();
  REQUIRE(fit.posteriors.size() == 100);

  int eligible = 0, matched = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    if (std::abs(truth.theta_a[i] - truth.theta_b[i]) < 0.3) continue;
    ++eligible;
    const auto& p = fit.posteriors[i];
    if ((p.theta_a_mean > p.theta_b_mean) == (truth.theta_a[i] > truth.theta_b[i])) ++matched;
  }
  REQUIRE(eligible > 0);
  CHECK(matched >= 0.9 * eligible);

  const auto& r = fit.report;
  REQUIRE(r.r_hat.size() == 215);
  REQUIRE(r.ess.size() == 215);
  CHECK(r.parameter_names[200] == "alpha_pair");
  for (double v : r.r_hat) CHECK(v < 1.01);
  for (double v : r.ess) CHECK(v > 1000.0);
  CHECK(r.krippendorff_alpha > 0.75);
  CHECK(r.converged);

  const auto& p0 = fit.posteriors[0];
  CHECK(p0.diagnostics.r_hat.size() == 2);
  CHECK(p0.diagnostics.converged == r.converged);
  REQUIRE(p0.theta_a_samples.size() == 5);
  CHECK(p0.theta_a_samples[0].size() == 1000);
  std::size_t wins = 0, total = 0;
  for (std::size_t c = 0; c < 5; ++c)
    for (std::size_t k = 0; k < 1000; ++k, ++total)
      wins += p0.theta_a_samples[c][k] > p0.theta_b_samples[c][k];
  CHECK(p0.prob_a_gt_b == doctest::Approx(static_cast<double>(wins) / total));

  CHECK(fit.link_draws.size() == 5000);
  double a_pair = 0.0, a_learn = 0.0;
  for (const auto& l : fit.link_draws) {
    a_pair += l.alpha_pair;
    a_learn += l.alpha_learn;
  }
  CHECK(a_pair > 0.0);
  CHECK(a_learn > 0.0);
}

TEST_CASE("held-out log-likelihood") {
  CHECK_FALSE(heldout_loglik({LinkParams{}}, {}, 1).pairwise.has_value());
  CHECK_THROWS_AS(heldout_loglik({}, synthetic::generate(1, 1).bundles, 1), ArgumentError);

  const auto data = synthetic::generate(100, 909).bundles;
  const std::vector<FeedbackBundle> train(data.begin(), data.begin() + 80);
  const std::vector<FeedbackBundle> held(data.begin() + 80, data.end());
  const auto fit = fit_effectiveness(train, quick(2, 500), 909);

  const auto again = heldout_loglik(fit.link_draws, train, 4);
  const auto tr = heldout_loglik(fit.link_draws, train, 4);
  CHECK(tr.pairwise->mean == again.pairwise->mean);
  CHECK(tr.pairwise->items == 80);
  CHECK(tr.rating->items == 160);
  CHECK(tr.learning->items == 160);

  const auto ho = heldout_loglik(fit.link_draws, held, 5);
  for (auto [a, b] : {std::pair{tr.pairwise, ho.pairwise}, std::pair{tr.rating, ho.rating}}) {
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    CHECK(a->mean < 0.0);
    const double pooled = std::sqrt(a->std_error * a->std_error + b->std_error * b->std_error);
    CHECK(std::abs(a->mean - b->mean) < 3.0 * pooled);
  }
}

TEST_CASE("fitted pairwise and learning slopes keep the generating sign") {
  int pair_ok = 0, learn_ok = 0;
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto data = synthetic::generate(40, 1000 + rep).bundles;
    const auto fit = fit_effectiveness(data, quick(2, 300), 1000 + rep);
    double a_pair = 0.0, a_learn = 0.0;
    for (const auto& l : fit.link_draws) {
      a_pair += l.alpha_pair;
      a_learn += l.alpha_learn;
    }
    pair_ok += a_pair > 0.0;
    learn_ok += a_learn > 0.0;
  }
  CHECK(pair_ok >= 19);
  CHECK(learn_ok >= 19);
}

TEST_CASE("refitting with swapped sides mirrors the fit exactly") {
  auto data = synthetic::generate(6, 41).bundles;
  FeedbackBundle balanced{"balanced", {{"x", Choice::A}, {"y", Choice::B}}, {{"r", 3}}, {{"r", 3}}, {}, {}};
  data.push_back(balanced);
  std::vector<FeedbackBundle> swapped;
  for (std::size_t i = 0; i < data.size(); ++i) swapped.push_back(i % 2 ? swap_sides(data[i]) : data[i]);

  const auto a = fit_effectiveness(data, quick(2, 200), 9);
  const auto b = fit_effectiveness(swapped, quick(2, 200), 9);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = a.posteriors[i];
    const auto& q = b.posteriors[i];
    if (i % 2) {
      CHECK(p.theta_a_mean == q.theta_b_mean);
      CHECK(p.theta_a_samples == q.theta_b_samples);
      if (bayes_label(p) != Choice::Tie) CHECK(bayes_label(q) == swap_choice(bayes_label(p)));
    } else {
      CHECK(p.theta_a_samples == q.theta_a_samples);
    }
  }
  const auto& tie = a.posteriors.back();
  CHECK(tie.theta_a_mean == tie.theta_b_mean);
  CHECK(bayes_label(tie) == Choice::Tie);
  CHECK(a.report.r_hat.size() == b.report.r_hat.size());
}
