#include <cmath>
#include <random>

#include "doctest.h"
#include "mnemo/error.hpp"
#include "mnemo/quality.hpp"

using namespace mnemo;

namespace {

/// Conjugate update written out independently of the library.
double conjugate_mean(std::int64_t up, std::int64_t down) {
  return (2.0 + static_cast<double>(up)) / (10.0 + static_cast<double>(up + down));
}

}  // namespace

TEST_CASE("analytic posterior examples") {
  const ModelHyperparams hyper;
  auto p = quality_posterior_analytic({0, 0}, hyper);
  CHECK(p.alpha_post == 2.0);
  CHECK(p.beta_post == 8.0);
  CHECK(p.mean == doctest::Approx(0.2));

  p = quality_posterior_analytic({8, 0}, hyper);
  CHECK(p.alpha_post == 10.0);
  CHECK(p.beta_post == 8.0);
  CHECK(p.mean == doctest::Approx(5.0 / 9.0));

  p = quality_posterior_analytic({1, 1}, hyper);
  CHECK(p.alpha_post == 3.0);
  CHECK(p.beta_post == 9.0);
  CHECK(p.mean == doctest::Approx(0.25));
}

TEST_CASE("analytic posterior is monotone in upvotes and shrinks toward the prior") {
  const ModelHyperparams hyper;
  for (std::int64_t total : {1, 2, 7, 30}) {
    double last = -1.0;
    for (std::int64_t up = 0; up <= total; ++up) {
      const double m = quality_posterior_analytic({up, total - up}, hyper).mean;
      CHECK(m > last);
      last = m;
      const double ratio = static_cast<double>(up) / static_cast<double>(total);
      if (ratio != 0.2) {
        CHECK(m > std::min(0.2, ratio));
        CHECK(m < std::max(0.2, ratio));
      }
    }
  }
}

TEST_CASE("quality density gradient matches finite differences") {
  const ModelHyperparams hyper;
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-6, 6);
  std::vector<inference::Vector> points;
  for (int i = 0; i < 100; ++i) points.push_back({u(rng)});
  for (VoteTally t : {VoteTally{0, 0}, VoteTally{8, 0}, VoteTally{10, 10}, VoteTally{50, 3}}) {
    CHECK(inference::check_gradient(quality_density(t, hyper), points) < 1e-5);
  }
}

TEST_CASE("fit_quality matches the conjugate posterior") {
  const ModelHyperparams hyper;
  std::vector<TallyRecord> items{{"zero", {0, 0}}, {"eight", {8, 0}}, {"even", {10, 10}}};
  const auto fits = fit_quality(items, hyper, 2024);
  REQUIRE(fits.size() == 3);
  CHECK(fits[0].mnemonic_id == "zero");
  CHECK(std::abs(fits[0].q_mean - 0.2) < 0.01);
  CHECK(std::abs(fits[1].q_mean - 10.0 / 18.0) < 0.01);
  CHECK(std::abs(fits[2].q_mean - 0.4) < 0.01);
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& f = fits[i];
    CHECK(f.q_samples.size() == 5000);
    CHECK(f.q_mean > 0.0);
    CHECK(f.q_mean < 1.0);
    const double analytic = conjugate_mean(items[i].tally.upvotes, items[i].tally.downvotes);
    CHECK(std::abs(f.q_mean - analytic) < 3.0 * f.mcse);
    double s = 0.0;
    for (double q : f.q_samples) s += q;
    CHECK(f.q_mean == doctest::Approx(s / static_cast<double>(f.q_samples.size())));
  }
}

TEST_CASE("fit_quality is deterministic and rejects bad input") {
  ModelHyperparams hyper;
  hyper.warmup_iters = 100;
  hyper.sample_iters = 100;
  std::vector<TallyRecord> items{{"m1", {3, 1}}};
  CHECK(fit_quality(items, hyper, 5)[0].q_samples == fit_quality(items, hyper, 5)[0].q_samples);
  CHECK_THROWS_AS(fit_quality({}, hyper, 5), ArgumentError);
  CHECK_THROWS_AS(fit_quality({{"bad", {-1, 0}}}, hyper, 5), ArgumentError);
}

TEST_CASE("select_top_k ordering and ties") {
  std::vector<QualityEstimate> est(3);
  est[0].mnemonic_id = "low";
  est[0].q_mean = 0.1;
  est[1].mnemonic_id = "high";
  est[1].q_mean = 0.9;
  est[2].mnemonic_id = "mid";
  est[2].q_mean = 0.5;
  CHECK(select_top_k(est, 2) == std::vector<std::string>{"high", "mid"});
  CHECK(select_top_k(est, 3) == std::vector<std::string>{"high", "mid", "low"});
  CHECK_THROWS_AS(select_top_k(est, 4), ArgumentError);
  CHECK_THROWS_AS(select_top_k(est, 0), ArgumentError);

  std::vector<QualityEstimate> tied(2);
  tied[0].mnemonic_id = "zeta";
  tied[0].q_mean = 0.4;
  tied[1].mnemonic_id = "alpha";
  tied[1].q_mean = 0.4;
  CHECK(select_top_k(tied, 1) == std::vector<std::string>{"alpha"});
}
