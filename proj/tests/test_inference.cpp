#include <atomic>
#include <cmath>
#include <limits>
#include <memory>
#include <random>

#include "doctest.h"
#include "mnemo/diagnostics.hpp"
#include "mnemo/error.hpp"
#include "mnemo/inference.hpp"
#include "support/oracles.hpp"

using namespace mnemo;
using namespace mnemo::inference;

namespace {

DensityModel standard_normal(std::size_t dim = 1) {
  DensityModel m;
  m.dim = dim;
  m.logp_and_grad = [](std::span<const double> x, std::span<double> g) {
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      lp -= 0.5 * x[i] * x[i];
      g[i] = -x[i];
    }
    return lp;
  };
  return m;
}

std::vector<double> pooled(const std::vector<ChainResult>& chains, std::size_t param = 0) {
  std::vector<double> out;
  for (const auto& c : chains) {
    auto col = c.column(param);
    out.insert(out.end(), col.begin(), col.end());
  }
  return out;
}

}  // namespace

TEST_CASE("logit transform examples") {
  auto half = logit_transform(0.5);
  CHECK(half.value == doctest::Approx(0.0));
  CHECK(half.log_jacobian == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  CHECK(half.log_jacobian == doctest::Approx(-1.3863).epsilon(1e-4));
  CHECK(inverse_logit(0.0) == 0.5);
  CHECK(logit_transform(0.9).value == doctest::Approx(std::log(9.0)).epsilon(1e-12));
  CHECK(logit_transform(0.9).value == doctest::Approx(2.1972).epsilon(1e-4));

  CHECK_THROWS_AS(logit_transform(0.0), DomainError);
  CHECK_THROWS_AS(logit_transform(1.0), DomainError);
  CHECK_THROWS_AS(logit_transform(-0.3), DomainError);
  CHECK_THROWS_AS(logit_transform(std::nan("")), DomainError);
}

TEST_CASE("logit round trip and stable log-sigmoid") {
  for (double x : {1e-9, 1e-4, 0.1, 0.37, 0.5, 0.81, 0.999, 1 - 1e-9}) {
    const double back = inverse_logit(logit_transform(x).value);
    CHECK(std::abs(back - x) <= 1e-12 * x);
    const auto t = logit_transform(x);
    CHECK(t.log_jacobian == doctest::Approx(std::log(x) + std::log1p(-x)).epsilon(1e-12));
  }
  CHECK(log_inverse_logit(-800.0) == doctest::Approx(-800.0));
  CHECK(log1m_inverse_logit(800.0) == doctest::Approx(-800.0));
  CHECK(std::isfinite(log_inverse_logit(800.0)));
}

TEST_CASE("check_gradient on an exact quadratic") {
  auto model = standard_normal(4);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  std::vector<Vector> points;
  for (int i = 0; i < 20; ++i) points.push_back({u(rng), u(rng), u(rng), u(rng)});
  CHECK(check_gradient(model, points) < 1e-7);

  DensityModel wrong = model;
  wrong.logp_and_grad = [](std::span<const double> x, std::span<double> g) {
    double lp = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      lp -= 0.5 * x[i] * x[i];
      g[i] = -2.0 * x[i];
    }
    return lp;
  };
  CHECK(check_gradient(wrong, points) > 0.1);
}

TEST_CASE("NUTS on a 1D standard normal") {
  ModelHyperparams hyper;
  const auto chains = nuts_sample(standard_normal(), hyper, 20240611);
  REQUIRE(chains.size() == 5);
  for (const auto& c : chains) {
    CHECK(c.iterations() == 1000);
    CHECK(c.step_size > 0);
    CHECK(c.accept_stats.size() == 1000);
  }
  const auto draws = pooled(chains);
  CHECK(std::abs(oracle::mean(draws)) < 0.1);
  CHECK(std::abs(oracle::variance(draws) - 1.0) < 0.15);
  CHECK(oracle::ks_standard_normal(draws) < 0.02);
}

TEST_CASE("NUTS recovers a conjugate Beta-Binomial posterior in logit space") {
  // Beta(2, 8) prior, 8 upvotes, 0 downvotes: posterior Beta(10, 8).
  DensityModel m;
  m.dim = 1;
  m.logp_and_grad = [](std::span<const double> x, std::span<double> g) {
    const double q = inverse_logit(x[0]);
    g[0] = 10.0 * (1.0 - q) - 8.0 * q;
    return 10.0 * log_inverse_logit(x[0]) + 8.0 * log1m_inverse_logit(x[0]);
  };
  const auto chains = nuts_sample(m, ModelHyperparams{}, 7);
  auto draws = pooled(chains);
  for (auto& y : draws) y = inverse_logit(y);
  CHECK(std::abs(oracle::mean(draws) - 10.0 / 18.0) < 0.01);
}

TEST_CASE("NUTS is reproducible for a fixed seed") {
  ModelHyperparams hyper;
  hyper.warmup_iters = 200;
  hyper.sample_iters = 200;
  const auto a = nuts_sample(standard_normal(3), hyper, 99);
  const auto b = nuts_sample(standard_normal(3), hyper, 99);
  const auto c = nuts_sample(standard_normal(3), hyper, 100);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].samples == b[i].samples);
    CHECK(a[i].step_size == b[i].step_size);
  }
  CHECK(a[0].samples != c[0].samples);
  CHECK(a[0].samples != a[1].samples);
}

TEST_CASE("NUTS error paths") {
  DensityModel empty;
  empty.logp_and_grad = [](std::span<const double>, std::span<double>) { return 0.0; };
  CHECK_THROWS_AS(nuts_sample(empty, ModelHyperparams{}, 1), InitializationError);

  DensityModel nowhere;
  nowhere.dim = 2;
  nowhere.logp_and_grad = [](std::span<const double>, std::span<double>) { return std::nan(""); };
  CHECK_THROWS_AS(nuts_sample(nowhere, ModelHyperparams{}, 1), InitializationError);

  // Finite only for the first few evaluations: every later trajectory diverges.
  auto calls = std::make_shared<std::atomic<int>>(0);
  DensityModel cliff;
  cliff.dim = 1;
  cliff.logp_and_grad = [calls](std::span<const double> x, std::span<double> g) {
    g[0] = -x[0];
    if (calls->fetch_add(1) > 3) return -std::numeric_limits<double>::infinity();
    return -0.5 * x[0] * x[0];
  };
  ModelHyperparams hyper;
  hyper.chains = 1;
  hyper.warmup_iters = 5;
  hyper.sample_iters = 20;
  try {
    nuts_sample(cliff, hyper, 1);
    FAIL("expected a sampling failure");
  } catch (const SamplingError& e) {
    CHECK(std::string(e.what()).find("chain 0") != std::string::npos);
  }
}

TEST_CASE("r_hat on mixed and unmixed chains") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> tiny(0.0, 1e-6), unit(0.0, 1.0);
  ChainDraws same(4, std::vector<double>(500));
  for (auto& c : same)
    for (auto& x : c) x = 3.0 + tiny(rng);
  CHECK(std::abs(r_hat(same) - 1.0) < 0.01);

  ChainDraws apart(2, std::vector<double>(500));
  for (auto& x : apart[0]) x = -5.0 + unit(rng);
  for (auto& x : apart[1]) x = 5.0 + unit(rng);
  CHECK(r_hat(apart) > 1.5);

  CHECK_THROWS_AS(r_hat(ChainDraws{{1, 2, 3, 4, 5}}), DiagnosticError);
  CHECK_THROWS_AS(effective_sample_size(ChainDraws{{1, 2, 3, 4}}), DiagnosticError);
  CHECK_THROWS_AS(r_hat(ChainDraws{{1, 2, 3}, {1, 2, 3}}), DiagnosticError);
}

TEST_CASE("ESS of i.i.d. draws is close to the draw count") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> unit(0.0, 1.0);
  ChainDraws iid(5, std::vector<double>(1000));
  for (auto& c : iid)
    for (auto& x : c) x = unit(rng);
  const double ess = effective_sample_size(iid);
  CHECK(ess > 4000.0);
  CHECK(ess < 6000.0);

  // AR(1) with phi = 0.9 has integrated autocorrelation time (1 + phi) / (1 - phi) = 19.
  ChainDraws ar(5, std::vector<double>(4000));
  for (auto& c : ar) {
    double x = unit(rng);
    for (auto& v : c) {
      x = 0.9 * x + std::sqrt(1 - 0.81) * unit(rng);
      v = x;
    }
  }
  const double ar_ess = effective_sample_size(ar);
  CHECK(ar_ess > 20000.0 / 19.0 * 0.7);
  CHECK(ar_ess < 20000.0 / 19.0 * 1.3);
}

TEST_CASE("Krippendorff alpha examples") {
  std::vector<std::vector<int>> agree(5, std::vector<int>{0, 1, 1, 0, 2, 1});
  CHECK(krippendorff_alpha_nominal(agree) == doctest::Approx(1.0));

  std::vector<std::vector<int>> constant(3, std::vector<int>(10, 1));
  CHECK(krippendorff_alpha_nominal(constant) == 1.0);

  std::vector<std::vector<int>> inverted(2, std::vector<int>(1000));
  for (int i = 0; i < 1000; ++i) {
    inverted[0][i] = i % 2;
    inverted[1][i] = 1 - i % 2;
  }
  CHECK(krippendorff_alpha_nominal(inverted) == doctest::Approx(-1.0).epsilon(0.002));

  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> three(0, 2);
  std::vector<std::vector<int>> chance(2, std::vector<int>(10000));
  for (auto& r : chance)
    for (auto& x : r) x = three(rng);
  CHECK(std::abs(krippendorff_alpha_nominal(chance)) < 0.05);

  // Textbook check: two raters, four items, one disagreement, binary.
  // o = {AA: 2, BB: 4, AB: 1, BA: 1}, n = 8, n_A = 3, n_B = 5:
  // alpha = 1 - 7 * 2 / (2 * 3 * 5) = 8 / 15.
  std::vector<std::vector<int>> small{{0, 1, 1, 0}, {0, 1, 1, 1}};
  CHECK(krippendorff_alpha_nominal(small) == doctest::Approx(1.0 - 7.0 * 2.0 / 30.0));

  CHECK_THROWS_AS(krippendorff_alpha_nominal({{0, 1}}), DiagnosticError);
  CHECK_THROWS_AS(krippendorff_alpha_nominal({{}, {}}), DiagnosticError);
}
