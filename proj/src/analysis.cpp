#include "mnemo/analysis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <thread>

#include "mnemo/error.hpp"
#include "mnemo/study.hpp"

namespace mnemo {

namespace {

double entropy(const std::array<int, 3>& counts) {
  const double n = counts[0] + counts[1] + counts[2];
  double h = 0.0;
  for (int c : counts)
    if (c > 0) h -= (c / n) * std::log(c / n);
  return h;
}

template <typename It>
double sample_variance(It first, It last) {
  const double n = static_cast<double>(last - first);
  double mean = 0.0;
  for (It it = first; it != last; ++it) mean += *it;
  mean /= n;
  double ss = 0.0;
  for (It it = first; it != last; ++it) ss += (*it - mean) * (*it - mean);
  return ss / (n - 1.0);
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Runs `replicate(rng)` for every replicate index across worker threads and averages.
template <typename F>
double monte_carlo(std::uint64_t seed, std::uint64_t stream, int replicates, const F& replicate) {
  std::vector<double> values(replicates);
  const unsigned workers =
      std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(), replicates));
  auto run = [&](unsigned w) {
    for (int r = static_cast<int>(w); r < replicates; r += static_cast<int>(workers)) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(r)};
      std::mt19937_64 rng(seq);
      values[r] = replicate(rng);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(run, w);
  run(0);
  for (auto& t : pool) t.join();
  return mean_of(values);
}

}  // namespace

std::optional<Agreement> raw_agreement(std::span<const std::optional<Choice>> x,
                                       std::span<const std::optional<Choice>> y) {
  if (x.size() != y.size())
    throw ArgumentError("raw_agreement: label lists differ in length (" +
                        std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  std::size_t n = 0, same = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!x[i] || !y[i] || *x[i] == Choice::Tie || *y[i] == Choice::Tie) continue;
    ++n;
    if (*x[i] == *y[i]) ++same;
  }
  if (n == 0) return std::nullopt;
  return Agreement{static_cast<double>(same) / static_cast<double>(n), n};
}

std::optional<double> pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size())
    throw ArgumentError("pearson_r: series differ in length");
  const std::size_t n = xs.size();
  if (n < 2) return std::nullopt;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::pair<double, double>> rating_turn_pairs(const std::vector<FeedbackBundle>& bundles) {
  std::vector<std::pair<double, double>> out;
  for (const auto& b : bundles) {
    for (Side side : {Side::A, Side::B}) {
      std::map<std::string, int> last_rating;
      for (const auto& r : b.likert(side)) last_rating[r.user_id] = r.value;
      for (const auto& t : b.turns(side)) {
        auto it = last_rating.find(t.user_id);
        if (it != last_rating.end()) out.emplace_back(it->second, t.turns);
      }
    }
  }
  return out;
}

NoiseReport noise_metrics(const std::vector<FeedbackBundle>& bundles, std::uint64_t seed,
                          int replicates) {
  if (bundles.empty()) throw ArgumentError("noise_metrics: no bundles");
  if (replicates < 1) throw ArgumentError("noise_metrics: replicates must be at least 1");

  std::vector<int> vote_counts;
  std::vector<int> rating_counts;
  std::vector<int> turn_counts;
  std::vector<double> entropies, rating_vars, turn_vars;
  std::vector<int> pooled_turns;
  for (const auto& b : bundles) {
    if (!b.pairwise_votes.empty()) {
      std::array<int, 3> c{};
      for (const auto& v : b.pairwise_votes) ++c[static_cast<int>(v.choice)];
      entropies.push_back(entropy(c));
      vote_counts.push_back(static_cast<int>(b.pairwise_votes.size()));
    }
    for (Side side : {Side::A, Side::B}) {
      const auto& ratings = b.likert(side);
      if (ratings.size() >= 2) {
        std::vector<double> v;
        for (const auto& r : ratings) v.push_back(r.value);
        rating_vars.push_back(sample_variance(v.begin(), v.end()));
        rating_counts.push_back(static_cast<int>(v.size()));
      }
      const auto& turns = b.turns(side);
      for (const auto& t : turns) pooled_turns.push_back(t.turns);
      if (turns.size() >= 2) {
        std::vector<double> v;
        for (const auto& t : turns) v.push_back(t.turns);
        turn_vars.push_back(sample_variance(v.begin(), v.end()));
        turn_counts.push_back(static_cast<int>(v.size()));
      }
    }
  }

  NoiseReport report;
  report.pairwise.items = entropies.size();
  report.rating.items = rating_vars.size();
  report.learning.items = turn_vars.size();

  if (!entropies.empty()) {
    report.pairwise.observed = mean_of(entropies);
    report.pairwise.random_baseline = monte_carlo(seed, 1, replicates, [&](std::mt19937_64& rng) {
      std::uniform_int_distribution<int> vote(0, 2);
      double total = 0.0;
      for (int n : vote_counts) {
        std::array<int, 3> c{};
        for (int k = 0; k < n; ++k) ++c[vote(rng)];
        total += entropy(c);
      }
      return total / static_cast<double>(vote_counts.size());
    });
  }
  auto variance_baseline = [&](const std::vector<int>& counts, auto draw) {
    return [&counts, draw](std::mt19937_64& rng) {
      double total = 0.0;
      std::vector<double> v;
      for (int n : counts) {
        v.resize(n);
        for (int k = 0; k < n; ++k) v[k] = draw(rng);
        total += sample_variance(v.begin(), v.end());
      }
      return total / static_cast<double>(counts.size());
    };
  };
  if (!rating_vars.empty()) {
    report.rating.observed = mean_of(rating_vars);
    report.rating.random_baseline = monte_carlo(
        seed, 2, replicates,
        variance_baseline(rating_counts, [](std::mt19937_64& rng) {
          return std::uniform_int_distribution<int>(1, 5)(rng);
        }));
  }
  if (!turn_vars.empty()) {
    report.learning.observed = mean_of(turn_vars);
    const auto& pool = pooled_turns;
    report.learning.random_baseline = monte_carlo(
        seed, 3, replicates,
        variance_baseline(turn_counts, [&pool](std::mt19937_64& rng) {
          std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
          return pool[pick(rng)];
        }));
  }
  return report;
}

Choice debias_judge(Choice ab, Choice ba) {
  if (ab == Choice::A && ba == Choice::B) return Choice::A;
  if (ab == Choice::B && ba == Choice::A) return Choice::B;
  return Choice::Tie;
}

std::optional<double> sign_test(std::int64_t wins_a, std::int64_t wins_b) {
  if (wins_a < 0 || wins_b < 0) throw ArgumentError("sign_test: counts must be non-negative");
  const std::int64_t n = wins_a + wins_b;
  if (n == 0) return std::nullopt;
  const std::int64_t k = std::min(wins_a, wins_b);
  // log P(X <= k) for X ~ Binomial(n, 1/2), accumulated by log-sum-exp.
  const double log_half_n = n * std::log(0.5);
  const double lg_n1 = std::lgamma(static_cast<double>(n) + 1.0);
  auto log_term = [&](std::int64_t i) {
    return lg_n1 - std::lgamma(static_cast<double>(i) + 1.0) -
           std::lgamma(static_cast<double>(n - i) + 1.0) + log_half_n;
  };
  const double top = log_term(k);  // largest term for k <= n/2
  double sum = 0.0;
  for (std::int64_t i = 0; i <= k; ++i) sum += std::exp(log_term(i) - top);
  const double p = 2.0 * std::exp(top + std::log(sum));
  return std::min(1.0, p);
}

AnalysisReport analyze(const std::vector<FeedbackBundle>& bundles, int min_labels,
                       std::uint64_t seed, int replicates) {
  AnalysisReport r;
  r.pairs = bundles.size();
  std::vector<std::optional<Choice>> pair, rate, learn;
  for (const auto& b : bundles) {
    const auto l = derive_labels(b, min_labels);
    pair.push_back(l.y_pair);
    rate.push_back(l.y_rate);
    learn.push_back(l.y_learn);
  }
  r.pair_vs_rate = raw_agreement(pair, rate);
  r.rate_vs_learn = raw_agreement(rate, learn);
  r.pair_vs_learn = raw_agreement(pair, learn);
  const auto points = rating_turn_pairs(bundles);
  std::vector<double> xs, ys;
  for (const auto& [x, y] : points) {
    xs.push_back(x);
    ys.push_back(y);
  }
  r.rating_turn_correlation = pearson_r(xs, ys);
  r.rating_turn_points = points.size();
  if (!bundles.empty()) r.noise = noise_metrics(bundles, seed, replicates);
  return r;
}

}  // namespace mnemo
