#include "mnemo/diagnostics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "mnemo/error.hpp"

namespace mnemo::inference {
namespace {

void check_chains(const ChainDraws& chains) {
  if (chains.size() < 2) throw DiagnosticError("at least two chains are required");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw DiagnosticError("chains must have equal length");
  }
  if (n < 4) throw DiagnosticError("each chain needs at least four draws");
}

ChainDraws split(const ChainDraws& chains) {
  const std::size_t half = chains.front().size() / 2;
  const std::size_t n = chains.front().size();
  ChainDraws out;
  out.reserve(chains.size() * 2);
  for (const auto& c : chains) {
    out.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(half));
    out.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(n - half), c.end());
  }
  return out;
}

/// Replaces every draw by the normal score of its pooled fractional rank.
ChainDraws rank_normalize(const ChainDraws& chains) {
  std::vector<std::pair<double, std::size_t>> pooled;
  const std::size_t n = chains.front().size();
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t i = 0; i < n; ++i) pooled.emplace_back(chains[c][i], c * n + i);
  std::sort(pooled.begin(), pooled.end());

  const double total = static_cast<double>(pooled.size());
  const boost::math::normal standard;
  ChainDraws out(chains.size(), std::vector<double>(n));
  std::size_t i = 0;
  while (i < pooled.size()) {
    std::size_t j = i;
    while (j + 1 < pooled.size() && pooled[j + 1].first == pooled[i].first) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // average rank of ties
    const double z = boost::math::quantile(standard, (rank - 0.375) / (total + 0.25));
    for (std::size_t k = i; k <= j; ++k) {
      const std::size_t flat = pooled[k].second;
      out[flat / n][flat % n] = z;
    }
    i = j + 1;
  }
  return out;
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

double basic_r_hat(const ChainDraws& chains) {
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(sample_variance(c));
  }
  const double within = mean(vars);
  const double between_over_n = sample_variance(means);
  const double var_plus = (n - 1.0) / n * within + between_over_n;
  if (within <= 0.0) return between_over_n > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  return std::sqrt(var_plus / within);
}

/// Biased autocovariance of `x` at `lag`.
double autocovariance(const std::vector<double>& x, double m, std::size_t lag) {
  const std::size_t n = x.size();
  double s = 0.0;
  for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - m) * (x[i + lag] - m);
  return s / static_cast<double>(n);
}

double basic_ess(const ChainDraws& chains) {
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> means(m), acov0(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean(chains[c]);
    acov0[c] = autocovariance(chains[c], means[c], 0);
    chain_var[c] = acov0[c] * static_cast<double>(n) / static_cast<double>(n - 1);
  }
  const double mean_var = mean(chain_var);
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) var_plus += sample_variance(means);
  if (!(var_plus > 0.0)) return static_cast<double>(m * n);

  auto mean_acov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += autocovariance(chains[c], means[c], lag);
    return s / static_cast<double>(m);
  };

  std::vector<double> rho(n, 0.0);
  std::size_t t = 0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[0] = rho_even;
  rho[1] = rho_odd;
  // Initial positive sequence.
  while (t + 5 < n && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    t += 2;
    rho_even = 1.0 - (mean_var - mean_acov(t)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[t] = rho_even;
      rho[t + 1] = rho_odd;
    }
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t] = rho_even;

  // Initial monotone sequence.
  for (std::size_t k = 0; k + 4 <= max_t; k += 2) {
    if (rho[k + 2] + rho[k + 3] > rho[k] + rho[k + 1]) {
      rho[k + 2] = 0.5 * (rho[k] + rho[k + 1]);
      rho[k + 3] = rho[k + 2];
    }
  }

  const double total = static_cast<double>(m * n);
  double tau = -1.0 + 2.0 * std::accumulate(rho.begin(), rho.begin() + static_cast<std::ptrdiff_t>(max_t), 0.0) +
               rho[max_t];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

}  // namespace

double r_hat(const ChainDraws& chains) {
  check_chains(chains);
  const ChainDraws halves = split(chains);
  const double bulk = basic_r_hat(rank_normalize(halves));

  std::vector<double> pooled;
  for (const auto& c : halves) pooled.insert(pooled.end(), c.begin(), c.end());
  std::nth_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2),
                   pooled.end());
  double median = pooled[pooled.size() / 2];
  if (pooled.size() % 2 == 0) {
    const double lower =
        *std::max_element(pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(pooled.size() / 2));
    median = 0.5 * (median + lower);
  }
  ChainDraws folded = halves;
  for (auto& c : folded)
    for (auto& x : c) x = std::abs(x - median);
  const double tail = basic_r_hat(rank_normalize(folded));
  return std::max(bulk, tail);
}

double effective_sample_size(const ChainDraws& chains) {
  check_chains(chains);
  return basic_ess(rank_normalize(split(chains)));
}

double krippendorff_alpha_nominal(const std::vector<std::vector<int>>& labels) {
  if (labels.size() < 2) throw DiagnosticError("Krippendorff alpha needs at least two raters");
  const std::size_t items = labels.front().size();
  if (items == 0) throw DiagnosticError("Krippendorff alpha needs at least one item");
  for (const auto& r : labels)
    if (r.size() != items) throw DiagnosticError("every rater must label every item");

  // Coincidence matrix over category codes.
  std::map<std::pair<int, int>, double> coincidence;
  std::map<int, double> marginal;
  const double m = static_cast<double>(labels.size());
  for (std::size_t u = 0; u < items; ++u) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (std::size_t j = 0; j < labels.size(); ++j) {
        if (i == j) continue;
        coincidence[{labels[i][u], labels[j][u]}] += 1.0 / (m - 1.0);
      }
    }
  }
  double total = 0.0;
  for (const auto& [key, v] : coincidence) {
    marginal[key.first] += v;
    total += v;
  }
  double observed = 0.0;
  for (const auto& [key, v] : coincidence)
    if (key.first != key.second) observed += v;
  double expected = 0.0;
  for (const auto& [c, nc] : marginal)
    for (const auto& [k, nk] : marginal)
      if (c != k) expected += nc * nk;
  if (expected == 0.0) return 1.0;
  return 1.0 - (total - 1.0) * observed / expected;
}

}  // namespace mnemo::inference
