#pragma once

// Forward simulation of the effectiveness model, written independently of the library.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mnemo/types.hpp"

namespace synthetic {

struct Truth {
  double alpha_pair = 4.0;
  double beta_pair = -2.0;
  double tau = 0.15;
  std::array<double, 5> alpha_rate{-3.0, -1.5, 0.0, 1.5, 3.0};
  std::array<double, 5> beta_rate{1.5, 0.75, 0.0, -0.75, -1.5};
  double alpha_learn = 3.0;
  double beta_learn = -1.0;
};

struct Sizes {
  int votes = 20;
  int ratings_per_side = 5;
  int turns_per_side = 5;
};

struct Dataset {
  std::vector<mnemo::FeedbackBundle> bundles;
  std::vector<double> theta_a;
  std::vector<double> theta_b;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Dataset generate(std::size_t pairs, std::uint64_t seed, const Truth& truth = {},
                        const Sizes& sizes = {}) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Dataset out;
  for (std::size_t i = 0; i < pairs; ++i) {
    const double ta = unif(rng);
    const double tb = unif(rng);
    out.theta_a.push_back(ta);
    out.theta_b.push_back(tb);

    mnemo::FeedbackBundle b;
    b.pair_id = "syn-" + std::to_string(i);
    const double wa = sigmoid(truth.alpha_pair * ta + truth.beta_pair);
    const double wb = sigmoid(truth.alpha_pair * tb + truth.beta_pair);
    std::discrete_distribution<int> vote({wa, wb, truth.tau});
    for (int v = 0; v < sizes.votes; ++v) {
      const int c = vote(rng);
      b.pairwise_votes.push_back(
          {"u" + std::to_string(v), c == 0 ? mnemo::Choice::A : c == 1 ? mnemo::Choice::B : mnemo::Choice::Tie});
    }

    auto side = [&](double theta, std::vector<mnemo::Rating>& ratings,
                    std::vector<mnemo::TurnCount>& turns) {
      std::vector<double> w;
      for (std::size_t k = 0; k < 5; ++k) w.push_back(sigmoid(truth.alpha_rate[k] * theta + truth.beta_rate[k]));
      std::discrete_distribution<int> rate(w.begin(), w.end());
      for (int r = 0; r < sizes.ratings_per_side; ++r)
        ratings.push_back({"r" + std::to_string(r), rate(rng) + 1});
      std::geometric_distribution<int> failures(sigmoid(truth.alpha_learn * theta + truth.beta_learn));
      for (int t = 0; t < sizes.turns_per_side; ++t)
        turns.push_back({"t" + std::to_string(t), failures(rng) + 1});
    };
    side(ta, b.likert_a, b.turns_a);
    side(tb, b.likert_b, b.turns_b);
    out.bundles.push_back(std::move(b));
  }
  return out;
}

}  // namespace synthetic
