#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mnemo {

/// Outcome of a preference elicitation over a mnemonic pair.
enum class Choice { A, B, Tie };

/// One member of a mnemonic pair.
enum class Side { A, B };

std::string_view to_string(Choice c);
std::string_view to_string(Side s);
/// Accepts "A", "B", "tie"/"TIE" (and "a", "b"). Returns nullopt otherwise.
std::optional<Choice> parse_choice(std::string_view text);
std::optional<Side> parse_side(std::string_view text);

inline Side other(Side s) { return s == Side::A ? Side::B : Side::A; }
inline Choice swap_choice(Choice c) {
  return c == Choice::A ? Choice::B : c == Choice::B ? Choice::A : Choice::Tie;
}
inline Choice to_choice(Side s) { return s == Side::A ? Choice::A : Choice::B; }

struct Term {
  std::string id;
  std::string surface;
  std::string definition;
  std::optional<std::string> example_sentence;
};

struct Mnemonic {
  std::string id;
  std::string term_id;
  std::string text;
  /// Natural-log sequence probability under the generating model.
  std::optional<double> sequence_logprob;
};

struct VoteTally {
  std::int64_t upvotes = 0;
  std::int64_t downvotes = 0;
};

struct MnemonicPair {
  std::string id;
  std::string term_id;
  Mnemonic a;
  Mnemonic b;

  const Mnemonic& side(Side s) const { return s == Side::A ? a : b; }
};

struct Vote {
  std::string user_id;
  Choice choice;
};

struct Rating {
  std::string user_id;
  int value;
};

struct TurnCount {
  std::string user_id;
  int turns;
};

/// Everything observed about one pair across the three feedback channels.
struct FeedbackBundle {
  std::string pair_id;
  std::vector<Vote> pairwise_votes;
  std::vector<Rating> likert_a;
  std::vector<Rating> likert_b;
  std::vector<TurnCount> turns_a;
  std::vector<TurnCount> turns_b;

  std::vector<Rating>& likert(Side s) { return s == Side::A ? likert_a : likert_b; }
  const std::vector<Rating>& likert(Side s) const { return s == Side::A ? likert_a : likert_b; }
  std::vector<TurnCount>& turns(Side s) { return s == Side::A ? turns_a : turns_b; }
  const std::vector<TurnCount>& turns(Side s) const { return s == Side::A ? turns_a : turns_b; }

  bool empty() const {
    return pairwise_votes.empty() && likert_a.empty() && likert_b.empty() && turns_a.empty() &&
           turns_b.empty();
  }
};

/// Exchanges the roles of A and B in every channel (votes are relabelled).
FeedbackBundle swap_sides(const FeedbackBundle& bundle);

struct DerivedLabels {
  std::string pair_id;
  std::optional<Choice> y_pair;
  std::optional<Choice> y_rate;
  std::optional<Choice> y_learn;
  std::optional<Choice> y_bayes;
};

struct ConvergenceReport {
  std::vector<std::string> parameter_names;
  std::vector<double> r_hat;
  std::vector<double> ess;
  double krippendorff_alpha = 1.0;
  std::size_t divergences = 0;
  bool converged = false;
};

/// Thresholds a fit must clear to be called converged.
inline constexpr double kMaxRHat = 1.01;
inline constexpr double kMinEss = 1000.0;
inline constexpr double kMinKrippendorffAlpha = 0.75;

/// Applies the convergence thresholds to r_hat, ess and alpha.
bool meets_convergence_thresholds(const ConvergenceReport& report);

struct EffectivenessPosterior {
  std::string pair_id;
  double theta_a_mean = 0.5;
  double theta_b_mean = 0.5;
  std::vector<std::vector<double>> theta_a_samples;  // [chain][draw]
  std::vector<std::vector<double>> theta_b_samples;
  double prob_a_gt_b = 0.5;
  ConvergenceReport diagnostics;  // restricted to this pair's two thetas
};

struct AlignmentExample {
  std::string prompt;
  std::string chosen;
  std::optional<std::string> rejected;
};

struct ModelHyperparams {
  double quality_prior_alpha = 2.0;
  double quality_prior_beta = 8.0;
  double dpo_beta = 0.1;
  double tfidf_cutoff = 0.15;
  int min_labels_per_pair = 3;
  int chains = 5;
  int warmup_iters = 1000;
  int sample_iters = 1000;
  double nuts_target_accept = 0.8;
  int nuts_max_depth = 10;

  /// Throws ArgumentError when any field is outside its allowed range.
  void validate() const;
};

}  // namespace mnemo
