#include "mnemo/types.hpp"

#include <algorithm>

#include "mnemo/error.hpp"

namespace mnemo {

std::string_view to_string(Choice c) {
  switch (c) {
    case Choice::A:
      return "A";
    case Choice::B:
      return "B";
    case Choice::Tie:
      return "tie";
  }
  return "tie";
}

std::string_view to_string(Side s) { return s == Side::A ? "A" : "B"; }

std::optional<Choice> parse_choice(std::string_view text) {
  if (text == "A" || text == "a") return Choice::A;
  if (text == "B" || text == "b") return Choice::B;
  if (text == "tie" || text == "TIE" || text == "Tie") return Choice::Tie;
  return std::nullopt;
}

std::optional<Side> parse_side(std::string_view text) {
  if (text == "A" || text == "a") return Side::A;
  if (text == "B" || text == "b") return Side::B;
  return std::nullopt;
}

FeedbackBundle swap_sides(const FeedbackBundle& bundle) {
  FeedbackBundle out;
  out.pair_id = bundle.pair_id;
  out.pairwise_votes = bundle.pairwise_votes;
  for (auto& v : out.pairwise_votes) v.choice = swap_choice(v.choice);
  out.likert_a = bundle.likert_b;
  out.likert_b = bundle.likert_a;
  out.turns_a = bundle.turns_b;
  out.turns_b = bundle.turns_a;
  return out;
}

bool meets_convergence_thresholds(const ConvergenceReport& report) {
  const bool rhat_ok = std::all_of(report.r_hat.begin(), report.r_hat.end(),
                                   [](double r) { return r < kMaxRHat; });
  const bool ess_ok =
      std::all_of(report.ess.begin(), report.ess.end(), [](double e) { return e > kMinEss; });
  return rhat_ok && ess_ok && report.krippendorff_alpha > kMinKrippendorffAlpha;
}

void ModelHyperparams::validate() const {
  if (!(quality_prior_alpha > 0) || !(quality_prior_beta > 0))
    throw ArgumentError("quality prior parameters must be positive");
  if (!(dpo_beta > 0)) throw ArgumentError("dpo_beta must be positive");
  if (!(tfidf_cutoff >= 0 && tfidf_cutoff <= 1))
    throw ArgumentError("tfidf_cutoff must lie in [0, 1]");
  if (min_labels_per_pair < 1) throw ArgumentError("min_labels_per_pair must be positive");
  if (chains < 1) throw ArgumentError("chains must be positive");
  if (warmup_iters < 1 || sample_iters < 1)
    throw ArgumentError("warmup_iters and sample_iters must be positive");
  if (!(nuts_target_accept > 0 && nuts_target_accept < 1))
    throw ArgumentError("nuts_target_accept must lie in (0, 1)");
  if (nuts_max_depth < 1) throw ArgumentError("nuts_max_depth must be positive");
}

}  // namespace mnemo
