#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mnemo/types.hpp"

namespace mnemo {

enum class PromptStyle {
  Training,    // "Term: v\nMnemonic:"
  Generation,  // "### Term: v\n### Mnemonic: v sounds like"
};

std::string format_prompt(std::string_view surface, PromptStyle style = PromptStyle::Training);

/// Output text for a prompt style. Under Generation a leading "<surface> sounds like"
/// (case-insensitive) is removed, since the prompt already carries it.
std::string format_completion(std::string_view surface, std::string_view text, PromptStyle style);

struct TermMnemonic {
  Term term;
  Mnemonic mnemonic;
};

std::vector<AlignmentExample> export_finetune(std::span<const TermMnemonic> items,
                                              PromptStyle style = PromptStyle::Training);

enum class DpoPolicy { PairOnly, BayesOnly, BayesAugmented };
std::string_view to_string(DpoPolicy p);
std::optional<DpoPolicy> parse_dpo_policy(std::string_view text);

/// One example per labelled pair the policy admits, in label order. ArgumentError when a
/// label names an unknown pair or a pair names an unknown term, and when a Bayes policy
/// meets labels none of which carries y_bayes.
std::vector<AlignmentExample> build_dpo_dataset(std::span<const Term> terms,
                                                std::span<const MnemonicPair> pairs,
                                                std::span<const DerivedLabels> labels,
                                                DpoPolicy policy,
                                                PromptStyle style = PromptStyle::Training);

/// -log sigmoid(beta * ((policy_w - ref_w) - (policy_l - ref_l))). ArgumentError for beta <= 0.
double dpo_loss(double beta, double logp_policy_w, double logp_ref_w, double logp_policy_l,
                double logp_ref_l);

struct DpoLogprobs {
  double policy_w;
  double ref_w;
  double policy_l;
  double ref_l;
};

/// Mean of dpo_loss over the batch. ArgumentError for an empty batch or beta <= 0.
double dpo_loss_mean(double beta, std::span<const DpoLogprobs> batch);

}  // namespace mnemo
