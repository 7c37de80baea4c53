#include "mnemo/alignment.hpp"

#include <cctype>
#include <cmath>
#include <map>

#include "mnemo/error.hpp"

namespace mnemo {

namespace {

bool starts_with_nocase(std::string_view text, std::string_view prefix) {
  if (text.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(text[i])) !=
        std::tolower(static_cast<unsigned char>(prefix[i])))
      return false;
  return true;
}

// -log(sigmoid(z)) without overflow.
double neg_log_sigmoid(double z) {
  return z >= 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

}  // namespace

std::string format_prompt(std::string_view surface, PromptStyle style) {
  std::string v(surface);
  if (style == PromptStyle::Training) return "Term: " + v + "\nMnemonic:";
  return "### Term: " + v + "\n### Mnemonic: " + v + " sounds like";
}

std::string format_completion(std::string_view surface, std::string_view text, PromptStyle style) {
  if (style == PromptStyle::Training) return std::string(text);
  const std::string prefix = std::string(surface) + " sounds like";
  if (starts_with_nocase(text, prefix)) return std::string(text.substr(prefix.size()));
  return std::string(text);
}

std::vector<AlignmentExample> export_finetune(std::span<const TermMnemonic> items,
                                              PromptStyle style) {
  std::vector<AlignmentExample> out;
  out.reserve(items.size());
  for (const auto& [term, m] : items)
    out.push_back({format_prompt(term.surface, style),
                   format_completion(term.surface, m.text, style), std::nullopt});
  return out;
}

std::string_view to_string(DpoPolicy p) {
  switch (p) {
    case DpoPolicy::PairOnly: return "PAIR_ONLY";
    case DpoPolicy::BayesOnly: return "BAYES_ONLY";
    case DpoPolicy::BayesAugmented: return "BAYES_AUGMENTED";
  }
  return "";
}

std::optional<DpoPolicy> parse_dpo_policy(std::string_view text) {
  for (auto p : {DpoPolicy::PairOnly, DpoPolicy::BayesOnly, DpoPolicy::BayesAugmented})
    if (text == to_string(p)) return p;
  return std::nullopt;
}

std::vector<AlignmentExample> build_dpo_dataset(std::span<const Term> terms,
                                                std::span<const MnemonicPair> pairs,
                                                std::span<const DerivedLabels> labels,
                                                DpoPolicy policy, PromptStyle style) {
  std::map<std::string, const Term*> term_by_id;
  for (const auto& t : terms) term_by_id[t.id] = &t;
  std::map<std::string, const MnemonicPair*> pair_by_id;
  for (const auto& p : pairs) pair_by_id[p.id] = &p;

  if (policy != DpoPolicy::PairOnly && !labels.empty()) {
    bool any = false;
    for (const auto& l : labels) any = any || l.y_bayes.has_value();
    if (!any)
      throw ArgumentError(std::string("policy ") + std::string(to_string(policy)) +
                          " needs Bayesian labels; fit the effectiveness model first");
  }

  auto decisive = [](const std::optional<Choice>& c) { return c && *c != Choice::Tie; };
  std::vector<AlignmentExample> out;
  for (const auto& l : labels) {
    auto p = pair_by_id.find(l.pair_id);
    if (p == pair_by_id.end()) throw ArgumentError("labels name unknown pair " + l.pair_id);
    auto t = term_by_id.find(p->second->term_id);
    if (t == term_by_id.end())
      throw ArgumentError("pair " + l.pair_id + " names unknown term " + p->second->term_id);

    std::optional<Choice> winner;
    switch (policy) {
      case DpoPolicy::PairOnly:
        if (decisive(l.y_pair)) winner = l.y_pair;
        break;
      case DpoPolicy::BayesOnly:
        if (decisive(l.y_bayes)) winner = l.y_bayes;
        break;
      case DpoPolicy::BayesAugmented:
        if (decisive(l.y_pair)) winner = l.y_pair;
        else if (decisive(l.y_bayes)) winner = l.y_bayes;
        break;
    }
    if (!winner) continue;
    const Side w = *winner == Choice::A ? Side::A : Side::B;
    const std::string& surface = t->second->surface;
    out.push_back({format_prompt(surface, style),
                   format_completion(surface, p->second->side(w).text, style),
                   format_completion(surface, p->second->side(other(w)).text, style)});
  }
  return out;
}

double dpo_loss(double beta, double logp_policy_w, double logp_ref_w, double logp_policy_l,
                double logp_ref_l) {
  if (!(beta > 0.0)) throw ArgumentError("dpo beta must be positive");
  return neg_log_sigmoid(beta * ((logp_policy_w - logp_ref_w) - (logp_policy_l - logp_ref_l)));
}

double dpo_loss_mean(double beta, std::span<const DpoLogprobs> batch) {
  if (batch.empty()) throw ArgumentError("dpo batch is empty");
  double total = 0.0;
  for (const auto& b : batch) total += dpo_loss(beta, b.policy_w, b.ref_w, b.policy_l, b.ref_l);
  return total / static_cast<double>(batch.size());
}

}  // namespace mnemo
