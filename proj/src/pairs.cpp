#include "mnemo/pairs.hpp"

#include <cmath>

#include "mnemo/error.hpp"
#include "mnemo/text.hpp"

namespace mnemo {

double pair_reward(const Mnemonic& a, const Mnemonic& b) {
  if (!a.sequence_logprob || !b.sequence_logprob)
    throw ArgumentError("pair_reward needs sequence log-probabilities for both mnemonics");
  return std::exp(*a.sequence_logprob) + std::exp(*b.sequence_logprob) - rouge1(a.text, b.text);
}

MnemonicPair select_pair(const CandidateSet& set) {
  const auto& c = set.candidates;
  if (c.size() < 2) throw ArgumentError("term " + set.term_id + " has fewer than two candidates");
  for (const auto& m : c) {
    if (!m.sequence_logprob) throw ArgumentError("candidate " + m.id + " has no sequence logprob");
    if (m.term_id != set.term_id)
      throw ArgumentError("candidate " + m.id + " belongs to term " + m.term_id);
  }
  std::size_t best_i = 0, best_j = 1;
  double best = pair_reward(c[0], c[1]);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      const double r = pair_reward(c[i], c[j]);
      if (r > best) {
        best = r;
        best_i = i;
        best_j = j;
      }
    }
  }
  return MnemonicPair{set.term_id + ":" + c[best_i].id + ":" + c[best_j].id, set.term_id,
                      c[best_i], c[best_j]};
}

}  // namespace mnemo
