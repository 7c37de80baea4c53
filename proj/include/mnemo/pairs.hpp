#pragma once

#include <string>
#include <vector>

#include "mnemo/types.hpp"

namespace mnemo {

/// Candidates generated for one term; every entry needs a sequence_logprob.
struct CandidateSet {
  std::string term_id;
  std::vector<Mnemonic> candidates;
};

/// exp(logprob_a) + exp(logprob_b) - rouge1(text_a, text_b).
/// Throws ArgumentError when either logprob is missing.
double pair_reward(const Mnemonic& a, const Mnemonic& b);

/// Highest-reward unordered pair {i < j}; A is the earlier candidate. Equal rewards keep
/// the lexicographically smallest (i, j). The pair id is "<term_id>:<a.id>:<b.id>".
/// Throws ArgumentError for fewer than two candidates, a missing logprob or a
/// candidate whose term_id differs from the set's.
MnemonicPair select_pair(const CandidateSet& set);

}  // namespace mnemo
