#include "mnemo/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>
#include <string_view>

namespace mnemo {
namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

template <typename Entry>
void check_unique_users(const std::string& pair_id, const std::vector<Entry>& entries,
                        const char* channel, std::vector<Violation>& out) {
  std::set<std::string> seen;
  for (const auto& e : entries) {
    if (!seen.insert(e.user_id).second) {
      out.push_back({pair_id, std::string(invariant::kUserOnce) + ":" + channel});
      return;
    }
  }
}

void check_mnemonic(const Mnemonic& m, std::vector<Violation>& out) {
  if (blank(m.text)) out.push_back({m.id, invariant::kMnemonicText});
  if (m.sequence_logprob && !(*m.sequence_logprob <= 0.0))
    out.push_back({m.id, invariant::kMnemonicLogprob});
}

}  // namespace

std::vector<Violation> validate_dataset(const Dataset& records) {
  std::vector<Violation> out;

  std::set<std::string> term_ids;
  for (const auto& t : records.terms) {
    if (blank(t.surface)) out.push_back({t.id, invariant::kTermSurface});
    if (blank(t.definition)) out.push_back({t.id, invariant::kTermDefinition});
    if (!term_ids.insert(t.id).second) out.push_back({t.id, invariant::kTermUniqueId});
  }

  for (const auto& m : records.mnemonics) check_mnemonic(m, out);

  for (const auto& r : records.tallies) {
    if (r.tally.upvotes < 0 || r.tally.downvotes < 0)
      out.push_back({r.mnemonic_id, invariant::kTallyNonNegative});
  }

  for (const auto& p : records.pairs) {
    if (p.a.term_id != p.term_id || p.b.term_id != p.term_id)
      out.push_back({p.id, invariant::kPairTermMatch});
    if (p.a.id == p.b.id) out.push_back({p.id, invariant::kPairDistinct});
    check_mnemonic(p.a, out);
    check_mnemonic(p.b, out);
  }

  for (const auto& f : records.feedback) {
    for (Side s : {Side::A, Side::B}) {
      const auto& ratings = f.likert(s);
      if (std::any_of(ratings.begin(), ratings.end(),
                      [](const Rating& r) { return r.value < 1 || r.value > 5; }))
        out.push_back({f.pair_id, invariant::kLikertRange});
      const auto& turns = f.turns(s);
      if (std::any_of(turns.begin(), turns.end(),
                      [](const TurnCount& t) { return t.turns < 1; }))
        out.push_back({f.pair_id, invariant::kTurnsPositive});
    }
    check_unique_users(f.pair_id, f.pairwise_votes, "pairwise", out);
    check_unique_users(f.pair_id, f.likert_a, "likert_a", out);
    check_unique_users(f.pair_id, f.likert_b, "likert_b", out);
    check_unique_users(f.pair_id, f.turns_a, "turns_a", out);
    check_unique_users(f.pair_id, f.turns_b, "turns_b", out);
  }

  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mnemo
