#pragma once

#include <compare>
#include <optional>
#include <string>
#include <vector>

#include "mnemo/types.hpp"

namespace mnemo {

struct TallyRecord {
  std::string mnemonic_id;
  VoteTally tally;
};

/// A flat collection of typed records, as loaded from any supported file.
struct Dataset {
  std::vector<Term> terms;
  std::vector<Mnemonic> mnemonics;
  std::vector<TallyRecord> tallies;
  std::vector<MnemonicPair> pairs;
  std::vector<FeedbackBundle> feedback;
};

struct Violation {
  std::string record_id;
  std::string invariant;

  auto operator<=>(const Violation&) const = default;
};

/// Checks every record invariant. The report is sorted, so it does not depend on record order.
std::vector<Violation> validate_dataset(const Dataset& records);

/// Invariant names used in violation reports.
namespace invariant {
inline constexpr const char* kTermSurface = "term.surface_non_empty";
inline constexpr const char* kTermDefinition = "term.definition_non_empty";
inline constexpr const char* kTermUniqueId = "term.id_unique";
inline constexpr const char* kMnemonicText = "mnemonic.text_non_empty";
inline constexpr const char* kMnemonicLogprob = "mnemonic.logprob_non_positive";
inline constexpr const char* kTallyNonNegative = "tally.non_negative";
inline constexpr const char* kPairTermMatch = "pair.mnemonic_term_matches";
inline constexpr const char* kPairDistinct = "pair.mnemonics_distinct";
inline constexpr const char* kLikertRange = "feedback.likert_in_1_5";
inline constexpr const char* kTurnsPositive = "feedback.turns_positive";
inline constexpr const char* kUserOnce = "feedback.user_once_per_channel";
}  // namespace invariant

}  // namespace mnemo
