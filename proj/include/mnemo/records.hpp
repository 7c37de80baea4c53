#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mnemo/dataset.hpp"
#include "mnemo/effectiveness.hpp"
#include "mnemo/pairs.hpp"
#include "mnemo/quality.hpp"
#include "mnemo/study.hpp"
#include "mnemo/types.hpp"

namespace mnemo {

/// One row of a preference dataset: a term, its mnemonic pair and the feedback on it.
struct PreferenceRecord {
  Term term;
  MnemonicPair pair;
  FeedbackBundle feedback;
  std::optional<Side> quality_check_bad_side;
};

/// Preference rows as JSON lines or CSV with columns
///   term, mnemonic_A, mnemonic_B, pairwise_A_votes, pairwise_B_votes, pairwise_tie_votes,
///   A_likert_ratings, B_likert_ratings, A_learn_iterations, B_learn_iterations
/// plus the optional columns in `kOptionalPreferenceColumns`. List-valued CSV cells hold
/// JSON arrays. Rows without user ids get placeholder users, unique per channel.
/// Missing ids default to "pair-<row>", "term-<row>", "<pair>:A" and "<pair>:B".
/// Malformed rows raise DataError naming the row.
std::vector<PreferenceRecord> parse_preferences_jsonl(std::string_view text);
std::vector<PreferenceRecord> parse_preferences_csv(std::string_view text);
std::string format_preferences_jsonl(std::span<const PreferenceRecord> records);
std::string format_preferences_csv(std::span<const PreferenceRecord> records);

inline constexpr const char* kPreferenceColumns[] = {
    "term",           "mnemonic_A",       "mnemonic_B",       "pairwise_A_votes",
    "pairwise_B_votes", "pairwise_tie_votes", "A_likert_ratings", "B_likert_ratings",
    "A_learn_iterations", "B_learn_iterations"};
inline constexpr const char* kOptionalPreferenceColumns[] = {
    "pair_id",          "term_id",           "definition",       "example_sentence",
    "mnemonic_A_id",    "mnemonic_B_id",     "mnemonic_A_logprob", "mnemonic_B_logprob",
    "pairwise_A_users", "pairwise_B_users",  "pairwise_tie_users", "A_likert_users",
    "B_likert_users",   "A_learn_users",     "B_learn_users",    "quality_check_bad_side"};

/// Picks the format from the extension: ".csv" is CSV, anything else JSON lines.
/// NotFoundError when the file is missing.
std::vector<PreferenceRecord> read_preferences(const std::filesystem::path& path);
void write_preferences(const std::filesystem::path& path, std::span<const PreferenceRecord> records);

Dataset to_dataset(std::span<const PreferenceRecord> records);
/// One card per row; the card id is the pair id.
std::vector<Flashcard> to_flashcards(std::span<const PreferenceRecord> records);

struct SplitFeedback {
  std::vector<FeedbackBundle> bundles;  // rows without a planted side
  std::vector<QualityCheckRecord> quality_checks;  // one per vote on a planted row
};
SplitFeedback split_quality_checks(std::span<const PreferenceRecord> records);

/// Replaces each row's feedback with the bundle of the same pair id, if any.
std::vector<PreferenceRecord> with_feedback(std::span<const PreferenceRecord> records,
                                            std::span<const FeedbackBundle> bundles);

/// Upvote/downvote rows: {"id", "term_id", "term"?, "text", "upvotes", "downvotes", "logprob"?}.
struct TallyRow {
  Mnemonic mnemonic;
  std::string term;  // surface form; defaults to the term id
  VoteTally tally;
};
std::vector<TallyRow> parse_tallies(std::string_view text);
/// {"id", "q_mean", "ess", "mcse", "selected"} per estimate.
std::string format_quality_estimates(std::span<const QualityEstimate> estimates,
                                     std::span<const std::string> selected);
/// Ids flagged "selected" in a quality-estimate file.
std::vector<std::string> parse_selected_ids(std::string_view text);

/// Candidate rows: {"term_id", "term"?, "definition"?, "candidates": [{"id", "text", "logprob"}]}.
struct CandidateRow {
  Term term;
  CandidateSet set;
};
std::vector<CandidateRow> parse_candidates(std::string_view text);

std::string format_labels(std::span<const DerivedLabels> labels);
std::vector<DerivedLabels> parse_labels(std::string_view text);

std::string format_posteriors(std::span<const EffectivenessPosterior> posteriors);
/// pair id -> y_bayes, from a posterior file.
std::map<std::string, Choice> parse_bayes_labels(std::string_view text);

std::string format_examples(std::span<const AlignmentExample> examples);
std::vector<AlignmentExample> parse_examples(std::string_view text);

std::string read_text(const std::filesystem::path& path);
/// Writes through a temporary file in the same directory, then renames it into place.
void write_text_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace mnemo
