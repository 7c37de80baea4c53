#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mnemo/text.hpp"
#include "mnemo/types.hpp"

namespace mnemo {

struct Flashcard {
  std::string card_id;
  Term term;
  MnemonicPair pair;
  bool is_quality_check = false;
  std::optional<Side> planted_bad_side;  // present iff is_quality_check
};

struct AnswerVerdict {
  double similarity = 0.0;
  bool auto_correct = false;
  bool final_correct = false;
};

enum class NextAction { ElicitPairwise, ShowMnemonicThenLikert };
std::string_view to_string(NextAction a);

struct AnswerResult {
  AnswerVerdict verdict;
  NextAction next_action;
  int turns = 0;                      // answers submitted for this card so far
  std::optional<Mnemonic> mnemonic;   // the assigned side, on incorrect answers
  std::optional<std::string> definition;  // revealed once the card is completed
};

struct LearnEvent {
  std::string user_id;
  std::string card_id;
  std::string pair_id;
  Side side;
  int turns;
};

/// A pairwise choice made on a quality-check card.
struct QualityCheckRecord {
  std::string user_id;
  std::string card_id;
  std::string pair_id;
  Choice chosen;
  Side planted_bad_side;
};

/// Display order of one pairwise elicitation.
struct PairwisePrompt {
  std::string card_id;
  std::string left_text;
  std::string right_text;
  std::string presentation_token;
  Side left_side;
};

enum class Presented { Left, Right, Equal };
std::optional<Presented> parse_presented(std::string_view text);

struct PendingElicitation {
  enum class Kind { Likert, Pairwise } kind;
  std::string card_id;
};

/// Read-only view of a session.
struct SessionView {
  std::string session_id;
  std::string user_id;
  std::uint64_t seed = 0;
  std::vector<std::string> deck;       // card ids in draw order
  std::vector<std::string> remaining;  // queue order; front is the next card to study
  std::map<std::string, int> turns;
  std::map<std::string, Side> assignments;
  std::optional<PendingElicitation> pending;
  bool finished = false;
  bool closed = false;
};

struct StartedSession {
  std::string session_id;
  std::string first_card;
};

inline constexpr int kMinDeckSize = 5;
inline constexpr int kMaxDeckSize = 50;

/// Runs flashcard sessions over a fixed card pool and accumulates feedback per pair.
///
/// Every mutating call is appended to an optional JSONL event log; constructing an
/// engine over an existing log replays it and reproduces the same state.
/// Calls on one session are serialized; distinct sessions proceed concurrently.
class StudyEngine {
 public:
  StudyEngine(std::vector<Flashcard> cards, double tfidf_cutoff, std::uint64_t seed,
              std::optional<std::filesystem::path> event_log = std::nullopt);
  ~StudyEngine();
  StudyEngine(const StudyEngine&) = delete;
  StudyEngine& operator=(const StudyEngine&) = delete;

  /// Draws `deck_size` cards uniformly from those the user has not studied.
  /// ArgumentError when deck_size is outside [5, 50]; StateError when too few remain.
  StartedSession start_session(const std::string& user_id, int deck_size);

  /// NotFoundError for an unknown session or a card outside its deck; StateError when
  /// the card is completed, the session is finished or an elicitation is pending.
  AnswerResult submit_answer(const std::string& session_id, const std::string& card_id,
                             const std::string& answer, std::optional<bool> override = {});

  /// ArgumentError for a rating outside 1..5; StateError without a matching pending Likert.
  void record_likert(const std::string& session_id, const std::string& card_id, int rating);

  /// The display order of the pending pairwise elicitation for `card_id`.
  PairwisePrompt pairwise_prompt(const std::string& session_id, const std::string& card_id) const;

  /// Records a pairwise choice in A/B terms.
  void record_pairwise(const std::string& session_id, const std::string& card_id, Choice choice);

  /// Resolves an on-screen choice through the presentation token, then records it.
  /// StateError when the token does not match the pending prompt (stale or reused).
  Choice record_presented(const std::string& session_id, const std::string& card_id,
                          Presented choice, const std::string& presentation_token);

  /// StateError unless the session is finished and still open. A pending elicitation
  /// is discarded. Turn counts of non-quality-check cards enter the feedback store.
  std::vector<LearnEvent> close_session(const std::string& session_id);

  SessionView session(const std::string& session_id) const;
  const Flashcard& card(const std::string& card_id) const;
  std::size_t unstudied_count(const std::string& user_id) const;

  /// Feedback per pair, ordered by pair id. Pairs without feedback are omitted.
  std::vector<FeedbackBundle> bundles() const;
  std::optional<FeedbackBundle> bundle(const std::string& pair_id) const;
  std::vector<QualityCheckRecord> quality_checks() const;
  std::vector<std::string> pair_ids() const;

 private:
  struct Session;
  struct Journal;

  Session& find(const std::string& session_id) const;
  // Caller holds sessions_mutex_.
  void apply_start(const std::string& user_id, int deck_size, std::uint64_t seed,
                   const std::string& session_id);
  void log(const std::string& line);

  std::vector<Flashcard> cards_;
  std::map<std::string, std::size_t> card_index_;
  TfidfIndex tfidf_;
  double cutoff_;
  std::uint64_t seed_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::map<std::string, std::set<std::string>> studied_;  // user -> card ids
  std::uint64_t session_counter_ = 0;

  mutable std::mutex store_mutex_;
  std::map<std::string, FeedbackBundle> store_;
  std::vector<QualityCheckRecord> qc_log_;
  std::unique_ptr<Journal> journal_;
  bool replaying_ = false;
};

/// Drops every entry of any user who picked a planted low-quality side.
/// A TIE on a quality-check card does not count as a pick.
struct FilterResult {
  std::vector<FeedbackBundle> kept;
  std::vector<std::string> excluded_users;  // sorted
};
FilterResult filter_annotators(const std::vector<FeedbackBundle>& bundles,
                               const std::vector<QualityCheckRecord>& quality_checks);

/// Per-channel labels. A channel with fewer than `min_labels` entries in total yields no
/// label. y_rate and y_learn also need both sides non-empty. Averages are compared as
/// exact fractions; equal averages and plurality ties give TIE.
DerivedLabels derive_labels(const FeedbackBundle& bundle, int min_labels = 3);

}  // namespace mnemo
