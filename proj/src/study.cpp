#include "mnemo/study.hpp"

#include <algorithm>
#include <deque>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mnemo/error.hpp"

namespace mnemo {

using json = nlohmann::json;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string session_name(std::uint64_t n) {
  std::string digits = std::to_string(n);
  return "s" + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

template <typename Entry>
void upsert(std::vector<Entry>& entries, Entry entry) {
  auto it = std::find_if(entries.begin(), entries.end(),
                         [&](const Entry& e) { return e.user_id == entry.user_id; });
  if (it == entries.end())
    entries.push_back(std::move(entry));
  else
    *it = std::move(entry);
}

}  // namespace

std::string_view to_string(NextAction a) {
  return a == NextAction::ElicitPairwise ? "ELICIT_PAIRWISE" : "SHOW_MNEMONIC_THEN_LIKERT";
}

std::optional<Presented> parse_presented(std::string_view text) {
  if (text == "LEFT") return Presented::Left;
  if (text == "RIGHT") return Presented::Right;
  if (text == "EQUAL") return Presented::Equal;
  return std::nullopt;
}

struct StudyEngine::Session {
  std::string id;
  std::string user;
  std::uint64_t seed = 0;
  std::mt19937_64 rng;
  std::vector<std::string> deck;
  std::deque<std::string> remaining;
  std::map<std::string, int> turns;
  std::map<std::string, Side> assignments;
  std::optional<PendingElicitation> pending;
  std::optional<PairwisePrompt> prompt;
  bool closed = false;
  mutable std::mutex mutex;

  bool finished() const { return remaining.empty(); }
  bool in_deck(const std::string& card) const {
    return std::find(deck.begin(), deck.end(), card) != deck.end();
  }
};

struct StudyEngine::Journal {
  std::ofstream out;
};

StudyEngine::StudyEngine(std::vector<Flashcard> cards, double tfidf_cutoff, std::uint64_t seed,
                         std::optional<std::filesystem::path> event_log)
    : cards_(std::move(cards)),
      tfidf_([&] {
        std::vector<std::string> corpus;
        for (const auto& c : cards_) corpus.push_back(c.term.definition);
        if (corpus.empty()) throw ArgumentError("study engine needs at least one card");
        return corpus;
      }()),
      cutoff_(tfidf_cutoff),
      seed_(seed) {
  for (std::size_t i = 0; i < cards_.size(); ++i) {
    const auto& c = cards_[i];
    if (!card_index_.emplace(c.card_id, i).second)
      throw ArgumentError("duplicate card id " + c.card_id);
    if (c.is_quality_check != c.planted_bad_side.has_value())
      throw ArgumentError("card " + c.card_id +
                          ": a planted side is required exactly on quality-check cards");
  }
  if (!event_log) return;

  if (std::filesystem::exists(*event_log)) {
    std::ifstream in(*event_log, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    // A crash can leave a torn final record; it is dropped.
    const auto last_newline = text.rfind('\n');
    const std::size_t complete = last_newline == std::string::npos ? 0 : last_newline + 1;
    if (complete != text.size()) std::filesystem::resize_file(*event_log, complete);

    replaying_ = true;
    std::istringstream lines(text.substr(0, complete));
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
      ++number;
      if (line.empty()) continue;
      try {
        const json e = json::parse(line);
        const std::string type = e.at("type");
        if (type == "start") {
          std::lock_guard lock(sessions_mutex_);
          apply_start(e.at("user").get<std::string>(), e.at("deck_size").get<int>(),
                      e.at("seed").get<std::uint64_t>(), e.at("session").get<std::string>());
        } else if (type == "answer") {
          std::optional<bool> ov;
          if (!e.at("override").is_null()) ov = e.at("override").get<bool>();
          submit_answer(e.at("session").get<std::string>(), e.at("card").get<std::string>(),
                        e.at("answer").get<std::string>(), ov);
        } else if (type == "likert") {
          record_likert(e.at("session").get<std::string>(), e.at("card").get<std::string>(),
                        e.at("rating").get<int>());
        } else if (type == "pairwise") {
          const auto choice = parse_choice(e.at("choice").get<std::string>());
          if (!choice) throw DataError("bad choice");
          record_pairwise(e.at("session").get<std::string>(), e.at("card").get<std::string>(),
                          *choice);
        } else if (type == "close") {
          close_session(e.at("session").get<std::string>());
        } else {
          throw DataError("unknown event type " + type);
        }
      } catch (const std::exception& ex) {
        replaying_ = false;
        throw DataError("event log " + event_log->string() + " line " + std::to_string(number) +
                        ": " + ex.what());
      }
    }
    replaying_ = false;
  }
  journal_ = std::make_unique<Journal>();
  journal_->out.open(*event_log, std::ios::app | std::ios::binary);
  if (!journal_->out) throw Error("cannot open event log " + event_log->string());
}

StudyEngine::~StudyEngine() = default;

void StudyEngine::log(const std::string& line) {
  if (replaying_ || !journal_) return;
  journal_->out << line << '\n';
  journal_->out.flush();
}

StudyEngine::Session& StudyEngine::find(const std::string& session_id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw NotFoundError("unknown session " + session_id);
  return *it->second;
}

const Flashcard& StudyEngine::card(const std::string& card_id) const {
  auto it = card_index_.find(card_id);
  if (it == card_index_.end()) throw NotFoundError("unknown card " + card_id);
  return cards_[it->second];
}

std::size_t StudyEngine::unstudied_count(const std::string& user_id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = studied_.find(user_id);
  return cards_.size() - (it == studied_.end() ? 0 : it->second.size());
}

StartedSession StudyEngine::start_session(const std::string& user_id, int deck_size) {
  if (deck_size < kMinDeckSize || deck_size > kMaxDeckSize)
    throw ArgumentError("deck size must lie in [5, 50], got " + std::to_string(deck_size));
  std::lock_guard lock(sessions_mutex_);
  const std::uint64_t seed = splitmix64(seed_ ^ splitmix64(session_counter_ + 1));
  const std::string id = session_name(session_counter_ + 1);
  apply_start(user_id, deck_size, seed, id);
  return {id, sessions_.at(id)->remaining.front()};
}

void StudyEngine::apply_start(const std::string& user_id, int deck_size, std::uint64_t seed,
                              const std::string& session_id) {
  if (user_id.empty()) throw ArgumentError("user id is empty");
  if (deck_size < kMinDeckSize || deck_size > kMaxDeckSize)
    throw ArgumentError("deck size must lie in [5, 50], got " + std::to_string(deck_size));
  if (sessions_.count(session_id)) throw StateError("session " + session_id + " already exists");
  auto& seen = studied_[user_id];
  std::vector<std::string> pool;
  for (const auto& c : cards_)
    if (!seen.count(c.card_id)) pool.push_back(c.card_id);
  if (pool.size() < static_cast<std::size_t>(deck_size))
    throw StateError("user " + user_id + " has " + std::to_string(pool.size()) +
                     " unstudied cards, fewer than " + std::to_string(deck_size));

  auto s = std::make_unique<Session>();
  s->id = session_id;
  s->user = user_id;
  s->seed = seed;
  s->rng.seed(seed);
  std::sample(pool.begin(), pool.end(), std::back_inserter(s->deck), deck_size, s->rng);
  std::shuffle(s->deck.begin(), s->deck.end(), s->rng);
  std::bernoulli_distribution coin(0.5);
  for (const auto& c : s->deck) {
    s->assignments[c] = coin(s->rng) ? Side::A : Side::B;
    seen.insert(c);
  }
  s->remaining.assign(s->deck.begin(), s->deck.end());

  ++session_counter_;
  {
    std::lock_guard store(store_mutex_);
    log(json{{"type", "start"}, {"session", session_id}, {"user", user_id},
             {"deck_size", deck_size}, {"seed", seed}}
            .dump());
  }
  sessions_.emplace(session_id, std::move(s));
}

AnswerResult StudyEngine::submit_answer(const std::string& session_id, const std::string& card_id,
                                        const std::string& answer, std::optional<bool> override) {
  Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  if (!s.in_deck(card_id)) throw NotFoundError("card " + card_id + " is not in session " + session_id);
  if (s.closed || s.finished()) throw StateError("session " + session_id + " is finished");
  if (std::find(s.remaining.begin(), s.remaining.end(), card_id) == s.remaining.end())
    throw StateError("card " + card_id + " is already completed");
  if (s.pending) throw StateError("an elicitation is pending for card " + s.pending->card_id);

  const Flashcard& c = card(card_id);
  AnswerResult r;
  r.verdict.similarity = tfidf_.similarity(answer, c.term.definition);
  r.verdict.auto_correct = r.verdict.similarity >= cutoff_;
  r.verdict.final_correct = override.value_or(r.verdict.auto_correct);
  r.turns = ++s.turns[card_id];

  s.remaining.erase(std::find(s.remaining.begin(), s.remaining.end(), card_id));
  if (r.verdict.final_correct) {
    r.next_action = NextAction::ElicitPairwise;
    r.definition = c.term.definition;
    PairwisePrompt p;
    p.card_id = card_id;
    p.left_side = std::bernoulli_distribution(0.5)(s.rng) ? Side::A : Side::B;
    p.left_text = c.pair.side(p.left_side).text;
    p.right_text = c.pair.side(other(p.left_side)).text;
    std::ostringstream token;
    token << std::hex << s.rng();
    p.presentation_token = token.str();
    s.prompt = std::move(p);
    s.pending = PendingElicitation{PendingElicitation::Kind::Pairwise, card_id};
  } else {
    s.remaining.push_back(card_id);
    r.next_action = NextAction::ShowMnemonicThenLikert;
    r.mnemonic = c.pair.side(s.assignments.at(card_id));
    s.pending = PendingElicitation{PendingElicitation::Kind::Likert, card_id};
  }

  std::lock_guard store(store_mutex_);
  log(json{{"type", "answer"}, {"session", session_id}, {"card", card_id}, {"answer", answer},
           {"override", override ? json(*override) : json(nullptr)}}
          .dump());
  return r;
}

void StudyEngine::record_likert(const std::string& session_id, const std::string& card_id,
                                int rating) {
  if (rating < 1 || rating > 5)
    throw ArgumentError("Likert rating must lie in 1..5, got " + std::to_string(rating));
  Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  if (!s.pending || s.pending->kind != PendingElicitation::Kind::Likert ||
      s.pending->card_id != card_id)
    throw StateError("no pending Likert rating for card " + card_id);
  s.pending.reset();

  const Flashcard& c = card(card_id);
  const Side side = s.assignments.at(card_id);
  std::lock_guard store(store_mutex_);
  if (!c.is_quality_check) {
    FeedbackBundle& b = store_[c.pair.id];
    b.pair_id = c.pair.id;
    upsert(b.likert(side), Rating{s.user, rating});
  }
  log(json{{"type", "likert"}, {"session", session_id}, {"card", card_id}, {"rating", rating}}
          .dump());
}

PairwisePrompt StudyEngine::pairwise_prompt(const std::string& session_id,
                                            const std::string& card_id) const {
  Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  if (!s.in_deck(card_id)) throw NotFoundError("card " + card_id + " is not in session " + session_id);
  if (!s.prompt || s.prompt->card_id != card_id)
    throw StateError("no pending pairwise choice for card " + card_id);
  return *s.prompt;
}

void StudyEngine::record_pairwise(const std::string& session_id, const std::string& card_id,
                                  Choice choice) {
  Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  if (!s.pending || s.pending->kind != PendingElicitation::Kind::Pairwise ||
      s.pending->card_id != card_id)
    throw StateError("no pending pairwise choice for card " + card_id);
  s.pending.reset();
  s.prompt.reset();

  const Flashcard& c = card(card_id);
  std::lock_guard store(store_mutex_);
  if (c.is_quality_check) {
    qc_log_.push_back({s.user, card_id, c.pair.id, choice, *c.planted_bad_side});
  } else {
    FeedbackBundle& b = store_[c.pair.id];
    b.pair_id = c.pair.id;
    upsert(b.pairwise_votes, Vote{s.user, choice});
  }
  log(json{{"type", "pairwise"}, {"session", session_id}, {"card", card_id},
           {"choice", std::string(to_string(choice))}}
          .dump());
}

Choice StudyEngine::record_presented(const std::string& session_id, const std::string& card_id,
                                     Presented choice, const std::string& presentation_token) {
  Choice resolved;
  {
    Session& s = find(session_id);
    std::lock_guard lock(s.mutex);
    if (!s.prompt || s.prompt->card_id != card_id ||
        s.prompt->presentation_token != presentation_token)
      throw StateError("presentation token is stale or already used");
    const Side left = s.prompt->left_side;
    resolved = choice == Presented::Equal ? Choice::Tie
               : choice == Presented::Left ? to_choice(left)
                                           : to_choice(other(left));
  }
  // Same session lock is re-taken; a racing call on this session then fails the pending check.
  record_pairwise(session_id, card_id, resolved);
  return resolved;
}

std::vector<LearnEvent> StudyEngine::close_session(const std::string& session_id) {
  Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  if (s.closed) throw StateError("session " + session_id + " is already closed");
  if (!s.finished()) throw StateError("session " + session_id + " still has cards to study");
  s.closed = true;
  s.pending.reset();
  s.prompt.reset();

  std::vector<LearnEvent> events;
  std::lock_guard store(store_mutex_);
  for (const auto& card_id : s.deck) {
    const Flashcard& c = card(card_id);
    const Side side = s.assignments.at(card_id);
    const int turns = s.turns.at(card_id);
    events.push_back({s.user, card_id, c.pair.id, side, turns});
    if (c.is_quality_check) continue;
    FeedbackBundle& b = store_[c.pair.id];
    b.pair_id = c.pair.id;
    upsert(b.turns(side), TurnCount{s.user, turns});
  }
  log(json{{"type", "close"}, {"session", session_id}}.dump());
  return events;
}

SessionView StudyEngine::session(const std::string& session_id) const {
  const Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  SessionView v;
  v.session_id = s.id;
  v.user_id = s.user;
  v.seed = s.seed;
  v.deck = s.deck;
  v.remaining.assign(s.remaining.begin(), s.remaining.end());
  v.turns = s.turns;
  v.assignments = s.assignments;
  v.pending = s.pending;
  v.finished = s.finished();
  v.closed = s.closed;
  return v;
}

std::vector<FeedbackBundle> StudyEngine::bundles() const {
  std::lock_guard store(store_mutex_);
  std::vector<FeedbackBundle> out;
  for (const auto& [id, b] : store_) out.push_back(b);
  return out;
}

std::optional<FeedbackBundle> StudyEngine::bundle(const std::string& pair_id) const {
  std::lock_guard store(store_mutex_);
  auto it = store_.find(pair_id);
  if (it == store_.end()) return std::nullopt;
  return it->second;
}

std::vector<QualityCheckRecord> StudyEngine::quality_checks() const {
  std::lock_guard store(store_mutex_);
  return qc_log_;
}

std::vector<std::string> StudyEngine::pair_ids() const {
  std::set<std::string> ids;
  for (const auto& c : cards_)
    if (!c.is_quality_check) ids.insert(c.pair.id);
  return {ids.begin(), ids.end()};
}

FilterResult filter_annotators(const std::vector<FeedbackBundle>& bundles,
                               const std::vector<QualityCheckRecord>& quality_checks) {
  std::set<std::string> excluded;
  for (const auto& r : quality_checks)
    if (r.chosen == to_choice(r.planted_bad_side)) excluded.insert(r.user_id);

  FilterResult out;
  out.excluded_users.assign(excluded.begin(), excluded.end());
  auto drop = [&](auto& entries) {
    entries.erase(std::remove_if(entries.begin(), entries.end(),
                                 [&](const auto& e) { return excluded.count(e.user_id) > 0; }),
                  entries.end());
  };
  out.kept = bundles;
  for (auto& b : out.kept) {
    drop(b.pairwise_votes);
    drop(b.likert_a);
    drop(b.likert_b);
    drop(b.turns_a);
    drop(b.turns_b);
  }
  return out;
}

namespace {

/// Compares sum_a / n_a with sum_b / n_b exactly; both counts are positive.
int compare_means(long long sum_a, long long n_a, long long sum_b, long long n_b) {
  const long long lhs = sum_a * n_b;
  const long long rhs = sum_b * n_a;
  return lhs < rhs ? -1 : lhs > rhs ? 1 : 0;
}

}  // namespace

DerivedLabels derive_labels(const FeedbackBundle& bundle, int min_labels) {
  DerivedLabels out;
  out.pair_id = bundle.pair_id;

  const auto& votes = bundle.pairwise_votes;
  if (!votes.empty() && static_cast<int>(votes.size()) >= min_labels) {
    int a = 0, b = 0, t = 0;
    for (const auto& v : votes) (v.choice == Choice::A ? a : v.choice == Choice::B ? b : t)++;
    if (a > b && a > t)
      out.y_pair = Choice::A;
    else if (b > a && b > t)
      out.y_pair = Choice::B;
    else
      out.y_pair = Choice::Tie;
  }

  auto side_label = [&](long long sum_a, std::size_t n_a, long long sum_b, std::size_t n_b,
                        bool higher_wins) -> std::optional<Choice> {
    if (n_a == 0 || n_b == 0 || static_cast<long long>(n_a + n_b) < min_labels) return std::nullopt;
    int cmp = compare_means(sum_a, static_cast<long long>(n_a), sum_b, static_cast<long long>(n_b));
    if (!higher_wins) cmp = -cmp;
    return cmp > 0 ? Choice::A : cmp < 0 ? Choice::B : Choice::Tie;
  };

  long long ra = 0, rb = 0, ta = 0, tb = 0;
  for (const auto& r : bundle.likert_a) ra += r.value;
  for (const auto& r : bundle.likert_b) rb += r.value;
  for (const auto& t : bundle.turns_a) ta += t.turns;
  for (const auto& t : bundle.turns_b) tb += t.turns;
  out.y_rate = side_label(ra, bundle.likert_a.size(), rb, bundle.likert_b.size(), true);
  out.y_learn = side_label(ta, bundle.turns_a.size(), tb, bundle.turns_b.size(), false);
  return out;
}

}  // namespace mnemo
