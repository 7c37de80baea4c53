#include "mnemo/records.hpp"

#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mnemo/error.hpp"

namespace mnemo {

using json = nlohmann::json;

namespace {

struct Channel {
  const char* values;  // count or value column
  const char* users;
};

constexpr Channel kVoteChannels[] = {{"pairwise_A_votes", "pairwise_A_users"},
                                     {"pairwise_B_votes", "pairwise_B_users"},
                                     {"pairwise_tie_votes", "pairwise_tie_users"}};
constexpr Choice kVoteChoices[] = {Choice::A, Choice::B, Choice::Tie};

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
    start = end + 1;
  }
  return out;
}

template <typename F>
void for_each_json_line(std::string_view text, const char* what, F&& f) {
  std::size_t row = 0;
  for (const auto& line : split_lines(text)) {
    ++row;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      f(json::parse(line), row);
    } catch (const json::exception& e) {
      throw DataError(std::string(what) + " line " + std::to_string(row) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(std::string(what) + " line " + std::to_string(row) + ": " + e.what());
    }
  }
}

std::string opt_string(const json& j, const char* key, std::string fallback = {}) {
  if (!j.contains(key) || j[key].is_null()) return fallback;
  if (!j[key].is_string()) throw DataError(std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

std::string req_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    throw DataError(std::string("missing text field ") + key);
  return j[key].get<std::string>();
}

std::optional<double> opt_number(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number()) throw DataError(std::string(key) + " must be a number");
  return j[key].get<double>();
}

std::vector<int> int_list(const json& j, const char* key) {
  std::vector<int> out;
  if (!j.contains(key) || j[key].is_null()) return out;
  if (!j[key].is_array()) throw DataError(std::string(key) + " must be a list");
  for (const auto& v : j[key]) {
    if (!v.is_number_integer()) throw DataError(std::string(key) + " must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

std::optional<std::vector<std::string>> user_list(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_array()) throw DataError(std::string(key) + " must be a list");
  std::vector<std::string> out;
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw DataError(std::string(key) + " must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

std::vector<std::string> users_for(const json& j, const char* key, std::size_t n,
                                   const std::string& pair_id, const char* channel) {
  if (auto users = user_list(j, key)) {
    if (users->size() != n)
      throw DataError(std::string(key) + " has " + std::to_string(users->size()) +
                      " entries for " + std::to_string(n) + " values");
    return *users;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back("anon:" + pair_id + ":" + channel + ":" + std::to_string(i));
  return out;
}

PreferenceRecord record_from_json(const json& j, std::size_t row) {
  if (!j.is_object()) throw DataError("expected an object");
  PreferenceRecord r;
  const std::string n = std::to_string(row);
  r.pair.id = opt_string(j, "pair_id", "pair-" + n);
  r.term.id = opt_string(j, "term_id", "term-" + n);
  r.term.surface = req_string(j, "term");
  r.term.definition = opt_string(j, "definition");
  if (auto ex = opt_string(j, "example_sentence"); !ex.empty()) r.term.example_sentence = ex;

  r.pair.term_id = r.term.id;
  r.pair.a = {opt_string(j, "mnemonic_A_id", r.pair.id + ":A"), r.term.id,
              req_string(j, "mnemonic_A"), opt_number(j, "mnemonic_A_logprob")};
  r.pair.b = {opt_string(j, "mnemonic_B_id", r.pair.id + ":B"), r.term.id,
              req_string(j, "mnemonic_B"), opt_number(j, "mnemonic_B_logprob")};

  FeedbackBundle& b = r.feedback;
  b.pair_id = r.pair.id;
  for (int c = 0; c < 3; ++c) {
    const auto& ch = kVoteChannels[c];
    std::optional<std::size_t> count;
    if (j.contains(ch.values) && !j[ch.values].is_null()) {
      if (!j[ch.values].is_number_integer() || j[ch.values].get<long long>() < 0)
        throw DataError(std::string(ch.values) + " must be a non-negative integer");
      count = j[ch.values].get<std::size_t>();
    }
    const auto listed = user_list(j, ch.users);
    if (listed && count && listed->size() != *count)
      throw DataError(std::string(ch.users) + " disagrees with " + ch.values);
    const auto users = users_for(j, ch.users, count.value_or(listed ? listed->size() : 0),
                                 r.pair.id, ch.values);
    for (const auto& u : users) b.pairwise_votes.push_back({u, kVoteChoices[c]});
  }
  for (Side s : {Side::A, Side::B}) {
    const std::string p = s == Side::A ? "A" : "B";
    const auto ratings = int_list(j, (p + "_likert_ratings").c_str());
    const auto rating_users = users_for(j, (p + "_likert_users").c_str(), ratings.size(),
                                        r.pair.id, (p + "_likert").c_str());
    for (std::size_t i = 0; i < ratings.size(); ++i)
      b.likert(s).push_back({rating_users[i], ratings[i]});
    const auto turns = int_list(j, (p + "_learn_iterations").c_str());
    const auto turn_users = users_for(j, (p + "_learn_users").c_str(), turns.size(), r.pair.id,
                                      (p + "_learn").c_str());
    for (std::size_t i = 0; i < turns.size(); ++i)
      b.turns(s).push_back({turn_users[i], turns[i]});
  }

  if (auto side = opt_string(j, "quality_check_bad_side"); !side.empty()) {
    r.quality_check_bad_side = parse_side(side);
    if (!r.quality_check_bad_side) throw DataError("quality_check_bad_side must be A or B");
  }
  return r;
}

json record_to_json(const PreferenceRecord& r) {
  json j;
  j["pair_id"] = r.pair.id;
  j["term_id"] = r.term.id;
  j["term"] = r.term.surface;
  j["definition"] = r.term.definition;
  if (r.term.example_sentence) j["example_sentence"] = *r.term.example_sentence;
  j["mnemonic_A"] = r.pair.a.text;
  j["mnemonic_B"] = r.pair.b.text;
  j["mnemonic_A_id"] = r.pair.a.id;
  j["mnemonic_B_id"] = r.pair.b.id;
  if (r.pair.a.sequence_logprob) j["mnemonic_A_logprob"] = *r.pair.a.sequence_logprob;
  if (r.pair.b.sequence_logprob) j["mnemonic_B_logprob"] = *r.pair.b.sequence_logprob;
  for (int c = 0; c < 3; ++c) {
    json users = json::array();
    for (const auto& v : r.feedback.pairwise_votes)
      if (v.choice == kVoteChoices[c]) users.push_back(v.user_id);
    j[kVoteChannels[c].values] = users.size();
    j[kVoteChannels[c].users] = std::move(users);
  }
  for (Side s : {Side::A, Side::B}) {
    const std::string p = s == Side::A ? "A" : "B";
    json ratings = json::array(), rating_users = json::array();
    for (const auto& e : r.feedback.likert(s)) {
      ratings.push_back(e.value);
      rating_users.push_back(e.user_id);
    }
    json turns = json::array(), turn_users = json::array();
    for (const auto& e : r.feedback.turns(s)) {
      turns.push_back(e.turns);
      turn_users.push_back(e.user_id);
    }
    j[p + "_likert_ratings"] = std::move(ratings);
    j[p + "_likert_users"] = std::move(rating_users);
    j[p + "_learn_iterations"] = std::move(turns);
    j[p + "_learn_users"] = std::move(turn_users);
  }
  if (r.quality_check_bad_side) j["quality_check_bad_side"] = std::string(to_string(*r.quality_check_bad_side));
  return j;
}

// ---- CSV ----

std::vector<std::vector<std::string>> parse_csv_rows(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !cell.empty()) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
      }
      row.clear();
      cell.clear();
      any = false;
    } else {
      cell += c;
      any = true;
    }
  }
  if (quoted) throw DataError("csv: unterminated quoted field");
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

bool is_text_column(std::string_view name) {
  for (const char* t : {"term", "mnemonic_A", "mnemonic_B", "pair_id", "term_id", "definition",
                        "example_sentence", "mnemonic_A_id", "mnemonic_B_id",
                        "quality_check_bad_side"})
    if (name == t) return true;
  return false;
}

std::vector<std::string> all_columns() {
  std::vector<std::string> out(std::begin(kPreferenceColumns), std::end(kPreferenceColumns));
  out.insert(out.end(), std::begin(kOptionalPreferenceColumns), std::end(kOptionalPreferenceColumns));
  return out;
}

}  // namespace

std::vector<PreferenceRecord> parse_preferences_jsonl(std::string_view text) {
  std::vector<PreferenceRecord> out;
  for_each_json_line(text, "preferences", [&](const json& j, std::size_t row) {
    out.push_back(record_from_json(j, row));
  });
  return out;
}

std::string format_preferences_jsonl(std::span<const PreferenceRecord> records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  return out;
}

std::vector<PreferenceRecord> parse_preferences_csv(std::string_view text) {
  const auto rows = parse_csv_rows(text);
  std::vector<PreferenceRecord> out;
  if (rows.empty()) return out;
  const auto& header = rows[0];
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      throw DataError("preferences csv row " + std::to_string(r) + ": expected " +
                      std::to_string(header.size()) + " cells, found " + std::to_string(row.size()));
    json j = json::object();
    try {
      for (std::size_t c = 0; c < header.size(); ++c) {
        if (row[c].empty()) continue;
        if (is_text_column(header[c]))
          j[header[c]] = row[c];
        else
          j[header[c]] = json::parse(row[c]);
      }
      out.push_back(record_from_json(j, r));
    } catch (const json::exception& e) {
      throw DataError("preferences csv row " + std::to_string(r) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("preferences csv row " + std::to_string(r) + ": " + e.what());
    }
  }
  return out;
}

std::string format_preferences_csv(std::span<const PreferenceRecord> records) {
  const auto columns = all_columns();
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) out += (c ? "," : "") + columns[c];
  out += "\n";
  for (const auto& r : records) {
    const json j = record_to_json(r);
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ",";
      if (!j.contains(columns[c])) continue;
      const json& v = j[columns[c]];
      out += csv_cell(v.is_string() ? v.get<std::string>() : v.dump());
    }
    out += "\n";
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_atomic(const std::filesystem::path& path, std::string_view content) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  std::random_device rd;
  const auto tmp = dir / ("." + path.filename().string() + ".tmp" + std::to_string(rd()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw Error("cannot write " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::vector<PreferenceRecord> read_preferences(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("no such file: " + path.string());
  const std::string text = read_text(path);
  return path.extension() == ".csv" ? parse_preferences_csv(text) : parse_preferences_jsonl(text);
}

void write_preferences(const std::filesystem::path& path, std::span<const PreferenceRecord> records) {
  write_text_atomic(path, path.extension() == ".csv" ? format_preferences_csv(records)
                                                     : format_preferences_jsonl(records));
}

Dataset to_dataset(std::span<const PreferenceRecord> records) {
  Dataset d;
  std::map<std::string, bool> seen_terms;
  for (const auto& r : records) {
    // Rows share a term when they share its id; the first row's copy is kept.
    if (!seen_terms[r.term.id]) {
      d.terms.push_back(r.term);
      seen_terms[r.term.id] = true;
    }
    d.mnemonics.push_back(r.pair.a);
    d.mnemonics.push_back(r.pair.b);
    d.pairs.push_back(r.pair);
    d.feedback.push_back(r.feedback);
  }
  return d;
}

std::vector<Flashcard> to_flashcards(std::span<const PreferenceRecord> records) {
  std::vector<Flashcard> out;
  for (const auto& r : records)
    out.push_back({r.pair.id, r.term, r.pair, r.quality_check_bad_side.has_value(),
                   r.quality_check_bad_side});
  return out;
}

SplitFeedback split_quality_checks(std::span<const PreferenceRecord> records) {
  SplitFeedback out;
  for (const auto& r : records) {
    if (!r.quality_check_bad_side) {
      out.bundles.push_back(r.feedback);
      continue;
    }
    for (const auto& v : r.feedback.pairwise_votes)
      out.quality_checks.push_back({v.user_id, r.pair.id, r.pair.id, v.choice,
                                    *r.quality_check_bad_side});
  }
  return out;
}

std::vector<PreferenceRecord> with_feedback(std::span<const PreferenceRecord> records,
                                            std::span<const FeedbackBundle> bundles) {
  std::map<std::string, const FeedbackBundle*> by_id;
  for (const auto& b : bundles) by_id[b.pair_id] = &b;
  std::vector<PreferenceRecord> out(records.begin(), records.end());
  for (auto& r : out)
    if (auto it = by_id.find(r.pair.id); it != by_id.end()) r.feedback = *it->second;
  return out;
}

std::vector<TallyRow> parse_tallies(std::string_view text) {
  std::vector<TallyRow> out;
  for_each_json_line(text, "tallies", [&](const json& j, std::size_t) {
    TallyRow t;
    t.mnemonic = {req_string(j, "id"), opt_string(j, "term_id"), opt_string(j, "text"),
                  opt_number(j, "logprob")};
    t.term = opt_string(j, "term", t.mnemonic.term_id);
    for (auto [key, dst] : {std::pair{"upvotes", &t.tally.upvotes}, {"downvotes", &t.tally.downvotes}}) {
      if (!j.contains(key) || !j[key].is_number_integer())
        throw DataError(std::string(key) + " must be an integer");
      *dst = j[key].get<std::int64_t>();
    }
    out.push_back(std::move(t));
  });
  return out;
}

std::string format_quality_estimates(std::span<const QualityEstimate> estimates,
                                     std::span<const std::string> selected) {
  std::map<std::string, bool> chosen;
  for (const auto& id : selected) chosen[id] = true;
  std::string out;
  for (const auto& e : estimates)
    out += json{{"id", e.mnemonic_id},  {"q_mean", e.q_mean}, {"ess", e.ess},
                {"mcse", e.mcse},       {"selected", chosen.count(e.mnemonic_id) > 0}}
               .dump() +
           "\n";
  return out;
}

std::vector<std::string> parse_selected_ids(std::string_view text) {
  std::vector<std::string> out;
  for_each_json_line(text, "quality estimates", [&](const json& j, std::size_t) {
    if (j.value("selected", false)) out.push_back(req_string(j, "id"));
  });
  return out;
}

std::vector<CandidateRow> parse_candidates(std::string_view text) {
  std::vector<CandidateRow> out;
  for_each_json_line(text, "candidates", [&](const json& j, std::size_t) {
    CandidateRow row;
    row.term.id = req_string(j, "term_id");
    row.term.surface = opt_string(j, "term", row.term.id);
    row.term.definition = opt_string(j, "definition");
    row.set.term_id = row.term.id;
    if (!j.contains("candidates") || !j["candidates"].is_array())
      throw DataError("candidates must be a list");
    for (const auto& c : j["candidates"])
      row.set.candidates.push_back({req_string(c, "id"), opt_string(c, "term_id", row.term.id),
                                    req_string(c, "text"), opt_number(c, "logprob")});
    out.push_back(std::move(row));
  });
  return out;
}

std::string format_labels(std::span<const DerivedLabels> labels) {
  auto field = [](const std::optional<Choice>& c) {
    return c ? json(std::string(to_string(*c))) : json(nullptr);
  };
  std::string out;
  for (const auto& l : labels)
    out += json{{"pair_id", l.pair_id},
                {"y_pair", field(l.y_pair)},
                {"y_rate", field(l.y_rate)},
                {"y_learn", field(l.y_learn)},
                {"y_bayes", field(l.y_bayes)}}
               .dump() +
           "\n";
  return out;
}

std::vector<DerivedLabels> parse_labels(std::string_view text) {
  std::vector<DerivedLabels> out;
  for_each_json_line(text, "labels", [&](const json& j, std::size_t) {
    DerivedLabels l;
    l.pair_id = req_string(j, "pair_id");
    for (auto [key, dst] : {std::pair{"y_pair", &l.y_pair}, {"y_rate", &l.y_rate},
                            {"y_learn", &l.y_learn}, {"y_bayes", &l.y_bayes}}) {
      const auto s = opt_string(j, key);
      if (s.empty()) continue;
      *dst = parse_choice(s);
      if (!*dst) throw DataError(std::string(key) + " must be A, B or TIE");
    }
    out.push_back(std::move(l));
  });
  return out;
}

std::string format_posteriors(std::span<const EffectivenessPosterior> posteriors) {
  std::string out;
  for (const auto& p : posteriors) {
    const auto& d = p.diagnostics;
    out += json{{"pair_id", p.pair_id},
                {"theta_a_mean", p.theta_a_mean},
                {"theta_b_mean", p.theta_b_mean},
                {"prob_a_gt_b", p.prob_a_gt_b},
                {"y_bayes", std::string(to_string(bayes_label(p)))},
                {"r_hat", d.r_hat},
                {"ess", d.ess},
                {"krippendorff_alpha", d.krippendorff_alpha},
                {"divergences", d.divergences},
                {"converged", d.converged}}
               .dump() +
           "\n";
  }
  return out;
}

std::map<std::string, Choice> parse_bayes_labels(std::string_view text) {
  std::map<std::string, Choice> out;
  for_each_json_line(text, "posteriors", [&](const json& j, std::size_t) {
    const auto c = parse_choice(req_string(j, "y_bayes"));
    if (!c) throw DataError("y_bayes must be A, B or tie");
    out[req_string(j, "pair_id")] = *c;
  });
  return out;
}

std::string format_examples(std::span<const AlignmentExample> examples) {
  std::string out;
  for (const auto& e : examples) {
    json j{{"prompt", e.prompt}, {"chosen", e.chosen}};
    if (e.rejected) j["rejected"] = *e.rejected;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<AlignmentExample> parse_examples(std::string_view text) {
  std::vector<AlignmentExample> out;
  for_each_json_line(text, "examples", [&](const json& j, std::size_t) {
    AlignmentExample e{req_string(j, "prompt"), req_string(j, "chosen"), std::nullopt};
    if (auto r = opt_string(j, "rejected"); j.contains("rejected") && !j["rejected"].is_null())
      e.rejected = r;
    out.push_back(std::move(e));
  });
  return out;
}

}  // namespace mnemo
