#include "mnemo/api.hpp"

#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "mnemo/alignment.hpp"
#include "mnemo/effectiveness.hpp"
#include "mnemo/error.hpp"
#include "mnemo/study.hpp"

namespace mnemo {

using json = nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string kind;
  std::string message;
};

HttpError classify(const std::exception& e) {
  if (dynamic_cast<const NotFoundError*>(&e)) return {404, "not_found_error", e.what()};
  if (dynamic_cast<const StateError*>(&e)) return {409, "state_error", e.what()};
  if (dynamic_cast<const ArgumentError*>(&e)) return {422, "argument_error", e.what()};
  if (dynamic_cast<const DataError*>(&e)) return {422, "data_error", e.what()};
  if (dynamic_cast<const json::exception*>(&e)) return {400, "malformed_request", e.what()};
  return {500, "internal_error", e.what()};
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw ArgumentError("request body must be a JSON object");
  return j;
}

std::string need_string(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty())
    throw ArgumentError(std::string("field ") + key + " must be a non-empty string");
  return j[key].get<std::string>();
}

int need_int(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer())
    throw ArgumentError(std::string("field ") + key + " must be an integer");
  return j[key].get<int>();
}

json label_json(const std::optional<Choice>& c) {
  return c ? json(std::string(to_string(*c))) : json(nullptr);
}

json card_payload(const Flashcard& c) { return {{"card_id", c.card_id}, {"term", c.term.surface}}; }

}  // namespace

struct ApiService::Impl {
  struct Stored {
    int status;
    std::string body;
    std::string content_type;
  };
  struct Job {
    std::string status = "running";
    json result;
  };

  ApiConfig config;
  StudyEngine engine;
  httplib::Server server;

  std::mutex idem_mutex;
  std::map<std::string, Stored> idem;
  std::map<std::string, std::shared_ptr<std::mutex>> idem_locks;
  std::ofstream idem_log;

  std::mutex job_mutex;
  std::map<std::string, Job> jobs;
  std::map<std::string, EffectivenessPosterior> posteriors;
  std::thread worker;
  bool fit_running = false;
  int job_counter = 0;

  explicit Impl(ApiConfig c)
      : config((std::filesystem::create_directories(c.data_dir), std::move(c))),
        engine(to_flashcards(config.deck), config.hyper.tfidf_cutoff, config.seed,
               config.data_dir / "events.jsonl") {
    config.hyper.validate();
    load_idempotency();
    routes();
  }

  ~Impl() {
    server.stop();
    if (worker.joinable()) worker.join();
  }

  void load_idempotency() {
    const auto path = config.data_dir / "idempotency.jsonl";
    if (std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
          const json j = json::parse(line);
          idem[j.at("key").get<std::string>()] = {j.at("status").get<int>(),
                                                 j.at("body").get<std::string>(),
                                                 j.at("content_type").get<std::string>()};
        } catch (const json::exception&) {
          // A torn final record from a crash; the request will simply run again.
        }
      }
    }
    idem_log.open(path, std::ios::app);
  }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static void send_error(httplib::Response& res, const HttpError& e) {
    res.status = e.status;
    res.set_content(json{{"error", e.kind}, {"message", e.message}}.dump(), "application/json");
  }

  static Handler guarded(Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const std::exception& e) {
        send_error(res, classify(e));
      }
    };
  }

  /// Wraps a mutating handler with Idempotency-Key replay.
  Handler idempotent(Handler h) {
    Handler inner = guarded(std::move(h));
    return [this, inner](const httplib::Request& req, httplib::Response& res) {
      if (!req.has_header("Idempotency-Key")) return inner(req, res);
      const std::string key = req.method + " " + req.path + " " + req.get_header_value("Idempotency-Key");
      std::shared_ptr<std::mutex> lock;
      {
        std::lock_guard g(idem_mutex);
        auto& l = idem_locks[key];
        if (!l) l = std::make_shared<std::mutex>();
        lock = l;
      }
      std::lock_guard per_key(*lock);
      {
        std::lock_guard g(idem_mutex);
        if (auto it = idem.find(key); it != idem.end()) {
          res.status = it->second.status;
          if (!it->second.body.empty()) res.set_content(it->second.body, it->second.content_type);
          return;
        }
      }
      inner(req, res);
      if (res.status >= 500) return;
      const std::string type = res.get_header_value("Content-Type");
      std::lock_guard g(idem_mutex);
      idem[key] = {res.status, res.body, type};
      idem_log << json{{"key", key}, {"status", res.status}, {"body", res.body}, {"content_type", type}}.dump()
               << '\n';
      idem_log.flush();
    };
  }

  static void send_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  json session_json(const std::string& id) {
    const SessionView v = engine.session(id);
    json deck = json::array();
    for (const auto& c : v.deck) deck.push_back(card_payload(engine.card(c)));
    json completed = json::array();
    for (const auto& c : v.deck)
      if (std::find(v.remaining.begin(), v.remaining.end(), c) == v.remaining.end())
        completed.push_back(c);
    json pending = nullptr;
    if (v.pending)
      pending = {{"kind", v.pending->kind == PendingElicitation::Kind::Likert ? "LIKERT" : "PAIRWISE"},
                 {"card_id", v.pending->card_id}};
    return {{"session_id", v.session_id}, {"user_id", v.user_id},   {"deck", deck},
            {"remaining", v.remaining},   {"completed", completed}, {"turns", v.turns},
            {"pending", pending},         {"finished", v.finished}, {"closed", v.closed}};
  }

  std::vector<FeedbackBundle> filtered_bundles() {
    return filter_annotators(engine.bundles(), engine.quality_checks()).kept;
  }

  DerivedLabels labels_for(const FeedbackBundle& b) {
    DerivedLabels l = derive_labels(b, config.hyper.min_labels_per_pair);
    std::lock_guard g(job_mutex);
    if (auto it = posteriors.find(b.pair_id); it != posteriors.end()) l.y_bayes = bayes_label(it->second);
    return l;
  }

  void start_fit(const json& body, httplib::Response& res) {
    ModelHyperparams hyper = config.hyper;
    std::uint64_t seed = config.seed;
    if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
    if (body.contains("chains")) hyper.chains = need_int(body, "chains");
    if (body.contains("warmup_iters")) hyper.warmup_iters = need_int(body, "warmup_iters");
    if (body.contains("sample_iters")) hyper.sample_iters = need_int(body, "sample_iters");
    hyper.validate();

    std::lock_guard g(job_mutex);
    if (fit_running) throw StateError("a fit job is already running");
    if (worker.joinable()) worker.join();
    const std::string id = "job-" + std::to_string(++job_counter);
    jobs[id] = Job{};
    fit_running = true;
    auto data = filtered_bundles();
    worker = std::thread([this, id, hyper, seed, data = std::move(data)] {
      Job done;
      std::map<std::string, EffectivenessPosterior> fitted;
      try {
        auto fit = fit_effectiveness(data, hyper, seed);
        const auto& r = fit.report;
        std::size_t converged = 0;
        for (const auto& p : fit.posteriors) {
          converged += p.diagnostics.converged;
          fitted[p.pair_id] = p;
        }
        done.status = "succeeded";
        done.result = {{"pairs", fit.posteriors.size()},
                       {"converged", r.converged},
                       {"krippendorff_alpha", r.krippendorff_alpha},
                       {"divergences", r.divergences},
                       {"max_r_hat", *std::max_element(r.r_hat.begin(), r.r_hat.end())},
                       {"min_ess", *std::min_element(r.ess.begin(), r.ess.end())}};
      } catch (const std::exception& e) {
        const auto err = classify(e);
        done.status = "failed";
        done.result = {{"error", err.kind}, {"message", err.message}};
      }
      std::lock_guard g(job_mutex);
      if (done.status == "succeeded") posteriors = std::move(fitted);
      jobs[id] = std::move(done);
      fit_running = false;
    });
    send_json(res, {{"job_id", id}}, 202);
  }

  void routes() {
    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });

    server.Post("/sessions", idempotent([this](const httplib::Request& req, httplib::Response& res) {
      const json b = parse_body(req);
      const auto started = engine.start_session(need_string(b, "user_id"), need_int(b, "deck_size"));
      send_json(res, {{"session_id", started.session_id},
                      {"first_card", card_payload(engine.card(started.first_card))}});
    }));

    server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, session_json(req.matches[1]));
    }));

    server.Post(R"(/sessions/([^/]+)/answer)",
                idempotent([this](const httplib::Request& req, httplib::Response& res) {
                  const json b = parse_body(req);
                  std::optional<bool> override;
                  if (b.contains("override") && !b["override"].is_null()) {
                    if (!b["override"].is_boolean()) throw ArgumentError("override must be a boolean");
                    override = b["override"].get<bool>();
                  }
                  if (!b.contains("answer") || !b["answer"].is_string())
                    throw ArgumentError("field answer must be a string");
                  const std::string card_id = need_string(b, "card_id");
                  const auto r = engine.submit_answer(req.matches[1], card_id,
                                                      b["answer"].get<std::string>(), override);
                  json out{{"card_id", card_id},
                           {"verdict",
                            {{"similarity", r.verdict.similarity},
                             {"auto_correct", r.verdict.auto_correct},
                             {"final_correct", r.verdict.final_correct}}},
                           {"next_action", std::string(to_string(r.next_action))},
                           {"turns", r.turns}};
                  if (r.mnemonic) out["mnemonic"] = r.mnemonic->text;
                  if (r.definition) out["definition"] = *r.definition;
                  send_json(res, out);
                }));

    server.Post(R"(/sessions/([^/]+)/likert)",
                idempotent([this](const httplib::Request& req, httplib::Response& res) {
                  const json b = parse_body(req);
                  engine.record_likert(req.matches[1], need_string(b, "card_id"), need_int(b, "rating"));
                  res.status = 204;
                }));

    server.Get(R"(/sessions/([^/]+)/pairwise-prompt)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 if (!req.has_param("card_id")) throw ArgumentError("query parameter card_id is required");
                 const auto p = engine.pairwise_prompt(req.matches[1], req.get_param_value("card_id"));
                 send_json(res, {{"card_id", p.card_id},
                                 {"left_text", p.left_text},
                                 {"right_text", p.right_text},
                                 {"presentation_token", p.presentation_token}});
               }));

    server.Post(R"(/sessions/([^/]+)/pairwise)",
                idempotent([this](const httplib::Request& req, httplib::Response& res) {
                  const json b = parse_body(req);
                  const auto choice = parse_presented(need_string(b, "choice"));
                  if (!choice) throw ArgumentError("choice must be LEFT, RIGHT or EQUAL");
                  engine.record_presented(req.matches[1], need_string(b, "card_id"), *choice,
                                          need_string(b, "presentation_token"));
                  res.status = 204;
                }));

    server.Post(R"(/sessions/([^/]+)/close)",
                idempotent([this](const httplib::Request& req, httplib::Response& res) {
                  json events = json::array();
                  for (const auto& e : engine.close_session(req.matches[1]))
                    events.push_back({{"user_id", e.user_id},
                                      {"card_id", e.card_id},
                                      {"pair_id", e.pair_id},
                                      {"side", std::string(to_string(e.side))},
                                      {"turns", e.turns}});
                  send_json(res, {{"learn_events", events}});
                }));

    server.Post("/admin/fit-effectiveness",
                idempotent([this](const httplib::Request& req, httplib::Response& res) {
                  start_fit(parse_body(req), res);
                }));

    server.Get(R"(/admin/jobs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard g(job_mutex);
      auto it = jobs.find(req.matches[1]);
      if (it == jobs.end()) throw NotFoundError("unknown job " + std::string(req.matches[1]));
      json out{{"job_id", it->first}, {"status", it->second.status}};
      if (!it->second.result.is_null()) out["result"] = it->second.result;
      send_json(res, out);
    }));

    server.Get(R"(/pairs/([^/]+)/labels)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      const Flashcard& card = engine.card(id);
      FeedbackBundle b;
      b.pair_id = card.pair.id;
      for (const auto& kept : filtered_bundles())
        if (kept.pair_id == b.pair_id) b = kept;
      const auto l = labels_for(b);
      send_json(res, {{"pair_id", l.pair_id},
                      {"y_pair", label_json(l.y_pair)},
                      {"y_rate", label_json(l.y_rate)},
                      {"y_learn", label_json(l.y_learn)},
                      {"y_bayes", label_json(l.y_bayes)}});
    }));

    server.Post("/admin/export-dpo", idempotent([this](const httplib::Request& req, httplib::Response& res) {
      const json b = parse_body(req);
      const auto policy = parse_dpo_policy(need_string(b, "policy"));
      if (!policy) throw ArgumentError("policy must be PAIR_ONLY, BAYES_ONLY or BAYES_AUGMENTED");
      PromptStyle style = PromptStyle::Training;
      if (b.contains("style")) {
        const std::string s = need_string(b, "style");
        if (s == "generation") style = PromptStyle::Generation;
        else if (s != "training") throw ArgumentError("style must be training or generation");
      }
      std::vector<DerivedLabels> labels;
      for (const auto& bundle : filtered_bundles()) labels.push_back(labels_for(bundle));
      std::vector<Term> terms;
      std::vector<MnemonicPair> pairs;
      for (const auto& r : config.deck) {
        terms.push_back(r.term);
        pairs.push_back(r.pair);
      }
      const auto examples = build_dpo_dataset(terms, pairs, labels, *policy, style);
      const auto path = config.data_dir / ("dpo-" + std::string(to_string(*policy)) + ".jsonl");
      write_text_atomic(path, format_examples(examples));
      json list = json::array();
      for (const auto& e : examples)
        list.push_back({{"prompt", e.prompt}, {"chosen", e.chosen}, {"rejected", *e.rejected}});
      send_json(res, {{"path", path.string()}, {"examples", list}});
    }));

    server.Post("/admin/export-preferences",
                idempotent([this](const httplib::Request&, httplib::Response& res) {
                  auto rows = with_feedback(config.deck, engine.bundles());
                  std::map<std::string, std::vector<Vote>> qc_votes;
                  for (const auto& q : engine.quality_checks())
                    qc_votes[q.pair_id].push_back({q.user_id, q.chosen});
                  for (auto& r : rows) {
                    if (!r.quality_check_bad_side) continue;
                    r.feedback = FeedbackBundle{};
                    r.feedback.pair_id = r.pair.id;
                    r.feedback.pairwise_votes = qc_votes[r.pair.id];
                    std::stable_sort(r.feedback.pairwise_votes.begin(), r.feedback.pairwise_votes.end(),
                                     [](const Vote& a, const Vote& b) { return a.choice < b.choice; });
                  }
                  const auto path = config.data_dir / "preferences.jsonl";
                  write_preferences(path, rows);
                  send_json(res, {{"path", path.string()}, {"rows", rows.size()}});
                }));
  }
};

ApiService::ApiService(ApiConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
ApiService::~ApiService() = default;

bool ApiService::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }
int ApiService::bind_ephemeral(const std::string& host) { return impl_->server.bind_to_any_port(host); }
bool ApiService::listen_after_bind() { return impl_->server.listen_after_bind(); }
void ApiService::stop() { impl_->server.stop(); }

void ApiService::wait_for_jobs() {
  std::thread t;
  {
    std::lock_guard g(impl_->job_mutex);
    t = std::move(impl_->worker);
  }
  if (t.joinable()) t.join();
}

}  // namespace mnemo
