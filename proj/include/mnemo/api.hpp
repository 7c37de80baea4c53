#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mnemo/records.hpp"
#include "mnemo/types.hpp"

namespace mnemo {

struct ApiConfig {
  /// Holds events.jsonl (study event log) and idempotency.jsonl. Created if missing.
  std::filesystem::path data_dir;
  std::vector<PreferenceRecord> deck;  // one flashcard per row
  ModelHyperparams hyper;
  std::uint64_t seed = 0;
};

/// HTTP/JSON front end over a StudyEngine plus the fitting and export stages.
///
/// Endpoints:
///   POST /sessions                          {user_id, deck_size} -> {session_id, first_card}
///   GET  /sessions/{id}
///   POST /sessions/{id}/answer              {card_id, answer, override?}
///   POST /sessions/{id}/likert              {card_id, rating} -> 204
///   GET  /sessions/{id}/pairwise-prompt?card_id=...
///   POST /sessions/{id}/pairwise            {card_id, choice: LEFT|RIGHT|EQUAL, presentation_token} -> 204
///   POST /sessions/{id}/close
///   POST /admin/fit-effectiveness           {seed?, chains?, warmup_iters?, sample_iters?} -> 202 {job_id}
///   GET  /admin/jobs/{id}
///   POST /admin/export-dpo                  {policy, style?} -> {examples}
///   POST /admin/export-preferences          -> {path, rows}
///   GET  /pairs/{id}/labels
///   GET  /healthz                           -> "ok"
///
/// Errors are {"error": kind, "message": text} with 404 (unknown id), 409 (state conflict),
/// 422 (invalid argument) or 400 (malformed body). A mutating request carrying an
/// Idempotency-Key header is executed once; retries with the same key and route get the
/// stored response, also across restarts.
class ApiService {
 public:
  explicit ApiService(ApiConfig config);
  ~ApiService();
  ApiService(const ApiService&) = delete;
  ApiService& operator=(const ApiService&) = delete;

  /// Binds and serves until stop(). Returns false when the address cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds to an ephemeral port and returns it; serve with listen_after_bind().
  int bind_ephemeral(const std::string& host);
  bool listen_after_bind();
  void stop();
  /// Blocks until a running fit job (if any) has finished.
  void wait_for_jobs();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mnemo
