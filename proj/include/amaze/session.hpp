#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "amaze/trainer.hpp"

namespace httplib {
class Server;
}

namespace amaze {

/// Raised for a decision submitted while none is pending.
class Conflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One EDHuCAT run hosted by the service. A worker thread trains; API calls
/// read a cached state document and submit decisions under the session lock.
///
/// On disk (one directory per session): the engine files written by
/// EdhucatEngine::save plus events.jsonl, the append-only event journal.
/// Events carry a sequence number equal to their line index.
class Session {
 public:
  /// Creates and persists a fresh session; training starts with start().
  /// Decisions are stamped by `clock`; an empty clock stamps them with their
  /// log index, which stays reproducible across restarts.
  Session(std::string id, std::filesystem::path dir, EdhucatConfig config, Clock clock = system_clock());
  /// Reloads from the last commit point; the event journal is cut back to it.
  static std::unique_ptr<Session> resume(std::string id, std::filesystem::path dir, Clock clock = system_clock());
  ~Session();
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  void start();
  /// Stops the worker at the next round boundary without logging anything.
  void stop();

  const std::string& id() const { return id_; }
  const std::filesystem::path& dir() const { return dir_; }

  nlohmann::json state() const;
  bool finished() const;
  bool stopped() const;
  std::optional<DecisionPrompt> pending() const;

  /// Events with seq >= cursor.
  std::vector<nlohmann::json> events(std::size_t cursor) const;
  std::size_t event_count() const;
  /// Blocks until more than `cursor` events exist, the session finishes, or the timeout passes.
  bool wait_events(std::size_t cursor, std::chrono::milliseconds timeout) const;
  /// Blocks until a decision is pending or the session finished.
  std::optional<DecisionPrompt> wait_pending(std::chrono::milliseconds timeout = std::chrono::hours(24)) const;

  /// Throws Conflict when no decision is pending and InvalidArgument for a bad
  /// selection or maze; the pending decision is kept in both cases.
  Decision submit(const DecisionInput& input);

  /// Ends the running stage at the next evaluation round and logs an abort.
  void request_abort(std::string annotation = {});

  /// Greedy episode of a candidate on its stage maze (or the target maze),
  /// using the snapshot taken at the end of that stage when available, else
  /// the one from its start.
  nlohmann::json trajectory(int stage, int candidate, int rotation = 0, bool target = false) const;

 private:
  Session(std::string id, std::filesystem::path dir, EdhucatEngine engine, Clock clock);

  void worker();
  void emit(const std::string& type, nlohmann::json data);  // requires mutex_
  void commit();                                           // requires mutex_
  void refresh_state();                                    // requires mutex_
  void emit_prompt_or_finish();                            // requires mutex_
  std::vector<std::string> stage_mazes(int stage) const;   // requires mutex_

  std::string id_;
  std::filesystem::path dir_;
  Clock clock_;

  mutable std::mutex mutex_;
  mutable std::condition_variable changed_;
  EdhucatEngine engine_;
  std::vector<nlohmann::json> events_;
  std::vector<CandidateProgress> progress_;
  nlohmann::json state_;
  std::optional<std::string> abort_annotation_;
  bool stopping_ = false;

  std::atomic<bool> abort_flag_{false};
  std::jthread thread_;
};

/// Runs a session headless against a decision source until it finishes.
void drive(Session& session, DecisionSource& source);

/// Owns every session under one state directory.
class SessionManager {
 public:
  explicit SessionManager(std::filesystem::path root, Clock clock = system_clock());
  ~SessionManager();

  /// Resumes every session directory found under the root and starts it.
  void resume_all();
  /// Validates `config` (EdhucatConfig JSON), persists and starts a session.
  std::string create(const nlohmann::json& config);
  std::shared_ptr<Session> find(const std::string& id) const;
  std::vector<std::string> ids() const;
  void stop_all();

 private:
  std::filesystem::path root_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  int next_id_ = 1;
};

/// Registers the HTTP API on `server`:
///   POST /sessions, GET /sessions, GET /sessions/{id},
///   POST /sessions/{id}/decision, POST /sessions/{id}/abort,
///   GET /sessions/{id}/events?cursor=N (JSON array, or SSE for text/event-stream),
///   GET /sessions/{id}/trajectory/{stage}/{candidate}[?rotation=k&maze=target],
///   GET /mazes/{descriptor}, /mazes/{descriptor}/svg, /mazes/{descriptor}/metrics.
void install_routes(httplib::Server& server, SessionManager& manager);

/// Drives a session over HTTP with a scripted decision source: creates it
/// from `config`, then answers every prompt found in the event stream.
/// Returns the session id.
std::string drive_over_http(const std::string& host, int port, const nlohmann::json& config, DecisionSource& source);

}  // namespace amaze
