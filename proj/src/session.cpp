#include "amaze/session.hpp"

#include <charconv>
#include <fstream>
#include <regex>
#include <sstream>

#include <httplib.h>

#include "amaze/complexity.hpp"

namespace amaze {

namespace {

constexpr const char* kJournal = "events.jsonl";

nlohmann::json to_json(const EvaluationRecord& e) {
  return {{"stage", e.stage},
          {"candidate", e.candidate},
          {"step", e.step},
          {"maze", e.maze},
          {"success_rate", e.success_rate},
          {"mean_normalized_return", e.mean_normalized_return},
          {"optimal", e.optimal}};
}

nlohmann::json to_json(const StageRecord& r) {
  return {{"stage", r.stage},       {"candidate", r.candidate}, {"maze", r.maze},
          {"allotted", r.allotted}, {"consumed", r.consumed},   {"early_stopped", r.early_stopped}};
}

DecisionPrompt prompt_from_json(const nlohmann::json& j) {
  DecisionPrompt p;
  p.stage = j.at("stage").get<int>();
  const auto kind = j.at("kind").get<std::string>();
  p.kind = kind == "select" ? DecisionKind::Select : DecisionKind::SelectGenerate;
  p.candidates = j.at("candidates").get<int>();
  p.mazes_required = j.at("mazes_required").get<int>();
  return p;
}

std::string_view phase_name(EdhucatEngine::Phase p) {
  switch (p) {
    case EdhucatEngine::Phase::Training: return "training";
    case EdhucatEngine::Phase::AwaitingDecision: return "awaiting_decision";
    case EdhucatEngine::Phase::Finished: return "finished";
  }
  return "?";
}

}  // namespace

Session::Session(std::string id, std::filesystem::path dir, EdhucatConfig config, Clock clock)
    : id_(std::move(id)), dir_(std::move(dir)), clock_(std::move(clock)), engine_(std::move(config)) {
  std::filesystem::create_directories(dir_);
  std::ofstream(dir_ / kJournal, std::ios::trunc);
  std::lock_guard lock(mutex_);
  emit("session_created", {{"id", id_}, {"config", to_json(engine_.config())}, {"stage_cap", engine_.config().stage_cap()}});
  emit("stage_started", {{"stage", 1}, {"mazes", stage_mazes(1)}});
  commit();
  refresh_state();
}

Session::Session(std::string id, std::filesystem::path dir, EdhucatEngine engine, Clock clock)
    : id_(std::move(id)), dir_(std::move(dir)), clock_(std::move(clock)), engine_(std::move(engine)) {}

std::unique_ptr<Session> Session::resume(std::string id, std::filesystem::path dir, Clock clock) {
  EdhucatEngine engine = EdhucatEngine::load(dir);
  const auto committed = engine.user_data.value("events", std::size_t{0});
  std::unique_ptr<Session> session(new Session(std::move(id), dir, std::move(engine), std::move(clock)));

  // Drop journal lines written after the last commit; the rerun reproduces them.
  std::ifstream in(dir / kJournal);
  std::string line, kept;
  while (session->events_.size() < committed && std::getline(in, line)) {
    if (line.empty()) continue;
    session->events_.push_back(nlohmann::json::parse(line));
    kept += line + '\n';
  }
  in.close();
  if (session->events_.size() != committed) throw std::runtime_error("event journal shorter than its commit point");
  write_file_atomic(dir / kJournal, kept);

  std::lock_guard lock(session->mutex_);
  for (const auto& c : session->engine_.candidates())
    session->progress_.push_back({c.record.candidate, c.record.consumed,
                                  session->engine_.phase() != EdhucatEngine::Phase::Training, false, c.latest});
  session->refresh_state();
  return session;
}

Session::~Session() { stop(); }

void Session::start() {
  if (thread_.joinable()) return;
  thread_ = std::jthread([this] { worker(); });
}

void Session::stop() {
  {
    std::lock_guard lock(mutex_);
    stopping_ = true;
  }
  abort_flag_ = true;
  changed_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void Session::emit(const std::string& type, nlohmann::json data) {
  nlohmann::json event{{"seq", events_.size()}, {"type", type}, {"data", std::move(data)}};
  std::ofstream out(dir_ / kJournal, std::ios::app);
  out << event.dump() << '\n';
  events_.push_back(std::move(event));
}

void Session::commit() {
  engine_.user_data["events"] = events_.size();
  engine_.save(dir_);
}

std::vector<std::string> Session::stage_mazes(int stage) const {
  if (stage == 1) return {encode_descriptor(engine_.config().initial)};
  const auto& log = engine_.decisions();
  for (auto it = log.rbegin(); it != log.rend(); ++it)
    if (it->kind == DecisionKind::SelectGenerate && it->stage == stage - 1) return it->mazes;
  return {};
}

void Session::refresh_state() {
  const auto& config = engine_.config();
  nlohmann::json candidates = nlohmann::json::array();
  const auto mazes = stage_mazes(engine_.stage());
  for (std::size_t k = 0; k < mazes.size(); ++k) {
    nlohmann::json c{{"candidate", k}, {"maze", mazes[k]}, {"allotted", config.stage_cap()}};
    const CandidateProgress* p = k < progress_.size() ? &progress_[k] : nullptr;
    c["consumed"] = p ? p->consumed : 0;
    c["finished"] = p && p->finished;
    c["converged"] = p && p->converged;
    nlohmann::json latest = nlohmann::json::array();
    if (p)
      for (const auto& e : p->evaluations) latest.push_back(to_json(e));
    c["latest"] = latest;
    c["success_rate"] = p && !p->evaluations.empty() ? p->evaluations.front().success_rate : 0.0;
    c["trajectory"] = "/sessions/" + id_ + "/trajectory/" + std::to_string(engine_.stage()) + "/" + std::to_string(k);
    try {
      c["preview"] = amaze::to_json(generate(decode_descriptor(mazes[k])));
    } catch (const InvalidArgument&) {
      c["preview"] = nullptr;
    }
    candidates.push_back(std::move(c));
  }
  nlohmann::json decisions = nlohmann::json::array();
  for (const auto& d : engine_.decisions()) decisions.push_back(amaze::to_json(d));
  std::optional<DecisionPrompt> pending;
  if (engine_.phase() == EdhucatEngine::Phase::AwaitingDecision) pending = engine_.prompt();

  state_ = {{"id", id_},
            {"phase", phase_name(engine_.phase())},
            {"stage", engine_.stage()},
            {"config", to_json(config)},
            {"stage_cap", config.stage_cap()},
            {"candidates", candidates},
            {"pending", pending ? amaze::to_json(*pending) : nlohmann::json(nullptr)},
            {"decisions", decisions},
            {"ledger", amaze::to_json(engine_.run())},
            {"event_count", events_.size()},
            {"target", config.target ? amaze::to_json(generate(*config.target)) : nlohmann::json(nullptr)}};
}

void Session::emit_prompt_or_finish() {
  if (engine_.phase() == EdhucatEngine::Phase::Finished) {
    emit("finished", {{"consumed", engine_.run().consumed()}, {"budget", engine_.run().budget}});
  } else if (engine_.phase() == EdhucatEngine::Phase::AwaitingDecision) {
    emit("decision_prompt", amaze::to_json(engine_.prompt()));
  } else {
    emit("stage_started", {{"stage", engine_.stage()}, {"mazes", stage_mazes(engine_.stage())}});
  }
}

void Session::worker() {
  for (;;) {
    {
      std::unique_lock lock(mutex_);
      changed_.wait(lock, [this] { return stopping_ || engine_.phase() == EdhucatEngine::Phase::Training; });
      if (stopping_) return;
      progress_.clear();
    }
    const int stage = engine_.stage();
    engine_.run_stage(
        [this](int s, const std::vector<CandidateProgress>& round) {
          std::lock_guard lock(mutex_);
          progress_ = round;
          for (const auto& p : round) {
            if (p.evaluations.empty()) continue;
            emit("progress", {{"stage", s},
                              {"candidate", p.candidate},
                              {"consumed", p.consumed},
                              {"finished", p.finished},
                              {"converged", p.converged}});
            for (const auto& e : p.evaluations) emit("evaluation", to_json(e));
          }
          refresh_state();
          changed_.notify_all();
        },
        [this] { return abort_flag_.load(); });

    std::lock_guard lock(mutex_);
    // Interrupted by stop(): nothing is committed, a resume reruns the stage.
    if (stopping_) return;
    if (abort_flag_) {
      abort_flag_ = false;
      const auto& d = engine_.log_abort(clock_ ? clock_() : static_cast<std::int64_t>(engine_.decisions().size()),
                                        abort_annotation_.value_or(""));
      abort_annotation_.reset();
      emit("stage_aborted", amaze::to_json(d));
    }
    nlohmann::json records = nlohmann::json::array();
    for (const auto& c : engine_.candidates()) records.push_back(to_json(c.record));
    emit("stage_completed", {{"stage", stage}, {"records", records}});
    emit_prompt_or_finish();
    commit();
    refresh_state();
    changed_.notify_all();
  }
}

nlohmann::json Session::state() const {
  std::lock_guard lock(mutex_);
  return state_;
}

bool Session::finished() const {
  std::lock_guard lock(mutex_);
  return state_.at("phase") == "finished";
}

bool Session::stopped() const {
  std::lock_guard lock(mutex_);
  return stopping_;
}

std::optional<DecisionPrompt> Session::pending() const {
  std::lock_guard lock(mutex_);
  if (state_.at("pending").is_null()) return std::nullopt;
  return prompt_from_json(state_.at("pending"));
}

std::vector<nlohmann::json> Session::events(std::size_t cursor) const {
  std::lock_guard lock(mutex_);
  if (cursor >= events_.size()) return {};
  return {events_.begin() + static_cast<std::ptrdiff_t>(cursor), events_.end()};
}

std::size_t Session::event_count() const {
  std::lock_guard lock(mutex_);
  return events_.size();
}

bool Session::wait_events(std::size_t cursor, std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  return changed_.wait_for(lock, timeout, [&] {
    return events_.size() > cursor || stopping_ || state_.at("phase") == "finished";
  }) && events_.size() > cursor;
}

std::optional<DecisionPrompt> Session::wait_pending(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(mutex_);
  changed_.wait_for(lock, timeout, [&] {
    return stopping_ || !state_.at("pending").is_null() || state_.at("phase") == "finished";
  });
  if (state_.at("pending").is_null()) return std::nullopt;
  return prompt_from_json(state_.at("pending"));
}

Decision Session::submit(const DecisionInput& input) {
  std::lock_guard lock(mutex_);
  // The worker only touches the engine while training, so it is idle here.
  if (state_.at("pending").is_null()) throw Conflict("no decision is pending");
  const std::int64_t timestamp = clock_ ? clock_() : static_cast<std::int64_t>(engine_.decisions().size());
  Decision d = engine_.apply_decision(input, timestamp);
  emit("decision", amaze::to_json(d));
  progress_.clear();
  emit_prompt_or_finish();
  commit();
  refresh_state();
  changed_.notify_all();
  return d;
}

void Session::request_abort(std::string annotation) {
  std::lock_guard lock(mutex_);
  if (state_.at("phase") != "training") throw Conflict("no stage is training");
  abort_annotation_ = std::move(annotation);
  abort_flag_ = true;
}

nlohmann::json Session::trajectory(int stage, int candidate, int rotation, bool target) const {
  std::string descriptor;
  std::filesystem::path snapshot;
  std::string which;
  {
    std::lock_guard lock(mutex_);
    if (stage < 1 || stage > engine_.stage()) throw InvalidArgument("stage", "no such stage");
    const auto mazes = stage_mazes(stage);
    if (candidate < 0 || candidate >= static_cast<int>(mazes.size()))
      throw InvalidArgument("candidate", "no such candidate");
    if (target) {
      if (!engine_.config().target) throw InvalidArgument("maze", "session has no target maze");
      descriptor = encode_descriptor(*engine_.config().target);
    } else {
      descriptor = mazes[candidate];
    }
    const auto base = "stage_" + std::to_string(stage) + "_cand_" + std::to_string(candidate) + "_";
    for (const char* tag : {"end", "start"}) {
      const auto path = dir_ / "snapshots" / (base + tag + ".amzq");
      if (std::filesystem::exists(path)) {
        snapshot = path;
        which = tag;
        break;
      }
    }
  }
  if (snapshot.empty()) throw InvalidArgument("candidate", "no snapshot recorded yet");
  if (rotation < 0 || rotation > 3) throw InvalidArgument("rotation", "must lie in [0, 3]");

  const auto learner = load_learner(read_file(snapshot));
  const Maze maze = rotate(generate(decode_descriptor(descriptor)), rotation);
  GreedyPolicy policy(*learner);
  std::ostringstream trace;
  const EpisodeResult r = run_episode(policy, maze, {0, &trace});
  nlohmann::json steps = nlohmann::json::array();
  std::istringstream lines(trace.str());
  for (std::string line; std::getline(lines, line);) steps.push_back(nlohmann::json::parse(line));
  nlohmann::json cells = nlohmann::json::array();
  for (Cell c : r.trajectory) cells.push_back({c.x, c.y});
  return {{"stage", stage},
          {"candidate", candidate},
          {"maze", descriptor},
          {"rotation", rotation},
          {"snapshot", which},
          {"success", r.success},
          {"steps", r.steps},
          {"normalized_return", r.normalized_return},
          {"trajectory", cells},
          {"trace", steps}};
}

void drive(Session& session, DecisionSource& source) {
  for (;;) {
    const auto prompt = session.wait_pending();
    if (!prompt) {
      if (session.finished()) return;
      if (session.stopped()) throw std::runtime_error("session stopped before finishing");
      continue;
    }
    session.submit(source.decide(*prompt));
  }
}

// ---------------------------------------------------------------------------

SessionManager::SessionManager(std::filesystem::path root, Clock clock) : root_(std::move(root)), clock_(std::move(clock)) {
  std::filesystem::create_directories(root_);
}

SessionManager::~SessionManager() { stop_all(); }

void SessionManager::resume_all() {
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(root_))
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "engine.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    const auto id = dir.filename().string();
    auto session = std::shared_ptr<Session>(Session::resume(id, dir, clock_));
    session->start();
    std::lock_guard lock(mutex_);
    if (id.size() > 1 && id[0] == 's') next_id_ = std::max(next_id_, std::stoi(id.substr(1)) + 1);
    sessions_[id] = std::move(session);
  }
}

std::string SessionManager::create(const nlohmann::json& config_json) {
  EdhucatConfig config = edhucat_config_from_json(config_json);
  validate(config);
  std::string id;
  {
    std::lock_guard lock(mutex_);
    id = "s" + std::to_string(next_id_++);
  }
  auto session = std::make_shared<Session>(id, root_ / id, std::move(config), clock_);
  session->start();
  std::lock_guard lock(mutex_);
  sessions_[id] = session;
  return id;
}

std::shared_ptr<Session> SessionManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

void SessionManager::stop_all() {
  std::map<std::string, std::shared_ptr<Session>> sessions;
  {
    std::lock_guard lock(mutex_);
    sessions = sessions_;
  }
  for (auto& [id, s] : sessions) s->stop();
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& field = {}) {
  nlohmann::json body{{"error", message}};
  if (!field.empty()) body["field"] = field;
  send_json(res, body, status);
}

/// Runs `fn`, mapping library exceptions onto HTTP statuses.
template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Conflict& e) {
    send_error(res, 409, e.what());
  } catch (const InvalidArgument& e) {
    send_error(res, 400, e.what(), e.field());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("malformed JSON: ") + e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

std::shared_ptr<Session> lookup(SessionManager& manager, const httplib::Request& req, httplib::Response& res) {
  auto session = manager.find(req.matches[1]);
  if (!session) send_error(res, 404, "unknown session '" + std::string(req.matches[1]) + "'");
  return session;
}

std::size_t query_number(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  const auto value = req.get_param_value(key);
  std::size_t n = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw InvalidArgument(key, "expected a non-negative integer");
  return n;
}

Maze maze_from_path(const httplib::Request& req) { return generate(decode_descriptor(std::string(req.matches[1]))); }

}  // namespace

void install_routes(httplib::Server& server, SessionManager& manager) {
  server.Post("/sessions", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
      const auto id = manager.create(body);
      send_json(res, {{"id", id}, {"state", manager.find(id)->state()}}, 201);
    });
  });

  server.Get("/sessions", [&manager](const httplib::Request&, httplib::Response& res) {
    send_json(res, manager.ids());
  });

  server.Get(R"(/sessions/([^/]+))", [&manager](const httplib::Request& req, httplib::Response& res) {
    if (auto s = lookup(manager, req, res)) send_json(res, s->state());
  });

  server.Post(R"(/sessions/([^/]+)/decision)", [&manager](const httplib::Request& req, httplib::Response& res) {
    auto s = lookup(manager, req, res);
    if (!s) return;
    guarded(res, [&] {
      const Decision d = s->submit(decision_input_from_json(nlohmann::json::parse(req.body)));
      send_json(res, to_json(d));
    });
  });

  server.Post(R"(/sessions/([^/]+)/abort)", [&manager](const httplib::Request& req, httplib::Response& res) {
    auto s = lookup(manager, req, res);
    if (!s) return;
    guarded(res, [&] {
      const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
      s->request_abort(body.value("annotation", std::string()));
      send_json(res, {{"status", "aborting"}}, 202);
    });
  });

  server.Get(R"(/sessions/([^/]+)/events)", [&manager](const httplib::Request& req, httplib::Response& res) {
    auto s = lookup(manager, req, res);
    if (!s) return;
    guarded(res, [&] {
      std::size_t cursor = query_number(req, "cursor", 0);
      if (req.has_header("Last-Event-ID")) cursor = std::stoul(req.get_header_value("Last-Event-ID")) + 1;
      if (req.get_header_value("Accept").find("text/event-stream") == std::string::npos) {
        const auto wait = query_number(req, "wait", 0);
        if (wait) s->wait_events(cursor, std::chrono::milliseconds(wait));
        send_json(res, s->events(cursor));
        return;
      }
      auto next = std::make_shared<std::size_t>(cursor);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [s, next](std::size_t, httplib::DataSink& sink) {
        s->wait_events(*next, std::chrono::milliseconds(1000));
        for (const auto& e : s->events(*next)) {
          const std::string frame = "id: " + std::to_string(e.at("seq").get<std::size_t>()) +
                                    "\nevent: " + e.at("type").get<std::string>() + "\ndata: " + e.dump() + "\n\n";
          if (!sink.write(frame.data(), frame.size())) return false;
          ++*next;
        }
        if (s->finished() && *next >= s->event_count()) sink.done();
        return sink.is_writable();
      });
    });
  });

  server.Get(R"(/sessions/([^/]+)/trajectory/(\d+)/(\d+))",
             [&manager](const httplib::Request& req, httplib::Response& res) {
               auto s = lookup(manager, req, res);
               if (!s) return;
               guarded(res, [&] {
                 const int rotation = static_cast<int>(query_number(req, "rotation", 0));
                 const bool target = req.get_param_value("maze") == "target";
                 send_json(res, s->trajectory(std::stoi(req.matches[2]), std::stoi(req.matches[3]), rotation, target));
               });
             });

  server.Get(R"(/mazes/([^/]+)/svg)", [](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { res.set_content(render_svg(maze_from_path(req)), "image/svg+xml"); });
  });

  server.Get(R"(/mazes/([^/]+)/metrics)", [](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Maze maze = maze_from_path(req);
      int counts[3] = {0, 0, 0};
      for (const auto& sign : maze.signs)
        if (sign) ++counts[static_cast<int>(sign->kind)];
      send_json(res, {{"descriptor", encode_descriptor(maze.spec)},
                      {"class", to_string(classify(maze.spec))},
                      {"surprisingness", surprisingness(maze)},
                      {"deceptiveness", deceptiveness(maze)},
                      {"path_length", maze.path_length()},
                      {"intersections", path_intersections(maze).size()},
                      {"clues", counts[0]},
                      {"lures", counts[1]},
                      {"traps", counts[2]}});
    });
  });

  server.Get(R"(/mazes/([^/]+))", [](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, to_json(maze_from_path(req))); });
  });
}

std::string drive_over_http(const std::string& host, int port, const nlohmann::json& config, DecisionSource& source) {
  httplib::Client client(host, port);
  client.set_read_timeout(std::chrono::seconds(60));
  auto fail = [](const std::string& what, const httplib::Result& r) {
    return std::runtime_error(what + " failed: " + (r ? std::to_string(r->status) + " " + r->body : to_string(r.error())));
  };
  const auto created = client.Post("/sessions", config.dump(), "application/json");
  if (!created || created->status != 201) throw fail("POST /sessions", created);
  const auto id = nlohmann::json::parse(created->body).at("id").get<std::string>();

  std::size_t cursor = 0;
  for (;;) {
    const auto path = "/sessions/" + id + "/events?cursor=" + std::to_string(cursor) + "&wait=1000";
    const auto r = client.Get(path);
    if (!r || r->status != 200) throw fail("GET " + path, r);
    for (const auto& event : nlohmann::json::parse(r->body)) {
      ++cursor;
      const auto type = event.at("type").get<std::string>();
      if (type == "finished") return id;
      if (type != "decision_prompt") continue;
      const DecisionInput input = source.decide(prompt_from_json(event.at("data")));
      nlohmann::json body{{"select", input.selected}, {"annotation", input.annotation}};
      body["mazes"] = nlohmann::json::array();
      for (const auto& spec : input.mazes) body["mazes"].push_back(encode_descriptor(spec));
      const auto posted = client.Post("/sessions/" + id + "/decision", body.dump(), "application/json");
      if (!posted || posted->status != 200) throw fail("POST decision", posted);
    }
  }
}

}  // namespace amaze
