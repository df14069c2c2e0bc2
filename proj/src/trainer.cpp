#include "amaze/trainer.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <openssl/evp.h>

namespace amaze {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    if (pos_ + 8 > bytes_.size()) throw InvalidArgument("snapshot", "truncated learner snapshot");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void expect(std::string_view magic) {
    if (bytes_.compare(0, magic.size(), magic) != 0) throw InvalidArgument("snapshot", "bad magic header");
    pos_ = magic.size();
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 failed");
  std::ostringstream out;
  for (unsigned int i = 0; i < length; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

nlohmann::json to_json(const StageRecord& r) {
  return {{"stage", r.stage},       {"candidate", r.candidate}, {"maze", r.maze},
          {"allotted", r.allotted}, {"consumed", r.consumed},   {"early_stopped", r.early_stopped}};
}

StageRecord stage_record_from_json(const nlohmann::json& j) {
  return {j.at("stage").get<int>(),          j.at("candidate").get<int>(),     j.at("maze").get<std::string>(),
          j.at("allotted").get<std::int64_t>(), j.at("consumed").get<std::int64_t>(), j.at("early_stopped").get<bool>()};
}

nlohmann::json to_json(const EvaluationRecord& r) {
  return {{"stage", r.stage},
          {"candidate", r.candidate},
          {"step", r.step},
          {"maze", r.maze},
          {"success_rate", r.success_rate},
          {"mean_normalized_return", r.mean_normalized_return},
          {"optimal", r.optimal}};
}

EvaluationRecord evaluation_record_from_json(const nlohmann::json& j) {
  return {j.at("stage").get<int>(),
          j.at("candidate").get<int>(),
          j.at("step").get<std::int64_t>(),
          j.at("maze").get<std::string>(),
          j.at("success_rate").get<double>(),
          j.at("mean_normalized_return").get<double>(),
          j.at("optimal").get<bool>()};
}

template <typename Fn>
void for_each_parallel(const std::vector<int>& items, int threads, Fn&& fn) {
  if (threads <= 1 || items.size() <= 1) {
    for (int i : items) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  const int n = static_cast<int>(items.size());
  const int workers = std::min(threads, n);
  for (int t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += workers) fn(items[i]);
    });
}

}  // namespace

// ---------------------------------------------------------------------------
// TabularQ

TabularQ::TabularQ(TabularQConfig config) : config_(config), rng_(config.seed) {}

TabularQ TabularQ::oracle(const SignValues& sign_values) {
  TabularQ q({0.0, 0.0, 0});
  const std::array<float, 3> wall_values{0.0f, kOriginValue, kWallValue};
  const std::array<float, 3> signs{sign_values.clue, sign_values.trap, sign_values.lure};
  for (int walls = 0; walls < 81; ++walls) {
    DiscreteObservation base;
    int origins = 0;
    for (int d = 0, w = walls; d < 4; ++d, w /= 3) {
      base.values[d] = wall_values[w % 3];
      origins += base.values[d] == kOriginValue;
    }
    if (origins > 1) continue;
    for (int s = -1; s < 12; ++s) {
      DiscreteObservation obs = base;
      if (s >= 0) obs.values[4 + s % 4] = signs[s / 4];
      Values& v = q.values(obs);
      v.setZero();
      v[index(rule_action(obs, sign_values))] = 1.0;
    }
  }
  return q;
}

TabularQ::Key TabularQ::key(const DiscreteObservation& obs) {
  Key k = 0;
  for (float v : obs.values) k = (k << 8) | static_cast<Key>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  return k;
}

TabularQ::Values& TabularQ::values(const DiscreteObservation& observation) {
  return table_.try_emplace(key(observation), Values::Zero()).first->second;
}

const TabularQ::Values* TabularQ::find(const DiscreteObservation& observation) const {
  const auto it = table_.find(key(observation));
  return it == table_.end() ? nullptr : &it->second;
}

Direction TabularQ::greedy(const DiscreteObservation& observation) const {
  const Values* v = find(observation);
  if (!v) return Direction::East;
  int best = 0;
  for (int a = 1; a < 4; ++a)
    if ((*v)[a] > (*v)[best]) best = a;
  return direction_from_index(best);
}

Direction TabularQ::act(const DiscreteObservation& observation) {
  if (epsilon_ > 0 && rng_.uniform() < epsilon_) return direction_from_index(static_cast<int>(rng_.below(4)));
  return greedy(observation);
}

void TabularQ::learn(const Transition& t) {
  double bootstrap = 0;
  if (!t.done) {
    const Values* next = find(t.next);
    bootstrap = next ? next->maxCoeff() : 0.0;
  }
  double& q = values(t.observation)[index(t.action)];
  q += config_.alpha * (t.reward + config_.gamma * bootstrap - q);
}

std::string TabularQ::snapshot() const {
  std::vector<Key> keys;
  keys.reserve(table_.size());
  for (const auto& [k, v] : table_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());

  std::string out(kMagic);
  put_f64(out, config_.alpha);
  put_f64(out, config_.gamma);
  put_u64(out, config_.seed);
  put_f64(out, epsilon_);
  put_u64(out, rng_.state());
  put_u64(out, rng_.increment());
  put_u64(out, keys.size());
  for (Key k : keys) {
    put_u64(out, k);
    const Values& v = table_.at(k);
    for (int a = 0; a < 4; ++a) put_f64(out, v[a]);
  }
  return out;
}

void TabularQ::restore(const std::string& bytes) {
  Reader in(bytes);
  in.expect(kMagic);
  TabularQConfig config;
  config.alpha = in.f64();
  config.gamma = in.f64();
  config.seed = in.u64();
  const double epsilon = in.f64();
  const std::uint64_t state = in.u64();
  const std::uint64_t inc = in.u64();
  const std::uint64_t n = in.u64();
  std::unordered_map<Key, Values> table;
  table.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const Key k = in.u64();
    Values v;
    for (int a = 0; a < 4; ++a) v[a] = in.f64();
    if (!v.allFinite()) throw InvalidArgument("snapshot", "non-finite action value");
    table.emplace(k, v);
  }
  if (!in.done()) throw InvalidArgument("snapshot", "trailing bytes after learner snapshot");
  config_ = config;
  epsilon_ = epsilon;
  rng_.restore(state, inc);
  table_ = std::move(table);
}

nlohmann::json TabularQ::describe() const {
  return {{"kind", "tabular-q"}, {"alpha", config_.alpha}, {"gamma", config_.gamma}, {"seed", config_.seed}};
}

std::unique_ptr<PolicyLearner> make_learner(const nlohmann::json& description) {
  const auto kind = description.value("kind", std::string("tabular-q"));
  if (kind == "tabular-q") {
    TabularQConfig config;
    config.alpha = description.value("alpha", config.alpha);
    config.gamma = description.value("gamma", config.gamma);
    config.seed = description.value("seed", config.seed);
    if (!(config.alpha >= 0 && config.alpha <= 1)) throw InvalidArgument("learner.alpha", "must lie in [0, 1]");
    if (!(config.gamma >= 0 && config.gamma <= 1)) throw InvalidArgument("learner.gamma", "must lie in [0, 1]");
    return std::make_unique<TabularQ>(config);
  }
  if (kind == "oracle") return std::make_unique<TabularQ>(TabularQ::oracle());
  throw InvalidArgument("learner.kind", "unknown learner '" + kind + "'");
}

std::unique_ptr<PolicyLearner> load_learner(const std::string& bytes) {
  if (bytes.rfind(TabularQ::kMagic, 0) == 0) {
    auto q = std::make_unique<TabularQ>();
    q->restore(bytes);
    return q;
  }
  throw InvalidArgument("snapshot", "unrecognized learner snapshot");
}

// ---------------------------------------------------------------------------
// Runs and stage training

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::Direct: return "direct";
    case Regime::Interpolation: return "interpolation";
    case Regime::Edhucat: return "edhucat";
  }
  return "?";
}

Regime regime_from_string(std::string_view s) {
  for (Regime r : {Regime::Direct, Regime::Interpolation, Regime::Edhucat})
    if (to_string(r) == s) return r;
  throw InvalidArgument("regime", "unknown regime '" + std::string(s) + "'");
}

std::int64_t TrainingRun::consumed() const {
  std::int64_t total = 0;
  for (const auto& s : stages) total += s.consumed;
  return total;
}

nlohmann::json to_json(const TrainingRun& run) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : run.stages) stages.push_back(to_json(s));
  nlohmann::json evaluations = nlohmann::json::array();
  for (const auto& e : run.evaluations) evaluations.push_back(to_json(e));
  return {{"regime", to_string(run.regime)},
          {"budget", run.budget},
          {"consumed", run.consumed()},
          {"stages", stages},
          {"evaluations", evaluations}};
}

TrainingRun training_run_from_json(const nlohmann::json& j) {
  TrainingRun run;
  run.regime = regime_from_string(j.at("regime").get<std::string>());
  run.budget = j.at("budget").get<std::int64_t>();
  for (const auto& s : j.at("stages")) run.stages.push_back(stage_record_from_json(s));
  for (const auto& e : j.at("evaluations")) run.evaluations.push_back(evaluation_record_from_json(e));
  return run;
}

StageTrainer::StageTrainer(PolicyLearner& learner, const Maze& train_maze, std::vector<Maze> stop,
                           std::int64_t allotted, const TrainingOptions& options, int stage, int candidate,
                           std::vector<Maze> monitor)
    : learner_(learner),
      rotations_(all_rotations(train_maze)),
      allotted_(std::max<std::int64_t>(0, allotted)),
      options_(options),
      stage_(stage),
      candidate_(candidate),
      descriptor_(encode_descriptor(train_maze.spec)) {
  if (options_.eval_interval < 1) throw InvalidArgument("eval_interval", "must be at least 1");
  for (const Maze& m : stop) stop_.push_back(all_rotations(m));
  for (const Maze& m : monitor) monitor_.push_back(all_rotations(m));
}

StageRecord StageTrainer::record() const {
  return {stage_, candidate_, descriptor_, allotted_, consumed_, converged_ && consumed_ < allotted_};
}

void StageTrainer::train_steps(std::int64_t n) {
  const double decay_steps = options_.decay_fraction * static_cast<double>(allotted_);
  for (std::int64_t i = 0; i < n; ++i) {
    if (!in_episode_) {
      const Maze& maze = rotations_[episodes_ % 4];
      env_ = reset(maze, RewardParams::raw(maze.path_length()));
      obs_ = observe(env_);
      episode_cap_ = default_max_steps(maze);
      in_episode_ = true;
    }
    const double progress = decay_steps > 0 ? std::min(1.0, static_cast<double>(consumed_) / decay_steps) : 1.0;
    learner_.set_exploration(options_.epsilon_start + (options_.epsilon_end - options_.epsilon_start) * progress);

    const Direction action = learner_.act(obs_);
    const StepResult s = step(env_, action);
    learner_.learn({obs_, action, s.reward, s.observation, s.done});
    obs_ = s.observation;
    ++consumed_;
    if (s.done || env_.steps >= episode_cap_) {
      in_episode_ = false;
      ++episodes_;
    }
  }
}

void StageTrainer::evaluate() {
  GreedyPolicy policy(learner_);
  last_.clear();
  bool all_optimal = !stop_.empty();
  auto record = [&](const std::array<Maze, 4>& rotations) {
    const MazeEvaluation e = evaluate_rotations(policy, rotations);
    last_.push_back({stage_, candidate_, consumed_, e.descriptor, e.success_rate(), e.mean_normalized_return(),
                     e.all_optimal()});
    return e.all_optimal();
  };
  for (const auto& m : stop_) all_optimal = record(m) && all_optimal;
  for (const auto& m : monitor_) record(m);
  converged_ = all_optimal;
  history_.insert(history_.end(), last_.begin(), last_.end());
}

bool StageTrainer::advance() {
  if (finished_) return false;
  if (consumed_ >= allotted_) {
    finished_ = true;
    return false;
  }
  const std::int64_t to_boundary = options_.eval_interval - consumed_ % options_.eval_interval;
  train_steps(std::min(to_boundary, allotted_ - consumed_));
  evaluate();
  finished_ = converged_ || consumed_ >= allotted_;
  return !finished_;
}

TrainingRun train_direct(PolicyLearner& learner, const Maze& train_maze, const Maze& eval_maze, std::int64_t budget,
                         const TrainingOptions& options) {
  if (budget < 1) throw InvalidArgument("budget", "must be at least 1");
  learner.reseed(stream_id(options.seed, 1, 0));
  StageTrainer trainer(learner, train_maze, {eval_maze}, budget, options, 1, 0);
  trainer.run_to_completion();
  TrainingRun run;
  run.regime = Regime::Direct;
  run.budget = budget;
  run.stages.push_back(trainer.record());
  run.evaluations = trainer.evaluations();
  run.final_snapshot = learner.snapshot();
  return run;
}

std::vector<MazeSpec> interpolate_specs(const MazeSpec& initial, const MazeSpec& final_spec, int stages) {
  if (stages < 2) throw InvalidArgument("stages", "at least 2 stages are required");
  validate(initial);
  validate(final_spec);
  auto lerp = [](double a, double b, double t) { return a + (b - a) * t; };
  std::vector<MazeSpec> specs;
  specs.reserve(stages);
  for (int i = 0; i < stages; ++i) {
    if (i == 0) {
      specs.push_back(initial);
      continue;
    }
    if (i == stages - 1) {
      specs.push_back(final_spec);
      continue;
    }
    const double t = static_cast<double>(i) / (stages - 1);
    // Categorical fields (glyph sets, start corner) switch at the midpoint stage.
    const bool late = i >= stages / 2;
    const MazeSpec& categorical = late ? final_spec : initial;
    const MazeSpec& other = late ? initial : final_spec;

    MazeSpec s = categorical;
    s.seed = initial.seed + static_cast<std::uint64_t>(i);
    s.width = static_cast<int>(std::lround(lerp(initial.width, final_spec.width, t)));
    s.height = static_cast<int>(std::lround(lerp(initial.height, final_spec.height, t)));
    s.p_lure = lerp(initial.p_lure, final_spec.p_lure, t);
    s.p_trap = lerp(initial.p_trap, final_spec.p_trap, t);
    // Intersections are allowed (1) or blocked (0); a maze stays unicursive
    // only while the interpolated allowance is exactly zero.
    const double allowance = lerp(initial.unicursive ? 0.0 : 1.0, final_spec.unicursive ? 0.0 : 1.0, t);
    s.unicursive = allowance == 0.0;
    if (s.p_lure > 0 && s.lure_glyphs.empty()) s.lure_glyphs = other.lure_glyphs;
    if (s.p_trap > 0 && s.trap_glyphs.empty()) s.trap_glyphs = other.trap_glyphs;
    validate(s);
    specs.push_back(std::move(s));
  }
  return specs;
}

TrainingRun train_interpolation(PolicyLearner& learner, const std::vector<MazeSpec>& stages, const Maze& eval_maze,
                                std::int64_t budget, const TrainingOptions& options, bool transfer) {
  if (stages.size() < 2) throw InvalidArgument("stages", "at least 2 stages are required");
  if (budget < 1) throw InvalidArgument("budget", "must be at least 1");
  const auto n = static_cast<std::int64_t>(stages.size());
  std::vector<std::int64_t> allotted(stages.size(), budget / n);
  allotted.back() += budget % n;

  TrainingRun run;
  run.regime = Regime::Interpolation;
  run.budget = budget;
  for (std::int64_t i = 0; i < n; ++i) {
    const Maze maze = generate(stages[i]);
    const bool last = i == n - 1;
    learner.reseed(stream_id(options.seed, i + 1, 0));
    StageTrainer trainer(learner, maze, {last ? eval_maze : maze}, allotted[i], options, static_cast<int>(i + 1), 0);
    trainer.run_to_completion();
    const StageRecord record = trainer.record();
    run.stages.push_back(record);
    run.evaluations.insert(run.evaluations.end(), trainer.evaluations().begin(), trainer.evaluations().end());
    if (transfer && record.early_stopped && !last) {
      const std::int64_t unused = record.allotted - record.consumed;
      const std::int64_t remaining = n - 1 - i;
      for (std::int64_t j = i + 1; j < n; ++j) allotted[j] += unused / remaining;
      allotted.back() += unused % remaining;
    }
  }
  run.final_snapshot = learner.snapshot();
  return run;
}

// ---------------------------------------------------------------------------
// Decisions

std::string_view to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::SelectGenerate: return "select+generate";
    case DecisionKind::Select: return "select";
    case DecisionKind::Abort: return "abort";
  }
  return "?";
}

namespace {

DecisionKind decision_kind_from_string(std::string_view s) {
  for (DecisionKind k : {DecisionKind::SelectGenerate, DecisionKind::Select, DecisionKind::Abort})
    if (to_string(k) == s) return k;
  throw InvalidArgument("kind", "unknown decision kind '" + std::string(s) + "'");
}

nlohmann::json hashed_body(const Decision& d) {
  return {{"index", d.index},         {"stage", d.stage},           {"kind", to_string(d.kind)},
          {"selected", d.selected},   {"mazes", d.mazes},           {"annotation", d.annotation},
          {"timestamp", d.timestamp}, {"previous_hash", d.previous_hash}};
}

}  // namespace

DecisionInput decision_input_from_json(const nlohmann::json& j) {
  DecisionInput input;
  if (!j.contains("select") && !j.contains("selected")) throw InvalidArgument("select", "missing selected candidate");
  input.selected = j.contains("select") ? j.at("select").get<int>() : j.at("selected").get<int>();
  if (j.contains("mazes"))
    for (std::size_t i = 0; i < j.at("mazes").size(); ++i) {
      try {
        input.mazes.push_back(decode_descriptor(j.at("mazes")[i].get<std::string>()));
      } catch (const InvalidArgument& e) {
        throw InvalidArgument("mazes[" + std::to_string(i) + "]", e.what());
      }
    }
  input.annotation = j.value("annotation", std::string());
  return input;
}

nlohmann::json to_json(const Decision& d) {
  nlohmann::json j = hashed_body(d);
  j["hash"] = d.hash;
  return j;
}

Decision decision_from_json(const nlohmann::json& j) {
  Decision d;
  d.index = j.at("index").get<int>();
  d.stage = j.at("stage").get<int>();
  d.kind = decision_kind_from_string(j.at("kind").get<std::string>());
  d.selected = j.at("selected").get<int>();
  d.mazes = j.at("mazes").get<std::vector<std::string>>();
  d.annotation = j.at("annotation").get<std::string>();
  d.timestamp = j.at("timestamp").get<std::int64_t>();
  d.previous_hash = j.at("previous_hash").get<std::string>();
  d.hash = j.at("hash").get<std::string>();
  return d;
}

std::string decision_hash(const Decision& d) { return sha256_hex(d.previous_hash + hashed_body(d).dump()); }

bool verify_chain(const std::vector<Decision>& log) {
  std::string previous;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log[i].index != static_cast<int>(i) || log[i].previous_hash != previous) return false;
    if (decision_hash(log[i]) != log[i].hash) return false;
    previous = log[i].hash;
  }
  return true;
}

nlohmann::json to_json(const DecisionPrompt& p) {
  return {{"stage", p.stage},
          {"kind", to_string(p.kind)},
          {"candidates", p.candidates},
          {"mazes_required", p.mazes_required}};
}

ScriptedDecisions ScriptedDecisions::parse(const std::string& text) {
  std::vector<DecisionInput> decisions;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    for (const auto& j : nlohmann::json::parse(text)) decisions.push_back(decision_input_from_json(j));
  } else {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        decisions.push_back(decision_input_from_json(nlohmann::json::parse(line)));
  }
  return ScriptedDecisions(std::move(decisions));
}

DecisionInput ScriptedDecisions::decide(const DecisionPrompt& prompt) {
  if (next_ >= decisions_.size())
    throw std::runtime_error("scripted decisions exhausted at stage " + std::to_string(prompt.stage));
  return decisions_[next_++];
}

Clock system_clock() {
  return [] {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
  };
}

Clock logical_clock() {
  auto counter = std::make_shared<std::int64_t>(0);
  return [counter] { return (*counter)++; };
}

// ---------------------------------------------------------------------------
// EDHuCAT engine

void validate(const EdhucatConfig& c) {
  if (c.candidates < 1) throw InvalidArgument("K", "at least one concurrent candidate is required");
  if (c.stages < 2) throw InvalidArgument("S", "at least 2 stages are required (S = 1 has no decision point)");
  if (c.budget < 1) throw InvalidArgument("budget", "must be at least 1");
  if (c.stage_cap() < 1) throw InvalidArgument("budget", "budget / (K * S) must be at least 1 step");
  if (c.training.eval_interval < 1) throw InvalidArgument("eval_interval", "must be at least 1");
  try {
    validate(c.initial);
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("initial", e.what());
  }
  if (c.target) {
    try {
      validate(*c.target);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("target", e.what());
    }
  }
  make_learner(c.learner);
}

nlohmann::json to_json(const EdhucatConfig& c) {
  nlohmann::json j{{"K", c.candidates},
                   {"S", c.stages},
                   {"budget", c.budget},
                   {"initial", encode_descriptor(c.initial)},
                   {"learner", c.learner},
                   {"eval_interval", c.training.eval_interval},
                   {"epsilon_start", c.training.epsilon_start},
                   {"epsilon_end", c.training.epsilon_end},
                   {"decay_fraction", c.training.decay_fraction},
                   {"seed", c.training.seed},
                   {"threads", c.training.threads}};
  if (c.target) j["target"] = encode_descriptor(*c.target);
  return j;
}

EdhucatConfig edhucat_config_from_json(const nlohmann::json& j) {
  EdhucatConfig c;
  c.candidates = j.value("K", c.candidates);
  c.stages = j.value("S", c.stages);
  c.budget = j.value("budget", c.budget);
  if (!j.contains("initial")) throw InvalidArgument("initial", "missing initial maze descriptor");
  try {
    c.initial = decode_descriptor(j.at("initial").get<std::string>());
  } catch (const InvalidArgument& e) {
    throw InvalidArgument("initial", e.what());
  }
  if (j.contains("target") && !j.at("target").is_null()) {
    try {
      c.target = decode_descriptor(j.at("target").get<std::string>());
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("target", e.what());
    }
  }
  if (j.contains("learner")) c.learner = j.at("learner");
  c.training.eval_interval = j.value("eval_interval", c.training.eval_interval);
  c.training.epsilon_start = j.value("epsilon_start", c.training.epsilon_start);
  c.training.epsilon_end = j.value("epsilon_end", c.training.epsilon_end);
  c.training.decay_fraction = j.value("decay_fraction", c.training.decay_fraction);
  c.training.seed = j.value("seed", c.training.seed);
  c.training.threads = j.value("threads", c.training.threads);
  return c;
}

EdhucatEngine::EdhucatEngine(EdhucatConfig config) : config_(std::move(config)) {
  validate(config_);
  run_.regime = Regime::Edhucat;
  run_.budget = config_.budget;
  Candidate first;
  first.learner = make_learner(config_.learner);
  first.maze = generate(config_.initial);
  first.record = {1, 0, encode_descriptor(config_.initial), config_.stage_cap(), 0, false};
  candidates_.push_back(std::move(first));
}

DecisionPrompt EdhucatEngine::prompt() const {
  if (phase_ != Phase::AwaitingDecision) throw std::logic_error("no decision is pending");
  const bool last = stage_ == config_.stages;
  return {stage_, last ? DecisionKind::Select : DecisionKind::SelectGenerate, static_cast<int>(candidates_.size()),
          last ? 0 : config_.candidates};
}

void EdhucatEngine::run_stage(const RoundCallback& on_round, const std::function<bool()>& abort_requested) {
  if (phase_ != Phase::Training) throw std::logic_error("no stage is pending");
  std::vector<Maze> monitor;
  if (config_.target) monitor.push_back(generate(*config_.target));

  std::vector<std::unique_ptr<StageTrainer>> trainers;
  for (std::size_t k = 0; k < candidates_.size(); ++k) {
    Candidate& c = candidates_[k];
    c.learner->reseed(stream_id(config_.training.seed, static_cast<std::uint64_t>(stage_), k));
    trainers.push_back(std::make_unique<StageTrainer>(*c.learner, c.maze, std::vector<Maze>{c.maze},
                                                      c.record.allotted, config_.training, stage_,
                                                      static_cast<int>(k), monitor));
  }

  for (;;) {
    std::vector<int> active;
    for (std::size_t k = 0; k < trainers.size(); ++k)
      if (!trainers[k]->finished()) active.push_back(static_cast<int>(k));
    if (active.empty()) break;
    for_each_parallel(active, config_.training.threads, [&](int k) { trainers[k]->advance(); });

    std::vector<CandidateProgress> progress;
    for (std::size_t k = 0; k < trainers.size(); ++k) {
      const auto& t = *trainers[k];
      const bool moved = std::find(active.begin(), active.end(), static_cast<int>(k)) != active.end();
      progress.push_back({static_cast<int>(k), t.consumed(), t.finished(), t.converged(),
                          moved ? t.last_evaluations() : std::vector<EvaluationRecord>{}});
    }
    if (on_round) on_round(stage_, progress);
    if (abort_requested && abort_requested()) break;
  }

  for (std::size_t k = 0; k < candidates_.size(); ++k) {
    candidates_[k].record = trainers[k]->record();
    candidates_[k].latest = trainers[k]->last_evaluations();
    run_.stages.push_back(candidates_[k].record);
    const auto& history = trainers[k]->evaluations();
    run_.evaluations.insert(run_.evaluations.end(), history.begin(), history.end());
  }
  phase_ = Phase::AwaitingDecision;
}

Decision& EdhucatEngine::append_decision(Decision d) {
  d.index = static_cast<int>(decisions_.size());
  d.previous_hash = decisions_.empty() ? std::string() : decisions_.back().hash;
  d.hash = decision_hash(d);
  decisions_.push_back(std::move(d));
  return decisions_.back();
}

const Decision& EdhucatEngine::apply_decision(const DecisionInput& input, std::int64_t timestamp) {
  const DecisionPrompt p = prompt();
  if (input.selected < 0 || input.selected >= p.candidates)
    throw InvalidArgument("selected", "candidate index " + std::to_string(input.selected) + " outside [0, " +
                                          std::to_string(p.candidates) + ")");
  if (static_cast<int>(input.mazes.size()) != p.mazes_required)
    throw InvalidArgument("mazes", "expected " + std::to_string(p.mazes_required) + " maze specs, got " +
                                       std::to_string(input.mazes.size()));
  std::vector<Maze> mazes;
  for (std::size_t i = 0; i < input.mazes.size(); ++i) {
    try {
      mazes.push_back(generate(input.mazes[i]));
    } catch (const InvalidArgument& e) {
      throw InvalidArgument("mazes[" + std::to_string(i) + "]", e.what());
    }
  }

  Decision d;
  d.stage = stage_;
  d.kind = p.kind;
  d.selected = input.selected;
  for (const auto& spec : input.mazes) d.mazes.push_back(encode_descriptor(spec));
  d.annotation = input.annotation;
  d.timestamp = timestamp;

  if (p.kind == DecisionKind::Select) {
    run_.final_snapshot = candidates_[input.selected].learner->snapshot();
    phase_ = Phase::Finished;
    return append_decision(std::move(d));
  }

  const auto& parent = *candidates_[input.selected].learner;
  std::vector<Candidate> next;
  for (std::size_t k = 0; k < mazes.size(); ++k) {
    Candidate c;
    c.learner = parent.clone();
    c.record = {stage_ + 1, static_cast<int>(k), d.mazes[k], config_.stage_cap(), 0, false};
    c.maze = std::move(mazes[k]);
    next.push_back(std::move(c));
  }
  candidates_ = std::move(next);
  ++stage_;
  phase_ = Phase::Training;
  return append_decision(std::move(d));
}

const Decision& EdhucatEngine::log_abort(std::int64_t timestamp, std::string annotation) {
  Decision d;
  d.stage = stage_;
  d.kind = DecisionKind::Abort;
  d.annotation = std::move(annotation);
  d.timestamp = timestamp;
  return append_decision(std::move(d));
}

namespace {

std::string_view to_string(EdhucatEngine::Phase p) {
  switch (p) {
    case EdhucatEngine::Phase::Training: return "training";
    case EdhucatEngine::Phase::AwaitingDecision: return "awaiting_decision";
    case EdhucatEngine::Phase::Finished: return "finished";
  }
  return "?";
}

EdhucatEngine::Phase phase_from_string(std::string_view s) {
  for (auto p : {EdhucatEngine::Phase::Training, EdhucatEngine::Phase::AwaitingDecision, EdhucatEngine::Phase::Finished})
    if (to_string(p) == s) return p;
  throw InvalidArgument("phase", "unknown engine phase '" + std::string(s) + "'");
}

}  // namespace

void EdhucatEngine::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir / "snapshots");
  const char* tag = phase_ == Phase::Training ? "start" : "end";
  nlohmann::json candidates = nlohmann::json::array();
  for (std::size_t k = 0; k < candidates_.size(); ++k) {
    const auto name = "stage_" + std::to_string(stage_) + "_cand_" + std::to_string(k) + "_" + tag + ".amzq";
    write_file_atomic(dir / "snapshots" / name, candidates_[k].learner->snapshot());
    nlohmann::json latest = nlohmann::json::array();
    for (const auto& e : candidates_[k].latest) latest.push_back(to_json(e));
    candidates.push_back({{"snapshot", "snapshots/" + name},
                          {"maze", encode_descriptor(candidates_[k].maze.spec)},
                          {"record", to_json(candidates_[k].record)},
                          {"latest", latest}});
  }
  nlohmann::json decisions = nlohmann::json::array();
  for (const auto& d : decisions_) decisions.push_back(to_json(d));
  if (phase_ == Phase::Finished) write_file_atomic(dir / "snapshots" / "final.amzq", run_.final_snapshot);

  const nlohmann::json state{{"config", to_json(config_)}, {"phase", to_string(phase_)},
                             {"stage", stage_},            {"candidates", candidates},
                             {"run", to_json(run_)},       {"decisions", decisions},
                             {"user_data", user_data}};
  write_file_atomic(dir / "engine.json", state.dump(1));

  // Derived exports, reproducible from engine.json.
  write_file_atomic(dir / "ledger.json", to_json(run_).dump(2) + "\n");
  std::string lines;
  for (const auto& d : decisions_) lines += to_json(d).dump() + "\n";
  write_file_atomic(dir / "decisions.jsonl", lines);
}

EdhucatEngine EdhucatEngine::load(const std::filesystem::path& dir) {
  const auto state = nlohmann::json::parse(read_file(dir / "engine.json"));
  EdhucatEngine engine(edhucat_config_from_json(state.at("config")));
  engine.phase_ = phase_from_string(state.at("phase").get<std::string>());
  engine.stage_ = state.at("stage").get<int>();
  engine.run_ = training_run_from_json(state.at("run"));
  for (const auto& d : state.at("decisions")) engine.decisions_.push_back(decision_from_json(d));
  if (!verify_chain(engine.decisions_)) throw std::runtime_error("decision log hash chain is broken");
  engine.candidates_.clear();
  for (const auto& c : state.at("candidates")) {
    Candidate candidate;
    candidate.learner = load_learner(read_file(dir / c.at("snapshot").get<std::string>()));
    candidate.maze = generate(decode_descriptor(c.at("maze").get<std::string>()));
    candidate.record = stage_record_from_json(c.at("record"));
    for (const auto& e : c.at("latest")) candidate.latest.push_back(evaluation_record_from_json(e));
    engine.candidates_.push_back(std::move(candidate));
  }
  if (engine.phase_ == Phase::Finished) engine.run_.final_snapshot = read_file(dir / "snapshots" / "final.amzq");
  engine.user_data = state.value("user_data", nlohmann::json::object());
  return engine;
}

TrainingRun edhucat_run(const EdhucatConfig& config, DecisionSource& source, const Clock& clock,
                        std::vector<Decision>* decision_log) {
  EdhucatEngine engine(config);
  while (engine.phase() != EdhucatEngine::Phase::Finished) {
    if (engine.phase() == EdhucatEngine::Phase::Training)
      engine.run_stage();
    else
      engine.apply_decision(source.decide(engine.prompt()), clock());
  }
  if (decision_log) *decision_log = engine.decisions();
  return engine.run();
}

void write_training_run(const std::filesystem::path& dir, const TrainingRun& run,
                        const std::vector<Decision>& decisions) {
  std::filesystem::create_directories(dir / "snapshots");
  write_file_atomic(dir / "ledger.json", to_json(run).dump(2) + "\n");
  std::string lines;
  for (const auto& d : decisions) lines += to_json(d).dump() + "\n";
  write_file_atomic(dir / "decisions.jsonl", lines);
  write_file_atomic(dir / "snapshots" / "final.amzq", run.final_snapshot);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw std::runtime_error("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace amaze
