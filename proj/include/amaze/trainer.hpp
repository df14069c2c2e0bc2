#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "amaze/env.hpp"
#include "amaze/maze.hpp"
#include "amaze/observe.hpp"
#include "amaze/rng.hpp"

namespace amaze {

struct Transition {
  DiscreteObservation observation;
  Direction action = Direction::East;
  double reward = 0;
  DiscreteObservation next;
  bool done = false;
};

/// Seam between the trainers and a concrete learning algorithm. act() is the
/// exploratory behaviour used while training, greedy() the evaluated policy.
class PolicyLearner : public Policy {
 public:
  virtual Direction greedy(const DiscreteObservation& observation) const = 0;
  virtual void learn(const Transition& transition) = 0;
  virtual void set_exploration(double epsilon) = 0;
  /// Restarts the exploration stream; trainers call this at every stage start.
  virtual void reseed(std::uint64_t stream) = 0;
  virtual std::string snapshot() const = 0;
  virtual void restore(const std::string& bytes) = 0;
  virtual std::unique_ptr<PolicyLearner> clone() const = 0;
  virtual nlohmann::json describe() const = 0;
};

/// Evaluates a learner greedily.
class GreedyPolicy final : public Policy {
 public:
  explicit GreedyPolicy(const PolicyLearner& learner) : learner_(learner) {}
  Direction act(const DiscreteObservation& observation) override { return learner_.greedy(observation); }

 private:
  const PolicyLearner& learner_;
};

/// Defaults picked by a sweep over 10x10 Simple mazes; aliased observations
/// favour a high learning rate and a short horizon.
struct TabularQConfig {
  double alpha = 0.9;
  double gamma = 0.4;
  std::uint64_t seed = 0;
};

/// One-step Q-learning over observations quantized to 8 bits per channel.
/// Greedy ties go to the first action in E, N, W, S order.
class TabularQ final : public PolicyLearner {
 public:
  using Key = std::uint64_t;
  using Values = Eigen::Vector4d;

  static constexpr std::string_view kMagic = "AMZQ1";

  explicit TabularQ(TabularQConfig config = {});

  /// Frozen learner (alpha = 0) whose greedy policy is rule_action on every
  /// valid observation with the given sign values.
  static TabularQ oracle(const SignValues& values = {});

  static Key key(const DiscreteObservation& observation);

  Direction act(const DiscreteObservation& observation) override;
  Direction greedy(const DiscreteObservation& observation) const override;
  void learn(const Transition& t) override;
  void set_exploration(double epsilon) override { epsilon_ = epsilon; }
  void reseed(std::uint64_t stream) override { rng_.reseed(config_.seed, stream); }
  std::string snapshot() const override;
  void restore(const std::string& bytes) override;
  std::unique_ptr<PolicyLearner> clone() const override { return std::make_unique<TabularQ>(*this); }
  nlohmann::json describe() const override;

  const Values* find(const DiscreteObservation& observation) const;
  /// Entry for `observation`, inserted as zeros when missing.
  Values& values(const DiscreteObservation& observation);
  std::size_t size() const { return table_.size(); }
  double epsilon() const { return epsilon_; }
  const TabularQConfig& config() const { return config_; }

 private:
  TabularQConfig config_;
  double epsilon_ = 0.0;
  Pcg32 rng_;
  std::unordered_map<Key, Values> table_;
};

/// Builds a learner from its describe() form, e.g. {"kind": "tabular-q", "alpha": 0.1}.
std::unique_ptr<PolicyLearner> make_learner(const nlohmann::json& description);
std::unique_ptr<PolicyLearner> load_learner(const std::string& snapshot_bytes);

struct TrainingOptions {
  std::int64_t eval_interval = 10'000;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double decay_fraction = 0.5;  ///< of each stage's allotment
  std::uint64_t seed = 0;       ///< exploration streams derive from (seed, stage, candidate)
  int threads = 1;
};

enum class Regime { Direct, Interpolation, Edhucat };

std::string_view to_string(Regime r);
Regime regime_from_string(std::string_view s);

struct StageRecord {
  int stage = 1;  ///< 1-based
  int candidate = 0;
  std::string maze;
  std::int64_t allotted = 0;
  std::int64_t consumed = 0;
  bool early_stopped = false;

  friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

struct EvaluationRecord {
  int stage = 1;
  int candidate = 0;
  std::int64_t step = 0;  ///< steps consumed within the stage
  std::string maze;
  double success_rate = 0;
  double mean_normalized_return = 0;
  bool optimal = false;

  friend bool operator==(const EvaluationRecord&, const EvaluationRecord&) = default;
};

struct TrainingRun {
  Regime regime = Regime::Direct;
  std::int64_t budget = 0;
  std::vector<StageRecord> stages;
  std::vector<EvaluationRecord> evaluations;
  std::string final_snapshot;

  std::int64_t consumed() const;
  friend bool operator==(const TrainingRun&, const TrainingRun&) = default;
};

nlohmann::json to_json(const TrainingRun& run);
TrainingRun training_run_from_json(const nlohmann::json& j);

/// Trains one learner on the four rotations of one maze, episode i on
/// rotation i mod 4, in chunks of eval_interval steps. After each chunk the
/// greedy policy is evaluated on the monitored mazes; the stage converges
/// once it is optimal on every rotation of every `stop` maze. `monitor` mazes
/// are evaluated and recorded but do not affect convergence.
class StageTrainer {
 public:
  StageTrainer(PolicyLearner& learner, const Maze& train_maze, std::vector<Maze> stop, std::int64_t allotted,
               const TrainingOptions& options, int stage, int candidate, std::vector<Maze> monitor = {});
  StageTrainer(const StageTrainer&) = delete;
  StageTrainer& operator=(const StageTrainer&) = delete;

  /// Trains up to the next evaluation point; returns false once finished.
  bool advance();
  void run_to_completion() {
    while (advance()) {
    }
  }

  bool finished() const { return finished_; }
  bool converged() const { return converged_; }
  std::int64_t consumed() const { return consumed_; }
  StageRecord record() const;
  /// Evaluations of the most recent chunk, stop mazes first.
  const std::vector<EvaluationRecord>& last_evaluations() const { return last_; }
  const std::vector<EvaluationRecord>& evaluations() const { return history_; }

 private:
  void train_steps(std::int64_t n);
  void evaluate();

  PolicyLearner& learner_;
  std::array<Maze, 4> rotations_;
  std::vector<std::array<Maze, 4>> stop_;
  std::vector<std::array<Maze, 4>> monitor_;
  std::int64_t allotted_;
  TrainingOptions options_;
  int stage_;
  int candidate_;
  std::string descriptor_;

  std::int64_t consumed_ = 0;
  std::int64_t episodes_ = 0;
  bool finished_ = false;
  bool converged_ = false;
  EnvState env_;
  DiscreteObservation obs_;
  bool in_episode_ = false;
  int episode_cap_ = 0;
  std::vector<EvaluationRecord> last_;
  std::vector<EvaluationRecord> history_;
};

TrainingRun train_direct(PolicyLearner& learner, const Maze& train_maze, const Maze& eval_maze, std::int64_t budget,
                         const TrainingOptions& options = {});

/// Linear interpolation of every numeric field; see the implementation for the
/// per-field switching rules. Throws InvalidArgument when stages < 2.
std::vector<MazeSpec> interpolate_specs(const MazeSpec& initial, const MazeSpec& final_spec, int stages);

/// Stage i gets budget / stages (the division remainder goes to the last
/// stage). Intermediate stages converge on their own maze, the last one on
/// `eval_maze`. With `transfer`, budget left by an early stop is spread
/// equally over the remaining stages, the truncation remainder to the last.
TrainingRun train_interpolation(PolicyLearner& learner, const std::vector<MazeSpec>& stages, const Maze& eval_maze,
                                std::int64_t budget, const TrainingOptions& options = {}, bool transfer = true);

// ---------------------------------------------------------------------------
// Human-steered staged training

struct EdhucatConfig {
  int candidates = 3;  ///< K
  int stages = 10;     ///< S
  std::int64_t budget = 3'000'000;
  MazeSpec initial;
  std::optional<MazeSpec> target;  ///< maze the human is steering toward, shown in evaluations
  nlohmann::json learner = {{"kind", "tabular-q"}};
  TrainingOptions training;

  /// Per-agent, per-stage step cap: budget / (K * S).
  std::int64_t stage_cap() const { return budget / (static_cast<std::int64_t>(candidates) * stages); }
};

void validate(const EdhucatConfig& config);
nlohmann::json to_json(const EdhucatConfig& config);
EdhucatConfig edhucat_config_from_json(const nlohmann::json& j);

enum class DecisionKind { SelectGenerate, Select, Abort };

std::string_view to_string(DecisionKind k);

struct DecisionInput {
  int selected = 0;
  std::vector<MazeSpec> mazes;
  std::string annotation;  ///< optional free-form label, e.g. Careful / Moderate / Risky
};

DecisionInput decision_input_from_json(const nlohmann::json& j);

/// Immutable entry of the decision log; entries are hash-chained.
struct Decision {
  int index = 0;
  int stage = 0;  ///< stage boundary the decision was taken at
  DecisionKind kind = DecisionKind::SelectGenerate;
  int selected = 0;
  std::vector<std::string> mazes;
  std::string annotation;
  std::int64_t timestamp = 0;
  std::string previous_hash;
  std::string hash;

  friend bool operator==(const Decision&, const Decision&) = default;
};

nlohmann::json to_json(const Decision& d);
Decision decision_from_json(const nlohmann::json& j);
/// SHA-256 (hex) of previous_hash followed by the canonical entry without its hash.
std::string decision_hash(const Decision& d);
bool verify_chain(const std::vector<Decision>& log);

struct DecisionPrompt {
  int stage = 0;
  DecisionKind kind = DecisionKind::SelectGenerate;
  int candidates = 0;       ///< valid range for the selection
  int mazes_required = 0;   ///< K, or 0 for the final selection
};

nlohmann::json to_json(const DecisionPrompt& p);

class DecisionSource {
 public:
  virtual ~DecisionSource() = default;
  virtual DecisionInput decide(const DecisionPrompt& prompt) = 0;
};

/// Replays a fixed list of decisions; throws once exhausted.
class ScriptedDecisions final : public DecisionSource {
 public:
  explicit ScriptedDecisions(std::vector<DecisionInput> decisions) : decisions_(std::move(decisions)) {}
  /// JSON array or JSON lines of {"select": i, "mazes": [descriptor, ...]}.
  static ScriptedDecisions parse(const std::string& text);

  DecisionInput decide(const DecisionPrompt& prompt) override;
  std::size_t remaining() const { return decisions_.size() - next_; }

 private:
  std::vector<DecisionInput> decisions_;
  std::size_t next_ = 0;
};

using Clock = std::function<std::int64_t()>;

/// Wall clock in milliseconds since the epoch.
Clock system_clock();
/// 0, 1, 2, ... for reproducible logs.
Clock logical_clock();

struct Candidate {
  std::unique_ptr<PolicyLearner> learner;
  Maze maze;
  StageRecord record;
  std::vector<EvaluationRecord> latest;
};

/// Progress of one candidate after an evaluation round.
struct CandidateProgress {
  int candidate = 0;
  std::int64_t consumed = 0;
  bool finished = false;
  bool converged = false;
  std::vector<EvaluationRecord> evaluations;
};

using RoundCallback = std::function<void(int stage, const std::vector<CandidateProgress>&)>;

/// Step-wise EDHuCAT state machine. Stage 1 trains one agent on the initial
/// maze; every later stage trains K copies of the selected agent, copy k on
/// maze k, each capped at budget / (K * S) steps. The K trainings advance in
/// lock-step rounds of eval_interval steps so progress reports come out in a
/// fixed order whatever the thread count.
class EdhucatEngine {
 public:
  enum class Phase { Training, AwaitingDecision, Finished };

  EdhucatEngine(EdhucatConfig config);

  const EdhucatConfig& config() const { return config_; }
  Phase phase() const { return phase_; }
  int stage() const { return stage_; }
  const std::vector<Candidate>& candidates() const { return candidates_; }
  const TrainingRun& run() const { return run_; }
  const std::vector<Decision>& decisions() const { return decisions_; }
  DecisionPrompt prompt() const;

  /// Trains the pending stage. `abort_requested` is polled between rounds.
  void run_stage(const RoundCallback& on_round = {}, const std::function<bool()>& abort_requested = {});

  /// Validates and logs a decision, then prepares the next stage (or
  /// finishes). Throws InvalidArgument for a bad index or maze spec and
  /// std::logic_error when no decision is pending; state is unchanged then.
  const Decision& apply_decision(const DecisionInput& input, std::int64_t timestamp);

  /// Records that the human cut the current stage short.
  const Decision& log_abort(std::int64_t timestamp, std::string annotation = {});

  /// Writes the engine state under `dir`; engine.json is the atomic commit point.
  void save(const std::filesystem::path& dir) const;
  static EdhucatEngine load(const std::filesystem::path& dir);

  /// Extra JSON persisted with the engine (the session service stores its event count here).
  nlohmann::json user_data;

 private:
  Decision& append_decision(Decision d);

  EdhucatConfig config_;
  Phase phase_ = Phase::Training;
  int stage_ = 1;
  std::vector<Candidate> candidates_;
  TrainingRun run_;
  std::vector<Decision> decisions_;
};

/// Runs the whole algorithm against a decision source.
TrainingRun edhucat_run(const EdhucatConfig& config, DecisionSource& source, const Clock& clock = logical_clock(),
                        std::vector<Decision>* decision_log = nullptr);

/// Writes ledger.json, decisions.jsonl and snapshots/final.amzq.
void write_training_run(const std::filesystem::path& dir, const TrainingRun& run,
                        const std::vector<Decision>& decisions = {});

void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace amaze
