#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "amaze/maze.hpp"
#include "amaze/observe.hpp"
#include "amaze/rng.hpp"

namespace amaze {

enum class RewardPreset { Raw, Normalized };

/// Elementary rewards. Penalties are stored as positive magnitudes and always
/// subtracted.
struct RewardParams {
  double goal = 0;       ///< rho_e
  double collision = 0;  ///< rho_w
  double backward = 0;   ///< rho_b
  double time = 0;       ///< rho_t
  RewardPreset preset = RewardPreset::Raw;

  /// Optimal return equals the path length l.
  static RewardParams raw(int path_length);
  /// Optimal return equals 1.
  static RewardParams normalized(int path_length);
  static RewardParams make(RewardPreset preset, int path_length);
};

struct StepOutcome {
  bool collision = false;
  bool backward = false;
  bool reached_goal = false;
};

double reward(const StepOutcome& outcome, const RewardParams& params);

struct EnvState {
  const Maze* maze = nullptr;
  RewardParams params;
  Cell current;
  std::optional<Cell> previous;
  int steps = 0;
  bool done = false;
};

struct StepResult {
  DiscreteObservation observation;
  double reward = 0;
  bool done = false;
  StepOutcome outcome;
};

/// The maze must outlive the returned state.
EnvState reset(const Maze& maze, const RewardParams& params);
DiscreteObservation observe(const EnvState& state);

/// Throws std::logic_error when the episode is already done.
StepResult step(EnvState& state, Direction action);

/// Anything mapping an observation to a move.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Direction act(const DiscreteObservation& observation) = 0;
  /// Called by run_episode before the first observation.
  virtual void begin_episode() {}
};

/// Replays the optimal path of one specific maze, ignoring observations.
class PathFollower final : public Policy {
 public:
  explicit PathFollower(const Maze& maze) : path_(maze.path) {}
  Direction act(const DiscreteObservation&) override;
  void begin_episode() override { next_ = 0; }

 private:
  std::vector<Cell> path_;
  std::size_t next_ = 0;
};

/// Always plays the same move.
class ConstantPolicy final : public Policy {
 public:
  explicit ConstantPolicy(Direction d) : direction_(d) {}
  Direction act(const DiscreteObservation&) override { return direction_; }

 private:
  Direction direction_;
};

/// Uniformly random moves from a seeded stream.
class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed = 0) : rng_(seed) {}
  Direction act(const DiscreteObservation&) override { return direction_from_index(static_cast<int>(rng_.below(4))); }

 private:
  Pcg32 rng_;
};

/// Local rule: follow clues, never take a trap's direction, ignore lures,
/// otherwise the first open non-origin side in E, N, W, S order. Signs are
/// told apart by value only.
Direction rule_action(const DiscreteObservation& observation, const SignValues& values = {});

class RulePolicy final : public Policy {
 public:
  explicit RulePolicy(SignValues values = {}) : values_(values) {}
  Direction act(const DiscreteObservation& observation) override { return rule_action(observation, values_); }

 private:
  SignValues values_;
};

struct EpisodeResult {
  std::vector<Cell> trajectory;  ///< visited cells, start included, one entry per actual move
  double raw_return = 0;         ///< R
  double normalized_return = 0;  ///< R bar
  bool success = false;
  int steps = 0;
  int collisions = 0;
  int backward_steps = 0;
};

inline int default_max_steps(const Maze& maze) { return 8 * maze.path_length(); }

struct EpisodeOptions {
  int max_steps = 0;             ///< 0 selects default_max_steps
  std::ostream* trace = nullptr; ///< JSON-lines step trace
};

/// Resets, then steps until the goal or the step cap. Both reward presets are
/// accumulated from the same step outcomes.
EpisodeResult run_episode(Policy& policy, const Maze& maze, const EpisodeOptions& options = {});

struct RotationResult {
  bool success = false;
  bool optimal = false;  ///< reached the goal in exactly l - 1 moves
  double normalized_return = 0;
  int steps = 0;
};

struct MazeEvaluation {
  std::string descriptor;
  std::array<RotationResult, 4> rotations{};

  bool all_success() const;
  bool all_optimal() const;
  double success_rate() const;
  double mean_normalized_return() const;
};

std::array<Maze, 4> all_rotations(const Maze& maze);

/// One episode per rotation.
MazeEvaluation evaluate_rotations(Policy& policy, const std::array<Maze, 4>& rotations, int max_steps = 0);

}  // namespace amaze
