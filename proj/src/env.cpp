#include "amaze/env.hpp"

#include <algorithm>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace amaze {

RewardParams RewardParams::raw(int l) { return {2.0 * l - 1.0, 0.1, 0.2, 1.0, RewardPreset::Raw}; }

RewardParams RewardParams::normalized(int l) {
  return {2.0, 0.01, 0.02, 1.0 / (l - 1.0), RewardPreset::Normalized};
}

RewardParams RewardParams::make(RewardPreset preset, int l) {
  return preset == RewardPreset::Raw ? raw(l) : normalized(l);
}

double reward(const StepOutcome& o, const RewardParams& p) {
  double r = -p.time;
  if (o.collision) r -= p.collision;
  if (o.backward) r -= p.backward;
  if (o.reached_goal) r += p.goal;
  return r;
}

EnvState reset(const Maze& maze, const RewardParams& params) {
  EnvState state;
  state.maze = &maze;
  state.params = params;
  state.current = maze.start;
  return state;
}

DiscreteObservation observe(const EnvState& state) {
  return observe_discrete(*state.maze, state.current, state.previous);
}

StepResult step(EnvState& state, Direction action) {
  if (state.done) throw std::logic_error("step on a finished episode");
  const Maze& maze = *state.maze;
  StepResult result;
  ++state.steps;
  if (maze.wall(state.current, action)) {
    result.outcome.collision = true;
  } else {
    const Cell next = neighbor(state.current, action);
    result.outcome.backward = state.previous && next == *state.previous;
    state.previous = state.current;
    state.current = next;
    if (next == maze.goal) {
      result.outcome.reached_goal = true;
      state.done = true;
    }
  }
  result.reward = reward(result.outcome, state.params);
  result.done = state.done;
  result.observation = observe(state);
  return result;
}

Direction PathFollower::act(const DiscreteObservation&) {
  if (next_ + 1 >= path_.size()) return Direction::East;
  const Direction d = *direction_between(path_[next_], path_[next_ + 1]);
  ++next_;
  return d;
}

Direction rule_action(const DiscreteObservation& obs, const SignValues& values) {
  const auto origin = obs.origin();
  const auto sign = obs.sign_direction();
  std::optional<Direction> avoid;
  if (sign) {
    const float v = obs.sign_channel(*sign);
    if (v == values.trap)
      avoid = sign;
    else if (v != values.lure)
      return *sign;
  }
  for (Direction d : kDirections)
    if (!obs.is_wall(d) && d != origin && d != avoid) return d;
  return origin.value_or(Direction::East);
}

EpisodeResult run_episode(Policy& policy, const Maze& maze, const EpisodeOptions& options) {
  const int l = maze.path_length();
  const int max_steps = options.max_steps > 0 ? options.max_steps : default_max_steps(maze);
  const RewardParams normalized = RewardParams::normalized(l);

  EpisodeResult result;
  EnvState state = reset(maze, RewardParams::raw(l));
  DiscreteObservation obs = observe(state);
  result.trajectory.push_back(state.current);
  policy.begin_episode();
  while (!state.done && state.steps < max_steps) {
    const Direction action = policy.act(obs);
    const StepResult s = step(state, action);
    const double normalized_reward = reward(s.outcome, normalized);
    result.raw_return += s.reward;
    result.normalized_return += normalized_reward;
    result.collisions += s.outcome.collision ? 1 : 0;
    result.backward_steps += s.outcome.backward ? 1 : 0;
    if (!s.outcome.collision) result.trajectory.push_back(state.current);
    if (options.trace) {
      nlohmann::json line{{"step", state.steps},
                          {"position", {state.current.x, state.current.y}},
                          {"action", std::string(1, to_char(action))},
                          {"reward", s.reward},
                          {"normalized_reward", normalized_reward},
                          {"observation", s.observation.values}};
      *options.trace << line.dump() << '\n';
    }
    obs = s.observation;
  }
  result.steps = state.steps;
  result.success = state.current == maze.goal;
  return result;
}

bool MazeEvaluation::all_success() const {
  return std::all_of(rotations.begin(), rotations.end(), [](const auto& r) { return r.success; });
}

bool MazeEvaluation::all_optimal() const {
  return std::all_of(rotations.begin(), rotations.end(), [](const auto& r) { return r.optimal; });
}

double MazeEvaluation::success_rate() const {
  return std::count_if(rotations.begin(), rotations.end(), [](const auto& r) { return r.success; }) / 4.0;
}

double MazeEvaluation::mean_normalized_return() const {
  double sum = 0;
  for (const auto& r : rotations) sum += r.normalized_return;
  return sum / 4.0;
}

std::array<Maze, 4> all_rotations(const Maze& maze) {
  return {rotate(maze, 0), rotate(maze, 1), rotate(maze, 2), rotate(maze, 3)};
}

MazeEvaluation evaluate_rotations(Policy& policy, const std::array<Maze, 4>& rotations, int max_steps) {
  MazeEvaluation eval;
  eval.descriptor = encode_descriptor(rotations[0].spec);
  for (int k = 0; k < 4; ++k) {
    const Maze& m = rotations[k];
    const EpisodeResult r = run_episode(policy, m, {max_steps, nullptr});
    eval.rotations[k] = {r.success, r.success && r.steps == m.path_length() - 1, r.normalized_return, r.steps};
  }
  return eval;
}

}  // namespace amaze
