#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "amaze/maze.hpp"
#include "amaze/observe.hpp"

namespace amaze {

/// Which cells make up the state population of the deceptiveness metric.
enum class StatePopulation {
  OnPath,    ///< cells of the optimal trajectory as the path follower sees them
  AllCells,  ///< every cell, entered from its breadth-first parent
};

struct ComplexityReport {
  double surprisingness = 0;  ///< bits
  double deceptiveness = 0;   ///< bits
  std::map<DiscreteObservation, int> histogram;  ///< inputs along the optimal trajectory
};

/// Inputs perceived by the path follower before each of its moves (goal excluded).
std::vector<DiscreteObservation> optimal_trajectory_inputs(const Maze& maze);

/// Shannon entropy (bits) of a count vector; terms are summed in ascending
/// count order so the result does not depend on how states are keyed.
double entropy_bits(std::vector<long> counts);

double surprisingness(const Maze& maze);
double deceptiveness(const Maze& maze, StatePopulation population = StatePopulation::OnPath);
ComplexityReport analyze(const Maze& maze, StatePopulation population = StatePopulation::OnPath);

struct SweepRow {
  std::string descriptor;
  MazeClass maze_class = MazeClass::Simple;
  double surprisingness = 0;
  double deceptiveness = 0;
};

/// `count` mazes per class with seeds template.seed .. template.seed + count - 1.
/// Rows come out class-major, then seed order, whatever the thread count.
std::vector<SweepRow> sweep(const MazeSpec& base, std::span<const MazeClass> classes, int count, int threads = 1);

std::string to_csv(const std::vector<SweepRow>& rows);
std::vector<SweepRow> sweep_from_csv(const std::string& text);

/// S-vs-D scatter with a surprisingness marginal per class.
std::string render_scatter_svg(const std::vector<SweepRow>& rows);

/// Ranks `sample` by surprisingness (ties by seed) and returns the mazes at
/// the requested percentiles, index round(p / 100 * (n - 1)).
std::vector<Maze> percentile_select(std::vector<Maze> sample, std::span<const double> percentiles);

/// Generates `sample_size` mazes of `cls` from the template's seed onward, then ranks them.
std::vector<Maze> percentile_select(const MazeSpec& base, MazeClass cls, int sample_size,
                                    std::span<const double> percentiles);

}  // namespace amaze
