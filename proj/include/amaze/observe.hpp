#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "amaze/maze.hpp"

namespace amaze {

inline constexpr float kWallValue = 1.0f;
inline constexpr float kOriginValue = 0.5f;

/// Local percept of the fully discrete regime:
/// (W_e, W_n, W_w, W_s, S_e, S_n, S_w, S_s).
struct DiscreteObservation {
  std::array<float, 8> values{};

  float wall_channel(Direction d) const { return values[index(d)]; }
  float sign_channel(Direction d) const { return values[4 + index(d)]; }
  bool is_wall(Direction d) const { return wall_channel(d) == kWallValue; }
  bool is_origin(Direction d) const { return wall_channel(d) == kOriginValue; }
  std::optional<Direction> origin() const;
  std::optional<Direction> sign_direction() const;
  int open_count() const;

  friend auto operator<=>(const DiscreteObservation&, const DiscreteObservation&) = default;
};

std::string to_string(const DiscreteObservation& obs);

/// Channel permutation matching rotate(maze, k): channel d moves to d + k.
DiscreteObservation rotated(const DiscreteObservation& obs, int quarter_turns);

DiscreteObservation observe_discrete(const Maze& maze, Cell pos, std::optional<Cell> prev);

/// Square grayscale image of one cell, row 0 on the north side.
using CellRaster = Eigen::MatrixXf;

inline constexpr int kMinRasterResolution = 8;

/// Walls are full-intensity border bands (width resolution / 8), the origin
/// side a half-intensity band, a sign a centered triangle pointing toward its
/// direction with the glyph value as intensity.
CellRaster render_cell(const Maze& maze, Cell pos, std::optional<Cell> prev, int resolution);

/// Every cell rendered without origin and tiled in maze layout (north up).
CellRaster render_maze(const Maze& maze, int resolution);

/// Binary 8-bit PGM ("P5").
std::string to_pgm(const CellRaster& raster);
CellRaster from_pgm(const std::string& bytes);

enum class InputClass : std::uint8_t { Empty = 0, Lure = 1, Clue = 2, Trap = 3 };

inline constexpr std::array<InputClass, 4> kInputClasses{InputClass::Empty, InputClass::Lure, InputClass::Clue,
                                                         InputClass::Trap};

std::string_view to_string(InputClass c);

struct SignValues {
  float clue = 1.0f;
  float trap = 0.5f;
  float lure = 0.25f;
};

struct LabeledInput {
  DiscreteObservation observation;
  InputClass label = InputClass::Empty;
  std::uint8_t correct = 0;  ///< bit per Direction

  bool accepts(Direction d) const { return (correct & bit(d)) != 0; }
};

/// All mid-episode percepts (origin present, at least two open sides) with
/// their class and the set of correct moves.
std::vector<LabeledInput> enumerate_discrete_inputs(const SignValues& values = {});

/// One row per input: eight values, class, correct-action mask (as E/N/W/S letters).
std::string to_csv(const std::vector<LabeledInput>& inputs);

}  // namespace amaze
