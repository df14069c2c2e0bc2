#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amaze/geometry.hpp"

namespace amaze {

enum class SignKind : std::uint8_t { Clue = 0, Lure = 1, Trap = 2 };

std::string_view to_string(SignKind k);
SignKind sign_kind_from_string(std::string_view s);

enum class MazeClass : std::uint8_t { Trivial = 0, Simple = 1, Lures = 2, Traps = 3, Complex = 4 };

inline constexpr std::array<MazeClass, 5> kMazeClasses{MazeClass::Trivial, MazeClass::Simple, MazeClass::Lures,
                                                       MazeClass::Traps, MazeClass::Complex};

std::string_view to_string(MazeClass c);
MazeClass maze_class_from_string(std::string_view s);

/// Generative recipe of a maze. Glyphs are identified by the value they
/// present on the sign channel of a discrete observation.
struct MazeSpec {
  int width = 5;
  int height = 5;
  std::uint64_t seed = 0;
  Corner start_corner = Corner::SW;
  bool unicursive = false;
  std::vector<double> clue_glyphs{1.0};
  std::vector<double> lure_glyphs{};
  double p_lure = 0.0;
  std::vector<double> trap_glyphs{};
  double p_trap = 0.0;

  friend bool operator==(const MazeSpec&, const MazeSpec&) = default;
};

/// Throws InvalidArgument naming the offending field.
void validate(const MazeSpec& spec);

MazeClass classify(const MazeSpec& spec);

/// Adjusts a template so that it belongs to `cls`, keeping size, seed and
/// glyph values. Missing glyph lists are filled with the default values
/// (0.25 for lures, 0.5 for traps), missing probabilities with the given ones.
MazeSpec with_class(MazeSpec spec, MazeClass cls, double p_lure = 0.25, double p_trap = 0.5);

/// Canonical text form: M<seed>_<W>x<H>[_U][_s<corner>][_C<g>][_l<p>_L<g>][_t<p>_T<g>].
std::string encode_descriptor(const MazeSpec& spec);

/// Inverse of encode_descriptor. Throws InvalidArgument naming the field.
MazeSpec decode_descriptor(std::string_view text);

struct Sign {
  SignKind kind = SignKind::Clue;
  float value = 1.0f;
  Direction direction = Direction::East;

  friend bool operator==(const Sign&, const Sign&) = default;
};

/// A realized maze. Immutable once generated; rotations produce new values.
struct Maze {
  MazeSpec spec;
  int rotation = 0;  ///< counter-clockwise quarter turns applied after generation
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> walls;           ///< row-major from the south row, bit per Direction
  std::vector<std::optional<Sign>> signs;    ///< indexed like walls
  Cell start;
  Cell goal;
  std::vector<Cell> path;                    ///< optimal path, start and goal included

  bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height; }
  std::size_t cell_index(Cell c) const { return static_cast<std::size_t>(c.y) * width + c.x; }
  std::uint8_t wall_mask(Cell c) const { return walls[cell_index(c)]; }
  bool wall(Cell c, Direction d) const { return (walls[cell_index(c)] & bit(d)) != 0; }
  const std::optional<Sign>& sign(Cell c) const { return signs[cell_index(c)]; }

  int path_length() const { return static_cast<int>(path.size()); }

  friend bool operator==(const Maze&, const Maze&) = default;
};

/// Depth-first carving of a perfect maze; returns the wall masks only.
///
/// Draw order: the stack starts at the start cell; every cell pushed gets its
/// own Fisher-Yates shuffle of (E, N, W, S) when first visited and explores
/// the directions in that order, skipping out-of-grid and visited neighbors.
std::vector<std::uint8_t> carve_perfect_maze(const MazeSpec& spec);

/// Full generation: carve, compute the optimal path, then either block every
/// off-path opening (unicursive) or place signs.
///
/// Sign draws come from a second PCG stream of the same seed, in path order
/// from the start, goal excluded:
///  - intersection (two or more open directions besides the arrival one):
///    one uniform() against p_trap; a trap then draws its direction among the
///    open off-path directions, a clue takes the next path direction; one
///    glyph draw follows in both cases.
///  - other cells except the start: one uniform() against p_lure; a lure
///    draws its direction among {backward} + walled directions, then a glyph.
Maze generate(const MazeSpec& spec);

Maze rotate(const Maze& maze, int quarter_turns);

/// Unique wall-respecting path from start to goal (breadth-first search).
std::vector<Cell> optimal_path(const Maze& maze);

/// Number of open directions of `c` not leading to `from`.
int forward_options(const Maze& maze, Cell c, std::optional<Cell> from);

/// Path cells (goal excluded) offering a choice to an agent following the path.
std::vector<std::size_t> path_intersections(const Maze& maze);

/// Same maze without any lure or trap.
Maze without_deceptive_signs(Maze maze);

nlohmann::json to_json(const Maze& maze);
Maze maze_from_json(const nlohmann::json& j);

/// Plain SVG drawing of a maze (walls, signs as arrows, start and goal).
std::string render_svg(const Maze& maze, int cell_pixels = 20);

}  // namespace amaze
