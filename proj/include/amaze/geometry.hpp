#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace amaze {

/// Cardinal directions in observation channel order. The underlying value
/// is also the bit index in a wall mask.
enum class Direction : std::uint8_t { East = 0, North = 1, West = 2, South = 3 };

inline constexpr std::array<Direction, 4> kDirections{Direction::East, Direction::North,
                                                      Direction::West, Direction::South};

constexpr int index(Direction d) { return static_cast<int>(d); }

constexpr Direction direction_from_index(int i) { return static_cast<Direction>(i & 3); }

constexpr Direction opposite(Direction d) { return direction_from_index(index(d) + 2); }

/// Counter-clockwise quarter turns.
constexpr Direction rotated(Direction d, int quarter_turns) {
  return direction_from_index(index(d) + quarter_turns);
}

constexpr std::uint8_t bit(Direction d) { return static_cast<std::uint8_t>(1u << index(d)); }

char to_char(Direction d);
Direction direction_from_char(char c);

/// Grid cell; x grows eastward, y grows northward, (0, 0) is the south-west corner.
struct Cell {
  int x = 0;
  int y = 0;

  friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

constexpr Cell neighbor(Cell c, Direction d) {
  switch (d) {
    case Direction::East: return {c.x + 1, c.y};
    case Direction::North: return {c.x, c.y + 1};
    case Direction::West: return {c.x - 1, c.y};
    case Direction::South: return {c.x, c.y - 1};
  }
  return c;
}

/// Direction leading from `from` to the 4-neighbor `to`, if they are adjacent.
constexpr std::optional<Direction> direction_between(Cell from, Cell to) {
  for (Direction d : kDirections)
    if (neighbor(from, d) == to) return d;
  return std::nullopt;
}

enum class Corner : std::uint8_t { SW = 0, NW = 1, NE = 2, SE = 3 };

std::string_view to_string(Corner c);
Corner corner_from_string(std::string_view s);

constexpr Corner opposite(Corner c) {
  switch (c) {
    case Corner::SW: return Corner::NE;
    case Corner::NW: return Corner::SE;
    case Corner::NE: return Corner::SW;
    case Corner::SE: return Corner::NW;
  }
  return c;
}

constexpr Cell corner_cell(Corner c, int width, int height) {
  switch (c) {
    case Corner::SW: return {0, 0};
    case Corner::NW: return {0, height - 1};
    case Corner::NE: return {width - 1, height - 1};
    case Corner::SE: return {width - 1, 0};
  }
  return {};
}

/// Image of `c` after one counter-clockwise quarter turn of a width x height grid.
/// The rotated grid is height x width.
constexpr Cell rotate_ccw(Cell c, int /*width*/, int height) { return {height - 1 - c.y, c.x}; }

/// Wall mask rotated by `quarter_turns` counter-clockwise steps.
constexpr std::uint8_t rotated_mask(std::uint8_t mask, int quarter_turns) {
  const int k = quarter_turns & 3;
  return static_cast<std::uint8_t>(((mask << k) | (mask >> (4 - k))) & 0xF);
}

/// Raised for any invalid user-facing input (specs, descriptors, configs).
class InvalidArgument : public std::invalid_argument {
 public:
  InvalidArgument(std::string field, const std::string& what)
      : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace amaze
