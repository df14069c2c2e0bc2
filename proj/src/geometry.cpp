#include "amaze/geometry.hpp"

namespace amaze {

char to_char(Direction d) {
  static constexpr char kNames[] = {'E', 'N', 'W', 'S'};
  return kNames[index(d)];
}

Direction direction_from_char(char c) {
  switch (c) {
    case 'E': return Direction::East;
    case 'N': return Direction::North;
    case 'W': return Direction::West;
    case 'S': return Direction::South;
    default: break;
  }
  throw InvalidArgument("direction", std::string("unknown direction '") + c + "'");
}

std::string_view to_string(Corner c) {
  switch (c) {
    case Corner::SW: return "SW";
    case Corner::NW: return "NW";
    case Corner::NE: return "NE";
    case Corner::SE: return "SE";
  }
  return "?";
}

Corner corner_from_string(std::string_view s) {
  for (Corner c : {Corner::SW, Corner::NW, Corner::NE, Corner::SE})
    if (to_string(c) == s) return c;
  throw InvalidArgument("start_corner", "unknown corner '" + std::string(s) + "'");
}

}  // namespace amaze
