#include "amaze/maze.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <sstream>

#include "amaze/rng.hpp"

namespace amaze {

namespace {

std::string format_number(double value) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, value);
  std::string text(buffer, end);
  if (text.size() > 1 && text.rfind("0.", 0) == 0) text.erase(0, 1);
  return text;
}

std::string format_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_number(values[i]);
  }
  return out;
}

double parse_number(std::string_view text, const std::string& field) {
  std::string buffer(text);
  if (!buffer.empty() && buffer.front() == '.') buffer.insert(buffer.begin(), '0');
  double value = 0;
  auto [ptr, ec] = std::from_chars(buffer.data(), buffer.data() + buffer.size(), value);
  if (buffer.empty() || ec != std::errc{} || ptr != buffer.data() + buffer.size())
    throw InvalidArgument(field, "malformed number '" + std::string(text) + "'");
  return value;
}

template <typename Int>
Int parse_integer(std::string_view text, const std::string& field) {
  Int value{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size())
    throw InvalidArgument(field, "malformed integer '" + std::string(text) + "'");
  return value;
}

std::vector<double> parse_list(std::string_view text, const std::string& field) {
  std::vector<double> values;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto comma = text.find(',', pos);
    const auto piece = text.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
    values.push_back(parse_number(piece, field));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return values;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t pos = 0;
  for (;;) {
    const auto next = text.find(sep, pos);
    parts.push_back(text.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return parts;
}

void check_probability(double p, const char* field) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(field, "probability must lie in [0, 1]");
}

void check_glyphs(const std::vector<double>& glyphs, const char* field) {
  for (double g : glyphs)
    if (!(g > 0.0 && g <= 1.0)) throw InvalidArgument(field, "glyph values must lie in (0, 1]");
}

void open_wall(std::vector<std::uint8_t>& walls, int width, Cell c, Direction d) {
  const Cell n = neighbor(c, d);
  walls[static_cast<std::size_t>(c.y) * width + c.x] &= static_cast<std::uint8_t>(~bit(d));
  walls[static_cast<std::size_t>(n.y) * width + n.x] &= static_cast<std::uint8_t>(~bit(opposite(d)));
}

void close_wall(Maze& maze, Cell c, Direction d) {
  maze.walls[maze.cell_index(c)] |= bit(d);
  const Cell n = neighbor(c, d);
  if (maze.contains(n)) maze.walls[maze.cell_index(n)] |= bit(opposite(d));
}

Maze rotate_once(const Maze& m) {
  Maze r;
  r.spec = m.spec;
  r.rotation = (m.rotation + 1) & 3;
  r.width = m.height;
  r.height = m.width;
  r.walls.assign(m.walls.size(), 0);
  r.signs.assign(m.signs.size(), std::nullopt);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      const Cell c{x, y};
      const Cell rc = rotate_ccw(c, m.width, m.height);
      r.walls[r.cell_index(rc)] = rotated_mask(m.wall_mask(c), 1);
      if (const auto& s = m.sign(c)) r.signs[r.cell_index(rc)] = Sign{s->kind, s->value, rotated(s->direction, 1)};
    }
  }
  r.start = rotate_ccw(m.start, m.width, m.height);
  r.goal = rotate_ccw(m.goal, m.width, m.height);
  r.path.reserve(m.path.size());
  for (Cell c : m.path) r.path.push_back(rotate_ccw(c, m.width, m.height));
  return r;
}

}  // namespace

std::string_view to_string(SignKind k) {
  switch (k) {
    case SignKind::Clue: return "clue";
    case SignKind::Lure: return "lure";
    case SignKind::Trap: return "trap";
  }
  return "?";
}

SignKind sign_kind_from_string(std::string_view s) {
  for (SignKind k : {SignKind::Clue, SignKind::Lure, SignKind::Trap})
    if (to_string(k) == s) return k;
  throw InvalidArgument("kind", "unknown sign kind '" + std::string(s) + "'");
}

std::string_view to_string(MazeClass c) {
  switch (c) {
    case MazeClass::Trivial: return "Trivial";
    case MazeClass::Simple: return "Simple";
    case MazeClass::Lures: return "Lures";
    case MazeClass::Traps: return "Traps";
    case MazeClass::Complex: return "Complex";
  }
  return "?";
}

MazeClass maze_class_from_string(std::string_view s) {
  for (MazeClass c : kMazeClasses) {
    const auto name = to_string(c);
    if (name.size() == s.size() &&
        std::equal(name.begin(), name.end(), s.begin(), [](char a, char b) { return std::tolower(a) == std::tolower(b); }))
      return c;
  }
  throw InvalidArgument("class", "unknown maze class '" + std::string(s) + "'");
}

void validate(const MazeSpec& spec) {
  if (spec.width < 2) throw InvalidArgument("width", "must be at least 2, got " + std::to_string(spec.width));
  if (spec.height < 2) throw InvalidArgument("height", "must be at least 2, got " + std::to_string(spec.height));
  check_probability(spec.p_lure, "p_lure");
  check_probability(spec.p_trap, "p_trap");
  if (spec.clue_glyphs.empty()) throw InvalidArgument("clue_glyphs", "at least one clue glyph is required");
  check_glyphs(spec.clue_glyphs, "clue_glyphs");
  check_glyphs(spec.lure_glyphs, "lure_glyphs");
  check_glyphs(spec.trap_glyphs, "trap_glyphs");
  if (spec.p_lure > 0 && spec.lure_glyphs.empty())
    throw InvalidArgument("lure_glyphs", "p_lure > 0 requires at least one lure glyph");
  if (spec.p_trap > 0 && spec.trap_glyphs.empty())
    throw InvalidArgument("trap_glyphs", "p_trap > 0 requires at least one trap glyph");
}

MazeClass classify(const MazeSpec& spec) {
  if (spec.unicursive) return MazeClass::Trivial;
  if (spec.p_lure > 0 && spec.p_trap > 0) return MazeClass::Complex;
  if (spec.p_lure > 0) return MazeClass::Lures;
  if (spec.p_trap > 0) return MazeClass::Traps;
  return MazeClass::Simple;
}

MazeSpec with_class(MazeSpec spec, MazeClass cls, double p_lure, double p_trap) {
  const bool lures = cls == MazeClass::Lures || cls == MazeClass::Complex;
  const bool traps = cls == MazeClass::Traps || cls == MazeClass::Complex;
  spec.unicursive = cls == MazeClass::Trivial;
  if (lures) {
    spec.p_lure = spec.p_lure > 0 ? spec.p_lure : p_lure;
    if (spec.lure_glyphs.empty()) spec.lure_glyphs = {0.25};
  } else {
    spec.p_lure = 0;
    spec.lure_glyphs.clear();
  }
  if (traps) {
    spec.p_trap = spec.p_trap > 0 ? spec.p_trap : p_trap;
    if (spec.trap_glyphs.empty()) spec.trap_glyphs = {0.5};
  } else {
    spec.p_trap = 0;
    spec.trap_glyphs.clear();
  }
  return spec;
}

std::string encode_descriptor(const MazeSpec& spec) {
  std::ostringstream out;
  out << 'M' << spec.seed << '_' << spec.width << 'x' << spec.height;
  if (spec.unicursive) out << "_U";
  if (spec.start_corner != Corner::SW) out << "_s" << to_string(spec.start_corner);
  out << "_C" << format_list(spec.clue_glyphs);
  if (!spec.lure_glyphs.empty()) out << "_l" << format_number(spec.p_lure) << "_L" << format_list(spec.lure_glyphs);
  if (!spec.trap_glyphs.empty()) out << "_t" << format_number(spec.p_trap) << "_T" << format_list(spec.trap_glyphs);
  return out.str();
}

MazeSpec decode_descriptor(std::string_view text) {
  const auto tokens = split(text, '_');
  MazeSpec spec;
  spec.clue_glyphs = {1.0};

  if (tokens[0].size() < 2 || tokens[0][0] != 'M')
    throw InvalidArgument("seed", "descriptor must start with M<seed>, got '" + std::string(tokens[0]) + "'");
  spec.seed = parse_integer<std::uint64_t>(tokens[0].substr(1), "seed");

  if (tokens.size() < 2) throw InvalidArgument("size", "missing <W>x<H>");
  const auto x = tokens[1].find('x');
  if (x == std::string_view::npos) throw InvalidArgument("size", "expected <W>x<H>, got '" + std::string(tokens[1]) + "'");
  spec.width = parse_integer<int>(tokens[1].substr(0, x), "size");
  spec.height = parse_integer<int>(tokens[1].substr(x + 1), "size");

  // Optional tokens must appear in canonical order, each at most once.
  int rank = 0;
  auto advance = [&rank](int token_rank, std::string_view token) {
    if (token_rank <= rank) throw InvalidArgument("token", "unexpected or out-of-order token '" + std::string(token) + "'");
    rank = token_rank;
  };
  for (std::size_t i = 2; i < tokens.size(); ++i) {
    const auto token = tokens[i];
    if (token.empty()) throw InvalidArgument("token", "empty token");
    const auto body = token.substr(1);
    switch (token[0]) {
      case 'U':
        if (token.size() != 1) throw InvalidArgument("unicursive", "unexpected token '" + std::string(token) + "'");
        advance(1, token);
        spec.unicursive = true;
        break;
      case 's':
        advance(2, token);
        spec.start_corner = corner_from_string(body);
        break;
      case 'C':
        advance(3, token);
        spec.clue_glyphs = parse_list(body, "clue_glyphs");
        break;
      case 'l':
        advance(4, token);
        spec.p_lure = parse_number(body, "p_lure");
        if (i + 1 >= tokens.size() || tokens[i + 1].empty() || tokens[i + 1][0] != 'L')
          throw InvalidArgument("lure_glyphs", "_l<p> must be followed by _L<glyph>");
        spec.lure_glyphs = parse_list(tokens[++i].substr(1), "lure_glyphs");
        break;
      case 't':
        advance(5, token);
        spec.p_trap = parse_number(body, "p_trap");
        if (i + 1 >= tokens.size() || tokens[i + 1].empty() || tokens[i + 1][0] != 'T')
          throw InvalidArgument("trap_glyphs", "_t<p> must be followed by _T<glyph>");
        spec.trap_glyphs = parse_list(tokens[++i].substr(1), "trap_glyphs");
        break;
      default:
        throw InvalidArgument("token", "unknown token '" + std::string(token) + "'");
    }
  }
  validate(spec);
  return spec;
}

std::vector<std::uint8_t> carve_perfect_maze(const MazeSpec& spec) {
  validate(spec);
  const int w = spec.width;
  const int h = spec.height;
  std::vector<std::uint8_t> walls(static_cast<std::size_t>(w) * h, 0xF);
  std::vector<bool> visited(walls.size(), false);
  Pcg32 rng(spec.seed);

  struct Frame {
    Cell cell;
    std::array<Direction, 4> order;
    int next = 0;
  };
  auto make_frame = [&rng](Cell c) {
    Frame f{c, kDirections, 0};
    rng.shuffle(std::span<Direction>(f.order));
    return f;
  };
  auto idx = [w](Cell c) { return static_cast<std::size_t>(c.y) * w + c.x; };

  const Cell start = corner_cell(spec.start_corner, w, h);
  std::vector<Frame> stack;
  stack.reserve(walls.size());
  visited[idx(start)] = true;
  stack.push_back(make_frame(start));
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next == 4) {
      stack.pop_back();
      continue;
    }
    const Direction d = top.order[top.next++];
    const Cell n = neighbor(top.cell, d);
    if (n.x < 0 || n.y < 0 || n.x >= w || n.y >= h || visited[idx(n)]) continue;
    open_wall(walls, w, top.cell, d);
    visited[idx(n)] = true;
    stack.push_back(make_frame(n));  // invalidates `top`
  }
  return walls;
}

std::vector<Cell> optimal_path(const Maze& maze) {
  std::vector<int> parent(maze.walls.size(), -1);
  std::deque<Cell> queue{maze.start};
  parent[maze.cell_index(maze.start)] = static_cast<int>(maze.cell_index(maze.start));
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    if (c == maze.goal) break;
    for (Direction d : kDirections) {
      if (maze.wall(c, d)) continue;
      const Cell n = neighbor(c, d);
      if (!maze.contains(n) || parent[maze.cell_index(n)] >= 0) continue;
      parent[maze.cell_index(n)] = static_cast<int>(maze.cell_index(c));
      queue.push_back(n);
    }
  }
  if (parent[maze.cell_index(maze.goal)] < 0) throw std::logic_error("goal unreachable from start");
  std::vector<Cell> path;
  for (int i = static_cast<int>(maze.cell_index(maze.goal));; i = parent[i]) {
    path.push_back({i % maze.width, i / maze.width});
    if (parent[i] == i) break;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

int forward_options(const Maze& maze, Cell c, std::optional<Cell> from) {
  int n = 0;
  for (Direction d : kDirections)
    if (!maze.wall(c, d) && (!from || neighbor(c, d) != *from)) ++n;
  return n;
}

std::vector<std::size_t> path_intersections(const Maze& maze) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < maze.path.size(); ++i) {
    const std::optional<Cell> from = i ? std::optional<Cell>(maze.path[i - 1]) : std::nullopt;
    if (forward_options(maze, maze.path[i], from) >= 2) out.push_back(i);
  }
  return out;
}

Maze generate(const MazeSpec& spec) {
  Maze maze;
  maze.spec = spec;
  maze.width = spec.width;
  maze.height = spec.height;
  maze.walls = carve_perfect_maze(spec);
  maze.signs.assign(maze.walls.size(), std::nullopt);
  maze.start = corner_cell(spec.start_corner, spec.width, spec.height);
  maze.goal = corner_cell(opposite(spec.start_corner), spec.width, spec.height);
  maze.path = optimal_path(maze);

  const auto& path = maze.path;
  if (spec.unicursive) {
    for (std::size_t i = 0; i < path.size(); ++i) {
      for (Direction d : kDirections) {
        if (maze.wall(path[i], d)) continue;
        const Cell n = neighbor(path[i], d);
        const bool on_path = (i > 0 && n == path[i - 1]) || (i + 1 < path.size() && n == path[i + 1]);
        if (!on_path) close_wall(maze, path[i], d);
      }
    }
    return maze;
  }

  // Sign placement uses a stream independent from the carving one so that
  // probabilities never perturb the layout.
  Pcg32 rng(spec.seed, Pcg32::kDefaultStream + 2);
  auto pick = [&rng](const std::vector<double>& glyphs) {
    return static_cast<float>(glyphs[rng.below(static_cast<std::uint32_t>(glyphs.size()))]);
  };
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const Cell c = path[i];
    const std::optional<Cell> from = i ? std::optional<Cell>(path[i - 1]) : std::nullopt;
    const Cell next = path[i + 1];
    if (forward_options(maze, c, from) >= 2) {
      if (rng.uniform() < spec.p_trap) {
        std::vector<Direction> off_path;
        for (Direction d : kDirections) {
          const Cell n = neighbor(c, d);
          if (!maze.wall(c, d) && n != next && (!from || n != *from)) off_path.push_back(d);
        }
        const Direction d = off_path[rng.below(static_cast<std::uint32_t>(off_path.size()))];
        maze.signs[maze.cell_index(c)] = Sign{SignKind::Trap, pick(spec.trap_glyphs), d};
      } else {
        const Direction d = *direction_between(c, next);
        maze.signs[maze.cell_index(c)] = Sign{SignKind::Clue, pick(spec.clue_glyphs), d};
      }
    } else if (i > 0) {
      if (rng.uniform() < spec.p_lure) {
        std::vector<Direction> options;
        for (Direction d : kDirections)
          if (maze.wall(c, d) || neighbor(c, d) == *from) options.push_back(d);
        const Direction d = options[rng.below(static_cast<std::uint32_t>(options.size()))];
        maze.signs[maze.cell_index(c)] = Sign{SignKind::Lure, pick(spec.lure_glyphs), d};
      }
    }
  }
  return maze;
}

Maze rotate(const Maze& maze, int quarter_turns) {
  Maze out = maze;
  for (int k = ((quarter_turns % 4) + 4) % 4; k > 0; --k) out = rotate_once(out);
  return out;
}

Maze without_deceptive_signs(Maze maze) {
  for (auto& s : maze.signs)
    if (s && s->kind != SignKind::Clue) s.reset();
  return maze;
}

nlohmann::json to_json(const Maze& maze) {
  nlohmann::json signs = nlohmann::json::array();
  for (int y = 0; y < maze.height; ++y) {
    for (int x = 0; x < maze.width; ++x) {
      const auto& s = maze.sign({x, y});
      if (!s) continue;
      signs.push_back({{"x", x}, {"y", y}, {"kind", to_string(s->kind)}, {"value", s->value},
                       {"direction", std::string(1, to_char(s->direction))}});
    }
  }
  nlohmann::json path = nlohmann::json::array();
  for (Cell c : maze.path) path.push_back({c.x, c.y});
  return {{"descriptor", encode_descriptor(maze.spec)},
          {"rotation", maze.rotation},
          {"width", maze.width},
          {"height", maze.height},
          {"walls", maze.walls},
          {"start", {maze.start.x, maze.start.y}},
          {"goal", {maze.goal.x, maze.goal.y}},
          {"signs", signs},
          {"path", path}};
}

Maze maze_from_json(const nlohmann::json& j) {
  Maze maze;
  maze.spec = decode_descriptor(j.at("descriptor").get<std::string>());
  maze.rotation = j.value("rotation", 0);
  maze.width = j.at("width").get<int>();
  maze.height = j.at("height").get<int>();
  maze.walls = j.at("walls").get<std::vector<std::uint8_t>>();
  if (maze.walls.size() != static_cast<std::size_t>(maze.width) * maze.height)
    throw InvalidArgument("walls", "expected width*height wall masks");
  maze.signs.assign(maze.walls.size(), std::nullopt);
  maze.start = {j.at("start")[0].get<int>(), j.at("start")[1].get<int>()};
  maze.goal = {j.at("goal")[0].get<int>(), j.at("goal")[1].get<int>()};
  for (const auto& s : j.at("signs")) {
    const Cell c{s.at("x").get<int>(), s.at("y").get<int>()};
    if (!maze.contains(c)) throw InvalidArgument("signs", "sign outside the maze");
    const auto dir = s.at("direction").get<std::string>();
    if (dir.size() != 1) throw InvalidArgument("direction", "expected one of E, N, W, S");
    maze.signs[maze.cell_index(c)] =
        Sign{sign_kind_from_string(s.at("kind").get<std::string>()), s.at("value").get<float>(), direction_from_char(dir[0])};
  }
  if (j.contains("path")) {
    for (const auto& c : j.at("path")) maze.path.push_back({c[0].get<int>(), c[1].get<int>()});
  } else {
    maze.path = optimal_path(maze);
  }
  return maze;
}

std::string render_svg(const Maze& maze, int cell_pixels) {
  const int p = cell_pixels;
  const int margin = p / 2;
  const int w = maze.width * p + 2 * margin;
  const int h = maze.height * p + 2 * margin;
  // SVG y grows downward; row 0 of the maze is the bottom row.
  auto sx = [&](double x) { return margin + x * p; };
  auto sy = [&](double y) { return margin + (maze.height - y) * p; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" viewBox=\"0 0 " << w
      << ' ' << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  auto cell_rect = [&](Cell c, const char* fill) {
    out << "<rect x=\"" << sx(c.x) << "\" y=\"" << sy(c.y + 1) << "\" width=\"" << p << "\" height=\"" << p
        << "\" fill=\"" << fill << "\"/>\n";
  };
  for (Cell c : maze.path) cell_rect(c, "#eef3ff");
  cell_rect(maze.start, "#b8e0b8");
  cell_rect(maze.goal, "#f0c0c0");

  for (int y = 0; y < maze.height; ++y) {
    for (int x = 0; x < maze.width; ++x) {
      const auto& s = maze.sign({x, y});
      if (!s) continue;
      const char* color = s->kind == SignKind::Clue ? "#2a62c9" : s->kind == SignKind::Trap ? "#c92a2a" : "#d9a400";
      // Triangle pointing east, rotated into place around the cell center.
      const double cx = sx(x + 0.5);
      const double cy = sy(y + 0.5);
      const double r = p * 0.3;
      out << "<polygon points=\"" << cx + r << ',' << cy << ' ' << cx - r << ',' << cy - r << ' ' << cx - r << ','
          << cy + r << "\" fill=\"" << color << "\" fill-opacity=\"" << s->value << "\" transform=\"rotate("
          << -90 * index(s->direction) << ' ' << cx << ' ' << cy << ")\"/>\n";
    }
  }

  out << "<g stroke=\"black\" stroke-width=\"2\" stroke-linecap=\"square\">\n";
  for (int y = 0; y < maze.height; ++y) {
    for (int x = 0; x < maze.width; ++x) {
      const Cell c{x, y};
      auto line = [&](double x0, double y0, double x1, double y1) {
        out << "<line x1=\"" << sx(x0) << "\" y1=\"" << sy(y0) << "\" x2=\"" << sx(x1) << "\" y2=\"" << sy(y1)
            << "\"/>\n";
      };
      if (maze.wall(c, Direction::North)) line(x, y + 1, x + 1, y + 1);
      if (maze.wall(c, Direction::East)) line(x + 1, y, x + 1, y + 1);
      if (y == 0 && maze.wall(c, Direction::South)) line(x, y, x + 1, y);
      if (x == 0 && maze.wall(c, Direction::West)) line(x, y, x, y + 1);
    }
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

}  // namespace amaze
