#include "amaze/observe.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>

namespace amaze {

std::optional<Direction> DiscreteObservation::origin() const {
  for (Direction d : kDirections)
    if (is_origin(d)) return d;
  return std::nullopt;
}

std::optional<Direction> DiscreteObservation::sign_direction() const {
  for (Direction d : kDirections)
    if (sign_channel(d) != 0.0f) return d;
  return std::nullopt;
}

int DiscreteObservation::open_count() const {
  int n = 0;
  for (Direction d : kDirections) n += is_wall(d) ? 0 : 1;
  return n;
}

std::string to_string(const DiscreteObservation& obs) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < obs.values.size(); ++i) out << (i ? "," : "") << obs.values[i];
  out << ')';
  return out.str();
}

DiscreteObservation rotated(const DiscreteObservation& obs, int quarter_turns) {
  DiscreteObservation out;
  for (Direction d : kDirections) {
    const int to = index(rotated(d, quarter_turns));
    out.values[to] = obs.values[index(d)];
    out.values[4 + to] = obs.values[4 + index(d)];
  }
  return out;
}

DiscreteObservation observe_discrete(const Maze& maze, Cell pos, std::optional<Cell> prev) {
  DiscreteObservation obs;
  const std::uint8_t mask = maze.wall_mask(pos);
  for (Direction d : kDirections)
    if (mask & bit(d)) obs.values[index(d)] = kWallValue;
  if (prev) obs.values[index(*direction_between(pos, *prev))] = kOriginValue;
  if (const auto& s = maze.sign(pos)) obs.values[4 + index(s->direction)] = s->value;
  return obs;
}

namespace {

// Pixel centers relative to the raster center, y up. Rotating by -90 degrees
// k times maps a sign pointing in direction k onto the east-pointing template.
bool in_east_triangle(double u, double v, double half_extent) {
  return u >= -half_extent && u <= half_extent && std::abs(v) <= (half_extent - u) / 2.0;
}

void draw_cell(CellRaster& raster, int row0, int col0, std::uint8_t mask, std::optional<Direction> origin,
               const std::optional<Sign>& sign, int r) {
  const int band = r / 8;
  auto band_of = [&](Direction d, float intensity) {
    for (int i = 0; i < r; ++i) {
      for (int k = 0; k < band; ++k) {
        int row = 0, col = 0;
        switch (d) {
          case Direction::East: row = i, col = r - 1 - k; break;
          case Direction::North: row = k, col = i; break;
          case Direction::West: row = i, col = k; break;
          case Direction::South: row = r - 1 - k, col = i; break;
        }
        float& px = raster(row0 + row, col0 + col);
        px = std::max(px, intensity);
      }
    }
  };
  for (Direction d : kDirections)
    if (mask & bit(d)) band_of(d, kWallValue);
  if (origin) band_of(*origin, kOriginValue);
  if (!sign) return;

  const double half_extent = 0.6 * (r - 2 * band) / 2.0;
  for (int row = band; row < r - band; ++row) {
    for (int col = band; col < r - band; ++col) {
      double u = col + 0.5 - r / 2.0;
      double v = r / 2.0 - (row + 0.5);
      for (int k = 0; k < index(sign->direction); ++k) {
        const double t = u;
        u = v;
        v = -t;
      }
      if (in_east_triangle(u, v, half_extent)) raster(row0 + row, col0 + col) = sign->value;
    }
  }
}

}  // namespace

CellRaster render_cell(const Maze& maze, Cell pos, std::optional<Cell> prev, int resolution) {
  if (resolution < kMinRasterResolution)
    throw InvalidArgument("resolution", "must be at least " + std::to_string(kMinRasterResolution));
  CellRaster raster = CellRaster::Zero(resolution, resolution);
  const std::optional<Direction> origin = prev ? direction_between(pos, *prev) : std::nullopt;
  draw_cell(raster, 0, 0, maze.wall_mask(pos), origin, maze.sign(pos), resolution);
  return raster;
}

CellRaster render_maze(const Maze& maze, int resolution) {
  if (resolution < kMinRasterResolution)
    throw InvalidArgument("resolution", "must be at least " + std::to_string(kMinRasterResolution));
  CellRaster raster = CellRaster::Zero(maze.height * resolution, maze.width * resolution);
  for (int y = 0; y < maze.height; ++y)
    for (int x = 0; x < maze.width; ++x)
      draw_cell(raster, (maze.height - 1 - y) * resolution, x * resolution, maze.wall_mask({x, y}),
                std::nullopt, maze.sign({x, y}), resolution);
  return raster;
}

std::string to_pgm(const CellRaster& raster) {
  std::string out = "P5\n" + std::to_string(raster.cols()) + ' ' + std::to_string(raster.rows()) + "\n255\n";
  out.reserve(out.size() + raster.size());
  for (Eigen::Index i = 0; i < raster.rows(); ++i)
    for (Eigen::Index j = 0; j < raster.cols(); ++j)
      out.push_back(static_cast<char>(std::lround(std::clamp(raster(i, j), 0.0f, 1.0f) * 255.0f)));
  return out;
}

CellRaster from_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int cols = 0, rows = 0, maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (magic != "P5" || cols <= 0 || rows <= 0 || maxval != 255) throw InvalidArgument("pgm", "unsupported header");
  in.get();
  CellRaster raster(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const int c = in.get();
      if (c == EOF) throw InvalidArgument("pgm", "truncated pixel data");
      raster(i, j) = static_cast<float>(c) / 255.0f;
    }
  return raster;
}

std::string_view to_string(InputClass c) {
  switch (c) {
    case InputClass::Empty: return "empty";
    case InputClass::Lure: return "lure";
    case InputClass::Clue: return "clue";
    case InputClass::Trap: return "trap";
  }
  return "?";
}

std::vector<LabeledInput> enumerate_discrete_inputs(const SignValues& values) {
  std::vector<LabeledInput> inputs;
  for (Direction origin : kDirections) {
    std::array<Direction, 3> others{};
    for (int i = 0; i < 3; ++i) others[i] = rotated(origin, i + 1);

    for (int open_bits = 0; open_bits < 8; ++open_bits) {
      DiscreteObservation base;
      base.values[index(origin)] = kOriginValue;
      std::uint8_t open = 0;
      for (int i = 0; i < 3; ++i) {
        if (open_bits & (1 << i))
          open |= bit(others[i]);
        else
          base.values[index(others[i])] = kWallValue;
      }
      const int n_open = std::popcount(open);
      if (n_open == 0) continue;  // dead end

      auto emit = [&](InputClass cls, std::optional<Direction> sign_dir, float value, std::uint8_t correct) {
        LabeledInput in{base, cls, correct};
        if (sign_dir) in.observation.values[4 + index(*sign_dir)] = value;
        inputs.push_back(in);
      };

      if (n_open == 1) {
        emit(InputClass::Empty, std::nullopt, 0.0f, open);
        for (Direction d : kDirections)
          if (d == origin || !(open & bit(d))) emit(InputClass::Lure, d, values.lure, open);
        continue;
      }
      for (Direction d : kDirections)
        if (open & bit(d)) emit(InputClass::Clue, d, values.clue, bit(d));
      for (Direction d : kDirections)
        if (open & bit(d)) emit(InputClass::Trap, d, values.trap, static_cast<std::uint8_t>(open & ~bit(d)));
    }
  }
  return inputs;
}

std::string to_csv(const std::vector<LabeledInput>& inputs) {
  std::ostringstream out;
  out << "W_e,W_n,W_w,W_s,S_e,S_n,S_w,S_s,class,correct\n";
  for (const auto& in : inputs) {
    for (float v : in.observation.values) out << v << ',';
    out << to_string(in.label) << ',';
    for (Direction d : kDirections)
      if (in.accepts(d)) out << to_char(d);
    out << '\n';
  }
  return out.str();
}

}  // namespace amaze
