#include "amaze/complexity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <sstream>
#include <thread>

namespace amaze {

namespace {

struct ObservedState {
  DiscreteObservation observation;
  bool deceptive = false;
};

std::vector<ObservedState> state_population(const Maze& maze, StatePopulation population) {
  std::vector<ObservedState> states;
  auto deceptive = [&maze](Cell c) {
    const auto& s = maze.sign(c);
    return s && s->kind != SignKind::Clue;
  };
  if (population == StatePopulation::OnPath) {
    for (std::size_t i = 0; i + 1 < maze.path.size(); ++i) {
      const std::optional<Cell> prev = i ? std::optional<Cell>(maze.path[i - 1]) : std::nullopt;
      states.push_back({observe_discrete(maze, maze.path[i], prev), deceptive(maze.path[i])});
    }
    return states;
  }
  std::vector<std::optional<Cell>> parent(maze.walls.size());
  std::vector<bool> seen(maze.walls.size(), false);
  std::deque<Cell> queue{maze.start};
  seen[maze.cell_index(maze.start)] = true;
  while (!queue.empty()) {
    const Cell c = queue.front();
    queue.pop_front();
    for (Direction d : kDirections) {
      const Cell n = neighbor(c, d);
      if (maze.wall(c, d) || seen[maze.cell_index(n)]) continue;
      seen[maze.cell_index(n)] = true;
      parent[maze.cell_index(n)] = c;
      queue.push_back(n);
    }
  }
  for (int y = 0; y < maze.height; ++y)
    for (int x = 0; x < maze.width; ++x) {
      const Cell c{x, y};
      if (c == maze.goal) continue;
      states.push_back({observe_discrete(maze, c, parent[maze.cell_index(c)]), deceptive(c)});
    }
  return states;
}

std::string format_double(double v) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
  return std::string(buffer, end);
}

template <typename Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::max(1, std::min(threads, n));
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::jthread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) fn(i);
    });
}

}  // namespace

std::vector<DiscreteObservation> optimal_trajectory_inputs(const Maze& maze) {
  std::vector<DiscreteObservation> inputs;
  for (const auto& s : state_population(maze, StatePopulation::OnPath)) inputs.push_back(s.observation);
  return inputs;
}

double entropy_bits(std::vector<long> counts) {
  std::sort(counts.begin(), counts.end());
  long total = 0;
  for (long c : counts) total += c;
  double h = 0;
  for (long c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

double surprisingness(const Maze& maze) {
  std::map<DiscreteObservation, long> histogram;
  for (const auto& obs : optimal_trajectory_inputs(maze)) ++histogram[obs];
  std::vector<long> counts;
  for (const auto& [obs, n] : histogram) counts.push_back(n);
  return entropy_bits(std::move(counts));
}

double deceptiveness(const Maze& maze, StatePopulation population) {
  using Prefix = std::array<float, 4>;
  std::map<DiscreteObservation, std::pair<long, bool>> states;
  std::map<Prefix, long> per_prefix;
  for (const auto& s : state_population(maze, population)) {
    auto& [count, deceptive] = states[s.observation];
    ++count;
    deceptive = deceptive || s.deceptive;
    ++per_prefix[{s.observation.values[0], s.observation.values[1], s.observation.values[2], s.observation.values[3]}];
  }
  // Exact (count, prefix total) pairs, summed in a key-independent order.
  std::vector<std::pair<long, long>> terms;
  for (const auto& [obs, entry] : states) {
    if (!entry.second) continue;
    terms.emplace_back(entry.first, per_prefix.at({obs.values[0], obs.values[1], obs.values[2], obs.values[3]}));
  }
  std::sort(terms.begin(), terms.end());
  double d = 0;
  for (const auto& [n, total] : terms) {
    const double p = static_cast<double>(n) / static_cast<double>(total);
    d -= p * std::log2(p);
  }
  return d;
}

ComplexityReport analyze(const Maze& maze, StatePopulation population) {
  ComplexityReport report;
  for (const auto& obs : optimal_trajectory_inputs(maze)) ++report.histogram[obs];
  report.surprisingness = surprisingness(maze);
  report.deceptiveness = deceptiveness(maze, population);
  return report;
}

std::vector<SweepRow> sweep(const MazeSpec& base, std::span<const MazeClass> classes, int count, int threads) {
  if (count < 1) throw InvalidArgument("count", "must be at least 1");
  const int n = static_cast<int>(classes.size()) * count;
  std::vector<SweepRow> rows(n);
  parallel_for(n, threads, [&](int i) {
    const MazeClass cls = classes[i / count];
    MazeSpec spec = with_class(base, cls);
    spec.seed = base.seed + static_cast<std::uint64_t>(i % count);
    const Maze maze = generate(spec);
    rows[i] = {encode_descriptor(spec), cls, surprisingness(maze), deceptiveness(maze)};
  });
  return rows;
}

std::string to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "descriptor,class,surprisingness,deceptiveness\n";
  for (const auto& r : rows)
    out += r.descriptor + ',' + std::string(to_string(r.maze_class)) + ',' + format_double(r.surprisingness) + ',' +
           format_double(r.deceptiveness) + '\n';
  return out;
}

std::vector<SweepRow> sweep_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);  // header
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string descriptor, cls, s, d;
    std::getline(fields, descriptor, ',');
    std::getline(fields, cls, ',');
    std::getline(fields, s, ',');
    std::getline(fields, d, ',');
    rows.push_back({descriptor, maze_class_from_string(cls), std::stod(s), std::stod(d)});
  }
  return rows;
}

std::string render_scatter_svg(const std::vector<SweepRow>& rows) {
  static constexpr const char* kColors[] = {"#7f7f7f", "#1f77b4", "#e3a500", "#d62728", "#9467bd"};
  constexpr double kW = 640, kH = 480, kLeft = 60, kBottom = 50, kTop = 110, kRight = 20;
  double max_s = 1e-9, max_d = 1e-9;
  for (const auto& r : rows) {
    max_s = std::max(max_s, r.surprisingness);
    max_d = std::max(max_d, r.deceptiveness);
  }
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;
  auto px = [&](double s) { return kLeft + s / max_s * plot_w; };
  auto py = [&](double d) { return kH - kBottom - d / max_d * plot_h; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kH - kBottom << "\" x2=\"" << kW - kRight << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kH - 12 << "\" text-anchor=\"middle\">Surprisingness (max "
      << max_s << ")</text>\n"
      << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 16 " << kTop + plot_h / 2
      << ")\" text-anchor=\"middle\">Deceptiveness (max " << max_d << ")</text>\n";

  // Marginal histograms of surprisingness, stacked above the plot, one band per class.
  constexpr int kBins = 40;
  for (MazeClass cls : kMazeClasses) {
    std::array<int, kBins> bins{};
    int total = 0;
    for (const auto& r : rows) {
      if (r.maze_class != cls) continue;
      ++bins[std::min(kBins - 1, static_cast<int>(r.surprisingness / max_s * kBins))];
      ++total;
    }
    if (!total) continue;
    const int peak = *std::max_element(bins.begin(), bins.end());
    out << "<polyline fill=\"none\" stroke=\"" << kColors[static_cast<int>(cls)] << "\" points=\"";
    for (int b = 0; b < kBins; ++b)
      out << kLeft + (b + 0.5) * plot_w / kBins << ',' << kTop - 10 - 80.0 * bins[b] / peak << ' ';
    out << "\"/>\n";
  }
  for (const auto& r : rows)
    out << "<circle cx=\"" << px(r.surprisingness) << "\" cy=\"" << py(r.deceptiveness) << "\" r=\"1.5\" fill=\""
        << kColors[static_cast<int>(r.maze_class)] << "\" fill-opacity=\"0.5\"/>\n";
  int row = 0;
  for (MazeClass cls : kMazeClasses)
    out << "<text x=\"" << kW - 110 << "\" y=\"" << kTop + 15 + 16 * row++ << "\" fill=\""
        << kColors[static_cast<int>(cls)] << "\">" << to_string(cls) << "</text>\n";
  out << "</svg>\n";
  return out.str();
}

std::vector<Maze> percentile_select(std::vector<Maze> sample, std::span<const double> percentiles) {
  if (sample.empty()) throw InvalidArgument("sample_size", "must be at least 1");
  for (double p : percentiles)
    if (!(p >= 0 && p <= 100)) throw InvalidArgument("percentiles", "must lie in [0, 100]");
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < sample.size(); ++i) ranked.emplace_back(surprisingness(sample[i]), i);
  std::sort(ranked.begin(), ranked.end(), [&sample](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return sample[a.second].spec.seed < sample[b.second].spec.seed;
  });
  std::vector<Maze> selected;
  const double last = static_cast<double>(sample.size() - 1);
  for (double p : percentiles) selected.push_back(sample[ranked[std::lround(p / 100.0 * last)].second]);
  return selected;
}

std::vector<Maze> percentile_select(const MazeSpec& base, MazeClass cls, int sample_size,
                                    std::span<const double> percentiles) {
  if (sample_size < 1) throw InvalidArgument("sample_size", "must be at least 1");
  std::vector<Maze> sample;
  sample.reserve(sample_size);
  MazeSpec spec = with_class(base, cls);
  for (int i = 0; i < sample_size; ++i) {
    spec.seed = base.seed + static_cast<std::uint64_t>(i);
    sample.push_back(generate(spec));
  }
  return percentile_select(std::move(sample), percentiles);
}

}  // namespace amaze
