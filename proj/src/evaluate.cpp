#include "amaze/evaluate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "amaze/complexity.hpp"

namespace amaze {

namespace {

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

std::string format_double(double v) {
  char buffer[64];
  auto [end, ec] = std::to_chars(buffer, buffer + sizeof buffer, v);
  return std::string(buffer, end);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string f;
  while (std::getline(in, f, sep)) fields.push_back(f);
  return fields;
}

MazeSpec column_spec(const SuiteColumn& column, int size) {
  MazeSpec spec;
  spec.width = spec.height = size;
  if (column.trap_count >= 0) return with_class(spec, MazeClass::Traps, 0.25, column.p_trap);
  return with_class(spec, column.maze_class);
}

}  // namespace

std::vector<SuiteColumn> default_suite_columns() {
  return {{"Trivial", MazeClass::Trivial, -1, 0},   {"Simple", MazeClass::Simple, -1, 0},
          {"Lures", MazeClass::Lures, -1, 0},       {"1 Trap", MazeClass::Traps, 1, 0.1},
          {"3 Traps", MazeClass::Traps, 3, 0.25},   {"16 Traps", MazeClass::Traps, 16, 0.9}};
}

int trap_count(const Maze& maze) {
  return static_cast<int>(
      std::count_if(maze.signs.begin(), maze.signs.end(), [](const auto& s) { return s && s->kind == SignKind::Trap; }));
}

std::vector<SuiteMaze> build_generalization_suite(std::uint64_t base_seed, const SuiteOptions& options) {
  if (options.sample_size < 1) throw InvalidArgument("sample_size", "must be at least 1");
  if (options.size < 2) throw InvalidArgument("size", "must be at least 2");
  constexpr std::array<double, 3> kPercentiles{0, 50, 100};
  const int threads = std::max(1, options.threads);
  std::vector<SuiteMaze> suite;
  for (const SuiteColumn& column : default_suite_columns()) {
    MazeSpec spec = column_spec(column, options.size);
    // (S, seed) of accepted mazes; candidates are scanned in seed order in
    // batches so acceptance does not depend on the thread count.
    std::vector<std::pair<double, std::uint64_t>> accepted;
    std::uint64_t next_seed = base_seed;
    const int batch = std::max(256, 64 * threads);
    while (static_cast<int>(accepted.size()) < options.sample_size) {
      std::vector<std::optional<double>> scores(batch);
      parallel_for(batch, threads, [&](int i) {
        MazeSpec s = spec;
        s.seed = next_seed + static_cast<std::uint64_t>(i);
        const Maze maze = generate(s);
        if (column.trap_count < 0 || trap_count(maze) == column.trap_count) scores[i] = surprisingness(maze);
      });
      for (int i = 0; i < batch && static_cast<int>(accepted.size()) < options.sample_size; ++i)
        if (scores[i]) accepted.emplace_back(*scores[i], next_seed + static_cast<std::uint64_t>(i));
      next_seed += static_cast<std::uint64_t>(batch);
      if (next_seed - base_seed > 1000ull * static_cast<std::uint64_t>(options.sample_size) + 1'000'000ull)
        throw std::runtime_error("suite column '" + column.name + "' accepts too few mazes");
    }
    std::sort(accepted.begin(), accepted.end());
    const double last = static_cast<double>(accepted.size() - 1);
    for (int row = 0; row < 3; ++row) {
      spec.seed = accepted[std::lround(kPercentiles[row] / 100.0 * last)].second;
      suite.push_back({column.name, row, generate(spec)});
    }
  }
  return suite;
}

double SuiteResult::success_rate() const {
  if (rows.empty()) return 0;
  return static_cast<double>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.success; })) /
         static_cast<double>(rows.size());
}

double SuiteResult::mean_normalized_return() const {
  if (rows.empty()) return 0;
  double sum = 0;
  for (const auto& r : rows) sum += r.normalized_return;
  return sum / static_cast<double>(rows.size());
}

namespace {

SuiteRow navigate(const PolicyFactory& factory, const Maze& maze) {
  SuiteRow row;
  row.descriptor = encode_descriptor(maze.spec);
  row.success = true;
  const auto rotations = all_rotations(maze);
  for (int k = 0; k < 4; ++k) {
    const auto policy = factory(rotations[k]);
    const EpisodeResult r = run_episode(*policy, rotations[k]);
    row.rotations[k] = {r.success, r.success && r.steps == rotations[k].path_length() - 1, r.normalized_return,
                        r.steps};
    row.success = row.success && r.success;
    row.normalized_return += r.normalized_return / 4.0;
  }
  return row;
}

class Borrowed final : public Policy {
 public:
  explicit Borrowed(Policy& inner) : inner_(inner) {}
  Direction act(const DiscreteObservation& obs) override { return inner_.act(obs); }
  void begin_episode() override { inner_.begin_episode(); }

 private:
  Policy& inner_;
};

}  // namespace

SuiteResult evaluate_navigation(Policy& policy, std::span<const Maze> mazes) {
  return evaluate_navigation([&policy](const Maze&) { return std::make_unique<Borrowed>(policy); }, mazes, 1);
}

SuiteResult evaluate_navigation(const PolicyFactory& factory, std::span<const Maze> mazes, int threads) {
  if (mazes.empty()) throw InvalidArgument("mazes", "at least one maze is required");
  SuiteResult result;
  result.rows.resize(mazes.size());
  parallel_for(static_cast<int>(mazes.size()), threads, [&](int i) { result.rows[i] = navigate(factory, mazes[i]); });
  return result;
}

double AuditResult::rate(InputClass c) const {
  const int i = static_cast<int>(c);
  return inputs[i] ? static_cast<double>(correct[i]) / inputs[i] : 0.0;
}

double AuditResult::overall() const {
  double sum = 0;
  for (InputClass c : kInputClasses) sum += rate(c);
  return sum / 4.0;
}

AuditResult input_audit(Policy& policy, const SignValues& values) {
  AuditResult result;
  for (const LabeledInput& input : enumerate_discrete_inputs(values)) {
    const int c = static_cast<int>(input.label);
    policy.begin_episode();
    ++result.inputs[c];
    if (input.accepts(policy.act(input.observation))) ++result.correct[c];
  }
  return result;
}

std::vector<bool> benjamini_hochberg(std::span<const double> p, double q) {
  if (!(q > 0 && q < 1)) throw InvalidArgument("q", "must lie in (0, 1)");
  for (double v : p)
    if (!(v >= 0 && v <= 1)) throw InvalidArgument("p_values", "must lie in [0, 1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&p](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::size_t k = 0;
  for (std::size_t rank = 1; rank <= m; ++rank)
    if (p[order[rank - 1]] <= static_cast<double>(rank) * q / static_cast<double>(m)) k = rank;
  std::vector<bool> reject(m, false);
  for (std::size_t rank = 0; rank < k; ++rank) reject[order[rank]] = true;
  return reject;
}

double incomplete_beta(double a, double b, double x) {
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  // Continued fraction (modified Lentz) on whichever side converges.
  if (x > (a + 1) / (a + b + 2)) return 1 - incomplete_beta(b, a, 1 - x);
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  constexpr double kTiny = 1e-300;
  double f = 1, c = 1, d = 0;
  for (int i = 0; i <= 400; ++i) {
    const int m = i / 2;
    double numerator;
    if (i == 0)
      numerator = 1;
    else if (i % 2 == 0)
      numerator = m * (b - m) * x / ((a + 2 * m - 1) * (a + 2 * m));
    else
      numerator = -((a + m) * (a + b + m) * x) / ((a + 2 * m) * (a + 2 * m + 1));
    d = 1 + numerator * d;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1 / d;
    c = 1 + numerator / c;
    if (std::abs(c) < kTiny) c = kTiny;
    const double cd = c * d;
    f *= cd;
    if (std::abs(1 - cd) < 1e-15) break;
  }
  return std::exp(log_front) * (f - 1) / a;
}

TTestResult independent_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw InvalidArgument("samples", "each sample needs at least 2 values");
  auto mean = [](std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
  auto sum_sq = [](std::span<const double> v, double m) {
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return s;
  };
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double ma = mean(a), mb = mean(b);
  TTestResult r;
  r.dof = na + nb - 2;
  const double pooled = (sum_sq(a, ma) + sum_sq(b, mb)) / r.dof;
  const double se = std::sqrt(pooled * (1 / na + 1 / nb));
  if (se == 0) {
    r.t = ma == mb ? 0 : std::copysign(std::numeric_limits<double>::infinity(), ma - mb);
    r.p_value = ma == mb ? 1 : 0;
    return r;
  }
  r.t = (ma - mb) / se;
  r.p_value = incomplete_beta(r.dof / 2, 0.5, r.dof / (r.dof + r.t * r.t));
  return r;
}

std::string to_csv(const SuiteResult& result) {
  std::string out = "descriptor,success,normalized_return,success_e,success_n,success_w,success_s\n";
  for (const auto& r : result.rows) {
    out += r.descriptor + ',' + (r.success ? "1" : "0") + ',' + format_double(r.normalized_return);
    for (const auto& rot : r.rotations) out += rot.success ? ",1" : ",0";
    out += '\n';
  }
  return out;
}

SuiteResult suite_result_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  SuiteResult result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() < 3) throw InvalidArgument("csv", "malformed suite row '" + line + "'");
    SuiteRow row;
    row.descriptor = f[0];
    row.success = f[1] == "1";
    row.normalized_return = std::stod(f[2]);
    for (std::size_t k = 0; k < 4 && 3 + k < f.size(); ++k) row.rotations[k].success = f[3 + k] == "1";
    result.rows.push_back(std::move(row));
  }
  return result;
}

std::string to_csv(const AuditResult& result) {
  std::string out = "class,inputs,correct,rate\n";
  for (InputClass c : kInputClasses) {
    const int i = static_cast<int>(c);
    out += std::string(to_string(c)) + ',' + std::to_string(result.inputs[i]) + ',' + std::to_string(result.correct[i]) +
           ',' + format_double(result.rate(c)) + '\n';
  }
  return out;
}

AuditResult audit_result_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  AuditResult result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() < 3) throw InvalidArgument("csv", "malformed audit row '" + line + "'");
    for (InputClass c : kInputClasses)
      if (to_string(c) == f[0]) {
        result.inputs[static_cast<int>(c)] = std::stoi(f[1]);
        result.correct[static_cast<int>(c)] = std::stoi(f[2]);
      }
  }
  return result;
}

std::string summary(const SuiteResult& result) {
  std::ostringstream out;
  out << "mazes: " << result.rows.size() << "\nsuccess rate: " << result.success_rate()
      << "\nmean normalized return: " << result.mean_normalized_return() << '\n';
  for (const auto& r : result.rows)
    out << "  " << (r.success ? "ok  " : "FAIL") << ' ' << r.normalized_return << ' ' << r.descriptor << '\n';
  return out.str();
}

std::string summary(const AuditResult& result) {
  std::ostringstream out;
  for (InputClass c : kInputClasses) {
    const int i = static_cast<int>(c);
    out << to_string(c) << ": " << result.correct[i] << '/' << result.inputs[i] << " = " << result.rate(c) << '\n';
  }
  out << "overall: " << result.overall() << '\n';
  return out.str();
}

BoxStats box_stats(std::vector<double> v) {
  if (v.empty()) return {};
  std::sort(v.begin(), v.end());
  auto quantile = [&v](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (v[hi] - v[lo]) * (pos - static_cast<double>(lo));
  };
  return {v.front(), quantile(0.25), quantile(0.5), quantile(0.75), v.back()};
}

std::string render_boxplot_svg(const std::vector<BoxGroup>& groups, const std::string& y_label) {
  constexpr double kH = 360, kLeft = 60, kBottom = 60, kTop = 20, kSlot = 70;
  const double width = kLeft + kSlot * std::max<std::size_t>(1, groups.size()) + 20;
  double lo = 0, hi = 1;
  for (const auto& g : groups)
    for (double v : g.values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double plot_h = kH - kTop - kBottom;
  auto py = [&](double v) { return kTop + (hi - v) / (hi - lo) * plot_h; };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << kH << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kH - kBottom
      << "\" stroke=\"black\"/>\n";
  for (double tick : {lo, (lo + hi) / 2, hi})
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(tick) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << tick
        << "</text>\n";
  out << "<text x=\"14\" y=\"" << kTop + plot_h / 2 << "\" transform=\"rotate(-90 14 " << kTop + plot_h / 2
      << ")\" text-anchor=\"middle\">" << y_label << "</text>\n";
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const double cx = kLeft + kSlot * (i + 0.5);
    out << "<text x=\"" << cx << "\" y=\"" << kH - kBottom + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
        << groups[i].label << "</text>\n";
    if (groups[i].values.empty()) continue;
    const BoxStats s = box_stats(groups[i].values);
    out << "<line x1=\"" << cx << "\" y1=\"" << py(s.max) << "\" x2=\"" << cx << "\" y2=\"" << py(s.min)
        << "\" stroke=\"black\"/>\n"
        << "<rect x=\"" << cx - 20 << "\" y=\"" << py(s.q3) << "\" width=\"40\" height=\"" << py(s.q1) - py(s.q3)
        << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n"
        << "<line x1=\"" << cx - 20 << "\" y1=\"" << py(s.median) << "\" x2=\"" << cx + 20 << "\" y2=\""
        << py(s.median) << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace amaze
