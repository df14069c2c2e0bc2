#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "amaze/env.hpp"
#include "amaze/maze.hpp"
#include "amaze/observe.hpp"

namespace amaze {

/// One column of the generalization suite: a maze class, optionally with an
/// exact realized trap count.
struct SuiteColumn {
  std::string name;
  MazeClass maze_class = MazeClass::Trivial;
  int trap_count = -1;  ///< -1: any
  double p_trap = 0;    ///< sampling probability when trap_count is set
};

/// Trivial, Simple, Lures, 1 Trap, 3 Traps, 16 Traps.
std::vector<SuiteColumn> default_suite_columns();

struct SuiteMaze {
  std::string column;
  int row = 0;  ///< 0 = min, 1 = median, 2 = max surprisingness
  Maze maze;
};

struct SuiteOptions {
  int size = 20;
  int sample_size = 10'000;  ///< accepted mazes per column
  int threads = 1;
};

/// For each column, samples mazes with seeds base_seed, base_seed + 1, ...,
/// keeps those matching the column's trap count until `sample_size` are
/// accepted, ranks them by surprisingness (ties by seed) and keeps the
/// minimum, median and maximum.
std::vector<SuiteMaze> build_generalization_suite(std::uint64_t base_seed, const SuiteOptions& options = {});

/// Number of trap signs in a maze.
int trap_count(const Maze& maze);

struct SuiteRow {
  std::string descriptor;
  bool success = false;       ///< all four rotations reached the goal
  double normalized_return = 0;  ///< mean over rotations
  std::array<RotationResult, 4> rotations{};
};

struct SuiteResult {
  std::vector<SuiteRow> rows;

  double success_rate() const;
  double mean_normalized_return() const;
};

/// Builds a fresh policy for one (rotated) maze. Lets maze-specific policies
/// such as PathFollower take part and keeps parallel evaluation free of
/// shared mutable state.
using PolicyFactory = std::function<std::unique_ptr<Policy>(const Maze&)>;

/// One episode per rotation of every maze; rows in input order.
SuiteResult evaluate_navigation(Policy& policy, std::span<const Maze> mazes);
SuiteResult evaluate_navigation(const PolicyFactory& factory, std::span<const Maze> mazes, int threads = 1);

struct AuditResult {
  std::array<int, 4> inputs{};   ///< indexed by InputClass
  std::array<int, 4> correct{};

  double rate(InputClass c) const;
  /// Unweighted mean of the four class rates.
  double overall() const;
};

/// Plays every enumerated input once (begin_episode before each) and checks
/// the action against the input's correct set.
AuditResult input_audit(Policy& policy, const SignValues& values = {});

/// Step-up procedure: rejects hypotheses 1..k for the largest k with
/// p_(k) <= k q / m. Flags are returned in input order.
std::vector<bool> benjamini_hochberg(std::span<const double> p_values, double q);

struct TTestResult {
  double t = 0;
  double dof = 0;
  double p_value = 1;  ///< two-sided
};

/// Independent two-sample t test with pooled variance.
TTestResult independent_t_test(std::span<const double> a, std::span<const double> b);

/// Regularized incomplete beta function I_x(a, b).
double incomplete_beta(double a, double b, double x);

std::string to_csv(const SuiteResult& result);
SuiteResult suite_result_from_csv(const std::string& text);
std::string to_csv(const AuditResult& result);
AuditResult audit_result_from_csv(const std::string& text);
std::string summary(const SuiteResult& result);
std::string summary(const AuditResult& result);

struct BoxGroup {
  std::string label;
  std::vector<double> values;
};

struct BoxStats {
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
};

/// Quartiles by linear interpolation between order statistics.
BoxStats box_stats(std::vector<double> values);

std::string render_boxplot_svg(const std::vector<BoxGroup>& groups, const std::string& y_label);

}  // namespace amaze
