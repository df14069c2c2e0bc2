#include <bit>
#include <cmath>
#include <map>

#include <gtest/gtest.h>

#include "amaze/complexity.hpp"
#include "amaze/evaluate.hpp"
#include "amaze/trainer.hpp"
#include "test_util.hpp"

namespace amaze {
namespace {

TEST(BenjaminiHochberg, HandComputedFixtures) {
  const std::vector<double> one{0.01};
  EXPECT_EQ(benjamini_hochberg(one, 0.05), std::vector<bool>{true});
  const std::vector<double> four{0.01, 0.02, 0.03, 0.04};
  EXPECT_EQ(benjamini_hochberg(four, 0.05), std::vector<bool>(4, true));
  const std::vector<double> ones(5, 1.0);
  EXPECT_EQ(benjamini_hochberg(ones, 0.05), std::vector<bool>(5, false));
  EXPECT_TRUE(benjamini_hochberg(std::vector<double>{}, 0.05).empty());
}

TEST(BenjaminiHochberg, StepUpKeepsInputOrder) {
  // Sorted: .001 (.0125) .008 (.025) .039 (.0375 fails) .041 (.05) -> k = 4 rejects all.
  const std::vector<double> p{0.041, 0.001, 0.039, 0.008};
  EXPECT_EQ(benjamini_hochberg(p, 0.05), std::vector<bool>(4, true));
  // .02 > .0125 and .03 > .025, .2 > .0375, .5 > .05 -> none.
  const std::vector<double> none{0.5, 0.02, 0.2, 0.03};
  EXPECT_EQ(benjamini_hochberg(none, 0.05), std::vector<bool>(4, false));
  const std::vector<double> mixed{0.2, 0.01, 0.9, 0.011};
  EXPECT_EQ(benjamini_hochberg(mixed, 0.05), (std::vector<bool>{false, true, false, true}));
  EXPECT_THROW(benjamini_hochberg(std::vector<double>{1.5}, 0.05), InvalidArgument);
  EXPECT_THROW(benjamini_hochberg(std::vector<double>{0.5}, 1.0), InvalidArgument);
}

TEST(TTest, MatchesReferenceValues) {
  // Reference values from scipy.stats.ttest_ind (pooled variance).
  const std::vector<double> a{0.91, 0.85, 0.97, 0.88, 0.93, 0.79};
  const std::vector<double> b{0.72, 0.81, 0.69, 0.77, 0.84, 0.70, 0.75};
  const auto r = independent_t_test(a, b);
  EXPECT_NEAR(r.t, 4.0436300826928555, 1e-12);
  EXPECT_EQ(r.dof, 11);
  EXPECT_NEAR(r.p_value, 0.0019364597396703748, 1e-10);
  const std::vector<double> c{1, 2, 3}, d{1.5, 2.5, 3.5, 4.5};
  const auto s = independent_t_test(c, d);
  EXPECT_NEAR(s.t, -1.1065666703449764, 1e-12);
  EXPECT_NEAR(s.p_value, 0.31885766977837704, 1e-10);
  EXPECT_THROW(independent_t_test(std::vector<double>{1}, d), InvalidArgument);
}

TEST(IncompleteBeta, MatchesReferenceValues) {
  // scipy.special.betainc
  EXPECT_NEAR(incomplete_beta(2.5, 3.5, 0.4), 0.4869041915261176, 1e-12);
  EXPECT_NEAR(incomplete_beta(0.5, 0.5, 0.1), 0.20483276469913345, 1e-12);
  EXPECT_NEAR(incomplete_beta(10, 2, 0.95), 0.8981054088575682, 1e-12);
  EXPECT_EQ(incomplete_beta(3, 4, 0.0), 0.0);
  EXPECT_EQ(incomplete_beta(3, 4, 1.0), 1.0);
}

TEST(Audit, RulePolicyIsPerfect) {
  RulePolicy rule;
  const auto r = input_audit(rule);
  EXPECT_EQ(r.inputs, (std::array<int, 4>{12, 36, 36, 36}));
  for (InputClass c : kInputClasses) EXPECT_EQ(r.rate(c), 1.0);
  EXPECT_EQ(r.overall(), 1.0);
  TabularQ oracle = TabularQ::oracle();
  GreedyPolicy greedy(oracle);
  EXPECT_EQ(input_audit(greedy).overall(), 1.0);
}

TEST(Audit, ConstantPolicyRatesComeFromTheEnumeration) {
  const auto inputs = enumerate_discrete_inputs();
  for (Direction d : kDirections) {
    std::array<int, 4> n{}, hit{};
    for (const auto& in : inputs) {
      ++n[static_cast<int>(in.label)];
      hit[static_cast<int>(in.label)] += in.accepts(d);
    }
    ConstantPolicy constant(d);
    const auto r = input_audit(constant);
    for (int c = 0; c < 4; ++c) EXPECT_DOUBLE_EQ(r.rate(kInputClasses[c]), double(hit[c]) / n[c]);
  }
}

TEST(Audit, RandomPolicyWithinThreeSigma) {
  const auto inputs = enumerate_discrete_inputs();
  std::array<double, 4> mean{}, var{};
  std::array<int, 4> n{};
  for (const auto& in : inputs) {
    const int c = static_cast<int>(in.label);
    const double p = std::popcount(in.correct) / 4.0;
    mean[c] += p;
    var[c] += p * (1 - p);
    ++n[c];
  }
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    RandomPolicy random(seed);
    const auto r = input_audit(random);
    for (int c = 0; c < 4; ++c) {
      const double expected = mean[c] / n[c];
      const double sigma = std::sqrt(var[c]) / n[c];
      EXPECT_NEAR(r.rate(kInputClasses[c]), expected, 3 * sigma) << to_string(kInputClasses[c]);
    }
  }
  EXPECT_DOUBLE_EQ(mean[0] / n[0], 0.25);
  EXPECT_DOUBLE_EQ(mean[3] / n[3], 1.0 / 3.0);
}

TEST(Audit, CsvRoundTrip) {
  RandomPolicy random(3);
  const auto r = input_audit(random);
  const auto back = audit_result_from_csv(to_csv(r));
  EXPECT_EQ(back.inputs, r.inputs);
  EXPECT_EQ(back.correct, r.correct);
  EXPECT_NE(summary(r).find("overall"), std::string::npos);
}

SuiteOptions small_suite() { return {20, 40, 1}; }

TEST(Suite, EighteenMazesThreePerColumn) {
  const auto suite = build_generalization_suite(0, small_suite());
  ASSERT_EQ(suite.size(), 18u);
  std::map<std::string, int> per_column;
  for (const auto& s : suite) ++per_column[s.column];
  EXPECT_EQ(per_column.size(), 6u);
  for (const auto& [name, n] : per_column) EXPECT_EQ(n, 3) << name;

  const auto columns = default_suite_columns();
  for (std::size_t i = 0; i < suite.size(); ++i) {
    const auto& column = columns[i / 3];
    const Maze& m = suite[i].maze;
    EXPECT_EQ(suite[i].column, column.name);
    EXPECT_EQ(suite[i].row, static_cast<int>(i % 3));
    EXPECT_EQ(m.width, 20);
    if (column.trap_count >= 0) { EXPECT_EQ(trap_count(m), column.trap_count); }
    if (column.maze_class == MazeClass::Trivial) { EXPECT_EQ(deceptiveness(m), 0.0); }
    if (i % 3) { EXPECT_LE(surprisingness(suite[i - 1].maze), surprisingness(m)); }
  }
  EXPECT_EQ(columns[3].name, "1 Trap");
  EXPECT_EQ(columns[5].trap_count, 16);
}

TEST(Suite, DeterministicAndGolden) {
  const auto a = build_generalization_suite(0, small_suite());
  const auto b = build_generalization_suite(0, {20, 40, 3});
  std::string text;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].maze, b[i].maze);
    text += a[i].column + ',' + std::to_string(a[i].row) + ',' + encode_descriptor(a[i].maze.spec) + '\n';
  }
  test::expect_golden("suite_seed0_sample40.csv", text);
  EXPECT_NE(encode_descriptor(build_generalization_suite(1000, small_suite())[1].maze.spec),
            encode_descriptor(a[1].maze.spec));
}

std::vector<Maze> suite_mazes() {
  std::vector<Maze> mazes;
  for (const auto& s : build_generalization_suite(0, small_suite())) mazes.push_back(s.maze);
  return mazes;
}

TEST(Navigation, PathFollowerAndEast) {
  const auto mazes = suite_mazes();
  const auto oracle = evaluate_navigation([](const Maze& m) { return std::make_unique<PathFollower>(m); }, mazes, 2);
  EXPECT_EQ(oracle.success_rate(), 1.0);
  EXPECT_NEAR(oracle.mean_normalized_return(), 1.0, 1e-9);
  ConstantPolicy east(Direction::East);
  EXPECT_EQ(evaluate_navigation(east, mazes).success_rate(), 0.0);
  EXPECT_THROW(evaluate_navigation(east, std::span<const Maze>{}), InvalidArgument);
}

TEST(Navigation, CsvRoundTripAndSummary) {
  const auto mazes = suite_mazes();
  RulePolicy rule;
  const auto r = evaluate_navigation(rule, mazes);
  const auto back = suite_result_from_csv(to_csv(r));
  ASSERT_EQ(back.rows.size(), r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].descriptor, r.rows[i].descriptor);
    EXPECT_EQ(back.rows[i].success, r.rows[i].success);
    EXPECT_EQ(back.rows[i].normalized_return, r.rows[i].normalized_return);
  }
  EXPECT_EQ(back.success_rate(), r.success_rate());
  EXPECT_NE(summary(r).find("success rate"), std::string::npos);
}

bool only_three_way(const Maze& m) {
  for (std::size_t i : path_intersections(m))
    if (forward_options(m, m.path[i], i ? std::optional<Cell>(m.path[i - 1]) : std::nullopt) != 2) return false;
  return true;
}

TEST(Navigation, AuditPerfectPolicySolvesThreeWayMazes) {
  std::vector<Maze> subset;
  for (const Maze& m : suite_mazes())
    if (only_three_way(m)) subset.push_back(m);
  Pcg32 rng(1);
  while (subset.size() < 60) {
    const Maze m = generate(test::random_spec(rng));
    if (only_three_way(m)) subset.push_back(m);
  }
  RulePolicy rule;
  ASSERT_EQ(input_audit(rule).overall(), 1.0);
  const auto r = evaluate_navigation(rule, subset);
  EXPECT_EQ(r.success_rate(), 1.0);
}

TEST(BoxPlot, QuartilesAndSvg) {
  const auto s = box_stats({10, 1, 3, 2, 4});
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.q1, 2);
  EXPECT_EQ(s.median, 3);
  EXPECT_EQ(s.q3, 4);
  EXPECT_EQ(s.max, 10);
  EXPECT_DOUBLE_EQ(box_stats({1, 2, 3, 4}).median, 2.5);
  const std::string svg = render_boxplot_svg({{"direct", {0.2, 0.5, 0.9}}, {"edhucat", {0.7, 0.8}}}, "success");
  EXPECT_NE(svg.find("direct"), std::string::npos);
  EXPECT_NE(svg.find("edhucat"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

}  // namespace
}  // namespace amaze
