#include <cstdlib>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "amaze/evaluate.hpp"
#include "amaze/maze.hpp"
#include "test_util.hpp"

namespace amaze {
namespace {

namespace fs = std::filesystem;

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::string& args) {
  static int counter = 0;
  const auto dir = test::temp_dir("cli_io_" + std::to_string(counter++));
  const std::string cmd = std::string(AMAZE_CLI) + " " + args + " >" + (dir / "out").string() + " 2>" +
                          (dir / "err").string();
  const int status = std::system(cmd.c_str());
  return {WEXITSTATUS(status), test::slurp(dir / "out"), test::slurp(dir / "err")};
}

TEST(Cli, HelpTexts) {
  const auto top = cli("--help");
  EXPECT_EQ(top.code, 0);
  test::expect_golden("help.txt", top.out);
  for (const char* sub : {"generate", "metrics", "train", "eval", "bench", "serve", "drive", "plot"}) {
    const auto r = cli(std::string(sub) + " --help");
    EXPECT_EQ(r.code, 0) << sub;
    test::expect_golden(std::string("help_") + sub + ".txt", r.out);
  }
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("--frobnicate").code, 2);
  EXPECT_EQ(cli("generate").code, 2);
  EXPECT_EQ(cli("generate M0_5x5 --rotation 4").code, 2);
  EXPECT_EQ(cli("bench M0_5x5 --steps 0").code, 2);
  EXPECT_EQ(cli("train --regime sideways --out x").code, 2);
  EXPECT_EQ(cli("eval --policy path --snapshot x.amzq").code, 2);
  EXPECT_EQ(cli("eval --policy teleport").code, 2);
  const auto bad = cli("generate Mx_5x5");
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("seed"), std::string::npos);

  // Runtime failures: unreadable or damaged inputs.
  EXPECT_EQ(cli("eval --snapshot /nonexistent/q.amzq --mazes M0_5x5").code, 3);
  const auto dir = test::temp_dir("cli_damaged");
  std::ofstream(dir / "bad.amzq") << "AMZQ1 garbage";
  EXPECT_EQ(cli("eval --snapshot " + (dir / "bad.amzq").string() + " --mazes M0_5x5").code, 3);
  EXPECT_EQ(cli("plot --out " + (dir / "p.svg").string() + " /nonexistent.csv").code, 3);
}

TEST(Cli, GenerateMatchesTheLibrary) {
  const auto r = cli("generate M7_9x6_C1_l.3_L.25_t.2_T.5");
  ASSERT_EQ(r.code, 0);
  const Maze m = generate(decode_descriptor("M7_9x6_C1_l.3_L.25_t.2_T.5"));
  EXPECT_EQ(nlohmann::json::parse(r.out), to_json(m));
  EXPECT_EQ(maze_from_json(nlohmann::json::parse(r.out)).walls, m.walls);

  const auto dir = test::temp_dir("cli_generate");
  const auto w = cli("generate M3_6x6_C1 --rotation 1 --svg --pgm 8 --out " + dir.string());
  ASSERT_EQ(w.code, 0);
  const Maze rotated = rotate(generate(decode_descriptor("M3_6x6_C1")), 1);
  EXPECT_EQ(test::slurp(dir / "M3_6x6_C1_r1.svg"), render_svg(rotated));
  EXPECT_EQ(nlohmann::json::parse(test::slurp(dir / "M3_6x6_C1_r1.json")), to_json(rotated));
  EXPECT_TRUE(fs::exists(dir / "M3_6x6_C1_r1.pgm"));
}

TEST(Cli, MetricsAndBench) {
  const auto m = cli("metrics M0_10x10");
  ASSERT_EQ(m.code, 0);
  const auto j = nlohmann::json::parse(m.out);
  EXPECT_EQ(j["class"], "Simple");
  EXPECT_EQ(j["deceptiveness"], 0.0);

  const auto dir = test::temp_dir("cli_sweep");
  const auto s = cli("--threads 2 metrics --sweep --count 20 --size 8 --out " + dir.string());
  ASSERT_EQ(s.code, 0);
  EXPECT_NE(s.out.find("Complex: median S"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir / "sweep.csv"));
  EXPECT_TRUE(fs::exists(dir / "scatter.svg"));

  const auto b = cli("bench M0_10x10_C1 --steps 100000");
  ASSERT_EQ(b.code, 0);
  const auto bench = nlohmann::json::parse(b.out);
  EXPECT_EQ(bench["steps"], 100000);
  EXPECT_GT(bench["steps_per_second"].get<double>(), 0);
  EXPECT_NEAR(bench["ms_per_1000_steps"].get<double>() * bench["steps_per_second"].get<double>(), 1e6, 1e-3);
  // The checksum depends only on the seed.
  EXPECT_EQ(nlohmann::json::parse(cli("bench M0_10x10_C1 --steps 100000").out)["checksum"], bench["checksum"]);
}

TEST(Cli, EvalBuiltInPolicies) {
  const auto dir = test::temp_dir("cli_eval");
  const auto r = cli("eval --policy path --sample-size 5 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const SuiteResult suite = suite_result_from_csv(test::slurp(dir / "suite.csv"));
  ASSERT_FALSE(suite.rows.empty());
  for (const auto& row : suite.rows) EXPECT_NEAR(row.normalized_return, 1.0, 1e-9);
  EXPECT_FALSE(fs::exists(dir / "audit.csv"));

  const auto rule = cli("eval --policy rule --mazes 'M1_6x6_C1;M2_7x7_C1' --out " + dir.string());
  ASSERT_EQ(rule.code, 0);
  const AuditResult audit = audit_result_from_csv(test::slurp(dir / "audit.csv"));
  EXPECT_EQ(audit.overall(), 1.0);
}

TEST(Cli, TrainDirectThenEvaluateTheSnapshot) {
  const auto dir = test::temp_dir("cli_train");
  const auto r = cli("train --maze M0_6x6_C1 --budget 200000 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("regime: direct"), std::string::npos);
  for (const char* f : {"ledger.json", "decisions.jsonl", "snapshots/final.amzq"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  const auto e = cli("eval --snapshot " + (dir / "snapshots/final.amzq").string() + " --mazes M0_6x6_C1 --out " +
                     dir.string());
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(suite_result_from_csv(test::slurp(dir / "suite.csv")).rows.at(0).success, true);
}

TEST(Cli, InterpolationLedger) {
  const auto dir = test::temp_dir("cli_interp");
  const auto r = cli("train --regime interpolation --initial M0_5x5_U --maze M0_8x8_C1 --stages 4 --budget 40000 "
                     "--eval-interval 5000 --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto ledger = nlohmann::json::parse(test::slurp(dir / "ledger.json"));
  EXPECT_EQ(ledger["stages"].size(), 4u);
  EXPECT_LE(ledger["consumed"].get<std::int64_t>(), 40000);
}

TEST(Cli, EdhucatResumesAfterAFailure) {
  const std::string decisions =
      R"({"select": 0, "mazes": ["M1_6x6_C1", "M2_6x6_C1"]})" "\n"
      R"({"select": 1, "mazes": ["M3_6x6_C1", "M4_6x6_C1"], "annotation": "second"})" "\n"
      R"({"select": 0})" "\n";
  const auto dir = test::temp_dir("cli_edhucat");
  std::ofstream(dir / "all.jsonl") << decisions;
  std::ofstream(dir / "partial.jsonl") << decisions.substr(0, decisions.find('\n') + 1);
  const std::string common = "train --regime edhucat -K 2 --stages 3 --budget 6000 --eval-interval 500 "
                             "--initial M0_5x5_U --target M0_8x8_C1 ";

  const auto full = cli(common + "--decisions " + (dir / "all.jsonl").string() + " --out " + (dir / "a").string());
  ASSERT_EQ(full.code, 0) << full.err;
  const auto broken = cli(common + "--decisions " + (dir / "partial.jsonl").string() + " --out " + (dir / "b").string());
  EXPECT_EQ(broken.code, 3);
  EXPECT_NE(broken.err.find("exhausted"), std::string::npos);
  const auto resumed =
      cli(common + "--resume --decisions " + (dir / "all.jsonl").string() + " --out " + (dir / "b").string());
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  EXPECT_EQ(resumed.out, full.out);
  EXPECT_EQ(test::slurp(dir / "a/engine.json"), test::slurp(dir / "b/engine.json"));
}

TEST(Cli, PlotAuditBoxes) {
  const auto dir = test::temp_dir("cli_plot");
  ASSERT_EQ(cli("eval --policy random --mazes M1_5x5 --out " + (dir / "r1").string()).code, 0);
  ASSERT_EQ(cli("eval --policy east --mazes M1_5x5 --out " + (dir / "r2").string()).code, 0);
  const auto r = cli("plot --kind audit --out " + (dir / "box.svg").string() + " " + (dir / "r1/audit.csv").string() +
                     " " + (dir / "r2/audit.csv").string());
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(test::slurp(dir / "box.svg").rfind("<svg", 0), 0u);
}

}  // namespace
}  // namespace amaze
