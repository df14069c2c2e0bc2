#include <algorithm>
#include <limits>

#include <gtest/gtest.h>

#include "amaze/trainer.hpp"
#include "test_util.hpp"

namespace amaze {
namespace {

DiscreteObservation obs(std::array<float, 8> v) { return DiscreteObservation{v}; }

TEST(TabularQLearn, FullRateNoDiscountStoresTheReward) {
  TabularQ q({1.0, 0.0, 0});
  const auto s = obs({1, 0, 1, 1, 0, 0, 0, 0});
  const auto n = obs({1, 0.5f, 0, 1, 0, 0, 0, 0});
  q.values(n).setConstant(7.0);
  q.learn({s, Direction::North, -1.25, n, false});
  EXPECT_EQ((*q.find(s))[index(Direction::North)], -1.25);
}

TEST(TabularQLearn, DoneIgnoresTheBootstrap) {
  TabularQ q({1.0, 0.9, 0});
  const auto s = obs({0.5f, 0, 1, 1, 0, 0, 0, 0});
  const auto n = obs({1, 1, 1, 0.5f, 0, 0, 0, 0});
  q.values(n).setConstant(100.0);
  q.learn({s, Direction::North, 18.0, n, true});
  EXPECT_EQ((*q.find(s))[index(Direction::North)], 18.0);
}

TEST(TabularQLearn, ThreeTransitionsByHand) {
  TabularQ q({0.5, 0.9, 0});
  const auto a = obs({0, 1, 1, 1, 0, 0, 0, 0});
  const auto b = obs({1, 0, 0.5f, 1, 0, 0, 0, 0});
  q.learn({a, Direction::East, 1.0, b, false});   // 0.5 * 1
  q.learn({b, Direction::North, 2.0, a, false});  // 0.5 * (2 + 0.9 * 0.5)
  q.learn({a, Direction::East, 0.0, b, false});   // 0.5 + 0.5 * (0.9 * 1.225 - 0.5)
  EXPECT_DOUBLE_EQ((*q.find(b))[index(Direction::North)], 1.225);
  EXPECT_DOUBLE_EQ((*q.find(a))[index(Direction::East)], 0.80125);
  EXPECT_EQ(q.size(), 2u);
}

TEST(TabularQ, GreedyTiesGoToTheFirstDirection) {
  TabularQ q;
  const auto s = obs({0, 0, 0.5f, 1, 0, 0, 0, 0});
  EXPECT_EQ(q.greedy(s), Direction::East);
  q.values(s) << 0, 2, 2, 1;
  EXPECT_EQ(q.greedy(s), Direction::North);
}

TEST(TabularQ, OracleMatchesTheRuleEverywhere) {
  const TabularQ oracle = TabularQ::oracle();
  for (const auto& in : enumerate_discrete_inputs()) EXPECT_TRUE(in.accepts(oracle.greedy(in.observation)));
}

TEST(TabularQ, SnapshotRestoreIsLossless) {
  const Maze m = generate(decode_descriptor("M3_8x8_C1_t.3_T.5"));
  TabularQ q({0.9, 0.4, 11});
  train_direct(q, m, m, 40'000, {.eval_interval = 40'000});
  q.set_exploration(0.3);
  const std::string bytes = q.snapshot();
  EXPECT_EQ(bytes.substr(0, 5), "AMZQ1");

  TabularQ r;
  r.restore(bytes);
  EXPECT_EQ(r.snapshot(), bytes);
  EXPECT_EQ(r.size(), q.size());
  for (const auto& in : enumerate_discrete_inputs()) EXPECT_EQ(r.greedy(in.observation), q.greedy(in.observation));
  // Exploration state comes back too.
  for (const auto& in : enumerate_discrete_inputs()) EXPECT_EQ(r.act(in.observation), q.act(in.observation));

  auto loaded = load_learner(bytes);
  EXPECT_EQ(loaded->snapshot(), bytes);
  EXPECT_EQ(loaded->describe(), q.describe());
}

TEST(TabularQ, RestoreRejectsDamagedSnapshots) {
  TabularQ q;
  q.values(obs({0, 1, 1, 0.5f, 0, 0, 0, 0})) << 1, 2, 3, 4;
  const std::string bytes = q.snapshot();
  TabularQ r;
  EXPECT_THROW(r.restore("AMZQ2" + bytes.substr(5)), InvalidArgument);
  EXPECT_THROW(r.restore(bytes.substr(0, bytes.size() - 3)), InvalidArgument);
  EXPECT_THROW(r.restore(bytes + "x"), InvalidArgument);
  EXPECT_EQ(r.size(), 0u);
  EXPECT_THROW(load_learner("nope"), InvalidArgument);
}

TEST(MakeLearner, KindsAndValidation) {
  EXPECT_EQ(make_learner({{"kind", "tabular-q"}, {"alpha", 0.2}})->describe()["alpha"], 0.2);
  EXPECT_NO_THROW(make_learner({{"kind", "oracle"}}));
  EXPECT_THROW(make_learner({{"kind", "ppo"}}), InvalidArgument);
  EXPECT_THROW(make_learner({{"kind", "tabular-q"}, {"gamma", 2.0}}), InvalidArgument);
}

TEST(TrainDirect, OneStepBudget) {
  const Maze m = generate(decode_descriptor("M0_5x5_C1"));
  TabularQ q;
  const TrainingRun run = train_direct(q, m, m, 1);
  ASSERT_EQ(run.stages.size(), 1u);
  EXPECT_EQ(run.stages[0].consumed, 1);
  EXPECT_FALSE(run.stages[0].early_stopped);
  EXPECT_EQ(run.consumed(), 1);
  EXPECT_THROW(train_direct(q, m, m, 0), InvalidArgument);
}

TEST(TrainDirect, OracleStopsAtTheFirstEvaluation) {
  const Maze m = generate(decode_descriptor("M0_10x10_C1"));
  TabularQ oracle = TabularQ::oracle();
  const TrainingRun run = train_direct(oracle, m, m, 3'000'000);
  EXPECT_TRUE(run.stages[0].early_stopped);
  EXPECT_EQ(run.stages[0].consumed, 10'000);
  ASSERT_EQ(run.evaluations.size(), 1u);
  EXPECT_TRUE(run.evaluations[0].optimal);
}

TEST(TrainDirect, TabularQSolvesASmallMazeDeterministically) {
  const Maze m = generate(decode_descriptor("M0_6x6_C1"));
  TabularQ a, b;
  const TrainingRun ra = train_direct(a, m, m, 1'000'000);
  const TrainingRun rb = train_direct(b, m, m, 1'000'000);
  EXPECT_TRUE(ra.stages[0].early_stopped);
  EXPECT_TRUE(ra.evaluations.back().optimal);
  EXPECT_EQ(ra, rb);
  EXPECT_EQ(training_run_from_json(to_json(ra)).stages, ra.stages);
}

TEST(Interpolate, WidthScheduleFiveToTwenty) {
  MazeSpec initial = decode_descriptor("M0_5x5_U");
  MazeSpec final_spec = decode_descriptor("M0_20x20_C1_l.25_L.25_t.25_T.5");
  const auto specs = interpolate_specs(initial, final_spec, 10);
  ASSERT_EQ(specs.size(), 10u);
  const std::array<int, 10> widths{5, 7, 8, 10, 12, 13, 15, 17, 18, 20};
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(specs[i].width, widths[i]);
    EXPECT_EQ(specs[i].height, widths[i]);
    EXPECT_NEAR(specs[i].p_lure, 0.25 * i / 9.0, 1e-12);
    EXPECT_NO_THROW(validate(specs[i]));
  }
  EXPECT_EQ(specs.front(), initial);
  EXPECT_EQ(specs.back(), final_spec);
  EXPECT_TRUE(specs[0].unicursive);
  EXPECT_FALSE(specs[1].unicursive);
}

TEST(Interpolate, EdgeCases) {
  const MazeSpec a = decode_descriptor("M3_5x5_C1");
  const MazeSpec b = decode_descriptor("M9_9x7_C1_t.5_T.5");
  EXPECT_EQ(interpolate_specs(a, b, 2), (std::vector<MazeSpec>{a, b}));
  for (const auto& s : interpolate_specs(a, a, 6)) {
    EXPECT_EQ(s.width, a.width);
    EXPECT_EQ(classify(s), classify(a));
  }
  EXPECT_THROW(interpolate_specs(a, b, 1), InvalidArgument);
}

/// Greedy policy is the local rule once it has learned enough during the
/// current stage (counted from the last reseed); East before that.
class ScheduledLearner final : public PolicyLearner {
 public:
  explicit ScheduledLearner(std::vector<std::int64_t> needed) : needed_(std::move(needed)) {}
  Direction act(const DiscreteObservation& o) override { return greedy(o); }
  Direction greedy(const DiscreteObservation& o) const override {
    const auto need = stage_ >= 1 && stage_ <= static_cast<int>(needed_.size()) ? needed_[stage_ - 1]
                                                                                : std::numeric_limits<std::int64_t>::max();
    return learned_ >= need ? rule_action(o) : Direction::East;
  }
  void learn(const Transition&) override { ++learned_; }
  void set_exploration(double) override {}
  void reseed(std::uint64_t) override {
    ++stage_;
    learned_ = 0;
  }
  std::string snapshot() const override { return "scheduled"; }
  void restore(const std::string&) override {}
  std::unique_ptr<PolicyLearner> clone() const override { return std::make_unique<ScheduledLearner>(*this); }
  nlohmann::json describe() const override { return {{"kind", "scheduled"}}; }

 private:
  std::vector<std::int64_t> needed_;
  int stage_ = 0;
  std::int64_t learned_ = 0;
};

TEST(TrainInterpolation, EarlyStopTransfersTheRemainder) {
  const auto specs = interpolate_specs(decode_descriptor("M0_5x5_U"), decode_descriptor("M0_12x12_C1"), 10);
  const Maze eval = generate(specs.back());
  const std::int64_t never = std::numeric_limits<std::int64_t>::max();
  ScheduledLearner learner({100'000, never, never, never, never, never, never, never, never, never});
  const TrainingRun run = train_interpolation(learner, specs, eval, 3'000'000);
  ASSERT_EQ(run.stages.size(), 10u);
  EXPECT_EQ(run.stages[0].allotted, 300'000);
  EXPECT_EQ(run.stages[0].consumed, 100'000);
  EXPECT_TRUE(run.stages[0].early_stopped);
  for (int i = 1; i < 9; ++i) EXPECT_EQ(run.stages[i].allotted, 300'000 + 22'222);
  EXPECT_EQ(run.stages[9].allotted, 300'000 + 22'222 + 2);
  EXPECT_EQ(run.consumed(), 3'000'000);
}

TEST(TrainInterpolation, AllotmentsMatchAnIndependentLedger) {
  const auto specs = interpolate_specs(decode_descriptor("M0_5x5_U"), decode_descriptor("M0_12x12_C1"), 7);
  const Maze eval = generate(specs.back());
  const std::int64_t never = std::numeric_limits<std::int64_t>::max();
  const std::vector<std::int64_t> needed{30'000, never, 10'000, never, 50'000, never, never};
  const std::int64_t budget = 1'000'003;
  ScheduledLearner learner(needed);
  const TrainingRun run = train_interpolation(learner, specs, eval, budget, {.eval_interval = 10'000});

  // Redo the bookkeeping by hand, with the learner's convergence points.
  std::vector<std::int64_t> allot(7, budget / 7);
  allot[6] += budget % 7;
  for (int i = 0; i < 7; ++i) {
    ASSERT_EQ(run.stages[i].allotted, allot[i]) << i;
    const bool stops = needed[i] < allot[i];
    ASSERT_EQ(run.stages[i].early_stopped, stops) << i;
    const std::int64_t used = stops ? needed[i] : allot[i];
    ASSERT_EQ(run.stages[i].consumed, used) << i;
    if (stops && i < 6) {
      const std::int64_t spare = allot[i] - used;
      for (int j = i + 1; j < 7; ++j) allot[j] += spare / (6 - i);
      allot[6] += spare % (6 - i);
    }
  }
  EXPECT_EQ(run.consumed(), budget);
}

TEST(TrainInterpolation, NoEarlyStopUsesEqualShares) {
  const auto specs = interpolate_specs(decode_descriptor("M0_5x5_U"), decode_descriptor("M0_8x8_C1"), 4);
  ScheduledLearner learner({});
  const TrainingRun run = train_interpolation(learner, specs, generate(specs.back()), 40'000);
  for (const auto& s : run.stages) {
    EXPECT_EQ(s.consumed, 10'000);
    EXPECT_FALSE(s.early_stopped);
  }
}

TEST(TrainInterpolation, OracleStopsEveryStage) {
  const auto specs = interpolate_specs(decode_descriptor("M0_5x5_U"), decode_descriptor("M0_20x20_C1"), 10);
  TabularQ oracle = TabularQ::oracle();
  const TrainingRun run = train_interpolation(oracle, specs, generate(specs.back()), 3'000'000);
  for (const auto& s : run.stages) EXPECT_TRUE(s.early_stopped);
  EXPECT_LT(run.consumed(), 3'000'000 / 10);
}

// ---------------------------------------------------------------------------

EdhucatConfig small_config(int k, int s, std::int64_t cap) {
  EdhucatConfig c;
  c.candidates = k;
  c.stages = s;
  c.budget = cap * k * s;
  c.initial = decode_descriptor("M0_5x5_U");
  c.target = decode_descriptor("M0_10x10_C1");
  c.training.eval_interval = std::min<std::int64_t>(cap, 10'000);
  return c;
}

ScriptedDecisions same_mazes(int k, int s, const std::string& descriptor) {
  std::vector<DecisionInput> d;
  for (int i = 1; i < s; ++i) d.push_back({0, std::vector<MazeSpec>(k, decode_descriptor(descriptor)), ""});
  d.push_back({0, {}, ""});
  return ScriptedDecisions(std::move(d));
}

TEST(Edhucat, CountsStagesAndDecisions) {
  const EdhucatConfig c = small_config(3, 10, 1'000);
  EXPECT_EQ(c.stage_cap(), 1'000);
  auto source = same_mazes(3, 10, "M1_6x6_C1");
  std::vector<Decision> log;
  const TrainingRun run = edhucat_run(c, source, logical_clock(), &log);
  EXPECT_EQ(run.stages.size(), 1u + 9u * 3u);
  ASSERT_EQ(log.size(), 10u);
  EXPECT_EQ(std::ranges::count_if(log, [](const Decision& d) { return d.kind == DecisionKind::SelectGenerate; }), 9);
  EXPECT_EQ(log.back().kind, DecisionKind::Select);
  EXPECT_TRUE(verify_chain(log));
  EXPECT_LE(run.consumed(), c.budget);
  for (const auto& s : run.stages) EXPECT_LE(s.consumed, 1'000);
}

TEST(Edhucat, PaperDefaultsCapEachStageAtOneHundredThousand) {
  EdhucatConfig c;
  EXPECT_EQ(c.stage_cap(), 100'000);
}

TEST(Edhucat, SingleCandidateReducesToInterpolation) {
  const auto specs = interpolate_specs(decode_descriptor("M0_5x5_U"), decode_descriptor("M0_10x10_C1"), 6);
  const std::int64_t cap = 20'000;
  EdhucatConfig c;
  c.candidates = 1;
  c.stages = 6;
  c.budget = cap * 6;
  c.initial = specs[0];
  std::vector<DecisionInput> script;
  for (int i = 1; i < 6; ++i) script.push_back({0, {specs[i]}, ""});
  script.push_back({0, {}, ""});
  ScriptedDecisions source(script);
  const TrainingRun steered = edhucat_run(c, source);

  TabularQ learner;
  const TrainingRun staged = train_interpolation(learner, specs, generate(specs.back()), c.budget, {}, false);
  EXPECT_EQ(steered.stages, staged.stages);
  EXPECT_EQ(steered.evaluations, staged.evaluations);
  EXPECT_EQ(steered.final_snapshot, staged.final_snapshot);
}

TEST(Edhucat, ScriptedLedgerGolden) {
  const EdhucatConfig c = small_config(3, 4, 2'000);
  auto source = same_mazes(3, 4, "M1_6x6_C1_l.2_L.25");
  std::vector<Decision> log;
  const TrainingRun run = edhucat_run(c, source, logical_clock(), &log);
  std::string text = to_json(run).dump(1) + "\n";
  for (const auto& d : log) text += to_json(d).dump() + "\n";
  test::expect_golden("edhucat_ledger.txt", text);
}

TEST(Edhucat, ConfigValidation) {
  EdhucatConfig c = small_config(1, 2, 10);
  EXPECT_NO_THROW(validate(c));
  auto field = [](EdhucatConfig cfg) -> std::string {
    try {
      validate(cfg);
    } catch (const InvalidArgument& e) {
      return e.field();
    }
    return "";
  };
  c.stages = 1;
  EXPECT_EQ(field(c), "S");
  c = small_config(1, 2, 10);
  c.candidates = 0;
  EXPECT_EQ(field(c), "K");
  c = small_config(1, 2, 10);
  c.budget = 1;
  EXPECT_EQ(field(c), "budget");
  c = small_config(1, 2, 10);
  c.learner = {{"kind", "a2c"}};
  EXPECT_EQ(field(c), "learner.kind");
  EXPECT_THROW(edhucat_config_from_json({{"K", 3}}), InvalidArgument);
  const auto round = edhucat_config_from_json(to_json(small_config(3, 5, 100)));
  EXPECT_EQ(to_json(round), to_json(small_config(3, 5, 100)));
}

TEST(Edhucat, RejectedDecisionLeavesStateUnchanged) {
  EdhucatEngine engine(small_config(3, 3, 500));
  EXPECT_THROW(engine.apply_decision({0, {}, ""}, 0), std::logic_error);  // still training
  engine.run_stage();
  ASSERT_EQ(engine.phase(), EdhucatEngine::Phase::AwaitingDecision);
  const auto before = engine.run();
  const MazeSpec ok = decode_descriptor("M2_5x5_C1");
  EXPECT_THROW(engine.apply_decision({1, {ok, ok, ok}, ""}, 0), InvalidArgument);  // only one candidate yet
  EXPECT_THROW(engine.apply_decision({0, {ok}, ""}, 0), InvalidArgument);
  MazeSpec bad = ok;
  bad.width = 1;
  EXPECT_THROW(engine.apply_decision({0, {ok, bad, ok}, ""}, 0), InvalidArgument);
  EXPECT_EQ(engine.phase(), EdhucatEngine::Phase::AwaitingDecision);
  EXPECT_EQ(engine.stage(), 1);
  EXPECT_TRUE(engine.decisions().empty());
  EXPECT_EQ(engine.run(), before);
  engine.apply_decision({0, {ok, ok, ok}, "Careful"}, 0);
  EXPECT_EQ(engine.stage(), 2);
  EXPECT_EQ(engine.candidates().size(), 3u);
  EXPECT_EQ(engine.decisions()[0].annotation, "Careful");
}

TEST(Edhucat, SaveLoadContinuesIdentically) {
  const EdhucatConfig c = small_config(2, 4, 1'500);
  auto run_rest = [](EdhucatEngine& e, ScriptedDecisions& source, std::int64_t& t) {
    while (e.phase() != EdhucatEngine::Phase::Finished) {
      if (e.phase() == EdhucatEngine::Phase::Training)
        e.run_stage();
      else
        e.apply_decision(source.decide(e.prompt()), t++);
    }
  };
  auto s1 = same_mazes(2, 4, "M4_6x6_C1");
  std::int64_t t1 = 0;
  EdhucatEngine straight(c);
  run_rest(straight, s1, t1);

  const auto dir = test::temp_dir("edhucat_save");
  auto s2 = same_mazes(2, 4, "M4_6x6_C1");
  std::int64_t t2 = 0;
  {
    EdhucatEngine first(c);
    first.run_stage();
    first.apply_decision(s2.decide(first.prompt()), t2++);
    first.run_stage();
    first.save(dir);
  }
  EdhucatEngine resumed = EdhucatEngine::load(dir);
  EXPECT_EQ(resumed.stage(), 2);
  run_rest(resumed, s2, t2);
  EXPECT_EQ(resumed.run(), straight.run());
  EXPECT_EQ(resumed.decisions(), straight.decisions());
}

TEST(Edhucat, TamperedLogIsDetected) {
  auto source = same_mazes(1, 4, "M4_5x5_C1");
  std::vector<Decision> log;
  edhucat_run(small_config(1, 4, 500), source, logical_clock(), &log);
  ASSERT_TRUE(verify_chain(log));
  for (std::size_t i = 0; i < log.size(); ++i) {
    auto copy = log;
    copy[i].annotation = "Risky";
    EXPECT_FALSE(verify_chain(copy)) << i;
  }
  auto dropped = log;
  dropped.erase(dropped.begin() + 1);
  EXPECT_FALSE(verify_chain(dropped));
  for (const auto& d : log) EXPECT_EQ(decision_from_json(to_json(d)), d);

  // A tampered engine.json refuses to load.
  const auto dir = test::temp_dir("edhucat_tamper");
  EdhucatEngine e(small_config(1, 3, 500));
  e.run_stage();
  e.apply_decision({0, {decode_descriptor("M4_5x5_C1")}, ""}, 0);
  e.save(dir);
  auto state = nlohmann::json::parse(read_file(dir / "engine.json"));
  state["decisions"][0]["selected"] = 0;
  state["decisions"][0]["timestamp"] = 99;
  write_file_atomic(dir / "engine.json", state.dump());
  EXPECT_THROW(EdhucatEngine::load(dir), std::runtime_error);
}

TEST(ScriptedDecisions, ParsesArraysAndLines) {
  const auto a = ScriptedDecisions::parse(R"([{"select": 1, "mazes": ["M1_5x5_C1"]}, {"selected": 0}])");
  EXPECT_EQ(a.remaining(), 2u);
  auto b = ScriptedDecisions::parse("{\"select\": 2, \"mazes\": [], \"annotation\": \"Moderate\"}\n\n{\"select\": 0}\n");
  EXPECT_EQ(b.remaining(), 2u);
  EXPECT_EQ(b.decide({}).annotation, "Moderate");
  b.decide({});
  EXPECT_THROW(b.decide({}), std::runtime_error);
  EXPECT_THROW(ScriptedDecisions::parse(R"([{"select": 0, "mazes": ["Mx"]}])"), InvalidArgument);
}

}  // namespace
}  // namespace amaze
