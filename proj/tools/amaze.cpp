#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "amaze/complexity.hpp"
#include "amaze/evaluate.hpp"
#include "amaze/session.hpp"
#include "amaze/trainer.hpp"

// After Eigen: <resolv.h> defines a `_res` macro.
#include <httplib.h>

namespace fs = std::filesystem;
using namespace amaze;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 3;

/// Flag-level problems found after parsing; reported as usage errors.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  int threads = 1;
  bool entropy = false;
};

std::uint64_t resolve_seed(const Globals& g, const CLI::Option* option, std::uint64_t value) {
  if (!g.entropy || option->count() > 0) return value;
  std::random_device device;
  const std::uint64_t seed = (static_cast<std::uint64_t>(device()) << 32) | device();
  std::cerr << "seed: " << seed << '\n';
  return seed;
}

MazeSpec parse_spec(const std::string& descriptor, const std::string& flag) {
  try {
    return decode_descriptor(descriptor);
  } catch (const InvalidArgument& e) {
    throw UsageError(flag + ": " + e.what());
  }
}

void write_output(const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, contents);
}

// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string descriptor;
  std::string out;
  int rotation = 0;
  int pgm = 0;
  bool svg = false;
};

int cmd_generate(const GenerateArgs& a) {
  if (a.rotation < 0 || a.rotation > 3) throw UsageError("--rotation: must lie in [0, 3]");
  if (a.pgm != 0 && a.pgm < kMinRasterResolution) throw UsageError("--pgm: resolution must be at least 8");
  const Maze maze = rotate(generate(parse_spec(a.descriptor, "descriptor")), a.rotation);
  const std::string json = to_json(maze).dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << json;
    if (a.svg) std::cout << render_svg(maze);
    return 0;
  }
  const fs::path dir(a.out);
  const std::string stem = encode_descriptor(maze.spec) + (a.rotation ? "_r" + std::to_string(a.rotation) : "");
  write_output(dir / (stem + ".json"), json);
  if (a.svg) write_output(dir / (stem + ".svg"), render_svg(maze));
  if (a.pgm) write_output(dir / (stem + ".pgm"), to_pgm(render_maze(maze, a.pgm)));
  std::cout << (dir / (stem + ".json")).string() << '\n';
  return 0;
}

struct MetricsArgs {
  std::string descriptor;
  bool sweep = false;
  int count = 1000;
  int size = 20;
  std::uint64_t seed = 0;
  CLI::Option* seed_option = nullptr;
  bool all_cells = false;
  std::string out;
};

int cmd_metrics(const MetricsArgs& a, const Globals& g) {
  if (!a.sweep) {
    if (a.descriptor.empty()) throw UsageError("metrics: a descriptor or --sweep is required");
    const Maze maze = generate(parse_spec(a.descriptor, "descriptor"));
    const auto population = a.all_cells ? StatePopulation::AllCells : StatePopulation::OnPath;
    const ComplexityReport report = analyze(maze, population);
    nlohmann::json j{{"descriptor", encode_descriptor(maze.spec)},
                     {"class", to_string(classify(maze.spec))},
                     {"surprisingness", report.surprisingness},
                     {"deceptiveness", report.deceptiveness},
                     {"path_length", maze.path_length()},
                     {"intersections", path_intersections(maze).size()},
                     {"distinct_inputs", report.histogram.size()}};
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  if (a.count < 1) throw UsageError("--count: must be at least 1");
  if (a.size < 2) throw UsageError("--size: must be at least 2");
  MazeSpec base;
  base.width = base.height = a.size;
  base.seed = resolve_seed(g, a.seed_option, a.seed);
  const auto rows = sweep(base, kMazeClasses, a.count, g.threads);
  if (!a.out.empty()) {
    write_output(fs::path(a.out) / "sweep.csv", to_csv(rows));
    write_output(fs::path(a.out) / "scatter.svg", render_scatter_svg(rows));
  }
  for (MazeClass cls : kMazeClasses) {
    std::vector<double> s, d;
    for (const auto& r : rows)
      if (r.maze_class == cls) {
        s.push_back(r.surprisingness);
        d.push_back(r.deceptiveness);
      }
    std::cout << to_string(cls) << ": median S " << box_stats(s).median << ", median D " << box_stats(d).median << '\n';
  }
  return 0;
}

struct TrainArgs {
  std::string regime = "direct";
  std::string maze;
  std::string eval_maze;
  std::string initial;
  std::string target;
  std::string decisions;
  std::string out;
  std::int64_t budget = 3'000'000;
  int stages = 10;
  int candidates = 3;
  bool no_transfer = false;
  bool resume = false;
  double alpha = TabularQConfig{}.alpha;
  double gamma = TabularQConfig{}.gamma;
  TrainingOptions options;
  std::uint64_t seed = 0;
  CLI::Option* seed_option = nullptr;
};

void print_run(const TrainingRun& run) {
  std::cout << "regime: " << to_string(run.regime) << "\nbudget: " << run.budget << "\nconsumed: " << run.consumed()
            << "\nstages: " << run.stages.size() << '\n';
  if (!run.evaluations.empty()) {
    const auto& e = run.evaluations.back();
    std::cout << "last evaluation: stage " << e.stage << " step " << e.step << " " << e.maze << " success "
              << e.success_rate << " return " << e.mean_normalized_return << (e.optimal ? " optimal" : "") << '\n';
  }
}

int cmd_train(TrainArgs a, const Globals& g) {
  const Regime regime = [&] {
    try {
      return regime_from_string(a.regime);
    } catch (const InvalidArgument& e) {
      throw UsageError(std::string("--regime: ") + e.what());
    }
  }();
  if (a.budget < 1) throw UsageError("--budget: must be at least 1");
  if (a.out.empty()) throw UsageError("--out is required");
  a.options.seed = resolve_seed(g, a.seed_option, a.seed);
  a.options.threads = g.threads;
  const nlohmann::json learner{{"kind", "tabular-q"}, {"alpha", a.alpha}, {"gamma", a.gamma}, {"seed", a.options.seed}};
  const fs::path out(a.out);

  if (regime == Regime::Edhucat) {
    std::unique_ptr<EdhucatEngine> engine;
    if (a.resume && fs::exists(out / "engine.json")) {
      engine = std::make_unique<EdhucatEngine>(EdhucatEngine::load(out));
    } else {
      if (a.initial.empty()) throw UsageError("--initial is required for edhucat");
      EdhucatConfig config;
      config.candidates = a.candidates;
      config.stages = a.stages;
      config.budget = a.budget;
      config.initial = parse_spec(a.initial, "--initial");
      if (!a.target.empty()) config.target = parse_spec(a.target, "--target");
      config.learner = learner;
      config.training = a.options;
      try {
        validate(config);
      } catch (const InvalidArgument& e) {
        throw UsageError(e.field() + ": " + e.what());
      }
      engine = std::make_unique<EdhucatEngine>(config);
      engine->save(out);
    }
    if (a.decisions.empty()) throw UsageError("--decisions is required for edhucat");
    ScriptedDecisions script = ScriptedDecisions::parse(read_file(a.decisions));
    // A resumed engine has already consumed the logged decisions.
    for (const auto& d : engine->decisions())
      if (d.kind != DecisionKind::Abort) script.decide({});
    while (engine->phase() != EdhucatEngine::Phase::Finished) {
      if (engine->phase() == EdhucatEngine::Phase::Training)
        engine->run_stage();
      else
        engine->apply_decision(script.decide(engine->prompt()), static_cast<std::int64_t>(engine->decisions().size()));
      engine->save(out);
    }
    print_run(engine->run());
    return 0;
  }

  const Maze train_maze = generate(parse_spec(a.maze.empty() ? a.target : a.maze, "--maze"));
  const Maze eval_maze = a.eval_maze.empty() ? train_maze : generate(parse_spec(a.eval_maze, "--eval-maze"));
  auto q = make_learner(learner);
  TrainingRun run;
  if (regime == Regime::Direct) {
    run = train_direct(*q, train_maze, eval_maze, a.budget, a.options);
  } else {
    if (a.initial.empty()) throw UsageError("--initial is required for interpolation");
    std::vector<MazeSpec> specs;
    try {
      specs = interpolate_specs(parse_spec(a.initial, "--initial"), train_maze.spec, a.stages);
    } catch (const InvalidArgument& e) {
      throw UsageError(e.field() + ": " + e.what());
    }
    run = train_interpolation(*q, specs, eval_maze, a.budget, a.options, !a.no_transfer);
  }
  write_training_run(out, run);
  print_run(run);
  return 0;
}

struct EvalArgs {
  std::string snapshot;
  std::string policy;
  std::string mazes;
  std::uint64_t suite_seed = 0;
  CLI::Option* seed_option = nullptr;
  int sample_size = 10'000;
  int size = 20;
  std::string out;
};

int cmd_eval(const EvalArgs& a, const Globals& g) {
  if (a.snapshot.empty() == a.policy.empty()) throw UsageError("eval: exactly one of --snapshot or --policy is required");
  if (!a.policy.empty() && a.policy != "path" && a.policy != "rule" && a.policy != "random" && a.policy != "east")
    throw UsageError("--policy: expected path, rule, random or east");
  if (a.sample_size < 1) throw UsageError("--sample-size: must be at least 1");

  std::shared_ptr<PolicyLearner> learner;
  if (!a.snapshot.empty()) learner = load_learner(read_file(a.snapshot));
  const std::string kind = a.policy;
  const PolicyFactory factory = [&](const Maze& maze) -> std::unique_ptr<Policy> {
    if (learner) return std::make_unique<GreedyPolicy>(*learner);
    if (kind == "path") return std::make_unique<PathFollower>(maze);
    if (kind == "rule") return std::make_unique<RulePolicy>();
    if (kind == "random") return std::make_unique<RandomPolicy>(stream_id(0, maze.spec.seed, maze.rotation));
    return std::make_unique<ConstantPolicy>(Direction::East);
  };

  std::vector<Maze> mazes;
  if (!a.mazes.empty()) {
    std::istringstream list(a.mazes);
    for (std::string d; std::getline(list, d, ';');) mazes.push_back(generate(parse_spec(d, "--mazes")));
  } else {
    SuiteOptions options;
    options.sample_size = a.sample_size;
    options.size = a.size;
    options.threads = g.threads;
    for (auto& m : build_generalization_suite(resolve_seed(g, a.seed_option, a.suite_seed), options))
      mazes.push_back(std::move(m.maze));
  }
  const SuiteResult suite = evaluate_navigation(factory, mazes, g.threads);

  AuditResult audit;
  if (kind != "path") {
    // Maze-specific policies have no meaning on isolated inputs.
    const Maze dummy = generate(MazeSpec{});
    auto policy = factory(dummy);
    audit = input_audit(*policy);
  }
  if (!a.out.empty()) {
    write_output(fs::path(a.out) / "suite.csv", to_csv(suite));
    if (kind != "path") write_output(fs::path(a.out) / "audit.csv", to_csv(audit));
  }
  std::cout << summary(suite);
  if (kind != "path") std::cout << summary(audit);
  return 0;
}

struct BenchArgs {
  std::string descriptor;
  std::int64_t steps = 1'000'000;
  std::uint64_t seed = 0;
  CLI::Option* seed_option = nullptr;
};

int cmd_bench(const BenchArgs& a, const Globals& g) {
  if (a.steps < 1) throw UsageError("--steps: must be at least 1");
  const Maze maze = generate(parse_spec(a.descriptor, "descriptor"));
  const RewardParams params = RewardParams::raw(maze.path_length());
  Pcg32 rng(resolve_seed(g, a.seed_option, a.seed));
  EnvState env = reset(maze, params);
  double total = 0;
  std::int64_t episodes = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t i = 0; i < a.steps; ++i) {
    const StepResult s = step(env, direction_from_index(static_cast<int>(rng.below(4))));
    total += s.reward;
    if (s.done) {
      env = reset(maze, params);
      ++episodes;
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const nlohmann::json report{{"descriptor", encode_descriptor(maze.spec)},
                              {"steps", a.steps},
                              {"episodes", episodes},
                              {"seconds", seconds},
                              {"steps_per_second", a.steps / seconds},
                              {"ms_per_1000_steps", 1e6 * seconds / a.steps},
                              {"checksum", total}};
  std::cout << report.dump(2) << '\n';
  return 0;
}

struct ServeArgs {
  std::string address = "127.0.0.1:8080";
  std::string state = "sessions";
  bool logical_clock = false;
};

std::pair<std::string, int> split_address(const std::string& address) {
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) throw UsageError("--address: expected host:port");
  try {
    return {address.substr(0, colon), std::stoi(address.substr(colon + 1))};
  } catch (const std::exception&) {
    throw UsageError("--address: bad port in '" + address + "'");
  }
}

httplib::Server* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
  const auto [host, port] = split_address(a.address);
  SessionManager manager(a.state, a.logical_clock ? Clock{} : system_clock());
  manager.resume_all();
  httplib::Server server;
  install_routes(server, manager);
  g_server = &server;
  std::signal(SIGINT, [](int) { g_server->stop(); });
  std::signal(SIGTERM, [](int) { g_server->stop(); });
  std::cerr << "listening on " << host << ':' << port << '\n';
  if (!server.listen(host, port)) throw std::runtime_error("cannot listen on " + a.address);
  manager.stop_all();
  return 0;
}

struct DriveArgs {
  std::string address = "127.0.0.1:8080";
  std::string config;
  std::string decisions;
};

int cmd_drive(const DriveArgs& a) {
  const auto [host, port] = split_address(a.address);
  const auto config = nlohmann::json::parse(read_file(a.config));
  ScriptedDecisions script = ScriptedDecisions::parse(read_file(a.decisions));
  std::cout << drive_over_http(host, port, config, script) << '\n';
  return 0;
}

struct PlotArgs {
  std::string kind = "suite";
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_plot(const PlotArgs& a) {
  std::vector<BoxGroup> groups;
  std::string label;
  if (a.kind == "suite") {
    // One box per maze, spread over the runs.
    label = "normalized return";
    for (const auto& path : a.inputs) {
      const SuiteResult r = suite_result_from_csv(read_file(path));
      for (std::size_t i = 0; i < r.rows.size(); ++i) {
        if (groups.size() <= i) groups.push_back({std::to_string(i + 1), {}});
        groups[i].values.push_back(r.rows[i].normalized_return);
      }
    }
  } else if (a.kind == "audit") {
    label = "correct input processing rate";
    for (InputClass c : kInputClasses) groups.push_back({std::string(to_string(c)), {}});
    groups.push_back({"overall", {}});
    for (const auto& path : a.inputs) {
      const AuditResult r = audit_result_from_csv(read_file(path));
      for (InputClass c : kInputClasses) groups[static_cast<int>(c)].values.push_back(r.rate(c));
      groups.back().values.push_back(r.overall());
    }
  } else {
    throw UsageError("--kind: expected suite or audit");
  }
  write_output(a.out, render_boxplot_svg(groups, label));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Maze navigation benchmark: generation, metrics, training and evaluation."};
  app.name("amaze");
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--threads", globals.threads, "Upper bound on worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--entropy", globals.entropy, "Draw seeds that were not given explicitly from the OS");

  GenerateArgs gen;
  auto* generate_cmd = app.add_subcommand("generate", "Write a maze as JSON, optionally with SVG/PGM renders");
  generate_cmd->add_option("descriptor", gen.descriptor, "Maze descriptor, e.g. M7_10x10_C1")->required();
  generate_cmd->add_option("--out", gen.out, "Output directory (default: JSON to stdout)");
  generate_cmd->add_option("--rotation", gen.rotation, "Counter-clockwise quarter turns");
  generate_cmd->add_flag("--svg", gen.svg, "Also render SVG");
  generate_cmd->add_option("--pgm", gen.pgm, "Also render a PGM with this per-cell resolution");

  MetricsArgs met;
  auto* metrics_cmd = app.add_subcommand("metrics", "Surprisingness/deceptiveness of a maze, or a class sweep");
  metrics_cmd->add_option("descriptor", met.descriptor, "Maze descriptor");
  metrics_cmd->add_flag("--sweep", met.sweep, "Sample every maze class instead");
  metrics_cmd->add_option("--count", met.count, "Mazes per class in a sweep");
  metrics_cmd->add_option("--size", met.size, "Side length of swept mazes");
  met.seed_option = metrics_cmd->add_option("--seed", met.seed, "First sweep seed");
  metrics_cmd->add_flag("--all-cells", met.all_cells, "Deceptiveness over every cell instead of the optimal path");
  metrics_cmd->add_option("--out", met.out, "Directory for sweep.csv and scatter.svg");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a tabular Q learner and write the run directory");
  train_cmd->add_option("--regime", tr.regime, "direct, interpolation or edhucat");
  train_cmd->add_option("--maze", tr.maze, "Training maze (final stage for interpolation)");
  train_cmd->add_option("--eval-maze", tr.eval_maze, "Maze deciding convergence (default: --maze)");
  train_cmd->add_option("--initial", tr.initial, "First-stage maze (interpolation, edhucat)");
  train_cmd->add_option("--target", tr.target, "Target maze monitored during edhucat");
  train_cmd->add_option("--decisions", tr.decisions, "Scripted decisions file (edhucat)");
  train_cmd->add_option("--budget", tr.budget, "Total step budget");
  train_cmd->add_option("--stages", tr.stages, "Number of stages (interpolation, edhucat)");
  train_cmd->add_option("-K,--candidates", tr.candidates, "Concurrent candidates per edhucat stage");
  train_cmd->add_flag("--no-transfer", tr.no_transfer, "Do not pass unused stage budget on");
  train_cmd->add_flag("--resume", tr.resume, "Continue an edhucat run found in --out");
  train_cmd->add_option("--alpha", tr.alpha, "Learning rate");
  train_cmd->add_option("--gamma", tr.gamma, "Discount");
  train_cmd->add_option("--eval-interval", tr.options.eval_interval, "Steps between evaluations");
  train_cmd->add_option("--epsilon-start", tr.options.epsilon_start, "Initial exploration rate");
  train_cmd->add_option("--epsilon-end", tr.options.epsilon_end, "Final exploration rate");
  train_cmd->add_option("--decay-fraction", tr.options.decay_fraction, "Fraction of a stage spent decaying epsilon");
  tr.seed_option = train_cmd->add_option("--seed", tr.seed, "Learner and exploration seed");
  train_cmd->add_option("--out", tr.out, "Run directory");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Generalization suite and input audit");
  eval_cmd->add_option("--snapshot", ev.snapshot, "Learner snapshot (.amzq) evaluated greedily");
  eval_cmd->add_option("--policy", ev.policy, "Built-in policy: path, rule, random or east");
  eval_cmd->add_option("--mazes", ev.mazes, "';'-separated descriptors instead of the suite");
  ev.seed_option = eval_cmd->add_option("--suite-seed", ev.suite_seed, "Base seed of the suite");
  eval_cmd->add_option("--sample-size", ev.sample_size, "Mazes sampled per suite column");
  eval_cmd->add_option("--size", ev.size, "Side length of suite mazes");
  eval_cmd->add_option("--out", ev.out, "Directory for suite.csv and audit.csv");

  BenchArgs be;
  auto* bench_cmd = app.add_subcommand("bench", "Random-action stepping throughput");
  bench_cmd->add_option("descriptor", be.descriptor, "Maze descriptor")->required();
  bench_cmd->add_option("--steps", be.steps, "Number of steps");
  be.seed_option = bench_cmd->add_option("--seed", be.seed, "Action stream seed");

  ServeArgs se;
  auto* serve_cmd = app.add_subcommand("serve", "Run the session service");
  serve_cmd->add_option("--address", se.address, "host:port to listen on");
  serve_cmd->add_option("--state", se.state, "Directory holding session state");
  serve_cmd->add_flag("--logical-clock", se.logical_clock, "Stamp decisions with their log index");

  DriveArgs dr;
  auto* drive_cmd = app.add_subcommand("drive", "Run a scripted session against a live service");
  drive_cmd->add_option("--address", dr.address, "Service host:port");
  drive_cmd->add_option("--config", dr.config, "Session config JSON file")->required();
  drive_cmd->add_option("--decisions", dr.decisions, "Scripted decisions file")->required();

  PlotArgs pl;
  auto* plot_cmd = app.add_subcommand("plot", "Box plots from accumulated suite or audit CSVs");
  plot_cmd->add_option("--kind", pl.kind, "suite or audit");
  plot_cmd->add_option("--out", pl.out, "SVG file")->required();
  plot_cmd->add_option("inputs", pl.inputs, "CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*generate_cmd) return cmd_generate(gen);
    if (*metrics_cmd) return cmd_metrics(met, globals);
    if (*train_cmd) return cmd_train(tr, globals);
    if (*eval_cmd) return cmd_eval(ev, globals);
    if (*bench_cmd) return cmd_bench(be, globals);
    if (*serve_cmd) return cmd_serve(se);
    if (*drive_cmd) return cmd_drive(dr);
    if (*plot_cmd) return cmd_plot(pl);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
