#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aisac/experiment.hpp"

using namespace aisac;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

// Small always-feasible setup so end-to-end runs stay in the millisecond
// range: 3x3 grid, three antennas, two UEs, one sensing location.
ScenarioConfig tiny_scenario(int slots = 5) {
  ScenarioConfig cfg;
  cfg.area_width = 300.0;
  cfg.area_height = 300.0;
  cfg.grid_cols = 3;
  cfg.grid_rows = 3;
  cfg.antenna_count = 3;
  cfg.max_speed = std::hypot(100.0, 100.0);
  cfg.slot_len = 1.0;
  cfg.slot_count = slots;
  cfg.period = static_cast<double>(slots);
  cfg.start = Vec2{50.0, 150.0};
  cfg.finish = Vec2{250.0, 150.0};
  cfg.ue_count = 2;
  cfg.ue_positions = {Vec2{90.0, 90.0}, Vec2{210.0, 190.0}};
  cfg.sensing_positions = {Vec2{150.0, 40.0}};
  cfg.rcs = {cd(1.0, 0.0)};
  cfg.sinr_th_dl = 0.0;
  cfg.sinr_th_ul = 0.0;
  cfg.sinr_th_sens = 0.0;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("aisac_test_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int data_lines(const std::string& csv) {
  int n = -1;  // skip the header
  for (char c : csv)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("policy parsing and labels round-trip", "[experiment]") {
  REQUIRE(parse_policy("none").kind == SensingPolicySpec::Kind::none);
  REQUIRE(parse_policy("adaptive").kind == SensingPolicySpec::Kind::adaptive);
  REQUIRE(parse_policy("every-slot").kind == SensingPolicySpec::Kind::every_slot);
  SensingPolicySpec f = parse_policy("fixed:3");
  REQUIRE(f.kind == SensingPolicySpec::Kind::fixed);
  REQUIRE(f.interval == 3);
  for (const std::string text : {"none", "adaptive", "fixed:3", "every-slot"})
    REQUIRE(policy_label(parse_policy(text)) == text);

  REQUIRE_THROWS_AS(parse_policy("sometimes"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_policy("fixed:zero"), std::invalid_argument);
  REQUIRE_THROWS_AS(parse_policy("fixed:0"), std::invalid_argument);

  REQUIRE(policy_from_index(1).kind == SensingPolicySpec::Kind::none);
  REQUIRE(policy_from_index(2).kind == SensingPolicySpec::Kind::adaptive);
  REQUIRE(policy_from_index(3).kind == SensingPolicySpec::Kind::fixed);
  REQUIRE(policy_from_index(3).interval == 2);
  REQUIRE(policy_from_index(4).kind == SensingPolicySpec::Kind::every_slot);
  REQUIRE_THROWS_AS(policy_from_index(0), std::invalid_argument);
  REQUIRE_THROWS_AS(policy_from_index(5), std::invalid_argument);

  REQUIRE(parse_trajectory_mode("opt-outer") == TrajectoryMode::opt_outer);
  REQUIRE(parse_trajectory_mode("opt-greedy") == TrajectoryMode::opt_greedy);
  REQUIRE(parse_trajectory_mode("fixed-straight") == TrajectoryMode::fixed_straight);
  REQUIRE_THROWS_AS(parse_trajectory_mode("loiter"), std::invalid_argument);
  REQUIRE(parse_beamforming_mode("optimized") == BeamformingMode::optimized);
  REQUIRE(parse_beamforming_mode("equal-power") == BeamformingMode::equal_power);
  REQUIRE(parse_beamforming_mode("random") == BeamformingMode::random_direction);
  REQUIRE_THROWS_AS(parse_beamforming_mode("mrt"), std::invalid_argument);
}

TEST_CASE("policy schedules realize the documented pulse patterns", "[experiment]") {
  ScenarioConfig cfg = default_scenario();

  SensingSchedule none = make_policy_schedule(parse_policy("none"), cfg);
  REQUIRE(none.slot_count() == 20);
  for (int n = 1; n <= 20; ++n) REQUIRE_FALSE(none.sensing_at(n));

  SensingSchedule every = make_policy_schedule(parse_policy("every-slot"), cfg);
  for (int n = 1; n <= 20; ++n) REQUIRE(every.sensing_at(n));

  SensingSchedule two = make_policy_schedule(parse_policy("fixed:2"), cfg);
  for (int n = 1; n <= 20; ++n) REQUIRE(two.sensing_at(n) == (n % 2 == 1));

  // A quiet trace keeps every variation ratio at zero, so the adaptive
  // interval doubles each pulse until it pins at the cap.
  SensingSchedule adapt = make_policy_schedule(parse_policy("adaptive"), cfg);
  REQUIRE(adapt.sensing_slots == std::vector<int>{1, 2, 4, 8, 16});
  REQUIRE(adapt.intervals == std::vector<int>{1, 2, 4, 8, 8});

  // An explicit trace is forwarded to the mechanism.
  std::vector<double> noisy(20, 1.0);
  for (std::size_t i = 1; i < noisy.size(); i += 2) noisy[i] = 2.0;
  SensingSchedule driven = make_policy_schedule(parse_policy("adaptive"), cfg, noisy);
  REQUIRE(driven.intervals.front() == 1);
  REQUIRE(driven.sensing_slots.size() > adapt.sensing_slots.size());
}

TEST_CASE("reference scenarios carry the documented constants", "[experiment]") {
  ScenarioConfig cfg = default_scenario();
  REQUIRE(cfg.area_width == 1000.0);
  REQUIRE(cfg.area_height == 1000.0);
  REQUIRE(cfg.grid_cols == 20);
  REQUIRE(cfg.grid_rows == 20);
  REQUIRE(cfg.antenna_count == 12);
  REQUIRE(cfg.ue_count == 6);
  REQUIRE(cfg.flight_height == 100.0);
  REQUIRE(cfg.carrier_frequency == 3e9);
  REQUIRE(cfg.ref_channel_gain == Approx(1e-4).epsilon(1e-12));
  REQUIRE(cfg.ue_tx_power == Approx(dbm_to_watt(25.0)).epsilon(1e-12));
  REQUIRE(cfg.uav_max_power == Approx(dbm_to_watt(37.0)).epsilon(1e-12));
  REQUIRE(cfg.noise_dl == Approx(1e-14).epsilon(1e-12));
  REQUIRE(cfg.noise_ul == Approx(1e-14).epsilon(1e-12));
  REQUIRE(cfg.noise_sens == Approx(1e-14).epsilon(1e-12));
  REQUIRE(cfg.sinr_th_dl == Approx(db_to_linear(0.3)).epsilon(1e-12));
  REQUIRE(cfg.sinr_th_ul == Approx(db_to_linear(0.3)).epsilon(1e-12));
  REQUIRE(cfg.sinr_th_sens == Approx(db_to_linear(3.0)).epsilon(1e-12));
  REQUIRE(cfg.processing_gain == 10.0);
  REQUIRE(cfg.period == 20.0);
  REQUIRE(cfg.slot_count == 20);
  REQUIRE(cfg.slot_len == 1.0);
  REQUIRE(cfg.max_speed == Approx(50.0 * std::sqrt(2.0)).epsilon(1e-12));
  REQUIRE(cfg.start.x == 25.0);
  REQUIRE(cfg.start.y == 525.0);
  REQUIRE(cfg.finish.x == 975.0);
  REQUIRE(cfg.finish.y == 525.0);
  REQUIRE(cfg.sensing_positions.size() == 3);
  REQUIRE(cfg.sensing_positions[0].x == 375.0);
  REQUIRE(cfg.sensing_positions[0].y == 175.0);
  REQUIRE(cfg.sensing_positions[1].x == 375.0);
  REQUIRE(cfg.sensing_positions[1].y == 725.0);
  REQUIRE(cfg.sensing_positions[2].x == 775.0);
  REQUIRE(cfg.sensing_positions[2].y == 275.0);
  REQUIRE(cfg.rcs.size() == 3);
  REQUIRE_NOTHROW(validate_config(cfg));

  ScenarioConfig desk = desk_scenario();
  REQUIRE(desk.grid_cols == 8);
  REQUIRE(desk.grid_rows == 8);
  REQUIRE(desk.antenna_count == 4);
  REQUIRE(desk.ue_count == 3);
  REQUIRE(desk.slot_count == 10);
  REQUIRE(desk.sensing_positions.size() == 2);
  REQUIRE(desk.sinr_th_dl == Approx(db_to_linear(-6.0)));
  REQUIRE(desk.sinr_th_ul == Approx(db_to_linear(-6.0)));
  REQUIRE(desk.sinr_th_sens == Approx(db_to_linear(3.0)));
  REQUIRE_NOTHROW(validate_config(desk));
  GridMap grid = build_grid(desk);
  REQUIRE_NOTHROW(grid.cell_at(desk.start));
  REQUIRE_NOTHROW(grid.cell_at(desk.finish));
}

TEST_CASE("experiment specs survive a config round-trip", "[experiment]") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario(6);
  spec.scenario.sinr_th_dl = db_to_linear(0.3);
  spec.scenario.sinr_th_ul = db_to_linear(0.4);
  spec.scenario.sinr_th_sens = db_to_linear(3.0);
  spec.scenario.overlap_fraction = 0.25;
  spec.scenario.rng_seed = 77;
  spec.policy = parse_policy("fixed:3");
  spec.trajectory = TrajectoryMode::opt_greedy;
  spec.beamforming = BeamformingMode::equal_power;
  spec.sweep_axis = "antennas";
  spec.sweep_values = {2.0, 4.0, 8.0};
  spec.out_dir = "results";
  spec.seed = 99;
  spec.dump_beamformers = true;
  spec.sensing_trace = {1.0, 1.5, 1.5};

  nlohmann::json j = spec_to_json(spec);
  ExperimentSpec back = spec_from_json(j);

  const ScenarioConfig& a = spec.scenario;
  const ScenarioConfig& b = back.scenario;
  REQUIRE(b.area_width == Approx(a.area_width).epsilon(1e-12));
  REQUIRE(b.grid_cols == a.grid_cols);
  REQUIRE(b.grid_rows == a.grid_rows);
  REQUIRE(b.antenna_count == a.antenna_count);
  REQUIRE(b.ref_channel_gain == Approx(a.ref_channel_gain).epsilon(1e-12));
  REQUIRE(b.ue_tx_power == Approx(a.ue_tx_power).epsilon(1e-12));
  REQUIRE(b.uav_max_power == Approx(a.uav_max_power).epsilon(1e-12));
  REQUIRE(b.noise_dl == Approx(a.noise_dl).epsilon(1e-12));
  REQUIRE(b.noise_ul == Approx(a.noise_ul).epsilon(1e-12));
  REQUIRE(b.noise_sens == Approx(a.noise_sens).epsilon(1e-12));
  REQUIRE(b.sinr_th_dl == Approx(a.sinr_th_dl).epsilon(1e-12));
  REQUIRE(b.sinr_th_ul == Approx(a.sinr_th_ul).epsilon(1e-12));
  REQUIRE(b.sinr_th_sens == Approx(a.sinr_th_sens).epsilon(1e-12));
  REQUIRE(b.overlap_fraction == Approx(a.overlap_fraction).epsilon(1e-12));
  REQUIRE(b.slot_count == a.slot_count);
  REQUIRE(b.period == Approx(a.period).epsilon(1e-12));
  REQUIRE(b.max_speed == Approx(a.max_speed).epsilon(1e-12));
  REQUIRE(b.start.x == Approx(a.start.x).epsilon(1e-12));
  REQUIRE(b.finish.x == Approx(a.finish.x).epsilon(1e-12));
  REQUIRE(b.rng_seed == a.rng_seed);
  REQUIRE(b.ue_positions.size() == a.ue_positions.size());
  for (std::size_t i = 0; i < a.ue_positions.size(); ++i) {
    REQUIRE(b.ue_positions[i].x == Approx(a.ue_positions[i].x).epsilon(1e-12));
    REQUIRE(b.ue_positions[i].y == Approx(a.ue_positions[i].y).epsilon(1e-12));
  }
  REQUIRE(b.sensing_positions.size() == a.sensing_positions.size());
  REQUIRE(b.rcs.size() == a.rcs.size());
  REQUIRE(b.rcs[0].real() == Approx(a.rcs[0].real()).epsilon(1e-12));

  REQUIRE(policy_label(back.policy) == "fixed:3");
  REQUIRE(back.trajectory == TrajectoryMode::opt_greedy);
  REQUIRE(back.beamforming == BeamformingMode::equal_power);
  REQUIRE(back.sweep_axis == "antennas");
  REQUIRE(back.sweep_values == spec.sweep_values);
  REQUIRE(back.out_dir == "results");
  REQUIRE(back.seed == 99);
  REQUIRE(back.dump_beamformers);
  REQUIRE(back.sensing_trace == spec.sensing_trace);
}

TEST_CASE("config files reject unknown keys and bad shapes", "[experiment]") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario();
  nlohmann::json j = spec_to_json(spec);

  nlohmann::json top = j;
  top["extra"] = 1;
  REQUIRE_THROWS_WITH(spec_from_json(top), Catch::Matchers::ContainsSubstring("extra"));

  nlohmann::json sc = j;
  sc["scenario"]["grid_size"] = 4;
  REQUIRE_THROWS_WITH(spec_from_json(sc), Catch::Matchers::ContainsSubstring("grid_size"));

  nlohmann::json ex = j;
  ex["experiment"]["threads"] = 2;
  REQUIRE_THROWS_WITH(spec_from_json(ex), Catch::Matchers::ContainsSubstring("threads"));

  nlohmann::json badpair = j;
  badpair["scenario"]["start"] = {1.0, 2.0, 3.0};
  REQUIRE_THROWS_AS(spec_from_json(badpair), std::invalid_argument);

  nlohmann::json badrcs = j;
  badrcs["scenario"]["rcs"] = {{1.0}};
  REQUIRE_THROWS_AS(spec_from_json(badrcs), std::invalid_argument);

  fs::path dir = fresh_dir("cfg");
  fs::path good = dir / "good.json";
  std::ofstream(good) << j.dump(2);
  ExperimentSpec loaded = load_spec(good.string());
  REQUIRE(loaded.scenario.grid_cols == 3);

  fs::path broken = dir / "broken.json";
  std::ofstream(broken) << "{ not json";
  REQUIRE_THROWS_AS(load_spec(broken.string()), std::runtime_error);
  REQUIRE_THROWS_AS(load_spec((dir / "missing.json").string()), std::runtime_error);
}

TEST_CASE("sweeps expand into validated per-point scenarios", "[experiment]") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario(5);

  SECTION("no sweep yields a single untouched point") {
    std::vector<SweepPoint> pts = expand_sweep(spec);
    REQUIRE(pts.size() == 1);
    REQUIRE(pts[0].scenario.slot_count == 5);
    REQUIRE(policy_label(pts[0].policy) == "adaptive");
  }

  SECTION("period sweep rescales the slot count") {
    spec.sweep_axis = "period";
    spec.sweep_values = {5.0, 10.0};
    std::vector<SweepPoint> pts = expand_sweep(spec);
    REQUIRE(pts.size() == 2);
    REQUIRE(pts[0].scenario.slot_count == 5);
    REQUIRE(pts[1].scenario.slot_count == 10);
    REQUIRE(pts[1].scenario.period == 10.0);
    spec.sweep_values = {5.5};
    REQUIRE_THROWS_AS(expand_sweep(spec), std::invalid_argument);
    spec.sweep_values = {-5.0};
    REQUIRE_THROWS_AS(expand_sweep(spec), std::invalid_argument);
  }

  SECTION("grid sweep rescales speed and re-snaps the endpoints") {
    spec.sweep_axis = "grid";
    spec.sweep_values = {4.0, 5.0};
    std::vector<SweepPoint> pts = expand_sweep(spec);
    for (const SweepPoint& pt : pts) {
      const ScenarioConfig& sc = pt.scenario;
      REQUIRE(sc.grid_cols == static_cast<int>(pt.axis_value));
      REQUIRE(sc.max_speed ==
              Approx(std::hypot(300.0 / pt.axis_value, 300.0 / pt.axis_value)).epsilon(1e-12));
      GridMap grid = build_grid(sc);
      REQUIRE_NOTHROW(grid.cell_at(sc.start));
      REQUIRE_NOTHROW(grid.cell_at(sc.finish));
      REQUIRE_NOTHROW(validate_config(const_cast<ScenarioConfig&>(sc)));
    }
    spec.sweep_values = {4.5};
    REQUIRE_THROWS_AS(expand_sweep(spec), std::invalid_argument);
  }

  SECTION("antenna and policy sweeps") {
    spec.sweep_axis = "antennas";
    spec.sweep_values = {2.0, 4.0};
    std::vector<SweepPoint> pts = expand_sweep(spec);
    REQUIRE(pts[0].scenario.antenna_count == 2);
    REQUIRE(pts[1].scenario.antenna_count == 4);

    spec.sweep_axis = "policy";
    spec.sweep_values = {1.0, 2.0, 3.0, 4.0};
    pts = expand_sweep(spec);
    REQUIRE(policy_label(pts[0].policy) == "none");
    REQUIRE(policy_label(pts[1].policy) == "adaptive");
    REQUIRE(policy_label(pts[2].policy) == "fixed:2");
    REQUIRE(policy_label(pts[3].policy) == "every-slot");
    spec.sweep_values = {6.0};
    REQUIRE_THROWS_AS(expand_sweep(spec), std::invalid_argument);
  }

  SECTION("unknown axis and empty values are rejected") {
    spec.sweep_axis = "altitude";
    spec.sweep_values = {100.0};
    REQUIRE_THROWS_AS(expand_sweep(spec), std::invalid_argument);
    spec.sweep_axis = "period";
    spec.sweep_values.clear();
    REQUIRE_THROWS_AS(expand_sweep(spec), std::invalid_argument);
  }
}

TEST_CASE("committed paths are repriced per beamforming mode", "[experiment]") {
  ScenarioConfig cfg = tiny_scenario(4);
  validate_config(cfg);
  GridMap grid = build_grid(cfg);
  SensingSchedule schedule = fixed_schedule(2, cfg.slot_count, cfg.slot_len, cfg.overlap_fraction);
  MemoTable memo;
  PlanOptions po;
  po.shared_memo = &memo;
  TrajectoryResult planned = plan_trajectory(cfg, schedule, grid, po);
  SlotEvaluator eval = make_slot_evaluator(cfg, grid, po.optimize);

  TrajectoryResult opt = evaluate_committed(planned.cells, schedule, cfg, grid,
                                            BeamformingMode::optimized, 5, {}, eval, &memo);
  REQUIRE(opt.cells == planned.cells);
  REQUIRE(opt.average_throughput == Approx(planned.average_throughput).epsilon(1e-12));

  TrajectoryResult eq1 = evaluate_committed(planned.cells, schedule, cfg, grid,
                                            BeamformingMode::equal_power, 5, {}, eval, &memo);
  TrajectoryResult eq2 = evaluate_committed(planned.cells, schedule, cfg, grid,
                                            BeamformingMode::equal_power, 5, {}, eval, &memo);
  REQUIRE(eq1.average_throughput == eq2.average_throughput);
  REQUIRE(eq1.slot_throughput == eq2.slot_throughput);
  REQUIRE(static_cast<int>(eq1.cells.size()) == cfg.slot_count);

  TrajectoryResult rnd1 = evaluate_committed(planned.cells, schedule, cfg, grid,
                                             BeamformingMode::random_direction, 5, {}, eval, &memo);
  TrajectoryResult rnd2 = evaluate_committed(planned.cells, schedule, cfg, grid,
                                             BeamformingMode::random_direction, 5, {}, eval, &memo);
  REQUIRE(rnd1.slot_throughput == rnd2.slot_throughput);
  REQUIRE(opt.average_throughput >= rnd1.average_throughput - 1e-9);
}

TEST_CASE("runs emit the result files and are byte-reproducible", "[experiment]") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario(5);
  spec.policy = parse_policy("fixed:2");
  fs::path dir1 = fresh_dir("run1");
  spec.out_dir = dir1.string();

  RunOutcome r1 = run(spec);
  INFO(r1.message);
  REQUIRE(r1.exit_code == 0);
  REQUIRE(r1.points.size() == 1);
  REQUIRE(r1.points[0].rows.size() == 3);
  REQUIRE(r1.points[0].rows[0].scheme == "opt-outer");
  REQUIRE(r1.points[0].rows[1].scheme == "opt-greedy");
  REQUIRE(r1.points[0].rows[2].scheme == "fixed-straight");
  REQUIRE(r1.points[0].rows[0].average_throughput >=
          r1.points[0].rows[2].average_throughput - 1e-9);

  std::string traj = slurp(dir1 / "trajectory.csv");
  REQUIRE(traj.rfind("slot,x,y,psi,slot_throughput,feasible\n", 0) == 0);
  REQUIRE(data_lines(traj) == 5);
  std::string summary = slurp(dir1 / "summary.csv");
  REQUIRE(summary.rfind("axis,value,policy,scheme,beamforming,average_throughput\n", 0) == 0);
  REQUIRE(data_lines(summary) == 3);
  std::string conv = slurp(dir1 / "convergence.csv");
  REQUIRE(conv.rfind("slot,iteration,objective\n", 0) == 0);
  REQUIRE(data_lines(conv) >= 2);
  REQUIRE_FALSE(fs::exists(dir1 / "beamformers.csv"));

  fs::path dir2 = fresh_dir("run2");
  spec.out_dir = dir2.string();
  RunOutcome r2 = run(spec);
  REQUIRE(r2.exit_code == 0);
  REQUIRE(slurp(dir2 / "trajectory.csv") == traj);
  REQUIRE(slurp(dir2 / "summary.csv") == summary);
  REQUIRE(slurp(dir2 / "convergence.csv") == conv);

  spec.dump_beamformers = true;
  fs::path dir3 = fresh_dir("run3");
  spec.out_dir = dir3.string();
  RunOutcome r3 = run(spec);
  REQUIRE(r3.exit_code == 0);
  std::string dump = slurp(dir3 / "beamformers.csv");
  REQUIRE(dump.rfind("slot,family,index,values\n", 0) == 0);
  REQUIRE(data_lines(dump) > 0);
}

TEST_CASE("sweep runs produce one summary row per point and scheme", "[experiment]") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario(4);
  spec.sweep_axis = "policy";
  spec.sweep_values = {1.0, 4.0};
  fs::path dir = fresh_dir("sweep");
  spec.out_dir = dir.string();

  RunOutcome r = run(spec);
  INFO(r.message);
  REQUIRE(r.exit_code == 0);
  REQUIRE(r.points.size() == 2);
  REQUIRE(r.points[0].policy == "none");
  REQUIRE(r.points[1].policy == "every-slot");
  std::string summary = slurp(dir / "summary.csv");
  REQUIRE(data_lines(summary) == 6);
  REQUIRE(summary.find("policy,1,none,opt-outer") != std::string::npos);
  REQUIRE(summary.find("policy,4,every-slot,fixed-straight") != std::string::npos);

  // A real pulse costs sensing power, so the no-sensing point can only be
  // at least as good per scheme.
  for (int s = 0; s < 3; ++s)
    REQUIRE(r.points[0].rows[s].average_throughput >=
            r.points[1].rows[s].average_throughput - 1e-9);
}

TEST_CASE("faulty configurations map to the config exit code", "[experiment]") {
  ExperimentSpec spec;
  spec.scenario = tiny_scenario(5);
  spec.scenario.start = Vec2{77.0, 150.0};  // not a cell center
  fs::path dir = fresh_dir("bad");
  spec.out_dir = dir.string();
  RunOutcome r = run(spec);
  REQUIRE(r.exit_code == 2);
  REQUIRE_FALSE(r.message.empty());

  ExperimentSpec threads = ExperimentSpec{};
  threads.scenario = tiny_scenario(4);
  threads.out_dir = fresh_dir("badthreads").string();
  setenv("ISAC_THREADS", "many", 1);
  RunOutcome rt = run(threads);
  unsetenv("ISAC_THREADS");
  REQUIRE(rt.exit_code == 2);

  setenv("ISAC_THREADS", "1", 1);
  RunOutcome ok = run(threads);
  unsetenv("ISAC_THREADS");
  REQUIRE(ok.exit_code == 0);
}
