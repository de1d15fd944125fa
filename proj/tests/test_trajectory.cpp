#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aisac/trajectory.hpp"

using namespace aisac;
using Catch::Approx;

namespace {

// 3x3 grid over 300 m x 300 m; start mid-left (cell 3), finish mid-right
// (cell 5); the per-slot range covers the diagonal pitch.
ScenarioConfig grid3_config(int slots) {
  ScenarioConfig cfg;
  cfg.area_width = 300.0;
  cfg.area_height = 300.0;
  cfg.grid_cols = 3;
  cfg.grid_rows = 3;
  cfg.max_speed = 150.0;
  cfg.slot_len = 1.0;
  cfg.slot_count = slots;
  cfg.period = static_cast<double>(slots);
  cfg.start = Vec2{50.0, 150.0};
  cfg.finish = Vec2{250.0, 150.0};
  cfg.ue_positions.clear();
  cfg.ue_count = 0;
  return cfg;
}

ScenarioConfig desk_real_config(int slots, std::vector<Vec2> ues, std::vector<Vec2> targets) {
  ScenarioConfig cfg = grid3_config(slots);
  cfg.antenna_count = 3;
  cfg.ue_count = static_cast<int>(ues.size());
  cfg.ue_positions = std::move(ues);
  cfg.sensing_positions = std::move(targets);
  cfg.rcs.assign(cfg.sensing_positions.size(), cd(1.0, 0.0));
  cfg.sinr_th_dl = 0.0;
  cfg.sinr_th_ul = 0.0;
  cfg.sinr_th_sens = 0.0;
  return cfg;
}

// Synthetic landscape: reward falls off with distance to a hotspot, and
// pulse slots optionally pay a flat penalty. Always feasible.
SlotEvaluator hotspot_eval(const GridMap& grid, Vec2 hotspot, double pulse_penalty = 0.0) {
  return [grid, hotspot, pulse_penalty](int cell, int, bool sensing) {
    WaypointRecord rec;
    rec.feasible = true;
    rec.value = 100.0 - 0.1 * dist2d(grid.center(cell), hotspot) - (sensing ? pulse_penalty : 0.0);
    rec.throughput = rec.value;
    return rec;
  };
}

SlotEvaluator counting_eval(SlotEvaluator inner, int& calls) {
  return [inner, &calls](int cell, int slot, bool sensing) {
    ++calls;
    return inner(cell, slot, sensing);
  };
}

double step_length(const GridMap& grid, int a, int b) {
  return dist2d(grid.center(a), grid.center(b));
}

void require_motion_limits(const TrajectoryResult& res, const ScenarioConfig& cfg,
                           const GridMap& grid) {
  REQUIRE(static_cast<int>(res.cells.size()) == cfg.slot_count);
  REQUIRE(dist2d(res.waypoints.front(), cfg.start) <= 1e-9);
  REQUIRE(dist2d(res.waypoints.back(), cfg.finish) <= 1e-9);
  for (std::size_t i = 0; i + 1 < res.cells.size(); ++i)
    REQUIRE(step_length(grid, res.cells[i], res.cells[i + 1]) <=
            cfg.max_speed * cfg.slot_len * (1.0 + 1e-9));
  double mean = 0.0;
  for (double t : res.slot_throughput) mean += t;
  mean /= static_cast<double>(res.slot_throughput.size());
  REQUIRE(res.average_throughput == Approx(mean).epsilon(1e-12));
}

}  // namespace

TEST_CASE("hop distances count grid moves to the target", "[trajectory]") {
  ScenarioConfig cfg = grid3_config(4);
  GridMap grid = build_grid(cfg);
  std::vector<int> d = hop_distances(grid, 4);
  REQUIRE(d[4] == 0);
  for (int c = 0; c < 9; ++c)
    if (c != 4) REQUIRE(d[c] == 1);

  ScenarioConfig line = grid3_config(6);
  line.area_width = 500.0;
  line.area_height = 100.0;
  line.grid_cols = 5;
  line.grid_rows = 1;
  line.start = Vec2{50.0, 50.0};
  line.finish = Vec2{450.0, 50.0};
  GridMap lg = build_grid(line);
  std::vector<int> ld = hop_distances(lg, 4);
  for (int c = 0; c < 5; ++c) REQUIRE(ld[c] == 4 - c);

  REQUIRE_THROWS_AS(hop_distances(grid, 9), std::invalid_argument);
}

TEST_CASE("reachable waypoints respect adjacency and the remaining move budget", "[trajectory]") {
  ScenarioConfig cfg = grid3_config(4);
  GridMap grid = build_grid(cfg);
  std::vector<int> hops = hop_distances(grid, 5);

  // Ample budget: every neighbor of the start stays admissible.
  REQUIRE(reachable_waypoints(3, 1, grid, hops, 4) == std::vector<int>{0, 1, 3, 4, 6, 7});
  // Center cell with ample slots reaches the whole 8-ring plus hover.
  REQUIRE(reachable_waypoints(4, 1, grid, hops, 10) ==
          std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8});
  // Last move must land on the finish itself.
  REQUIRE(reachable_waypoints(4, 3, grid, hops, 4) == std::vector<int>{5});
  // Hovering at the finish stays admissible to the end.
  std::vector<int> at_finish = reachable_waypoints(5, 3, grid, hops, 4);
  REQUIRE(std::find(at_finish.begin(), at_finish.end(), 5) != at_finish.end());

  REQUIRE(reachable_waypoints(3, 1, grid, cfg) == reachable_waypoints(3, 1, grid, hops, 4));
  REQUIRE_THROWS_AS(reachable_waypoints(3, 4, grid, hops, 4), std::invalid_argument);
  REQUIRE_THROWS_AS(reachable_waypoints(9, 1, grid, hops, 4), std::invalid_argument);
}

TEST_CASE("waypoint cache evaluates each key once and separates pulse flags", "[trajectory]") {
  ScenarioConfig cfg = grid3_config(4);
  GridMap grid = build_grid(cfg);
  int calls = 0;
  SlotEvaluator eval = counting_eval(hotspot_eval(grid, Vec2{150.0, 150.0}, 7.0), calls);
  MemoTable memo;

  WaypointRecord first = waypoint_value(4, 2, false, eval, &memo);
  WaypointRecord again = waypoint_value(4, 2, false, eval, &memo);
  REQUIRE(calls == 1);
  REQUIRE(again.value == first.value);

  WaypointRecord pulsed = waypoint_value(4, 2, true, eval, &memo);
  REQUIRE(calls == 2);
  REQUIRE(pulsed.value == Approx(first.value - 7.0));
  REQUIRE(memo.waypoint.size() == 2);
  REQUIRE(memo.optimizer_runs == 2);
  REQUIRE(memo.lookups == 3);

  // Cached entries equal a fresh recomputation.
  for (const auto& [key, rec] : memo.waypoint)
    REQUIRE(eval(key.cell, key.slot, key.sensing).value == rec.value);

  // A null table falls through to the evaluator every time.
  waypoint_value(4, 2, false, eval, nullptr);
  waypoint_value(4, 2, false, eval, nullptr);
  REQUIRE(calls >= 6);
}

TEST_CASE("greedy descent follows the reward field and ends at the finish", "[trajectory]") {
  ScenarioConfig cfg = grid3_config(4);
  GridMap grid = build_grid(cfg);
  SensingSchedule sched = no_sensing_schedule(4, cfg.slot_len, cfg.overlap_fraction);
  std::vector<int> hops = hop_distances(grid, 5);
  MemoTable memo;

  // Uniform rewards: ties resolve to the lowest admissible index throughout.
  SlotEvaluator flat = hotspot_eval(grid, Vec2{150.0, 150.0}, 0.0);
  SlotEvaluator uniform = [](int, int, bool) {
    WaypointRecord rec;
    rec.feasible = true;
    rec.value = 1.0;
    rec.throughput = 1.0;
    return rec;
  };
  PathScore tie = greedy_path(3, 1, sched, grid, hops, uniform, &memo);
  REQUIRE(tie.cells == std::vector<int>{3, 0, 1, 5});
  REQUIRE(tie.average == Approx(1.0));

  // Single-point base case.
  ScenarioConfig one = grid3_config(4);
  SensingSchedule sched1 = no_sensing_schedule(1, one.slot_len, one.overlap_fraction);
  MemoTable memo1;
  std::vector<int> hops_self = hop_distances(grid, 5);
  PathScore base = greedy_path(5, 1, sched1, grid, hops_self, flat, &memo1);
  REQUIRE(base.cells == std::vector<int>{5});
  REQUIRE(base.average == Approx(flat(5, 1, false).value));

  // A start that cannot reach the finish in time is rejected.
  REQUIRE_THROWS_AS(greedy_path(0, 3, sched, grid, hops, flat, &memo), std::invalid_argument);

  // The hotspot pulls the walk through the center.
  MemoTable memo2;
  PathScore pull = greedy_path(3, 1, sched, grid, hops, flat, &memo2);
  REQUIRE(pull.cells == std::vector<int>{3, 4, 4, 5});
  REQUIRE(pull.cells.back() == 5);
}

TEST_CASE("dead slots rank below any feasible alternative, not below each other",
          "[trajectory]") {
  ScenarioConfig cfg = grid3_config(5);
  GridMap grid = build_grid(cfg);
  SensingSchedule sched = fixed_schedule(2, 5, cfg.slot_len, cfg.overlap_fraction);

  // Slot 3 is dead at every cell; every path pays exactly one dead slot, so
  // the ranking must fall back to the finite values instead of collapsing.
  SlotEvaluator inner = hotspot_eval(grid, Vec2{150.0, 150.0});
  SlotEvaluator eval = [inner](int cell, int slot, bool sensing) {
    if (slot == 3) return WaypointRecord{};
    return inner(cell, slot, sensing);
  };
  PlanOptions po;
  po.evaluator = eval;

  TrajectoryResult planned = plan_trajectory(cfg, sched, grid, po);
  TrajectoryResult oracle = exhaustive_trajectory(cfg, sched, grid, po);
  REQUIRE(planned.cells[1] == 4);  // still hugs the hotspot
  REQUIRE_FALSE(planned.slot_feasible[2]);
  REQUIRE(planned.slot_throughput[2] == 0.0);
  REQUIRE(planned.average_throughput > 0.0);
  REQUIRE(planned.average_throughput <= oracle.average_throughput + 1e-9);
  REQUIRE(planned.average_throughput == Approx(oracle.average_throughput));

  std::vector<int> hops = hop_distances(grid, 5);
  MemoTable memo;
  PathScore p = greedy_path(3, 1, sched, grid, hops, eval, &memo);
  REQUIRE(p.dead_slots == 1);
  REQUIRE(std::isinf(p.average));
  REQUIRE(p.total > 0.0);
}

TEST_CASE("planner never beats the exhaustive optimum on synthetic fields", "[trajectory]") {
  std::vector<Vec2> hotspots{{150.0, 150.0}, {250.0, 50.0}, {50.0, 250.0}, {210.0, 160.0}};
  for (int slots : {4, 5}) {
    ScenarioConfig cfg = grid3_config(slots);
    GridMap grid = build_grid(cfg);
    SensingSchedule sched = fixed_schedule(2, slots, cfg.slot_len, cfg.overlap_fraction);
    for (const Vec2& h : hotspots) {
      PlanOptions po;
      po.evaluator = hotspot_eval(grid, h, 5.0);
      TrajectoryResult planned = plan_trajectory(cfg, sched, grid, po);
      TrajectoryResult greedy = greedy_trajectory(cfg, sched, grid, po);
      TrajectoryResult straight = fixed_straight_trajectory(cfg, sched, grid, po);
      TrajectoryResult oracle = exhaustive_trajectory(cfg, sched, grid, po);
      REQUIRE(planned.average_throughput <= oracle.average_throughput + 1e-9);
      REQUIRE(greedy.average_throughput <= oracle.average_throughput + 1e-9);
      REQUIRE(straight.average_throughput <= oracle.average_throughput + 1e-9);
      if (planned.average_throughput < straight.average_throughput - 1e-9)
        WARN("committed plan fell below the straight-line benchmark at hotspot ("
             << h.x << ", " << h.y << ")");
      require_motion_limits(planned, cfg, grid);
      require_motion_limits(greedy, cfg, grid);
      require_motion_limits(straight, cfg, grid);
      require_motion_limits(oracle, cfg, grid);

      TrajectoryResult replay = plan_trajectory(cfg, sched, grid, po);
      REQUIRE(replay.cells == planned.cells);
      REQUIRE(replay.average_throughput == planned.average_throughput);
    }
  }
}

TEST_CASE("memoization is invisible to the planned trajectory", "[trajectory]") {
  ScenarioConfig cfg = grid3_config(5);
  GridMap grid = build_grid(cfg);
  SensingSchedule sched = fixed_schedule(3, 5, cfg.slot_len, cfg.overlap_fraction);
  for (const Vec2& h : {Vec2{150.0, 150.0}, Vec2{70.0, 220.0}, Vec2{240.0, 140.0}}) {
    int calls_on = 0, calls_off = 0;
    PlanOptions on;
    on.evaluator = counting_eval(hotspot_eval(grid, h, 3.0), calls_on);
    PlanOptions off;
    off.use_memo = false;
    off.evaluator = counting_eval(hotspot_eval(grid, h, 3.0), calls_off);
    TrajectoryResult with = plan_trajectory(cfg, sched, grid, on);
    TrajectoryResult without = plan_trajectory(cfg, sched, grid, off);
    REQUIRE(with.cells == without.cells);
    REQUIRE(with.slot_throughput == without.slot_throughput);
    REQUIRE(with.average_throughput == without.average_throughput);
    REQUIRE(calls_on < calls_off);
  }
}

TEST_CASE("forced march returns the unique feasible path regardless of rewards", "[trajectory]") {
  ScenarioConfig cfg = grid3_config(5);
  cfg.area_width = 500.0;
  cfg.area_height = 100.0;
  cfg.grid_cols = 5;
  cfg.grid_rows = 1;
  cfg.start = Vec2{50.0, 50.0};
  cfg.finish = Vec2{450.0, 50.0};
  GridMap grid = build_grid(cfg);
  SensingSchedule sched = no_sensing_schedule(5, cfg.slot_len, cfg.overlap_fraction);
  PlanOptions po;
  po.evaluator = hotspot_eval(grid, Vec2{50.0, 50.0}, 0.0);  // reward pulls backwards
  TrajectoryResult res = plan_trajectory(cfg, sched, grid, po);
  REQUIRE(res.cells == std::vector<int>{0, 1, 2, 3, 4});

  // One slot short of the march is a configuration error.
  cfg.slot_count = 4;
  cfg.period = 4.0;
  SensingSchedule short_sched = no_sensing_schedule(4, cfg.slot_len, cfg.overlap_fraction);
  REQUIRE_THROWS_AS(plan_trajectory(cfg, short_sched, grid, po), std::invalid_argument);
}

TEST_CASE("straight-line benchmark hovers at the best cell and leaves late", "[trajectory]") {
  ScenarioConfig cfg = grid3_config(6);
  GridMap grid = build_grid(cfg);
  SensingSchedule sched = no_sensing_schedule(6, cfg.slot_len, cfg.overlap_fraction);
  PlanOptions po;
  po.evaluator = hotspot_eval(grid, Vec2{150.0, 150.0}, 0.0);
  TrajectoryResult res = fixed_straight_trajectory(cfg, sched, grid, po);
  REQUIRE(res.cells == std::vector<int>{3, 4, 4, 4, 4, 5});
  require_motion_limits(res, cfg, grid);

  // Start, finish and hotspot coincide: pure hover.
  ScenarioConfig still = grid3_config(3);
  still.finish = still.start;
  GridMap sg = build_grid(still);
  SensingSchedule ss = no_sensing_schedule(3, still.slot_len, still.overlap_fraction);
  PlanOptions sp;
  sp.evaluator = hotspot_eval(sg, still.start, 0.0);
  TrajectoryResult hover = fixed_straight_trajectory(still, ss, sg, sp);
  REQUIRE(hover.cells == std::vector<int>{3, 3, 3});
}

TEST_CASE("schedule mismatches and off-grid endpoints are rejected", "[trajectory]") {
  ScenarioConfig cfg = grid3_config(4);
  GridMap grid = build_grid(cfg);
  SensingSchedule wrong = no_sensing_schedule(3, cfg.slot_len, cfg.overlap_fraction);
  PlanOptions po;
  po.evaluator = hotspot_eval(grid, Vec2{150.0, 150.0}, 0.0);
  REQUIRE_THROWS_AS(plan_trajectory(cfg, wrong, grid, po), std::invalid_argument);

  ScenarioConfig off = grid3_config(4);
  off.finish = Vec2{260.0, 150.0};
  SensingSchedule sched = no_sensing_schedule(4, off.slot_len, off.overlap_fraction);
  REQUIRE_THROWS_AS(plan_trajectory(off, sched, grid, po), std::invalid_argument);

  ScenarioConfig big = grid3_config(4);
  big.grid_cols = 20;
  big.grid_rows = 20;
  big.area_width = 1000.0;
  big.area_height = 1000.0;
  big.max_speed = 80.0;
  big.start = Vec2{25.0, 525.0};
  big.finish = Vec2{975.0, 525.0};
  big.slot_count = 20;
  big.period = 20.0;
  GridMap bg = build_grid(big);
  SensingSchedule bs = no_sensing_schedule(20, big.slot_len, big.overlap_fraction);
  REQUIRE_THROWS_AS(exhaustive_trajectory(big, bs, bg, po), std::invalid_argument);
}

TEST_CASE("pulse slots price in echoes and probing at the same waypoint", "[trajectory]") {
  ScenarioConfig cfg = desk_real_config(4, {{140.0, 160.0}}, {{160.0, 140.0}});
  GridMap grid = build_grid(cfg);
  SlotEvaluator eval = make_slot_evaluator(cfg, grid);
  WaypointRecord quiet = eval(4, 1, false);
  WaypointRecord pulsed = eval(4, 1, true);
  REQUIRE(quiet.feasible);
  REQUIRE(pulsed.feasible);
  REQUIRE(pulsed.value <= quiet.value + 1e-9);

  // Path-loss monotonicity: the cell above the UE beats the far corner.
  WaypointRecord near = eval(4, 1, false);
  WaypointRecord far = eval(2, 1, false);
  REQUIRE(near.value > far.value);
}

TEST_CASE("desk-scale plan with the full optimizer dominates the benchmark", "[trajectory]") {
  ScenarioConfig cfg = desk_real_config(4, {{140.0, 160.0}}, {});
  GridMap grid = build_grid(cfg);
  SensingSchedule sched = no_sensing_schedule(4, cfg.slot_len, cfg.overlap_fraction);
  MemoTable shared;
  PlanOptions po;
  po.shared_memo = &shared;
  TrajectoryResult planned = plan_trajectory(cfg, sched, grid, po);
  TrajectoryResult straight = fixed_straight_trajectory(cfg, sched, grid, po);
  TrajectoryResult oracle = exhaustive_trajectory(cfg, sched, grid, po);

  require_motion_limits(planned, cfg, grid);
  require_motion_limits(straight, cfg, grid);
  for (bool ok : planned.slot_feasible) REQUIRE(ok);
  REQUIRE(planned.average_throughput <= oracle.average_throughput + 1e-9);
  REQUIRE(planned.average_throughput >= straight.average_throughput - 1e-9);

  TrajectoryResult replay = plan_trajectory(cfg, sched, grid, po);
  REQUIRE(replay.cells == planned.cells);
  REQUIRE(replay.average_throughput == planned.average_throughput);

  // The pooled cache held every optimization to one run per key.
  REQUIRE(shared.optimizer_runs <= 9 * 4);
}
