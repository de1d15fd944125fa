#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "aisac/beamforming.hpp"
#include "aisac/link_metrics.hpp"
#include "aisac/scenario.hpp"
#include "aisac/schedule.hpp"

namespace aisac {

// Grid-hop distances to `target` along the adjacency graph (BFS). The
// per-slot range pruning already lives in the adjacency lists, so a hop
// count of d means the cell is d feasible moves away.
inline std::vector<int> hop_distances(const GridMap& grid, int target) {
  if (target < 0 || target >= grid.cell_count())
    throw std::invalid_argument("hop_distances: target cell out of range");
  std::vector<int> dist(grid.cell_count(), -1);
  dist[target] = 0;
  std::vector<int> frontier{target}, next;
  while (!frontier.empty()) {
    next.clear();
    for (int cell : frontier)
      for (int nb : grid.adjacency[cell])
        if (dist[nb] < 0) {
          dist[nb] = dist[cell] + 1;
          next.push_back(nb);
        }
    frontier.swap(next);
  }
  return dist;
}

// Cells the vehicle may occupy in slot `slot`+1: adjacent to `cell` (hover
// included) and still able to reach `finish` with the moves that remain.
inline std::vector<int> reachable_waypoints(int cell, int slot, const GridMap& grid,
                                            const std::vector<int>& hops_to_finish,
                                            int slot_count) {
  if (cell < 0 || cell >= grid.cell_count())
    throw std::invalid_argument("reachable_waypoints: cell out of range");
  if (slot < 1 || slot >= slot_count)
    throw std::invalid_argument("reachable_waypoints: slot must lie in [1, N)");
  const int budget = slot_count - slot - 1;
  std::vector<int> out;
  for (int nb : grid.adjacency[cell])
    if (hops_to_finish[nb] >= 0 && hops_to_finish[nb] <= budget) out.push_back(nb);
  std::sort(out.begin(), out.end());
  return out;
}

inline std::vector<int> reachable_waypoints(int cell, int slot, const GridMap& grid,
                                            const ScenarioConfig& cfg) {
  double tol = 1e-6 * std::max(grid.pitch_x, grid.pitch_y);
  int finish = grid.cell_at(cfg.finish, tol);
  if (finish < 0)
    throw std::invalid_argument("reachable_waypoints: finish is not a grid cell center");
  return reachable_waypoints(cell, slot, grid, hop_distances(grid, finish), cfg.slot_count);
}

// One evaluated slot at one cell. `value` is the planning reward: the slot
// throughput, or -inf when the service floors cannot be met there. Paths are
// ranked by dead-slot count first and the finite value sum second, which is
// what summing -inf terms means in the limit; a plain IEEE sum would erase
// the ranking among paths that each touch at least one dead slot.
struct WaypointRecord {
  double value = -std::numeric_limits<double>::infinity();
  double throughput = 0.0;  // bit/s/Hz actually credited to the slot
  bool feasible = false;
  LiftedBeamformerSet set;
};

using SlotEvaluator = std::function<WaypointRecord(int cell, int slot, bool sensing)>;

// Full-stack evaluator: channels at the cell center, alternating beamformer
// optimization, throughput from the link report. Slot timing follows the
// pulse indicator alone, so the slot index only disambiguates the cache key.
inline SlotEvaluator make_slot_evaluator(const ScenarioConfig& cfg, const GridMap& grid,
                                         const OptimizeOptions& opt = {}) {
  return [cfg, grid, opt](int cell, int /*slot*/, bool sensing) {
    WaypointRecord rec;
    ChannelSet ch = make_channels(grid.center(cell), cfg);
    OptimizeResult res = alternating_optimize(ch, cfg, sensing, opt);
    rec.set = res.set;
    rec.feasible = res.feasible;
    if (res.feasible) {
      LinkReport rep = link_report(res.set, ch, cfg, sensing,
                                   slot_timing(sensing, cfg.slot_len, cfg.overlap_fraction));
      rec.value = rep.throughput;
      rec.throughput = rep.throughput;
    }
    return rec;
  };
}

struct PathScore {
  std::vector<int> cells;  // waypoints for slots n..N
  int dead_slots = 0;      // slots on the path valued -inf
  double total = 0.0;      // sum of the finite slot values
  double average = 0.0;    // total / (N - n + 1), -inf once any slot is dead

  bool better_than(const PathScore& o) const {
    if (dead_slots != o.dead_slots) return dead_slots < o.dead_slots;
    return total > o.total;
  }
};

// Cache of evaluated waypoints and of greedy path scores. Entries are
// inserted once and never overwritten; `optimizer_runs` counts the cache
// misses that actually paid for an optimization.
struct MemoTable {
  struct Key {
    int cell = 0;
    int slot = 0;
    bool sensing = false;
    bool operator<(const Key& o) const {
      if (cell != o.cell) return cell < o.cell;
      if (slot != o.slot) return slot < o.slot;
      return sensing < o.sensing;
    }
  };
  std::map<Key, WaypointRecord> waypoint;
  std::map<Key, PathScore> path;
  long lookups = 0;
  long optimizer_runs = 0;
};

// Memoized slot evaluation; a null table falls through to the evaluator.
inline WaypointRecord waypoint_value(int cell, int slot, bool sensing, const SlotEvaluator& eval,
                                     MemoTable* memo) {
  if (!memo) return eval(cell, slot, sensing);
  ++memo->lookups;
  MemoTable::Key key{cell, slot, sensing};
  auto it = memo->waypoint.find(key);
  if (it == memo->waypoint.end()) {
    ++memo->optimizer_runs;
    it = memo->waypoint.emplace(key, eval(cell, slot, sensing)).first;
  }
  return it->second;
}

// From (start, start_slot), repeatedly move to the reachable neighbor with
// the best slot value (ties to the lowest cell index) until the final slot.
// Returns the visited cells and the average value over slots n..N.
inline PathScore greedy_path(int start, int start_slot, const SensingSchedule& schedule,
                             const GridMap& grid, const std::vector<int>& hops_to_finish,
                             const SlotEvaluator& eval, MemoTable* memo) {
  const int N = schedule.slot_count();
  if (start_slot < 1 || start_slot > N)
    throw std::invalid_argument("greedy_path: start slot out of range");
  if (hops_to_finish[start] < 0 || hops_to_finish[start] > N - start_slot)
    throw std::invalid_argument("greedy_path: start cannot reach the final location in time");
  MemoTable::Key key{start, start_slot, schedule.sensing_at(start_slot)};
  if (memo) {
    auto it = memo->path.find(key);
    if (it != memo->path.end()) return it->second;
  }

  PathScore ps;
  int cell = start;
  for (int n = start_slot;; ++n) {
    double v = waypoint_value(cell, n, schedule.sensing_at(n), eval, memo).value;
    if (std::isinf(v)) {
      ++ps.dead_slots;
    } else {
      ps.total += v;
    }
    ps.cells.push_back(cell);
    if (n == N) break;
    int best = -1;
    double best_value = 0.0;
    for (int c : reachable_waypoints(cell, n, grid, hops_to_finish, N)) {
      double v = waypoint_value(c, n + 1, schedule.sensing_at(n + 1), eval, memo).value;
      if (best < 0 || v > best_value) {
        best = c;
        best_value = v;
      }
    }
    if (best < 0) throw std::logic_error("greedy_path: dead end past the reachability filter");
    cell = best;
  }
  ps.average = ps.dead_slots > 0 ? -std::numeric_limits<double>::infinity()
                                 : ps.total / static_cast<double>(N - start_slot + 1);
  if (memo) memo->path.emplace(key, ps);
  return ps;
}

struct TrajectoryResult {
  std::vector<int> cells;                        // length N
  std::vector<Vec2> waypoints;                   // cell centers
  std::vector<double> slot_throughput;           // bit/s/Hz
  std::vector<bool> slot_feasible;
  std::vector<LiftedBeamformerSet> beamformers;  // filled on request
  double average_throughput = 0.0;
};

struct PlanOptions {
  OptimizeOptions optimize;
  bool use_memo = true;
  bool keep_beamformers = false;
  MemoTable* shared_memo = nullptr;  // pools evaluations across planner calls
  SlotEvaluator evaluator;           // overrides the full-stack evaluator when set
};

namespace detail {

inline MemoTable* pick_memo(const PlanOptions& po, MemoTable& local) {
  if (!po.use_memo) return nullptr;
  return po.shared_memo ? po.shared_memo : &local;
}

}  // namespace detail

namespace detail {

struct PlanSetup {
  int start = 0;
  int finish = 0;
  std::vector<int> hops_to_finish;
  SlotEvaluator eval;
};

inline PlanSetup plan_setup(const ScenarioConfig& cfg, const SensingSchedule& schedule,
                            const GridMap& grid, const PlanOptions& po) {
  if (schedule.slot_count() != cfg.slot_count)
    throw std::invalid_argument("trajectory: schedule length must match the slot count");
  double tol = 1e-6 * std::max(grid.pitch_x, grid.pitch_y);
  PlanSetup s;
  s.start = grid.cell_at(cfg.start, tol);
  s.finish = grid.cell_at(cfg.finish, tol);
  if (s.start < 0 || s.finish < 0)
    throw std::invalid_argument("trajectory: start and finish must be grid cell centers");
  s.hops_to_finish = hop_distances(grid, s.finish);
  if (s.hops_to_finish[s.start] < 0 || s.hops_to_finish[s.start] > cfg.slot_count - 1)
    throw std::invalid_argument(
        "trajectory: the final location is not reachable within the flight period");
  s.eval = po.evaluator ? po.evaluator : make_slot_evaluator(cfg, grid, po.optimize);
  return s;
}

inline TrajectoryResult assemble(const std::vector<int>& cells, const SensingSchedule& schedule,
                                 const GridMap& grid, const SlotEvaluator& eval, MemoTable* memo,
                                 bool keep_beamformers) {
  TrajectoryResult out;
  out.cells = cells;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    int slot = static_cast<int>(i) + 1;
    WaypointRecord rec = waypoint_value(cells[i], slot, schedule.sensing_at(slot), eval, memo);
    out.waypoints.push_back(grid.center(cells[i]));
    out.slot_throughput.push_back(rec.throughput);
    out.slot_feasible.push_back(rec.feasible);
    if (keep_beamformers) out.beamformers.push_back(rec.set);
    out.average_throughput += rec.throughput;
  }
  out.average_throughput /= static_cast<double>(cells.size());
  return out;
}

}  // namespace detail

// Committed-path planner: at each slot, every reachable neighbor is scored
// by the average value of the greedy path it starts, and the best score is
// committed (ties to the lowest cell index).
inline TrajectoryResult plan_trajectory(const ScenarioConfig& cfg, const SensingSchedule& schedule,
                                        const GridMap& grid, const PlanOptions& po = {}) {
  detail::PlanSetup s = detail::plan_setup(cfg, schedule, grid, po);
  MemoTable table;
  MemoTable* memo = detail::pick_memo(po, table);
  const int N = cfg.slot_count;
  std::vector<int> cells{s.start};
  for (int n = 1; n < N; ++n) {
    int best = -1;
    PathScore best_score;
    for (int c : reachable_waypoints(cells.back(), n, grid, s.hops_to_finish, N)) {
      PathScore p = greedy_path(c, n + 1, schedule, grid, s.hops_to_finish, s.eval, memo);
      if (best < 0 || p.better_than(best_score)) {
        best = c;
        best_score = p;
      }
    }
    if (best < 0) throw std::logic_error("plan_trajectory: dead end past the reachability filter");
    cells.push_back(best);
  }
  return detail::assemble(cells, schedule, grid, s.eval, memo, po.keep_beamformers);
}

// Single greedy descent from the start; the cheaper of the two planners.
inline TrajectoryResult greedy_trajectory(const ScenarioConfig& cfg,
                                          const SensingSchedule& schedule, const GridMap& grid,
                                          const PlanOptions& po = {}) {
  detail::PlanSetup s = detail::plan_setup(cfg, schedule, grid, po);
  MemoTable table;
  MemoTable* memo = detail::pick_memo(po, table);
  PathScore p = greedy_path(s.start, 1, schedule, grid, s.hops_to_finish, s.eval, memo);
  return detail::assemble(p.cells, schedule, grid, s.eval, memo, po.keep_beamformers);
}

namespace detail {

// Deterministic shortest grid path following the BFS distance field:
// each step moves to the lowest-index neighbor one hop closer.
inline std::vector<int> descend_hops(int from, const GridMap& grid,
                                     const std::vector<int>& dist) {
  std::vector<int> path{from};
  int cur = from;
  while (dist[cur] > 0) {
    int next = -1;
    for (int nb : grid.adjacency[cur])
      if (dist[nb] == dist[cur] - 1 && (next < 0 || nb < next)) next = nb;
    if (next < 0) throw std::logic_error("descend_hops: broken distance field");
    path.push_back(next);
    cur = next;
  }
  return path;
}

}  // namespace detail

// Benchmark trajectory: fly the shortest path to the best hover cell, hover,
// and leave for the final location as late as the remaining hops allow. The
// hover cell maximizes the whole-flight value of standing still there,
// among cells whose detour still fits in the flight period.
inline TrajectoryResult fixed_straight_trajectory(const ScenarioConfig& cfg,
                                                  const SensingSchedule& schedule,
                                                  const GridMap& grid,
                                                  const PlanOptions& po = {}) {
  detail::PlanSetup s = detail::plan_setup(cfg, schedule, grid, po);
  MemoTable table;
  MemoTable* memo = detail::pick_memo(po, table);
  const int N = cfg.slot_count;
  std::vector<int> hops_from_start = hop_distances(grid, s.start);

  int best = -1;
  int best_dead = 0;
  double best_total = 0.0;
  for (int c = 0; c < grid.cell_count(); ++c) {
    if (hops_from_start[c] < 0 || s.hops_to_finish[c] < 0) continue;
    if (hops_from_start[c] + s.hops_to_finish[c] > N - 1) continue;
    int dead = 0;
    double total = 0.0;
    for (int n = 1; n <= N; ++n) {
      double v = waypoint_value(c, n, schedule.sensing_at(n), s.eval, memo).value;
      if (std::isinf(v)) {
        ++dead;
      } else {
        total += v;
      }
    }
    if (best < 0 || dead < best_dead || (dead == best_dead && total > best_total)) {
      best = c;
      best_dead = dead;
      best_total = total;
    }
  }
  if (best < 0) throw std::logic_error("fixed_straight_trajectory: no admissible hover cell");

  std::vector<int> inbound = detail::descend_hops(s.start, grid, hop_distances(grid, best));
  std::vector<int> outbound = detail::descend_hops(best, grid, s.hops_to_finish);
  std::vector<int> cells = inbound;
  while (static_cast<int>(cells.size() + outbound.size()) - 1 < N) cells.push_back(best);
  cells.insert(cells.end(), outbound.begin() + 1, outbound.end());
  return detail::assemble(cells, schedule, grid, s.eval, memo, po.keep_beamformers);
}

// Brute-force reference: enumerate every endpoint-feasible waypoint sequence
// and keep the best credited-throughput total, i.e. the optimum of the same
// average every planner reports, so no planner can beat it. Only meant for
// tiny grids; the guard keeps an accidental full-size call from running for
// days.
inline TrajectoryResult exhaustive_trajectory(const ScenarioConfig& cfg,
                                              const SensingSchedule& schedule, const GridMap& grid,
                                              const PlanOptions& po = {}) {
  if (grid.cell_count() > 25 || cfg.slot_count > 10)
    throw std::invalid_argument("exhaustive_trajectory: instance too large to enumerate");
  detail::PlanSetup s = detail::plan_setup(cfg, schedule, grid, po);
  MemoTable table;
  MemoTable* memo = detail::pick_memo(po, table);
  const int N = cfg.slot_count;

  std::vector<int> cells{s.start}, best_cells;
  double best_total = 0.0;
  bool have_best = false;
  auto dfs = [&](auto&& self, int cell, int slot, double total) -> void {
    total += waypoint_value(cell, slot, schedule.sensing_at(slot), s.eval, memo).throughput;
    if (slot == N) {
      if (!have_best || total > best_total) {
        best_total = total;
        best_cells = cells;
        have_best = true;
      }
      return;
    }
    for (int c : reachable_waypoints(cell, slot, grid, s.hops_to_finish, N)) {
      cells.push_back(c);
      self(self, c, slot + 1, total);
      cells.pop_back();
    }
  };
  dfs(dfs, s.start, 1, 0.0);
  if (!have_best) throw std::logic_error("exhaustive_trajectory: no endpoint-feasible sequence");
  return detail::assemble(best_cells, schedule, grid, s.eval, memo, po.keep_beamformers);
}

}  // namespace aisac
