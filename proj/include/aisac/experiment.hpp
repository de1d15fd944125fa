#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "aisac/trajectory.hpp"

namespace aisac {

// Sensing policies of the benchmark set: 1 none, 2 adaptive interval,
// 3 fixed interval (two slots by default), 4 a pulse on every slot.
struct SensingPolicySpec {
  enum class Kind { none, adaptive, fixed, every_slot };
  Kind kind = Kind::adaptive;
  int interval = 2;  // fixed kind only
};

inline SensingPolicySpec parse_policy(const std::string& text) {
  SensingPolicySpec p;
  if (text == "none") {
    p.kind = SensingPolicySpec::Kind::none;
  } else if (text == "adaptive") {
    p.kind = SensingPolicySpec::Kind::adaptive;
  } else if (text == "every-slot") {
    p.kind = SensingPolicySpec::Kind::every_slot;
  } else if (text.rfind("fixed:", 0) == 0) {
    p.kind = SensingPolicySpec::Kind::fixed;
    try {
      p.interval = std::stoi(text.substr(6));
    } catch (const std::exception&) {
      throw std::invalid_argument("policy: bad interval in '" + text + "'");
    }
    if (p.interval < 1) throw std::invalid_argument("policy: interval must be >= 1");
  } else {
    throw std::invalid_argument("policy: unknown value '" + text +
                                "' (expected none|adaptive|fixed:<k>|every-slot)");
  }
  return p;
}

inline std::string policy_label(const SensingPolicySpec& p) {
  switch (p.kind) {
    case SensingPolicySpec::Kind::none: return "none";
    case SensingPolicySpec::Kind::adaptive: return "adaptive";
    case SensingPolicySpec::Kind::fixed: return "fixed:" + std::to_string(p.interval);
    case SensingPolicySpec::Kind::every_slot: return "every-slot";
  }
  return "?";
}

inline SensingPolicySpec policy_from_index(int index) {
  switch (index) {
    case 1: return parse_policy("none");
    case 2: return parse_policy("adaptive");
    case 3: return parse_policy("fixed:2");
    case 4: return parse_policy("every-slot");
    default: throw std::invalid_argument("policy: index must lie in 1..4");
  }
}

// Realizes the pulse pattern of a policy. The adaptive mechanism consumes a
// sensed-parameter trace; a quiet default (no value ever moves) makes the
// interval climb 1, 2, 4, 8, ... up to the policy cap.
inline SensingSchedule make_policy_schedule(const SensingPolicySpec& pol,
                                            const ScenarioConfig& cfg,
                                            const std::vector<double>& trace = {}) {
  switch (pol.kind) {
    case SensingPolicySpec::Kind::none:
      return no_sensing_schedule(cfg.slot_count, cfg.slot_len, cfg.overlap_fraction);
    case SensingPolicySpec::Kind::every_slot:
      return fixed_schedule(1, cfg.slot_count, cfg.slot_len, cfg.overlap_fraction);
    case SensingPolicySpec::Kind::fixed:
      return fixed_schedule(pol.interval, cfg.slot_count, cfg.slot_len, cfg.overlap_fraction);
    case SensingPolicySpec::Kind::adaptive: {
      std::vector<double> t = trace;
      if (t.empty()) t.assign(static_cast<std::size_t>(cfg.slot_count), 1.0);
      return build_schedule(t, AisacPolicy{}, cfg.slot_count, cfg.slot_len,
                            cfg.overlap_fraction);
    }
  }
  throw std::logic_error("make_policy_schedule: unhandled policy kind");
}

enum class TrajectoryMode { opt_outer, opt_greedy, fixed_straight };
enum class BeamformingMode { optimized, equal_power, random_direction };

inline TrajectoryMode parse_trajectory_mode(const std::string& text) {
  if (text == "opt-outer") return TrajectoryMode::opt_outer;
  if (text == "opt-greedy") return TrajectoryMode::opt_greedy;
  if (text == "fixed-straight") return TrajectoryMode::fixed_straight;
  throw std::invalid_argument("trajectory: unknown mode '" + text +
                              "' (expected opt-outer|opt-greedy|fixed-straight)");
}

inline std::string trajectory_label(TrajectoryMode m) {
  switch (m) {
    case TrajectoryMode::opt_outer: return "opt-outer";
    case TrajectoryMode::opt_greedy: return "opt-greedy";
    case TrajectoryMode::fixed_straight: return "fixed-straight";
  }
  return "?";
}

inline BeamformingMode parse_beamforming_mode(const std::string& text) {
  if (text == "optimized") return BeamformingMode::optimized;
  if (text == "equal-power") return BeamformingMode::equal_power;
  if (text == "random") return BeamformingMode::random_direction;
  throw std::invalid_argument("beamforming: unknown mode '" + text +
                              "' (expected optimized|equal-power|random)");
}

inline std::string beamforming_label(BeamformingMode m) {
  switch (m) {
    case BeamformingMode::optimized: return "optimized";
    case BeamformingMode::equal_power: return "equal-power";
    case BeamformingMode::random_direction: return "random";
  }
  return "?";
}

struct ExperimentSpec {
  ScenarioConfig scenario;
  SensingPolicySpec policy;
  TrajectoryMode trajectory = TrajectoryMode::opt_outer;
  BeamformingMode beamforming = BeamformingMode::optimized;
  std::string sweep_axis;  // empty, or one of period|grid|antennas|policy
  std::vector<double> sweep_values;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  bool dump_beamformers = false;
  std::vector<double> sensing_trace;  // drives the adaptive policy
  OptimizeOptions optimize;
};

// Reference setup: six UEs drawn from the seed over a 1 km square, 20x20
// grid, 20 one-second slots, and three sensing locations.
inline ScenarioConfig default_scenario() {
  ScenarioConfig cfg;
  cfg.sensing_positions = {Vec2{375.0, 175.0}, Vec2{375.0, 725.0}, Vec2{775.0, 275.0}};
  cfg.rcs.assign(3, cd(1.0, 0.0));
  return cfg;
}

// Shrunk setup for test benches and sweeps: 8x8 grid, four antennas, three
// UEs, two sensing locations, ten slots. The communication floors drop to
// -6 dB: four antennas cannot hold the full-scale 0.3 dB floors for three
// UEs against the sensing beams' interference, and with the full-scale
// floors every pulse slot on the grid is infeasible. At -6 dB pulse slots
// are feasible near the sensing locations and dead elsewhere, which keeps
// the small benches exercising both regimes.
inline ScenarioConfig desk_scenario() {
  ScenarioConfig cfg = default_scenario();
  cfg.grid_cols = 8;
  cfg.grid_rows = 8;
  cfg.antenna_count = 4;
  cfg.ue_count = 3;
  cfg.slot_count = 10;
  cfg.period = 10.0;
  cfg.max_speed = std::hypot(1000.0 / 8.0, 1000.0 / 8.0);
  cfg.start = Vec2{62.5, 562.5};
  cfg.finish = Vec2{937.5, 562.5};
  cfg.sensing_positions = {Vec2{375.0, 175.0}, Vec2{375.0, 725.0}};
  cfg.rcs.assign(2, cd(1.0, 0.0));
  cfg.sinr_th_dl = db_to_linear(-6.0);
  cfg.sinr_th_ul = db_to_linear(-6.0);
  return cfg;
}

// ---------------------------------------------------------------------------
// Config files. Power and gain fields travel as dBm/dB and are converted to
// watts/linear on load; everything else is carried verbatim.

namespace detail {

inline void expect_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                        const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw std::invalid_argument("config: unknown key '" + it.key() + "' in " + where);
}

inline Vec2 vec2_from_json(const nlohmann::json& j, const std::string& name) {
  if (!j.is_array() || j.size() != 2)
    throw std::invalid_argument("config: " + name + " must be a [x, y] pair");
  return Vec2{j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<Vec2> vec2_list_from_json(const nlohmann::json& j, const std::string& name) {
  std::vector<Vec2> out;
  if (!j.is_array()) throw std::invalid_argument("config: " + name + " must be a list of pairs");
  for (const auto& e : j) out.push_back(vec2_from_json(e, name));
  return out;
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const ScenarioConfig& cfg) {
  nlohmann::json j;
  j["area_width_m"] = cfg.area_width;
  j["area_height_m"] = cfg.area_height;
  j["grid_cols"] = cfg.grid_cols;
  j["grid_rows"] = cfg.grid_rows;
  j["antenna_count"] = cfg.antenna_count;
  j["flight_height_m"] = cfg.flight_height;
  j["carrier_frequency_hz"] = cfg.carrier_frequency;
  j["ref_channel_gain_db"] = linear_to_db(cfg.ref_channel_gain);
  j["ue_tx_power_dbm"] = watt_to_dbm(cfg.ue_tx_power);
  j["uav_max_power_dbm"] = watt_to_dbm(cfg.uav_max_power);
  j["noise_dl_dbm"] = watt_to_dbm(cfg.noise_dl);
  j["noise_ul_dbm"] = watt_to_dbm(cfg.noise_ul);
  j["noise_sens_dbm"] = watt_to_dbm(cfg.noise_sens);
  j["sinr_th_dl_db"] = linear_to_db(cfg.sinr_th_dl);
  j["sinr_th_ul_db"] = linear_to_db(cfg.sinr_th_ul);
  j["sinr_th_sens_db"] = linear_to_db(cfg.sinr_th_sens);
  j["processing_gain"] = cfg.processing_gain;
  j["period_s"] = cfg.period;
  j["slot_count"] = cfg.slot_count;
  j["slot_len_s"] = cfg.slot_len;
  j["max_speed_mps"] = cfg.max_speed;
  j["overlap_fraction"] = cfg.overlap_fraction;
  j["start"] = {cfg.start.x, cfg.start.y};
  j["finish"] = {cfg.finish.x, cfg.finish.y};
  j["ue_count"] = cfg.ue_count;
  j["rng_seed"] = cfg.rng_seed;
  if (!cfg.ue_positions.empty()) {
    auto arr = nlohmann::json::array();
    for (const Vec2& p : cfg.ue_positions) arr.push_back({p.x, p.y});
    j["ue_positions"] = arr;
  }
  if (!cfg.sensing_positions.empty()) {
    auto arr = nlohmann::json::array();
    for (const Vec2& p : cfg.sensing_positions) arr.push_back({p.x, p.y});
    j["sensing_positions"] = arr;
    auto rc = nlohmann::json::array();
    for (cd r : cfg.rcs) rc.push_back({r.real(), r.imag()});
    j["rcs"] = rc;
  }
  return j;
}

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{
      "area_width_m",     "area_height_m",   "grid_cols",         "grid_rows",
      "antenna_count",    "flight_height_m", "carrier_frequency_hz",
      "ref_channel_gain_db", "ue_tx_power_dbm", "uav_max_power_dbm", "noise_dl_dbm",
      "noise_ul_dbm",     "noise_sens_dbm",  "sinr_th_dl_db",     "sinr_th_ul_db",
      "sinr_th_sens_db",  "processing_gain", "period_s",          "slot_count",
      "slot_len_s",       "max_speed_mps",   "overlap_fraction",  "start",
      "finish",           "ue_count",        "rng_seed",          "ue_positions",
      "sensing_positions", "rcs"};
  detail::expect_keys(j, known, "scenario");
  ScenarioConfig cfg;
  auto num = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  auto integer = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  // A linear value of zero has no finite dB form and travels as null.
  auto db = [&](const char* key, double& field) {
    if (!j.contains(key)) return;
    const nlohmann::json& v = j.at(key);
    field = v.is_null() ? 0.0 : db_to_linear(v.get<double>());
  };
  auto dbm = [&](const char* key, double& field) {
    if (!j.contains(key)) return;
    const nlohmann::json& v = j.at(key);
    field = v.is_null() ? 0.0 : dbm_to_watt(v.get<double>());
  };
  num("area_width_m", cfg.area_width);
  num("area_height_m", cfg.area_height);
  integer("grid_cols", cfg.grid_cols);
  integer("grid_rows", cfg.grid_rows);
  integer("antenna_count", cfg.antenna_count);
  num("flight_height_m", cfg.flight_height);
  num("carrier_frequency_hz", cfg.carrier_frequency);
  db("ref_channel_gain_db", cfg.ref_channel_gain);
  dbm("ue_tx_power_dbm", cfg.ue_tx_power);
  dbm("uav_max_power_dbm", cfg.uav_max_power);
  dbm("noise_dl_dbm", cfg.noise_dl);
  dbm("noise_ul_dbm", cfg.noise_ul);
  dbm("noise_sens_dbm", cfg.noise_sens);
  db("sinr_th_dl_db", cfg.sinr_th_dl);
  db("sinr_th_ul_db", cfg.sinr_th_ul);
  db("sinr_th_sens_db", cfg.sinr_th_sens);
  num("processing_gain", cfg.processing_gain);
  num("period_s", cfg.period);
  integer("slot_count", cfg.slot_count);
  num("slot_len_s", cfg.slot_len);
  num("max_speed_mps", cfg.max_speed);
  num("overlap_fraction", cfg.overlap_fraction);
  if (j.contains("start")) cfg.start = detail::vec2_from_json(j.at("start"), "start");
  if (j.contains("finish")) cfg.finish = detail::vec2_from_json(j.at("finish"), "finish");
  integer("ue_count", cfg.ue_count);
  if (j.contains("rng_seed")) cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  if (j.contains("ue_positions"))
    cfg.ue_positions = detail::vec2_list_from_json(j.at("ue_positions"), "ue_positions");
  if (j.contains("sensing_positions"))
    cfg.sensing_positions =
        detail::vec2_list_from_json(j.at("sensing_positions"), "sensing_positions");
  cfg.rcs.clear();
  if (j.contains("rcs")) {
    for (const auto& e : j.at("rcs")) {
      if (!e.is_array() || e.size() != 2)
        throw std::invalid_argument("config: rcs entries must be [re, im] pairs");
      cfg.rcs.push_back(cd(e[0].get<double>(), e[1].get<double>()));
    }
  }
  return cfg;
}

inline nlohmann::json spec_to_json(const ExperimentSpec& spec) {
  nlohmann::json j;
  j["scenario"] = scenario_to_json(spec.scenario);
  nlohmann::json e;
  e["policy"] = policy_label(spec.policy);
  e["trajectory"] = trajectory_label(spec.trajectory);
  e["beamforming"] = beamforming_label(spec.beamforming);
  if (!spec.sweep_axis.empty()) {
    e["sweep"] = {{"axis", spec.sweep_axis}, {"values", spec.sweep_values}};
  }
  e["out_dir"] = spec.out_dir;
  e["seed"] = spec.seed;
  e["dump_beamformers"] = spec.dump_beamformers;
  if (!spec.sensing_trace.empty()) e["sensing_trace"] = spec.sensing_trace;
  j["experiment"] = e;
  return j;
}

inline ExperimentSpec spec_from_json(const nlohmann::json& j) {
  detail::expect_keys(j, {"scenario", "experiment"}, "top level");
  ExperimentSpec spec;
  if (j.contains("scenario")) spec.scenario = scenario_from_json(j.at("scenario"));
  if (j.contains("experiment")) {
    const nlohmann::json& e = j.at("experiment");
    detail::expect_keys(e,
                        {"policy", "trajectory", "beamforming", "sweep", "out_dir", "seed",
                         "dump_beamformers", "sensing_trace"},
                        "experiment");
    if (e.contains("policy")) spec.policy = parse_policy(e.at("policy").get<std::string>());
    if (e.contains("trajectory"))
      spec.trajectory = parse_trajectory_mode(e.at("trajectory").get<std::string>());
    if (e.contains("beamforming"))
      spec.beamforming = parse_beamforming_mode(e.at("beamforming").get<std::string>());
    if (e.contains("sweep")) {
      detail::expect_keys(e.at("sweep"), {"axis", "values"}, "sweep");
      spec.sweep_axis = e.at("sweep").at("axis").get<std::string>();
      spec.sweep_values = e.at("sweep").at("values").get<std::vector<double>>();
    }
    if (e.contains("out_dir")) spec.out_dir = e.at("out_dir").get<std::string>();
    if (e.contains("seed")) spec.seed = e.at("seed").get<std::uint64_t>();
    if (e.contains("dump_beamformers"))
      spec.dump_beamformers = e.at("dump_beamformers").get<bool>();
    if (e.contains("sensing_trace"))
      spec.sensing_trace = e.at("sensing_trace").get<std::vector<double>>();
  }
  return spec;
}

inline ExperimentSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: parse error in '" + path + "': " + e.what());
  }
  try {
    return spec_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: bad field in '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Sweeps.

struct SweepPoint {
  double axis_value = 0.0;
  ScenarioConfig scenario;
  SensingPolicySpec policy;
};

namespace detail {

inline Vec2 snap_to_center(const GridMap& grid, const Vec2& p) {
  int col = std::min(grid.cols - 1, std::max(0, static_cast<int>(p.x / grid.pitch_x)));
  int row = std::min(grid.rows - 1, std::max(0, static_cast<int>(p.y / grid.pitch_y)));
  return grid.center(grid.index(col, row));
}

inline int require_integral(double v, const char* axis) {
  double r = std::round(v);
  if (std::abs(v - r) > 1e-9 || r < 1.0)
    throw std::invalid_argument(std::string("sweep: ") + axis +
                                " values must be positive integers");
  return static_cast<int>(r);
}

}  // namespace detail

// Expands the sweep into per-point scenarios. Grid sweeps rescale the
// per-slot speed to the new diagonal pitch and re-snap the endpoints so the
// flight remains well posed at every grid size.
inline std::vector<SweepPoint> expand_sweep(const ExperimentSpec& spec) {
  std::vector<SweepPoint> points;
  if (spec.sweep_axis.empty()) {
    points.push_back(SweepPoint{0.0, spec.scenario, spec.policy});
    return points;
  }
  if (spec.sweep_values.empty())
    throw std::invalid_argument("sweep: value list must not be empty");
  for (double v : spec.sweep_values) {
    SweepPoint pt{v, spec.scenario, spec.policy};
    ScenarioConfig& sc = pt.scenario;
    if (spec.sweep_axis == "period") {
      if (!(v > 0.0)) throw std::invalid_argument("sweep: period values must be positive");
      double slots = v / sc.slot_len;
      if (std::abs(slots - std::round(slots)) > 1e-9)
        throw std::invalid_argument("sweep: period must be a multiple of the slot length");
      sc.period = v;
      sc.slot_count = static_cast<int>(std::round(slots));
    } else if (spec.sweep_axis == "grid") {
      int g = detail::require_integral(v, "grid");
      sc.grid_cols = g;
      sc.grid_rows = g;
      sc.max_speed = std::hypot(sc.area_width / g, sc.area_height / g) / sc.slot_len;
      GridMap grid = build_grid(sc);
      sc.start = detail::snap_to_center(grid, spec.scenario.start);
      sc.finish = detail::snap_to_center(grid, spec.scenario.finish);
    } else if (spec.sweep_axis == "antennas") {
      sc.antenna_count = detail::require_integral(v, "antennas");
    } else if (spec.sweep_axis == "policy") {
      pt.policy = policy_from_index(detail::require_integral(v, "policy"));
    } else {
      throw std::invalid_argument("sweep: unknown axis '" + spec.sweep_axis +
                                  "' (expected period|grid|antennas|policy)");
    }
    points.push_back(pt);
  }
  return points;
}

// ---------------------------------------------------------------------------
// Committed-path evaluation and the run driver.

inline std::uint64_t derive_seed(std::uint64_t seed, std::size_t index) {
  return seed ^ (0x9e3779b97f4a7c15ull * (static_cast<std::uint64_t>(index) + 1));
}

// Prices an already committed waypoint sequence under a beamforming mode.
// The optimized mode replays the planner's own designs (cache hits when the
// table is shared); the reference modes rebuild each slot's beamformers and
// audit them, crediting throughput only to slots that meet every floor.
inline TrajectoryResult evaluate_committed(const std::vector<int>& cells,
                                           const SensingSchedule& schedule,
                                           const ScenarioConfig& cfg, const GridMap& grid,
                                           BeamformingMode mode, std::uint64_t seed,
                                           const OptimizeOptions& opt, const SlotEvaluator& eval,
                                           MemoTable* memo, bool keep_beamformers = false) {
  if (mode == BeamformingMode::optimized)
    return detail::assemble(cells, schedule, grid, eval, memo, keep_beamformers);
  TrajectoryResult out;
  out.cells = cells;
  Rng rng(seed);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    int slot = static_cast<int>(i) + 1;
    bool sensing = schedule.sensing_at(slot);
    ChannelSet ch = make_channels(grid.center(cells[i]), cfg);
    BaselineMode bm = mode == BeamformingMode::equal_power ? BaselineMode::equal_power
                                                           : BaselineMode::random_direction;
    LiftedBeamformerSet set = baseline_beamformers(bm, ch, cfg, sensing, rng, opt);
    ConstraintAudit audit = check_constraints(set, ch, cfg, sensing);
    LinkReport rep = link_report(set, ch, cfg, sensing, schedule.timing[i]);
    out.waypoints.push_back(grid.center(cells[i]));
    out.slot_feasible.push_back(audit.feasible);
    out.slot_throughput.push_back(audit.feasible ? rep.throughput : 0.0);
    if (keep_beamformers) out.beamformers.push_back(set);
    out.average_throughput += out.slot_throughput.back();
  }
  out.average_throughput /= static_cast<double>(cells.size());
  return out;
}

struct SchemeSummary {
  std::string scheme;
  double average_throughput = 0.0;
};

struct SweepOutcome {
  double axis_value = 0.0;
  std::string policy;
  ScenarioConfig scenario;
  SensingSchedule schedule;
  std::vector<SchemeSummary> rows;  // opt-outer, opt-greedy, fixed-straight
  TrajectoryResult committed;       // the spec's selected trajectory mode
};

struct RunOutcome {
  int exit_code = 0;
  std::string message;
  std::vector<SweepOutcome> points;
};

namespace detail {

inline int thread_budget(std::size_t jobs) {
  unsigned hw = std::thread::hardware_concurrency();
  int cap = hw == 0 ? 1 : static_cast<int>(hw);
  if (const char* env = std::getenv("ISAC_THREADS")) {
    try {
      cap = std::max(1, std::stoi(env));
    } catch (const std::exception&) {
      throw std::invalid_argument("ISAC_THREADS must be a positive integer");
    }
  }
  return std::min<int>(cap, static_cast<int>(jobs));
}

inline SweepOutcome run_point(const ExperimentSpec& spec, const SweepPoint& pt,
                              std::size_t index) {
  SweepOutcome out;
  out.axis_value = pt.axis_value;
  out.policy = policy_label(pt.policy);
  out.scenario = pt.scenario;
  validate_config(out.scenario);
  GridMap grid = build_grid(out.scenario);
  out.schedule = make_policy_schedule(pt.policy, out.scenario, spec.sensing_trace);

  MemoTable memo;
  PlanOptions po;
  po.optimize = spec.optimize;
  po.shared_memo = &memo;
  TrajectoryResult planned = plan_trajectory(out.scenario, out.schedule, grid, po);
  TrajectoryResult greedy = greedy_trajectory(out.scenario, out.schedule, grid, po);
  TrajectoryResult straight = fixed_straight_trajectory(out.scenario, out.schedule, grid, po);

  SlotEvaluator eval = make_slot_evaluator(out.scenario, grid, spec.optimize);
  std::uint64_t seed = derive_seed(spec.seed, index);
  auto price = [&](const TrajectoryResult& committed) {
    return evaluate_committed(committed.cells, out.schedule, out.scenario, grid,
                              spec.beamforming, seed, spec.optimize, eval, &memo,
                              spec.dump_beamformers);
  };
  TrajectoryResult source[3] = {planned, greedy, straight};
  const TrajectoryMode modes[3] = {TrajectoryMode::opt_outer, TrajectoryMode::opt_greedy,
                                   TrajectoryMode::fixed_straight};
  for (int s = 0; s < 3; ++s) {
    TrajectoryResult priced = price(source[s]);
    out.rows.push_back(SchemeSummary{trajectory_label(modes[s]), priced.average_throughput});
    if (modes[s] == spec.trajectory) out.committed = priced;
  }
  return out;
}

inline std::string fmt12(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

// Executes every sweep point (concurrently up to the ISAC_THREADS cap) and
// writes trajectory.csv, summary.csv and convergence.csv under out_dir.
// Exit code 0 on success, 2 when the configuration itself is at fault,
// 1 on an internal failure.
inline RunOutcome run(const ExperimentSpec& spec) {
  RunOutcome out;
  try {
    ExperimentSpec base = spec;
    validate_config(base.scenario);  // realize UE positions once for all points
    std::vector<SweepPoint> points = expand_sweep(base);
    out.points.resize(points.size());

    std::vector<std::exception_ptr> errors(points.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= points.size()) return;
        try {
          out.points[i] = detail::run_point(base, points[i], i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    };
    int threads = detail::thread_budget(points.size());
    if (threads <= 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (std::thread& t : pool) t.join();
    }
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);

    namespace fs = std::filesystem;
    fs::create_directories(spec.out_dir);
    const SweepOutcome& first = out.points.front();

    {
      std::ofstream f(fs::path(spec.out_dir) / "trajectory.csv");
      f << "slot,x,y,psi,slot_throughput,feasible\n";
      const TrajectoryResult& tr = first.committed;
      for (std::size_t i = 0; i < tr.cells.size(); ++i)
        f << (i + 1) << ',' << detail::fmt12(tr.waypoints[i].x) << ','
          << detail::fmt12(tr.waypoints[i].y) << ','
          << (first.schedule.sensing_at(static_cast<int>(i) + 1) ? 1 : 0) << ','
          << detail::fmt12(tr.slot_throughput[i]) << ',' << (tr.slot_feasible[i] ? 1 : 0)
          << '\n';
    }
    {
      std::ofstream f(fs::path(spec.out_dir) / "summary.csv");
      f << "axis,value,policy,scheme,beamforming,average_throughput\n";
      std::string axis = spec.sweep_axis.empty() ? "-" : spec.sweep_axis;
      for (const SweepOutcome& pt : out.points)
        for (const SchemeSummary& row : pt.rows)
          f << axis << ',' << detail::fmt12(pt.axis_value) << ',' << pt.policy << ','
            << row.scheme << ',' << beamforming_label(spec.beamforming) << ','
            << detail::fmt12(row.average_throughput) << '\n';
    }
    {
      // Convergence record at two sampled slots of the first point: the
      // first pulse slot and the first quiet slot when both exist.
      std::ofstream f(fs::path(spec.out_dir) / "convergence.csv");
      f << "slot,iteration,objective\n";
      GridMap grid = build_grid(first.scenario);
      std::vector<int> samples;
      for (int n = 1; n <= first.schedule.slot_count() && samples.size() < 2; ++n) {
        bool pulse = first.schedule.sensing_at(n);
        bool want = samples.empty() ? true : pulse != first.schedule.sensing_at(samples[0]);
        if (want) samples.push_back(n);
      }
      for (int slot : samples) {
        ChannelSet ch =
            make_channels(grid.center(first.committed.cells[slot - 1]), first.scenario);
        OptimizeResult res = alternating_optimize(ch, first.scenario,
                                                  first.schedule.sensing_at(slot), spec.optimize);
        for (std::size_t it = 0; it < res.trace.size(); ++it)
          f << slot << ',' << it << ',' << detail::fmt12(res.trace[it]) << '\n';
      }
    }
    if (spec.dump_beamformers) {
      std::ofstream f(fs::path(spec.out_dir) / "beamformers.csv");
      f << "slot,family,index,values\n";
      auto dump = [&](int slot, const char* family, const std::vector<MatC>& mats) {
        for (std::size_t m = 0; m < mats.size(); ++m) {
          f << slot << ',' << family << ',' << m;
          for (Eigen::Index r = 0; r < mats[m].rows(); ++r)
            for (Eigen::Index c = 0; c < mats[m].cols(); ++c)
              f << ',' << detail::fmt12(mats[m](r, c).real()) << ','
                << detail::fmt12(mats[m](r, c).imag());
          f << '\n';
        }
      };
      const TrajectoryResult& tr = first.committed;
      for (std::size_t i = 0; i < tr.beamformers.size(); ++i) {
        int slot = static_cast<int>(i) + 1;
        dump(slot, "W", tr.beamformers[i].W);
        dump(slot, "V", tr.beamformers[i].V);
        dump(slot, "R", tr.beamformers[i].R);
        dump(slot, "U", tr.beamformers[i].U);
      }
    }
  } catch (const std::invalid_argument& e) {
    out.exit_code = 2;
    out.message = e.what();
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.message = e.what();
  }
  return out;
}

}  // namespace aisac
