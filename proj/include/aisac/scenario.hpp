#pragma once

#include <string>
#include <vector>

#include "aisac/common.hpp"

namespace aisac {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline double dist2d(const Vec2& a, const Vec2& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

// All fields are in internal units: meters, seconds, watts, linear gains.
// File-level configs carry dBm/dB for the power and gain fields; the
// experiment layer converts on load/emit.
struct ScenarioConfig {
  double area_width = 1000.0;
  double area_height = 1000.0;
  int grid_cols = 20;
  int grid_rows = 20;

  int antenna_count = 12;
  double flight_height = 100.0;
  double carrier_frequency = 3e9;
  double ref_channel_gain = 1e-4;          // channel power gain at 1 m
  double ue_tx_power = dbm_to_watt(25.0);
  double uav_max_power = dbm_to_watt(37.0);
  double noise_dl = dbm_to_watt(-110.0);
  double noise_ul = dbm_to_watt(-110.0);
  double noise_sens = dbm_to_watt(-110.0);
  double sinr_th_dl = db_to_linear(0.3);
  double sinr_th_ul = db_to_linear(0.3);
  double sinr_th_sens = db_to_linear(3.0);
  double processing_gain = 10.0;

  double period = 20.0;     // total flight time T
  int slot_count = 20;      // N
  double slot_len = 1.0;    // tau
  double max_speed = 50.0 * 1.4142135623730951;
  double overlap_fraction = 0.5;  // share of the uplink half exposed to echoes

  Vec2 start{25.0, 525.0};
  Vec2 finish{975.0, 525.0};
  int ue_count = 6;                      // used when ue_positions is empty
  std::vector<Vec2> ue_positions;        // drawn from rng_seed when empty
  std::vector<Vec2> sensing_positions;
  std::vector<cd> rcs;                   // one reflection coefficient per sensing location

  std::uint64_t rng_seed = 1;
};

// Half-wavelength ULA response for departure/arrival angle theta.
inline VecC steering_vector(double theta, int count) {
  if (count < 1) throw std::invalid_argument("steering_vector: count must be >= 1");
  VecC a(count);
  double c = std::cos(theta);
  for (int q = 0; q < count; ++q)
    a(q) = std::exp(cd(0.0, -kPi * static_cast<double>(q) * c));
  return a;
}

struct ChannelGeometry {
  double distance = 0.0;
  double theta = 0.0;
};

inline ChannelGeometry slant_geometry(const Vec2& uav, const Vec2& ground, double height) {
  ChannelGeometry g;
  g.distance = std::sqrt(height * height + dist2d(uav, ground) * dist2d(uav, ground));
  g.theta = std::acos(height / g.distance);
  return g;
}

// LoS link between the UAV array and a single-antenna UE. The same vector
// serves downlink and uplink.
inline VecC comm_channel(const Vec2& uav, const Vec2& ue, const ScenarioConfig& cfg) {
  if (cfg.flight_height <= 0.0) throw std::invalid_argument("comm_channel: flight height must be positive");
  ChannelGeometry g = slant_geometry(uav, ue, cfg.flight_height);
  return (std::sqrt(cfg.ref_channel_gain) / g.distance) * steering_vector(g.theta, cfg.antenna_count);
}

// Round-trip echo matrix for one sensing location: rank-one, with the
// round-trip delay folded into a global phase.
inline MatC sensing_channel(const Vec2& uav, const Vec2& target, cd rcs, const ScenarioConfig& cfg) {
  if (cfg.flight_height <= 0.0) throw std::invalid_argument("sensing_channel: flight height must be positive");
  ChannelGeometry g = slant_geometry(uav, target, cfg.flight_height);
  double delay = 2.0 * g.distance / kSpeedOfLight;
  cd alpha = rcs / (2.0 * g.distance) * std::exp(cd(0.0, -2.0 * kPi * cfg.carrier_frequency * delay));
  VecC b = steering_vector(g.theta, cfg.antenna_count);
  return alpha * (b * b.adjoint());
}

struct ChannelSet {
  Vec2 uav;
  std::vector<VecC> ue;     // K entries
  std::vector<MatC> sens;   // J entries
  int ue_count() const { return static_cast<int>(ue.size()); }
  int sens_count() const { return static_cast<int>(sens.size()); }
};

inline ChannelSet make_channels(const Vec2& uav, const ScenarioConfig& cfg) {
  if (cfg.rcs.size() != cfg.sensing_positions.size())
    throw std::invalid_argument("make_channels: rcs count must match sensing location count");
  ChannelSet ch;
  ch.uav = uav;
  ch.ue.reserve(cfg.ue_positions.size());
  for (const Vec2& p : cfg.ue_positions) ch.ue.push_back(comm_channel(uav, p, cfg));
  ch.sens.reserve(cfg.sensing_positions.size());
  for (std::size_t j = 0; j < cfg.sensing_positions.size(); ++j)
    ch.sens.push_back(sensing_channel(uav, cfg.sensing_positions[j], cfg.rcs[j], cfg));
  return ch;
}

// Uniform rectangular grid over the service area. Cells are indexed row-major;
// adjacency is the 8-neighbor ring plus hover, pruned by the per-slot range.
struct GridMap {
  int cols = 0;
  int rows = 0;
  double pitch_x = 0.0;
  double pitch_y = 0.0;
  std::vector<std::vector<int>> adjacency;  // includes the cell itself

  int cell_count() const { return cols * rows; }
  int index(int col, int row) const { return row * cols + col; }
  int col_of(int cell) const { return cell % cols; }
  int row_of(int cell) const { return cell / cols; }
  Vec2 center(int cell) const {
    return Vec2{(col_of(cell) + 0.5) * pitch_x, (row_of(cell) + 0.5) * pitch_y};
  }

  // Cell whose center coincides with p, or -1.
  int cell_at(const Vec2& p, double tol = 1e-6) const {
    for (int c = 0; c < cell_count(); ++c)
      if (dist2d(center(c), p) <= tol) return c;
    return -1;
  }
};

inline GridMap build_grid(const ScenarioConfig& cfg) {
  if (cfg.area_width <= 0.0 || cfg.area_height <= 0.0)
    throw std::invalid_argument("build_grid: area extents must be positive");
  if (cfg.grid_cols < 1 || cfg.grid_rows < 1)
    throw std::invalid_argument("build_grid: grid counts must be positive");
  if (cfg.max_speed <= 0.0 || cfg.slot_len <= 0.0)
    throw std::invalid_argument("build_grid: max speed and slot length must be positive");

  GridMap g;
  g.cols = cfg.grid_cols;
  g.rows = cfg.grid_rows;
  g.pitch_x = cfg.area_width / cfg.grid_cols;
  g.pitch_y = cfg.area_height / cfg.grid_rows;

  const double range = cfg.max_speed * cfg.slot_len * (1.0 + 1e-9);
  bool mobile = g.cell_count() == 1;
  if (g.cols > 1 && g.pitch_x <= range) mobile = true;
  if (g.rows > 1 && g.pitch_y <= range) mobile = true;
  if (!mobile)
    throw std::invalid_argument(
        "build_grid: per-slot range " + std::to_string(cfg.max_speed * cfg.slot_len) +
        " m cannot cover the cell pitch; the vehicle would be pinned to one cell");

  g.adjacency.resize(g.cell_count());
  for (int r = 0; r < g.rows; ++r) {
    for (int c = 0; c < g.cols; ++c) {
      int self = g.index(c, r);
      auto& adj = g.adjacency[self];
      adj.push_back(self);
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) continue;
          int nc = c + dc, nr = r + dr;
          if (nc < 0 || nc >= g.cols || nr < 0 || nr >= g.rows) continue;
          double step = std::hypot(dc * g.pitch_x, dr * g.pitch_y);
          if (step <= range) adj.push_back(g.index(nc, nr));
        }
      }
    }
  }
  return g;
}

// Checks the cross-field arithmetic of a config and fills missing UE
// positions from the seed. Throws std::invalid_argument with a diagnostic
// naming the offending field.
inline void validate_config(ScenarioConfig& cfg) {
  if (cfg.antenna_count < 1) throw std::invalid_argument("config: antenna_count must be >= 1");
  if (cfg.slot_count < 1) throw std::invalid_argument("config: slot_count must be >= 1");
  if (std::abs(cfg.slot_len * cfg.slot_count - cfg.period) > 1e-9 * std::max(1.0, cfg.period))
    throw std::invalid_argument("config: slot_len * slot_count must equal period");
  if (cfg.overlap_fraction < 0.0 || cfg.overlap_fraction > 1.0)
    throw std::invalid_argument("config: overlap_fraction must lie in [0, 1]");
  if (cfg.rcs.empty() && !cfg.sensing_positions.empty())
    cfg.rcs.assign(cfg.sensing_positions.size(), cd(1.0, 0.0));
  if (cfg.rcs.size() != cfg.sensing_positions.size())
    throw std::invalid_argument("config: rcs count must match sensing_positions count");

  GridMap grid = build_grid(cfg);
  auto on_center = [&](const Vec2& p, const char* name) {
    if (grid.cell_at(p, 1e-6 * std::max(grid.pitch_x, grid.pitch_y)) < 0) {
      int col = std::min(grid.cols - 1, std::max(0, static_cast<int>(p.x / grid.pitch_x)));
      int row = std::min(grid.rows - 1, std::max(0, static_cast<int>(p.y / grid.pitch_y)));
      Vec2 s = grid.center(grid.index(col, row));
      throw std::invalid_argument(std::string("config: ") + name +
                                  " must coincide with a grid cell center; nearest is (" +
                                  std::to_string(s.x) + ", " + std::to_string(s.y) + ")");
    }
  };
  on_center(cfg.start, "start");
  on_center(cfg.finish, "finish");

  if (cfg.ue_positions.empty()) {
    if (cfg.ue_count < 0) throw std::invalid_argument("config: ue_count must be >= 0");
    Rng rng(cfg.rng_seed);
    for (int k = 0; k < cfg.ue_count; ++k)
      cfg.ue_positions.push_back(Vec2{rng.uniform(0.0, cfg.area_width), rng.uniform(0.0, cfg.area_height)});
  }
  cfg.ue_count = static_cast<int>(cfg.ue_positions.size());
  for (const Vec2& p : cfg.ue_positions)
    if (p.x < 0.0 || p.x > cfg.area_width || p.y < 0.0 || p.y > cfg.area_height)
      throw std::invalid_argument("config: ue_positions must lie inside the area");
}

}  // namespace aisac
