#pragma once

#include <algorithm>
#include <vector>

#include "aisac/common.hpp"

namespace aisac {

// Split of one slot: first half downlink, second half uplink. When the slot
// carries a sensing pulse, the leading share of the uplink half overlaps with
// the returning echoes.
struct SlotTiming {
  double t_dl = 0.0;
  double t_ul1 = 0.0;  // uplink portion exposed to echoes
  double t_ul2 = 0.0;  // echo-free uplink portion
};

inline SlotTiming slot_timing(bool sensing, double slot_len, double overlap_fraction) {
  SlotTiming t;
  t.t_dl = slot_len / 2.0;
  t.t_ul1 = sensing ? overlap_fraction * slot_len / 2.0 : 0.0;
  t.t_ul2 = slot_len / 2.0 - t.t_ul1;
  return t;
}

struct AisacPolicy {
  double threshold = 0.1;  // variation ratio at which the interval stops growing
  int delta0 = 1;
  int delta_min = 1;
  int delta_max = 8;
};

// Relative change between consecutive sensed parameter values.
inline double variation_ratio(double prev, double cur) {
  if (!(prev > 0.0)) throw std::invalid_argument("variation_ratio: previous value must be positive");
  return std::abs(cur - prev) / prev;
}

// Doubles the interval while the sensed parameter is quiet, halves it
// (rounding up) once it moves, both clamped to the policy bounds.
inline int next_interval(int current, double ratio, const AisacPolicy& pol) {
  if (current < 1) throw std::invalid_argument("next_interval: interval must be >= 1");
  if (ratio <= pol.threshold) return std::min(2 * current, pol.delta_max);
  return std::max((current + 1) / 2, pol.delta_min);
}

struct SensingSchedule {
  std::vector<bool> psi;            // index n-1 <-> slot n
  std::vector<bool> xi;             // echo exposure; equal to psi here
  std::vector<int> sensing_slots;   // 1-based slots carrying a pulse
  std::vector<int> intervals;       // interval sequence as updated at each pulse
  std::vector<SlotTiming> timing;

  int slot_count() const { return static_cast<int>(psi.size()); }
  bool sensing_at(int slot) const { return psi.at(slot - 1); }  // 1-based
};

namespace detail {
inline void fill_timing(SensingSchedule& s, double slot_len, double overlap_fraction) {
  s.xi = s.psi;
  s.timing.clear();
  s.timing.reserve(s.psi.size());
  for (bool p : s.psi) s.timing.push_back(slot_timing(p, slot_len, overlap_fraction));
}
}  // namespace detail

// Schedule driven by a trace of sensed parameter values; the m-th pulse
// consumes the m-th trace entry, so pulses stop once the trace runs out. An
// empty trace yields no sensing at all.
inline SensingSchedule build_schedule(const std::vector<double>& trace, const AisacPolicy& pol,
                                      int slot_count, double slot_len, double overlap_fraction) {
  if (slot_count < 1) throw std::invalid_argument("build_schedule: slot_count must be >= 1");
  if (pol.delta0 < pol.delta_min || pol.delta0 > pol.delta_max || pol.delta_min < 1)
    throw std::invalid_argument("build_schedule: policy interval bounds are inconsistent");

  SensingSchedule s;
  s.psi.assign(slot_count, false);

  if (!trace.empty()) {
    int delta = pol.delta0;
    int slot = 1;
    std::size_t m = 0;
    while (slot <= slot_count && m < trace.size()) {
      s.psi[slot - 1] = true;
      s.sensing_slots.push_back(slot);
      if (m == 0) {
        s.intervals.push_back(delta);
      } else {
        double f = variation_ratio(trace[m - 1], trace[m]);
        delta = next_interval(delta, f, pol);
        s.intervals.push_back(delta);
      }
      slot += delta;
      ++m;
    }
  }

  detail::fill_timing(s, slot_len, overlap_fraction);
  return s;
}

// Pulses at slots 1, 1+k, 1+2k, ...
inline SensingSchedule fixed_schedule(int interval, int slot_count, double slot_len,
                                      double overlap_fraction) {
  if (interval < 1) throw std::invalid_argument("fixed_schedule: interval must be >= 1");
  if (slot_count < 1) throw std::invalid_argument("fixed_schedule: slot_count must be >= 1");
  SensingSchedule s;
  s.psi.assign(slot_count, false);
  for (int slot = 1; slot <= slot_count; slot += interval) {
    s.psi[slot - 1] = true;
    s.sensing_slots.push_back(slot);
    s.intervals.push_back(interval);
  }
  detail::fill_timing(s, slot_len, overlap_fraction);
  return s;
}

inline SensingSchedule no_sensing_schedule(int slot_count, double slot_len,
                                           double overlap_fraction) {
  if (slot_count < 1) throw std::invalid_argument("no_sensing_schedule: slot_count must be >= 1");
  SensingSchedule s;
  s.psi.assign(slot_count, false);
  detail::fill_timing(s, slot_len, overlap_fraction);
  return s;
}

}  // namespace aisac
