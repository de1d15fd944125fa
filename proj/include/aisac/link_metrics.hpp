#pragma once

#include <string>
#include <vector>

#include "aisac/beamformer_set.hpp"
#include "aisac/scenario.hpp"
#include "aisac/schedule.hpp"

namespace aisac {

namespace detail {

inline double quad_form(const VecC& h, const MatC& X) {
  return std::real(cd(h.adjoint() * X * h));
}

inline double trace_prod(const MatC& a, const MatC& b) {
  return std::real((a * b).trace());
}

// Sum of downlink-side covariances reflected by the sensing locations.
inline MatC reflected_covariance(const LiftedBeamformerSet& set) {
  MatC sum;
  bool first = true;
  for (const MatC& w : set.W) {
    if (first) { sum = w; first = false; } else { sum += w; }
  }
  for (const MatC& r : set.R) {
    if (first) { sum = r; first = false; } else { sum += r; }
  }
  if (first) throw std::invalid_argument("reflected_covariance: empty beamformer set");
  return sum;
}

// Slack of `value >= bound` relative to the bound; degenerate bounds fall
// back to the absolute gap so zero thresholds stay well defined.
inline double relative_slack(double value, double bound) {
  if (bound > 0.0) return (value - bound) / bound;
  return value >= bound ? 0.0 : value - bound;
}

inline void check_sizes(const LiftedBeamformerSet& set, const ChannelSet& ch) {
  if (set.ue_count() != ch.ue_count())
    throw std::invalid_argument("link metrics: beamformer/channel UE counts differ");
  if (!set.R.empty() && static_cast<int>(set.R.size()) != ch.sens_count())
    throw std::invalid_argument("link metrics: sensing beamformer/channel counts differ");
  if (set.U.size() != set.R.size())
    throw std::invalid_argument("link metrics: sensing transmit/receive counts differ");
}

}  // namespace detail

inline double downlink_sinr(const LiftedBeamformerSet& set, const ChannelSet& ch,
                            const ScenarioConfig& cfg, bool sensing_slot, int k) {
  detail::check_sizes(set, ch);
  const VecC& h = ch.ue.at(k);
  double num = detail::quad_form(h, set.W[k]);
  double den = cfg.noise_dl;
  for (int i = 0; i < set.ue_count(); ++i)
    if (i != k) den += detail::quad_form(h, set.W[i]);
  if (sensing_slot)
    for (const MatC& r : set.R) den += detail::quad_form(h, r);
  return num / den;
}

inline double uplink_sinr(const LiftedBeamformerSet& set, const ChannelSet& ch,
                          const ScenarioConfig& cfg, bool echo_exposed, int k) {
  detail::check_sizes(set, ch);
  const MatC& V = set.V.at(k);
  double num = cfg.ue_tx_power * detail::quad_form(ch.ue.at(k), V);
  double den = cfg.noise_ul;
  for (int i = 0; i < set.ue_count(); ++i)
    if (i != k) den += cfg.ue_tx_power * detail::quad_form(ch.ue[i], V);
  if (echo_exposed) {
    MatC cov = detail::reflected_covariance(set);
    for (const MatC& g : ch.sens) den += detail::trace_prod(g.adjoint() * V * g, cov);
  }
  return num / den;
}

// Reflected power at location j captured by its receive beamformer; the
// clutter entries i != j feed the sensing interference.
inline double sensing_power_term(const LiftedBeamformerSet& set, const ChannelSet& ch,
                                 int j, int i) {
  MatC cov = set.R.at(i);
  for (const MatC& w : set.W) cov += w;
  const MatC& g = ch.sens.at(i);
  return detail::trace_prod(set.U.at(j), g * cov * g.adjoint());
}

inline double sensing_sinr(const LiftedBeamformerSet& set, const ChannelSet& ch,
                           const ScenarioConfig& cfg, int j) {
  detail::check_sizes(set, ch);
  if (set.R.empty() || set.U.empty())
    throw std::invalid_argument("sensing_sinr: slot carries no sensing beamformers");
  double num = cfg.processing_gain * sensing_power_term(set, ch, j, j);
  double den = cfg.noise_sens;
  for (int i = 0; i < set.sens_count(); ++i)
    if (i != j) den += sensing_power_term(set, ch, j, i);
  return num / den;
}

// Rates in bit/s/Hz. Each half-slot is the normalization base, so a UE
// occupying the full half at SINR g contributes log2(1+g).
inline double downlink_rate(double sinr, const SlotTiming& t, double slot_len) {
  return t.t_dl / (slot_len / 2.0) * std::log2(1.0 + sinr);
}

inline double uplink_rate(double sinr_echo, double sinr_clear, const SlotTiming& t,
                          double slot_len) {
  double half = slot_len / 2.0;
  double r = t.t_ul2 / half * std::log2(1.0 + sinr_clear);
  if (t.t_ul1 > 0.0) r += t.t_ul1 / half * std::log2(1.0 + sinr_echo);
  return r;
}

struct ConstraintSlack {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  double slack_rel = 0.0;  // negative when violated
  bool applicable = true;
};

struct ConstraintAudit {
  std::vector<ConstraintSlack> entries;
  bool feasible = true;
  double worst_slack = 0.0;
};

struct LinkReport {
  std::vector<double> dl_sinr;
  std::vector<double> ul_sinr_echo;   // denominator includes reflected downlink power
  std::vector<double> ul_sinr_clear;  // echo-free portion of the uplink half
  std::vector<double> sens_sinr;
  std::vector<double> dl_rate;
  std::vector<double> ul_rate;
  double throughput = 0.0;  // slot sum over UEs, bit/s/Hz
  double power_used = 0.0;
  ConstraintAudit audit;
};

inline double transmit_power(const LiftedBeamformerSet& set, bool sensing_slot) {
  double p = 0.0;
  for (const MatC& w : set.W) p += std::real(w.trace());
  if (sensing_slot)
    for (const MatC& r : set.R) p += std::real(r.trace());
  return p;
}

inline ConstraintAudit check_constraints(const LiftedBeamformerSet& set, const ChannelSet& ch,
                                         const ScenarioConfig& cfg, bool sensing_slot,
                                         double tolerance = 1e-6) {
  detail::check_sizes(set, ch);
  ConstraintAudit audit;
  auto add = [&](const std::string& name, double value, double bound, double rel) {
    audit.entries.push_back(ConstraintSlack{name, value, bound, rel, true});
  };

  for (int k = 0; k < set.ue_count(); ++k) {
    double g = downlink_sinr(set, ch, cfg, sensing_slot, k);
    add("dl_sinr[" + std::to_string(k) + "]", g, cfg.sinr_th_dl,
        detail::relative_slack(g, cfg.sinr_th_dl));
    double ge = uplink_sinr(set, ch, cfg, sensing_slot, k);
    double gc = uplink_sinr(set, ch, cfg, false, k);
    if (sensing_slot)
      add("ul_sinr_echo[" + std::to_string(k) + "]", ge, cfg.sinr_th_ul,
          detail::relative_slack(ge, cfg.sinr_th_ul));
    add("ul_sinr_clear[" + std::to_string(k) + "]", gc, cfg.sinr_th_ul,
        detail::relative_slack(gc, cfg.sinr_th_ul));
  }
  if (sensing_slot) {
    for (int j = 0; j < set.sens_count(); ++j) {
      double g = sensing_sinr(set, ch, cfg, j);
      add("sens_sinr[" + std::to_string(j) + "]", g, cfg.sinr_th_sens,
          detail::relative_slack(g, cfg.sinr_th_sens));
    }
  }

  double used = transmit_power(set, sensing_slot);
  add("power", used, cfg.uav_max_power,
      cfg.uav_max_power > 0.0 ? (cfg.uav_max_power - used) / cfg.uav_max_power
                              : (used <= 0.0 ? 0.0 : -used));

  auto psd_and_trace = [&](const std::vector<MatC>& mats, const char* label, bool unit_trace) {
    for (std::size_t i = 0; i < mats.size(); ++i) {
      Eigen::SelfAdjointEigenSolver<MatC> es(mats[i], Eigen::EigenvaluesOnly);
      double lmin = es.eigenvalues().minCoeff();
      double lmax = std::max(es.eigenvalues().maxCoeff(), 1e-300);
      add(std::string(label) + "_psd[" + std::to_string(i) + "]", lmin, 0.0, lmin / lmax);
      if (unit_trace) {
        double tr = std::real(mats[i].trace());
        add(std::string(label) + "_trace[" + std::to_string(i) + "]", tr, 1.0, -std::abs(tr - 1.0));
      }
    }
  };
  psd_and_trace(set.W, "W", false);
  psd_and_trace(set.V, "V", true);
  if (sensing_slot) {
    psd_and_trace(set.R, "R", false);
    psd_and_trace(set.U, "U", true);
  }

  audit.worst_slack = 0.0;
  for (const ConstraintSlack& e : audit.entries) audit.worst_slack = std::min(audit.worst_slack, e.slack_rel);
  audit.feasible = audit.worst_slack >= -tolerance;
  return audit;
}

inline LinkReport link_report(const LiftedBeamformerSet& set, const ChannelSet& ch,
                              const ScenarioConfig& cfg, bool sensing_slot,
                              const SlotTiming& timing) {
  detail::check_sizes(set, ch);
  LinkReport rep;
  for (int k = 0; k < set.ue_count(); ++k) {
    rep.dl_sinr.push_back(downlink_sinr(set, ch, cfg, sensing_slot, k));
    rep.ul_sinr_echo.push_back(sensing_slot ? uplink_sinr(set, ch, cfg, true, k) : 0.0);
    rep.ul_sinr_clear.push_back(uplink_sinr(set, ch, cfg, false, k));
    rep.dl_rate.push_back(downlink_rate(rep.dl_sinr.back(), timing, cfg.slot_len));
    rep.ul_rate.push_back(
        uplink_rate(rep.ul_sinr_echo.back(), rep.ul_sinr_clear.back(), timing, cfg.slot_len));
    rep.throughput += rep.dl_rate.back() + rep.ul_rate.back();
  }
  if (sensing_slot)
    for (int j = 0; j < set.sens_count(); ++j)
      rep.sens_sinr.push_back(sensing_sinr(set, ch, cfg, j));
  rep.power_used = transmit_power(set, sensing_slot);
  rep.audit = check_constraints(set, ch, cfg, sensing_slot);
  return rep;
}

}  // namespace aisac
