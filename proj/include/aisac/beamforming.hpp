#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "aisac/beamformer_set.hpp"
#include "aisac/conic.hpp"
#include "aisac/link_metrics.hpp"
#include "aisac/scenario.hpp"

namespace aisac {

// Airtime weights of the three rate terms, normalized by the half-slot
// length. The downlink half is always fully used; on pulse slots the first
// `overlap_fraction` of the uplink half is exposed to target echoes.
struct SlotWeights {
  double dl = 1.0;
  double ul_echo = 0.0;
  double ul_clear = 1.0;
};

inline SlotWeights slot_weights(bool sensing_slot, double overlap_fraction) {
  SlotWeights w;
  w.ul_echo = sensing_slot ? overlap_fraction : 0.0;
  w.ul_clear = 1.0 - w.ul_echo;
  return w;
}

struct StageContext {
  const ChannelSet& ch;
  const ScenarioConfig& cfg;
  bool sensing = false;
  SlotWeights weights;
};

inline StageContext make_stage_context(const ChannelSet& ch, const ScenarioConfig& cfg,
                                       bool sensing_slot) {
  return StageContext{ch, cfg, sensing_slot, slot_weights(sensing_slot, cfg.overlap_fraction)};
}

namespace detail {

inline MatC outer(const VecC& h) { return h * h.adjoint(); }

// Everything currently on air from the UAV side.
inline MatC onair_covariance(const LiftedBeamformerSet& set, int q) {
  MatC s = MatC::Zero(q, q);
  for (const MatC& w : set.W) s += w;
  for (const MatC& r : set.R) s += r;
  return s;
}

// Coefficient of a transmit covariance inside UE k's echo interference,
// tr(G^H V G X) = tr((sum_j G_j^H V G_j) X).
inline MatC echo_on_transmit(const ChannelSet& ch, const MatC& v) {
  const int q = static_cast<int>(v.rows());
  MatC e = MatC::Zero(q, q);
  for (const MatC& g : ch.sens) e += g.adjoint() * v * g;
  return conic::hermitian_part(e);
}

// Coefficient of the receive beamformer given a fixed on-air covariance,
// tr(G^H V G X) = tr(V (sum_j G_j X G_j^H)).
inline MatC echo_on_receive(const ChannelSet& ch, const MatC& onair) {
  const int q = static_cast<int>(onair.rows());
  MatC e = MatC::Zero(q, q);
  for (const MatC& g : ch.sens) e += g * onair * g.adjoint();
  return conic::hermitian_part(e);
}

// Coefficient of a transmit covariance in the power location j's receiver
// picks up through location i's reflection, tr(U_j G_i X G_i^H).
inline MatC reflected_pickup(const MatC& g_i, const MatC& u_j) {
  return conic::hermitian_part(MatC(g_i.adjoint() * u_j * g_i));
}

inline MatC cross_ue_matrix(const StageContext& c, int k) {
  const int q = c.cfg.antenna_count;
  MatC m = MatC::Zero(q, q);
  for (int i = 0; i < c.ch.ue_count(); ++i)
    if (i != k) m += c.cfg.ue_tx_power * outer(c.ch.ue[i]);
  return m;
}

inline double dl_denominator(const LiftedBeamformerSet& set, const StageContext& c, int k) {
  const VecC& h = c.ch.ue[k];
  double den = c.cfg.noise_dl;
  for (int i = 0; i < set.ue_count(); ++i)
    if (i != k) den += quad_form(h, set.W[i]);
  if (c.sensing)
    for (const MatC& r : set.R) den += quad_form(h, r);
  return den;
}

inline double ul_denominator(const LiftedBeamformerSet& set, const StageContext& c, int k,
                             bool echo_exposed) {
  const MatC& v = set.V[k];
  double den = c.cfg.noise_ul;
  for (int i = 0; i < set.ue_count(); ++i)
    if (i != k) den += c.cfg.ue_tx_power * quad_form(c.ch.ue[i], v);
  if (echo_exposed) {
    MatC onair = onair_covariance(set, c.cfg.antenna_count);
    for (const MatC& g : c.ch.sens) den += trace_prod(MatC(g.adjoint() * v * g), onair);
  }
  return den;
}

// Unit vector spanning a (numerically) rank-one channel matrix.
inline VecC dominant_direction(const MatC& g) {
  Eigen::SelfAdjointEigenSolver<MatC> es(MatC(g.adjoint() * g));
  VecC v = es.eigenvectors().col(g.cols() - 1);
  v.normalize();
  return v;
}

inline VecC dominant_gen_eigvec(const MatC& a, const MatC& b) {
  // Feed the solver trace-normalized copies: the eigenvectors are unchanged
  // and a common power/noise rescaling reproduces them bit for bit.
  double sa = std::real(a.trace()) / a.rows();
  double sb = std::real(b.trace()) / b.rows();
  Eigen::GeneralizedSelfAdjointEigenSolver<MatC> es(sa > 0.0 ? MatC(a / sa) : a,
                                                    sb > 0.0 ? MatC(b / sb) : b);
  VecC v = es.eigenvectors().col(a.rows() - 1);
  v.normalize();
  return v;
}

}  // namespace detail

// Weighted natural-log rate sum the alternating stages maximize. Reported
// throughput in bit/s/Hz is this value divided by ln 2.
inline double internal_objective(const LiftedBeamformerSet& set, const StageContext& c) {
  double f = 0.0;
  for (int k = 0; k < set.ue_count(); ++k) {
    f += c.weights.dl * std::log1p(downlink_sinr(set, c.ch, c.cfg, c.sensing, k));
    if (c.weights.ul_echo > 0.0)
      f += c.weights.ul_echo * std::log1p(uplink_sinr(set, c.ch, c.cfg, true, k));
    if (c.weights.ul_clear > 0.0)
      f += c.weights.ul_clear * std::log1p(uplink_sinr(set, c.ch, c.cfg, false, k));
  }
  return f;
}

// Concave surrogate of t*ln(1+sinr) in the ratio target; tight and
// stationary at ratio = sinr.
inline double rate_surrogate(double t, double ratio, double sinr) {
  return t * (std::log1p(ratio) - ratio + (1.0 + ratio) * sinr / (1.0 + sinr));
}

// Quadratic-transform surrogate of a single ratio num/den with multiplier
// eps; maximized over eps at sqrt(num)/den... the stationary point used by
// the stages is eps = sqrt(num)/den, where the value equals num/den.
inline double ratio_surrogate(double eps, double num, double den) {
  return 2.0 * eps * std::sqrt(num) - eps * eps * den;
}

// Convex upper bound on the product chi*b with tether theta; tight and
// stationary at theta = b/chi.
inline double product_bound(double b, double chi, double theta) {
  return b * b / (2.0 * theta) + theta * chi * chi / 2.0;
}

// Per-stream auxiliaries of the fractional-programming stages. The uplink
// entries track the echo-exposed branch on pulse slots and the plain branch
// otherwise; the plain branch on pulse slots does not depend on the
// transmit covariances and needs no auxiliaries.
struct AuxiliaryState {
  std::vector<double> delta_dl, delta_ul;  // ratio targets of the rate surrogate
  std::vector<double> eps_dl, eps_ul;      // quadratic-transform multipliers
  std::vector<double> eps2_dl, eps2_ul;    // their squares, computed sqrt-free
  std::vector<double> chi_dl, chi_ul;      // SINR epigraph values for the pulse design
  std::vector<double> theta_dl, theta_ul;  // product-bound tethers
};

inline void update_delta(const LiftedBeamformerSet& set, const StageContext& c,
                         AuxiliaryState& aux) {
  const int K = set.ue_count();
  aux.delta_dl.assign(K, 0.0);
  aux.delta_ul.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    aux.delta_dl[k] = downlink_sinr(set, c.ch, c.cfg, c.sensing, k);
    aux.delta_ul[k] = uplink_sinr(set, c.ch, c.cfg, c.sensing, k);
  }
}

inline void update_epsilon(const LiftedBeamformerSet& set, const StageContext& c,
                           AuxiliaryState& aux) {
  const int K = set.ue_count();
  aux.eps_dl.assign(K, 0.0);
  aux.eps_ul.assign(K, 0.0);
  aux.eps2_dl.assign(K, 0.0);
  aux.eps2_ul.assign(K, 0.0);
  const double t_ul = c.sensing ? c.weights.ul_echo : c.weights.ul_clear;
  for (int k = 0; k < K; ++k) {
    double a = detail::quad_form(c.ch.ue[k], set.W[k]);
    double b = detail::dl_denominator(set, c, k);
    // The square is the primary quantity: it is a ratio of same-unit powers,
    // so it tracks common power/noise rescalings exactly where the root
    // would pick up an irrational factor.
    if (c.weights.dl > 0.0 && a + b > 0.0) {
      aux.eps2_dl[k] = (1.0 + aux.delta_dl[k]) * a / (c.weights.dl * (a + b) * (a + b));
      aux.eps_dl[k] = std::sqrt(aux.eps2_dl[k]);
    }
    if (t_ul > 0.0) {
      double au = c.cfg.ue_tx_power * detail::quad_form(c.ch.ue[k], set.V[k]);
      double bu = detail::ul_denominator(set, c, k, c.sensing);
      if (au + bu > 0.0) {
        aux.eps2_ul[k] = (1.0 + aux.delta_ul[k]) * au / (t_ul * (au + bu) * (au + bu));
        aux.eps_ul[k] = std::sqrt(aux.eps2_ul[k]);
      }
    }
  }
}

inline void update_theta(const LiftedBeamformerSet& set, const StageContext& c,
                         AuxiliaryState& aux) {
  const int K = set.ue_count();
  aux.chi_dl.assign(K, 0.0);
  aux.chi_ul.assign(K, 0.0);
  aux.theta_dl.assign(K, 0.0);
  aux.theta_ul.assign(K, 0.0);
  for (int k = 0; k < K; ++k) {
    aux.chi_dl[k] = std::max(downlink_sinr(set, c.ch, c.cfg, c.sensing, k), 1e-9);
    aux.theta_dl[k] = detail::dl_denominator(set, c, k) / aux.chi_dl[k];
    if (c.sensing && c.weights.ul_echo > 0.0) {
      aux.chi_ul[k] = std::max(uplink_sinr(set, c.ch, c.cfg, true, k), 1e-9);
      aux.theta_ul[k] = detail::ul_denominator(set, c, k, true) / aux.chi_ul[k];
    }
  }
}

struct OptimizeOptions {
  double inner_tol = 1e-5;  // relative objective improvement closing a stage loop
  int inner_cap = 30;
  double outer_tol = 1e-4;  // relative improvement closing the alternating loop
  int outer_cap = 20;
  conic::SolveOptions conic{1e-7, 600};
};

struct StageSolve {
  bool solved = false;
  std::vector<MatC> matrices;
};

struct StageTrace {
  std::vector<double> objective;  // true objective after init and each accepted step
};

// Half the power budget on matched-filter downlink covariances, the other
// half (pulse slots) on aligned probing covariances; receive beamformers
// start as matched-filter projectors.
inline LiftedBeamformerSet initial_beamformers(const ChannelSet& ch, const ScenarioConfig& cfg,
                                               bool sensing_slot) {
  const int q = cfg.antenna_count;
  const int K = ch.ue_count();
  LiftedBeamformerSet set;
  for (int k = 0; k < K; ++k) {
    const VecC& h = ch.ue[k];
    double n2 = h.squaredNorm();
    MatC dir = n2 > 0.0 ? MatC((h * h.adjoint()) / n2) : MatC(MatC::Identity(q, q) / q);
    set.W.push_back(cfg.uav_max_power / (2.0 * K) * dir);
    set.V.push_back(dir);
  }
  if (sensing_slot) {
    const int J = ch.sens_count();
    for (int j = 0; j < J; ++j) {
      VecC b = detail::dominant_direction(ch.sens[j]);
      MatC dir = b * b.adjoint();
      set.R.push_back(cfg.uav_max_power / (2.0 * J) * dir);
      set.U.push_back(dir);
    }
  }
  return set;
}

// One downlink-covariance design step at fixed auxiliaries: maximize the
// quadratic-transform surrogate subject to the full constraint set of the
// slot, everything else held fixed.
inline StageSolve solve_dl_transmit(const LiftedBeamformerSet& set, const AuxiliaryState& aux,
                                    const StageContext& c, const OptimizeOptions& opt) {
  const int q = c.cfg.antenna_count;
  const int K = set.ue_count();
  const int J = set.sens_count();
  const double p = c.cfg.ue_tx_power;
  // The program is dimensionless: covariances in units of the power budget,
  // service rows in units of their own threshold-times-noise reference.
  // A common rescaling of powers and noise floors then leaves the program
  // data unchanged, and the barrier sees O(1) numbers at any config scale.
  const double pb = c.cfg.uav_max_power;
  const double ref_dl = c.cfg.noise_dl * std::max(c.cfg.sinr_th_dl, 1.0);
  const double ref_ul = c.cfg.noise_ul * std::max(c.cfg.sinr_th_ul, 1.0);
  const double ref_sens = c.cfg.noise_sens * std::max(c.cfg.sinr_th_sens, 1.0);
  conic::Program prog;
  std::vector<int> wid(K);
  for (int k = 0; k < K; ++k) {
    wid[k] = prog.add_variable(q, "W" + std::to_string(k));
    prog.set_hint(wid[k], set.W[k] / pb);
  }

  MatC onair_r = MatC::Zero(q, q);
  for (const MatC& r : set.R) onair_r += r;
  const MatC eye = MatC::Identity(q, q);

  for (int k = 0; k < K; ++k) {
    const VecC& h = c.ch.ue[k];
    MatC hk = detail::outer(h);
    double e2 = aux.eps2_dl[k];
    if (e2 > 0.0)
      prog.add_sqrt(2.0, conic::expr_trace(
                             wid[k], e2 * c.weights.dl * (1.0 + aux.delta_dl[k]) * pb * hk));
    conic::Expr d;
    d.constant = -e2 * c.weights.dl * (c.cfg.noise_dl + (c.sensing ? detail::quad_form(h, onair_r) : 0.0));
    for (int i = 0; i < K; ++i) d.add(wid[i], -e2 * c.weights.dl * pb * hk);
    prog.add_linear(d);
    // The constant part of the surrogate cancels the plateau at high SINR
    // and keeps the program objective on the scale of the true rate sum,
    // which the relative stopping rules of the solver assume.
    prog.add_constant(c.weights.dl * (std::log1p(aux.delta_dl[k]) - aux.delta_dl[k]));

    if (c.sensing && c.weights.ul_echo > 0.0 && aux.eps2_ul[k] > 0.0) {
      // Only the echo term of the exposed uplink denominator moves with W.
      MatC ek = detail::echo_on_transmit(c.ch, set.V[k]);
      double au = p * detail::quad_form(h, set.V[k]);
      double cross = 0.0;
      for (int i = 0; i < K; ++i)
        if (i != k) cross += p * detail::quad_form(c.ch.ue[i], set.V[k]);
      double eu2 = aux.eps2_ul[k];
      conic::Expr du;
      du.constant = -eu2 * c.weights.ul_echo *
                    (au + cross + detail::trace_prod(ek, onair_r) + c.cfg.noise_ul);
      for (int i = 0; i < K; ++i) du.add(wid[i], -eu2 * c.weights.ul_echo * pb * ek);
      prog.add_linear(du);
      prog.add_constant(c.weights.ul_echo * (std::log1p(aux.delta_ul[k]) - aux.delta_ul[k]) +
                        2.0 * std::sqrt(eu2 * c.weights.ul_echo * (1.0 + aux.delta_ul[k]) * au));
    }
  }

  // Downlink service floors.
  for (int k = 0; k < K; ++k) {
    const VecC& h = c.ch.ue[k];
    MatC hk = detail::outer(h);
    conic::Expr e;
    e.constant = -c.cfg.sinr_th_dl *
                 (c.cfg.noise_dl + (c.sensing ? detail::quad_form(h, onair_r) : 0.0)) / ref_dl;
    for (int i = 0; i < K; ++i)
      e.add(wid[i], (pb / ref_dl) * (i == k ? MatC(hk) : MatC(-c.cfg.sinr_th_dl * hk)));
    prog.require_nonneg(e);
  }
  // Uplink service floors; the echo-free branch is constant in W and only
  // certifies that the incumbent receive design stays admissible.
  for (int k = 0; k < K; ++k) {
    const VecC& h = c.ch.ue[k];
    double au = p * detail::quad_form(h, set.V[k]);
    double cross = 0.0;
    for (int i = 0; i < K; ++i)
      if (i != k) cross += p * detail::quad_form(c.ch.ue[i], set.V[k]);
    prog.require_nonneg(
        conic::expr_const((au - c.cfg.sinr_th_ul * (cross + c.cfg.noise_ul)) / ref_ul));
    if (c.sensing) {
      MatC ek = detail::echo_on_transmit(c.ch, set.V[k]);
      conic::Expr e;
      e.constant = (au - c.cfg.sinr_th_ul *
                             (cross + detail::trace_prod(ek, onair_r) + c.cfg.noise_ul)) /
                   ref_ul;
      for (int i = 0; i < K; ++i) e.add(wid[i], -(c.cfg.sinr_th_ul * pb / ref_ul) * ek);
      prog.require_nonneg(e);
    }
  }
  // Sensing floors: the downlink covariances also illuminate the targets.
  if (c.sensing) {
    for (int j = 0; j < J; ++j) {
      MatC coef = MatC::Zero(q, q);
      double cnst = -c.cfg.sinr_th_sens * c.cfg.noise_sens;
      for (int i = 0; i < J; ++i) {
        MatC pick = detail::reflected_pickup(c.ch.sens[i], set.U[j]);
        double w = (i == j) ? c.cfg.processing_gain : -c.cfg.sinr_th_sens;
        coef += w * pick;
        cnst += w * detail::trace_prod(pick, set.R[i]);
      }
      conic::Expr e;
      e.constant = cnst / ref_sens;
      for (int k = 0; k < K; ++k) e.add(wid[k], (pb / ref_sens) * coef);
      prog.require_nonneg(e);
    }
  }
  // Power budget over everything the UAV transmits this slot.
  {
    conic::Expr e;
    e.constant = 1.0;
    for (const MatC& r : set.R) e.constant -= std::real(r.trace()) / pb;
    for (int k = 0; k < K; ++k) e.add(wid[k], -eye);
    prog.require_nonneg(e);
  }

  conic::Solution sol = conic::solve(prog, opt.conic);
  StageSolve out;
  out.solved = sol.status == conic::Status::optimal;
  if (out.solved)
    for (int k = 0; k < K; ++k) out.matrices.push_back(pb * sol.values[wid[k]]);
  return out;
}

namespace detail {

// Best common rescaling of the downlink covariances by true objective,
// constrained to keep the full slot audit feasible. The quadratic transform
// moves signal power by O(noise) per pass once a stream is noise limited;
// this closes the remaining power headroom in one move.
inline bool rescale_downlink(LiftedBeamformerSet& set, const StageContext& c, double& f) {
  double used = 0.0, fixed = 0.0;
  for (const MatC& w : set.W) used += std::real(w.trace());
  for (const MatC& r : set.R) fixed += std::real(r.trace());
  if (!(used > 0.0)) return false;
  double smax = (c.cfg.uav_max_power - fixed) / used;
  if (!(smax > 0.0)) return false;
  double slo = std::min(0.5, smax);

  LiftedBeamformerSet trial = set;
  auto objective_at = [&](double s) {
    for (int k = 0; k < set.ue_count(); ++k) trial.W[k] = s * set.W[k];
    if (!check_constraints(trial, c.ch, c.cfg, c.sensing).feasible)
      return -std::numeric_limits<double>::infinity();
    return internal_objective(trial, c);
  };

  double best_s = 1.0, best_f = f;
  const int steps = 32;
  for (int i = 0; i <= steps; ++i) {
    double s = i == steps ? smax : slo * std::pow(smax / slo, static_cast<double>(i) / steps);
    double fs = objective_at(s);
    if (fs > best_f) {
      best_f = fs;
      best_s = s;
    }
  }
  if (best_s == 1.0 || best_f <= f) return false;
  for (int k = 0; k < set.ue_count(); ++k) set.W[k] *= best_s;
  f = best_f;
  return true;
}

}  // namespace detail

inline StageTrace dl_transmit_loop(LiftedBeamformerSet& set, const StageContext& c,
                                   const OptimizeOptions& opt) {
  StageTrace tr;
  double f = internal_objective(set, c);
  tr.objective.push_back(f);
  AuxiliaryState aux;
  for (int it = 0; it < opt.inner_cap; ++it) {
    double before = f;
    update_delta(set, c, aux);
    update_epsilon(set, c, aux);
    StageSolve s = solve_dl_transmit(set, aux, c, opt);
    if (s.solved) {
      std::vector<MatC> keep = std::move(set.W);
      set.W = std::move(s.matrices);
      double fn = internal_objective(set, c);
      // Gains below the loop resolution are rejected: near a noise-limited
      // optimum the surrogate is flat in the beam directions and would trade
      // the incumbent direction for nothing.
      if (fn > f + opt.inner_tol * std::max(1.0, std::abs(f))) {
        f = fn;
        tr.objective.push_back(f);
      } else {
        set.W = std::move(keep);
      }
    }
    if (detail::rescale_downlink(set, c, f)) tr.objective.push_back(f);
    if (f - before <= opt.inner_tol * std::max(1.0, std::abs(before))) break;
  }
  return tr;
}

// Receive combiners decouple per UE: each V_k maximizes its own weighted
// rate pair over the unit-trace PSD set, with the service floors enforced.
inline StageSolve solve_ul_receive(const LiftedBeamformerSet& set, const StageContext& c,
                                   const OptimizeOptions& opt) {
  const int q = c.cfg.antenna_count;
  const int K = set.ue_count();
  const double p = c.cfg.ue_tx_power;
  const MatC eye = MatC::Identity(q, q);
  StageSolve out;
  out.solved = true;

  struct Branch {
    double weight;
    MatC m;  // denominator matrix excluding noise
  };

  MatC onair = detail::onair_covariance(set, q);
  for (int k = 0; k < K; ++k) {
    const VecC& h = c.ch.ue[k];
    MatC hk = detail::outer(h);
    MatC cross = detail::cross_ue_matrix(c, k);
    std::vector<Branch> branches;
    if (c.sensing) {
      branches.push_back({c.weights.ul_echo, cross + detail::echo_on_receive(c.ch, onair)});
      branches.push_back({c.weights.ul_clear, cross});
    } else {
      branches.push_back({c.weights.ul_clear, cross});
    }

    auto piece = [&](const MatC& v) {
      double val = 0.0;
      for (const Branch& b : branches) {
        if (b.weight <= 0.0) continue;
        double num = p * detail::quad_form(h, v);
        double den = detail::trace_prod(b.m, v) + c.cfg.noise_ul;
        val += b.weight * std::log1p(num / den);
      }
      return val;
    };

    auto admissible = [&](const MatC& v) {
      for (const Branch& b : branches) {
        double num = p * detail::quad_form(h, v);
        double den = detail::trace_prod(b.m, v) + c.cfg.noise_ul;
        if (detail::relative_slack(num / den, c.cfg.sinr_th_ul) < -1e-9) return false;
      }
      return true;
    };

    MatC v = set.V[k];
    double fk = piece(v);
    // Each branch alone peaks at its MVDR combiner; offer those directly.
    // They cross nine-decade denominator drops the incumbent-anchored
    // surrogate cannot traverse.
    int active = 0;
    for (const Branch& b : branches) {
      if (b.weight <= 0.0) continue;
      ++active;
      VecC d = detail::dominant_gen_eigvec(MatC(p * hk),
                                           MatC(b.m + c.cfg.noise_ul * eye));
      MatC vb = detail::outer(d);
      double fb = piece(vb);
      if (fb > fk && admissible(vb)) {
        v = vb;
        fk = fb;
      }
    }

    MatC s1hint(1, 1), s2hint(1, 1), chihint(1, 1);
    s1hint(0, 0) = cd(0.501 * 1.002, 0.0);
    s2hint(0, 0) = cd(0.995 * 0.995 / 2.0 * 1.002, 0.0);
    chihint(0, 0) = cd(0.995, 0.0);
    for (int it = 0; active > 1 && it < opt.inner_cap; ++it) {
      conic::Program prog;
      int vid = prog.add_variable(q, "V" + std::to_string(k));
      prog.set_hint(vid, v);
      for (const Branch& b : branches) {
        if (b.weight <= 0.0) continue;
        double a0 = p * detail::quad_form(h, v);
        double b0 = detail::trace_prod(b.m, v) + c.cfg.noise_ul;
        double gamma0 = std::max(a0 / b0, 1e-9);
        int chi = prog.add_variable(1, "chi");
        int s1 = prog.add_variable(1, "s1");
        int s2 = prog.add_variable(1, "s2");
        prog.set_hint(chi, chihint);
        prog.set_hint(s1, s1hint);
        prog.set_hint(s2, s2hint);
        conic::Expr arg;
        arg.constant = 1.0;
        arg.add_scalar(chi, gamma0);
        prog.add_log(b.weight, arg);
        conic::Expr bn = conic::expr_trace(vid, b.m / b0, c.cfg.noise_ul / b0);
        prog.require_rotated_cone(conic::expr_trace(s1, MatC::Identity(1, 1)),
                                  conic::expr_const(1.0), bn);
        prog.require_rotated_cone(conic::expr_trace(s2, MatC::Identity(1, 1)),
                                  conic::expr_const(1.0),
                                  conic::expr_trace(chi, MatC::Identity(1, 1)));
        conic::Expr cap = conic::expr_trace(vid, p * hk / (gamma0 * b0));
        cap.add_scalar(s1, -1.0).add_scalar(s2, -1.0);
        prog.require_nonneg(cap);
      }
      double refu = std::max(c.cfg.sinr_th_ul * c.cfg.noise_ul, 1e-300);
      for (const Branch& b : branches)
        prog.require_nonneg(conic::expr_trace(vid, (p * hk - c.cfg.sinr_th_ul * b.m) / refu,
                                              -c.cfg.sinr_th_ul * c.cfg.noise_ul / refu));
      prog.require_zero(conic::expr_trace(vid, eye, -1.0));

      conic::Solution sol = conic::solve(prog, opt.conic);
      if (sol.status != conic::Status::optimal) break;
      MatC vn = sol.values[vid];
      double fn = piece(vn);
      if (!(fn >= fk)) break;
      bool done = fn - fk <= opt.inner_tol * std::max(1.0, std::abs(fk));
      v = vn;
      fk = fn;
      if (done) break;
    }
    out.matrices.push_back(v);
  }
  return out;
}

namespace detail {

inline double min_sensing_slack(const LiftedBeamformerSet& set, const StageContext& c) {
  if (set.sens_count() == 0) return 0.0;
  double m = std::numeric_limits<double>::infinity();
  for (int j = 0; j < set.sens_count(); ++j)
    m = std::min(m, relative_slack(sensing_sinr(set, c.ch, c.cfg, j), c.cfg.sinr_th_sens));
  return m;
}

// Probing design for slots that carry no UE: push the worst sensing margin
// up as far as the power budget allows.
inline bool solve_probe_max_slack(LiftedBeamformerSet& set, const StageContext& c,
                                  const OptimizeOptions& opt) {
  const int q = c.cfg.antenna_count;
  const int J = set.sens_count();
  const double pb = c.cfg.uav_max_power;
  const MatC eye = MatC::Identity(q, q);
  conic::Program prog;
  std::vector<int> rid(J);
  for (int j = 0; j < J; ++j) {
    rid[j] = prog.add_variable(q, "R" + std::to_string(j));
    prog.set_hint(rid[j], MatC(set.R[j] / pb));
  }
  // The margin lives in a single nonnegative scalar measured in units of its
  // own incumbent magnitude: a split into two signed parts would leave a
  // recession ray the barrier runs off, and an unscaled margin would need to
  // traverse as many decades as the slack is deep.
  int zid = prog.add_variable(1, "margin");
  double cur = min_sensing_slack(set, c);
  double m0 = cur - 0.1 * (1.0 + std::abs(cur));
  double mscale = 1.0 + std::abs(m0);
  prog.set_hint(zid, (MatC(1, 1) << cd(1.0, 0.0)).finished());
  {
    conic::Expr o;
    o.add_scalar(zid, 1.0);
    prog.add_linear(o);
  }
  MatC onair_w = MatC::Zero(q, q);
  for (const MatC& w : set.W) onair_w += w;
  double ref = std::max(c.cfg.sinr_th_sens * c.cfg.noise_sens, 1e-300);
  for (int j = 0; j < J; ++j) {
    conic::Expr e;
    e.constant = -c.cfg.sinr_th_sens * c.cfg.noise_sens / ref;
    for (int i = 0; i < J; ++i) {
      MatC pick = reflected_pickup(c.ch.sens[i], set.U[j]);
      double w = ((i == j) ? c.cfg.processing_gain : -c.cfg.sinr_th_sens) / ref;
      e.add(rid[i], MatC(w * pb * pick));
      e.constant += w * trace_prod(pick, onair_w);
    }
    e.add_scalar(zid, -mscale);
    e.constant += mscale - m0;
    prog.require_nonneg(e);
  }
  {
    conic::Expr e;
    e.constant = 1.0;
    for (const MatC& w : set.W) e.constant -= std::real(w.trace()) / pb;
    for (int j = 0; j < J; ++j) e.add(rid[j], -eye);
    prog.require_nonneg(e);
  }
  conic::Solution sol = conic::solve(prog, opt.conic);
  if (sol.status != conic::Status::optimal) return false;
  std::vector<MatC> keep = set.R;
  double before = min_sensing_slack(set, c);
  for (int j = 0; j < J; ++j) set.R[j] = pb * sol.values[rid[j]];
  if (min_sensing_slack(set, c) >= before) return true;
  set.R = std::move(keep);
  return false;
}

}  // namespace detail

// Probing-covariance design. Each comm stream gets an SINR epigraph value
// chi whose product with the stream denominator is bounded by the convex
// tether inequality, encoded with two rotated cones; after each solve the
// epigraphs are re-tightened to the true SINRs. Streams are normalized by
// their incumbent SINR and denominator so the cone data stays O(1).
inline StageTrace sensing_transmit_loop(LiftedBeamformerSet& set, const StageContext& c,
                                        const OptimizeOptions& opt) {
  StageTrace tr;
  double f = internal_objective(set, c);
  tr.objective.push_back(f);
  const int J = set.sens_count();
  if (J == 0) return tr;
  const int q = c.cfg.antenna_count;
  const int K = set.ue_count();
  const double p = c.cfg.ue_tx_power;
  const MatC eye = MatC::Identity(q, q);

  if (K == 0) {
    detail::solve_probe_max_slack(set, c, opt);
    tr.objective.push_back(internal_objective(set, c));
    return tr;
  }

  const bool with_ul = c.weights.ul_echo > 0.0;
  const double pb = c.cfg.uav_max_power;
  const double ref_dl = std::max(c.cfg.sinr_th_dl * c.cfg.noise_dl, 1e-300);
  const double ref_ul = std::max(c.cfg.sinr_th_ul * c.cfg.noise_ul, 1e-300);
  const double ref_sens = std::max(c.cfg.sinr_th_sens * c.cfg.noise_sens, 1e-300);
  AuxiliaryState aux;
  MatC onair_w = MatC::Zero(q, q);
  for (const MatC& w : set.W) onair_w += w;

  for (int it = 0; it < opt.inner_cap; ++it) {
    update_theta(set, c, aux);

    conic::Program prog;
    std::vector<int> rid(J);
    for (int j = 0; j < J; ++j) {
      rid[j] = prog.add_variable(q, "R" + std::to_string(j));
      prog.set_hint(rid[j], MatC(set.R[j] / pb));
    }
    MatC s1hint(1, 1), s2hint(1, 1), chihint(1, 1);
    s1hint(0, 0) = cd(0.501 * 1.002, 0.0);
    s2hint(0, 0) = cd(0.995 * 0.995 / 2.0 * 1.002, 0.0);
    chihint(0, 0) = cd(0.995, 0.0);

    // One epigraph stream: objective weight, incumbent SINR gamma0 and
    // denominator expression b(R) normalized by its incumbent value b0.
    auto add_stream = [&](double weight, double gamma0, double b0, double sig_const,
                          const MatC& bcoef, double bconst) {
      int chi = prog.add_variable(1, "chi");
      int s1 = prog.add_variable(1, "s1");
      int s2 = prog.add_variable(1, "s2");
      prog.set_hint(chi, chihint);
      prog.set_hint(s1, s1hint);
      prog.set_hint(s2, s2hint);
      conic::Expr arg;  // 1 + gamma0 * chi_normalized
      arg.constant = 1.0;
      arg.add_scalar(chi, gamma0);
      prog.add_log(weight, arg);
      conic::Expr b;  // denominator in units of its incumbent value
      b.constant = bconst / b0;
      for (int j = 0; j < J; ++j) b.add(rid[j], MatC(bcoef * (pb / b0)));
      prog.require_rotated_cone(conic::expr_trace(s1, MatC::Identity(1, 1)),
                                conic::expr_const(1.0), b);
      prog.require_rotated_cone(conic::expr_trace(s2, MatC::Identity(1, 1)),
                                conic::expr_const(1.0),
                                conic::expr_trace(chi, MatC::Identity(1, 1)));
      conic::Expr cap;  // s1 + s2 <= signal / (gamma0 * b0)
      cap.constant = sig_const / (gamma0 * b0);
      cap.add_scalar(s1, -1.0).add_scalar(s2, -1.0);
      prog.require_nonneg(cap);
    };

    for (int k = 0; k < K; ++k) {
      const VecC& h = c.ch.ue[k];
      MatC hk = detail::outer(h);
      double sig = detail::quad_form(h, set.W[k]);
      double b0 = detail::dl_denominator(set, c, k);
      double bconst = c.cfg.noise_dl;
      for (int i = 0; i < K; ++i)
        if (i != k) bconst += detail::quad_form(h, set.W[i]);
      add_stream(c.weights.dl, aux.chi_dl[k], b0, sig, hk, bconst);
      // Service floor stays explicit alongside the epigraph machinery.
      conic::Expr e;
      e.constant = (sig - c.cfg.sinr_th_dl * bconst) / ref_dl;
      for (int j = 0; j < J; ++j) e.add(rid[j], MatC((-c.cfg.sinr_th_dl * pb / ref_dl) * hk));
      prog.require_nonneg(e);
    }
    for (int k = 0; k < K; ++k) {
      const VecC& h = c.ch.ue[k];
      MatC ek = detail::echo_on_transmit(c.ch, set.V[k]);
      double au = p * detail::quad_form(h, set.V[k]);
      double cross = 0.0;
      for (int i = 0; i < K; ++i)
        if (i != k) cross += p * detail::quad_form(c.ch.ue[i], set.V[k]);
      double bconst = cross + detail::trace_prod(ek, onair_w) + c.cfg.noise_ul;
      if (with_ul) {
        double b0 = detail::ul_denominator(set, c, k, true);
        add_stream(c.weights.ul_echo, aux.chi_ul[k], b0, au, ek, bconst);
      }
      conic::Expr e;
      e.constant = (au - c.cfg.sinr_th_ul * bconst) / ref_ul;
      for (int j = 0; j < J; ++j) e.add(rid[j], MatC((-c.cfg.sinr_th_ul * pb / ref_ul) * ek));
      prog.require_nonneg(e);
    }
    for (int j = 0; j < J; ++j) {
      conic::Expr e;
      e.constant = -c.cfg.sinr_th_sens * c.cfg.noise_sens / ref_sens;
      for (int i = 0; i < J; ++i) {
        MatC pick = detail::reflected_pickup(c.ch.sens[i], set.U[j]);
        double w = ((i == j) ? c.cfg.processing_gain : -c.cfg.sinr_th_sens) / ref_sens;
        e.add(rid[i], MatC(w * pb * pick));
        e.constant += w * detail::trace_prod(pick, onair_w);
      }
      prog.require_nonneg(e);
    }
    {
      conic::Expr e;
      e.constant = 1.0;
      for (const MatC& w : set.W) e.constant -= std::real(w.trace()) / pb;
      for (int j = 0; j < J; ++j) e.add(rid[j], -eye);
      prog.require_nonneg(e);
    }

    conic::Solution sol = conic::solve(prog, opt.conic);
    if (sol.status != conic::Status::optimal) break;
    std::vector<MatC> keep = std::move(set.R);
    set.R.clear();
    for (int j = 0; j < J; ++j) set.R.push_back(MatC(pb * sol.values[rid[j]]));
    double fn = internal_objective(set, c);
    if (!(fn >= f)) {
      set.R = std::move(keep);
      break;
    }
    bool done = fn - f <= opt.inner_tol * std::max(1.0, std::abs(f));
    f = fn;
    tr.objective.push_back(f);
    if (done) break;
  }
  return tr;
}

struct SensingReceiveSolve {
  std::vector<MatC> matrices;
  std::vector<double> achieved;  // sensing SINR with the returned beamformer
  std::vector<bool> admissible;  // meets the sensing floor
};

// Per-location receive design: the SINR is scale invariant in U_j, so the
// normalized program maximizes the reflected signal power with the
// interference-plus-noise pinned to one; the optimizer value is the SINR.
inline SensingReceiveSolve solve_sensing_receive(const LiftedBeamformerSet& set,
                                                 const StageContext& c,
                                                 const OptimizeOptions& opt) {
  const int q = c.cfg.antenna_count;
  const int J = set.sens_count();
  SensingReceiveSolve out;
  MatC onair_w = MatC::Zero(q, q);
  for (const MatC& w : set.W) onair_w += w;
  std::vector<MatC> refl;
  for (int i = 0; i < J; ++i) {
    MatC cov = set.R[i] + onair_w;
    refl.push_back(conic::hermitian_part(MatC(c.ch.sens[i] * cov * c.ch.sens[i].adjoint())));
  }
  for (int j = 0; j < J; ++j) {
    MatC a = c.cfg.processing_gain * refl[j];
    MatC b = c.cfg.noise_sens * MatC::Identity(q, q);
    for (int i = 0; i < J; ++i)
      if (i != j) b += refl[i];

    // Whitened variable: pinning the interference-plus-noise power to one
    // through a congruence keeps the program data and the variable O(1)
    // even when the noise floor is fourteen orders below the channel gains.
    // Both sides enter trace-normalized so a common power/noise rescaling
    // leaves the whitening and the program bit for bit unchanged; the ratio
    // of the two scales restores the SINR afterwards.
    const double as = std::real(a.trace()) / q;
    const double bs = std::real(b.trace()) / q;
    MatC u = set.U[j];
    double gamma = sensing_sinr(set, c.ch, c.cfg, j);
    if (as > 0.0 && bs > 0.0) {
      MatC bn = b / bs;
      Eigen::SelfAdjointEigenSolver<MatC> es(bn);
      VecR ev = es.eigenvalues().cwiseMax(1e-300);
      MatC broot = es.eigenvectors() * ev.cwiseSqrt().asDiagonal() * es.eigenvectors().adjoint();
      MatC winv = es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() *
                  es.eigenvectors().adjoint();
      MatC aw = conic::hermitian_part(MatC(winv * (a / as) * winv));
      MatC hint = conic::hermitian_part(MatC(broot * set.U[j] * broot));
      double htr = std::real(hint.trace());
      if (htr > 0.0) hint /= htr;

      conic::Program prog;
      int uid = prog.add_variable(q, "U" + std::to_string(j));
      if (htr > 0.0) prog.set_hint(uid, hint);
      prog.add_linear(conic::expr_trace(uid, aw));
      prog.require_zero(conic::expr_trace(uid, MatC::Identity(q, q), -1.0));
      conic::Solution sol = conic::solve(prog, opt.conic);

      if (sol.status == conic::Status::optimal) {
        MatC un = conic::hermitian_part(MatC(winv * sol.values[uid] * winv));
        double tr = std::real(un.trace());
        if (tr > 0.0) {
          u = un / tr;
          gamma = sol.objective * (as / bs);
        }
      }
    }
    out.matrices.push_back(u);
    out.achieved.push_back(gamma);
    out.admissible.push_back(detail::relative_slack(gamma, c.cfg.sinr_th_sens) >= -1e-9);
  }
  return out;
}

struct RestorationOutcome {
  bool feasible = false;
  double min_slack = 0.0;  // achieved worst normalized service margin
};

namespace detail {

inline double min_restoration_slack(const LiftedBeamformerSet& set, const StageContext& c) {
  double m = std::numeric_limits<double>::infinity();
  const double p = c.cfg.ue_tx_power;
  for (int k = 0; k < set.ue_count(); ++k) {
    const VecC& h = c.ch.ue[k];
    double ref = std::max(c.cfg.sinr_th_dl * c.cfg.noise_dl, 1e-300);
    m = std::min(m, (quad_form(h, set.W[k]) - c.cfg.sinr_th_dl * dl_denominator(set, c, k)) / ref);
    double au = p * quad_form(h, set.V[k]);
    double refu = std::max(c.cfg.sinr_th_ul * c.cfg.noise_ul, 1e-300);
    m = std::min(m, (au - c.cfg.sinr_th_ul * ul_denominator(set, c, k, false)) / refu);
    if (c.sensing)
      m = std::min(m, (au - c.cfg.sinr_th_ul * ul_denominator(set, c, k, true)) / refu);
  }
  if (c.sensing) {
    double refs = std::max(c.cfg.sinr_th_sens * c.cfg.noise_sens, 1e-300);
    for (int j = 0; j < set.sens_count(); ++j) {
      double num = c.cfg.processing_gain * sensing_power_term(set, c.ch, j, j);
      double den = c.cfg.noise_sens;
      for (int i = 0; i < set.sens_count(); ++i)
        if (i != j) den += sensing_power_term(set, c.ch, j, i);
      m = std::min(m, (num - c.cfg.sinr_th_sens * den) / refs);
    }
  }
  return m;
}

inline bool restoration_round(LiftedBeamformerSet& set, const StageContext& c,
                              const OptimizeOptions& opt, double& slack) {
  const int q = c.cfg.antenna_count;
  const int K = set.ue_count();
  const int J = set.sens_count();
  const double p = c.cfg.ue_tx_power;
  const double pb = c.cfg.uav_max_power;
  const MatC eye = MatC::Identity(q, q);
  conic::Program prog;
  std::vector<int> wid(K), rid(J);
  for (int k = 0; k < K; ++k) {
    wid[k] = prog.add_variable(q, "W" + std::to_string(k));
    prog.set_hint(wid[k], MatC(set.W[k] / pb));
  }
  for (int j = 0; j < J; ++j) {
    rid[j] = prog.add_variable(q, "R" + std::to_string(j));
    prog.set_hint(rid[j], MatC(set.R[j] / pb));
  }
  // Margin variable in units of its own incumbent magnitude; see
  // solve_probe_max_slack for the reasoning. Every service row is divided
  // by its reference power so the whole program is dimensionless.
  int zid = prog.add_variable(1, "margin");
  double cur = min_restoration_slack(set, c);
  double m0 = cur - 0.1 * (1.0 + std::abs(cur));
  double mscale = 1.0 + std::abs(m0);
  prog.set_hint(zid, (MatC(1, 1) << cd(1.0, 0.0)).finished());
  {
    conic::Expr o;
    o.add_scalar(zid, 1.0);
    prog.add_linear(o);
  }

  auto relax = [&](conic::Expr& e) {
    e.add_scalar(zid, -mscale);
    e.constant += mscale - m0;
    prog.require_nonneg(e);
  };

  for (int k = 0; k < K; ++k) {
    const VecC& h = c.ch.ue[k];
    MatC hk = outer(h);
    double ref = std::max(c.cfg.sinr_th_dl * c.cfg.noise_dl, 1e-300);
    conic::Expr e;
    e.constant = -c.cfg.sinr_th_dl * c.cfg.noise_dl / ref;
    MatC gain = (pb / ref) * hk;
    MatC loss = (-c.cfg.sinr_th_dl * pb / ref) * hk;
    for (int i = 0; i < K; ++i) e.add(wid[i], i == k ? gain : loss);
    for (int j = 0; j < J; ++j) e.add(rid[j], loss);
    relax(e);
  }
  for (int k = 0; k < K; ++k) {
    const VecC& h = c.ch.ue[k];
    double au = p * quad_form(h, set.V[k]);
    double cross = 0.0;
    for (int i = 0; i < K; ++i)
      if (i != k) cross += p * quad_form(c.ch.ue[i], set.V[k]);
    double refu = std::max(c.cfg.sinr_th_ul * c.cfg.noise_ul, 1e-300);
    {
      conic::Expr e;
      e.constant = (au - c.cfg.sinr_th_ul * (cross + c.cfg.noise_ul)) / refu;
      relax(e);
    }
    if (c.sensing) {
      MatC ek = echo_on_transmit(c.ch, set.V[k]);
      MatC ec = (-c.cfg.sinr_th_ul * pb / refu) * ek;
      conic::Expr e;
      e.constant = (au - c.cfg.sinr_th_ul * (cross + c.cfg.noise_ul)) / refu;
      for (int i = 0; i < K; ++i) e.add(wid[i], ec);
      for (int j = 0; j < J; ++j) e.add(rid[j], ec);
      relax(e);
    }
  }
  if (c.sensing) {
    for (int j = 0; j < J; ++j) {
      double refs = std::max(c.cfg.sinr_th_sens * c.cfg.noise_sens, 1e-300);
      conic::Expr e;
      e.constant = -c.cfg.sinr_th_sens * c.cfg.noise_sens / refs;
      MatC wcoef = MatC::Zero(q, q);
      for (int i = 0; i < J; ++i) {
        MatC pick = reflected_pickup(c.ch.sens[i], set.U[j]);
        double w = ((i == j) ? c.cfg.processing_gain : -c.cfg.sinr_th_sens) * pb / refs;
        wcoef += w * pick;
        e.add(rid[i], MatC(w * pick));
      }
      for (int k = 0; k < K; ++k) e.add(wid[k], wcoef);
      relax(e);
    }
  }
  {
    conic::Expr e;  // the budget itself is never relaxed
    e.constant = 1.0;
    for (int k = 0; k < K; ++k) e.add(wid[k], -eye);
    for (int j = 0; j < J; ++j) e.add(rid[j], -eye);
    prog.require_nonneg(e);
  }

  conic::Solution sol = conic::solve(prog, opt.conic);
  if (sol.status != conic::Status::optimal) return false;
  slack = mscale * sol.objective - (mscale - m0);
  if (slack <= 1e-9) return false;
  for (int k = 0; k < K; ++k) set.W[k] = pb * sol.values[wid[k]];
  for (int j = 0; j < J; ++j) set.R[j] = pb * sol.values[rid[j]];
  return true;
}

}  // namespace detail

// Maximize the worst normalized service margin over the transmit
// covariances; if that fails, refresh the receive side (combiners from the
// generalized eigenvalue problem, sensing receivers from their own design)
// and try once more. A nonpositive final margin means the slot cannot meet
// its floors at this waypoint.
inline RestorationOutcome restore_feasibility(LiftedBeamformerSet& set, const StageContext& c,
                                              const OptimizeOptions& opt) {
  RestorationOutcome out;
  const int K = set.ue_count();
  const int J = set.sens_count();
  if (K == 0 && J == 0) {
    out.feasible = true;
    return out;
  }
  if (detail::restoration_round(set, c, opt, out.min_slack)) {
    out.feasible = true;
    return out;
  }
  const int q = c.cfg.antenna_count;
  for (int k = 0; k < K; ++k) {
    MatC m = detail::cross_ue_matrix(c, k) + c.cfg.noise_ul * MatC::Identity(q, q);
    if (c.sensing) m += detail::echo_on_receive(c.ch, detail::onair_covariance(set, q));
    VecC v = detail::dominant_gen_eigvec(
        MatC(c.cfg.ue_tx_power * detail::outer(c.ch.ue[k])), m);
    set.V[k] = v * v.adjoint();
  }
  if (c.sensing && J > 0) {
    SensingReceiveSolve rec = solve_sensing_receive(set, c, opt);
    for (int j = 0; j < J; ++j) set.U[j] = rec.matrices[j];
  }
  out.feasible = detail::restoration_round(set, c, opt, out.min_slack);
  return out;
}

struct OptimizeResult {
  LiftedBeamformerSet set;
  std::vector<double> trace;  // true objective after init and each stage pass
  bool feasible = false;
  bool converged = false;
  int outer_iterations = 0;
  double objective = 0.0;  // weighted natural-log rate sum of the final set
  std::string note;        // diagnostic when the slot is declared infeasible
};

// Alternating maximization over the four beamformer families. Each stage
// maximizes a lower bound that is tight at the incumbent under the full
// constraint set, so the true objective never decreases; candidate steps
// that fail that check are discarded.
inline OptimizeResult alternating_optimize(const ChannelSet& ch, const ScenarioConfig& cfg,
                                           bool sensing_slot, const OptimizeOptions& opt = {},
                                           const LiftedBeamformerSet* warm = nullptr) {
  StageContext c = make_stage_context(ch, cfg, sensing_slot);
  OptimizeResult out;
  out.set = warm ? *warm : initial_beamformers(ch, cfg, sensing_slot);
  const int K = out.set.ue_count();
  const int J = out.set.sens_count();
  const int q = cfg.antenna_count;

  if (cfg.uav_max_power <= 1e-30) {
    for (MatC& w : out.set.W) w = MatC::Zero(q, q);
    for (MatC& r : out.set.R) r = MatC::Zero(q, q);
    out.set.extract_all();
    out.feasible = check_constraints(out.set, ch, cfg, sensing_slot).feasible;
    out.objective = internal_objective(out.set, c);
    out.trace.push_back(out.objective);
    out.converged = true;
    if (!out.feasible) out.note = "no transmit power available for the service floors";
    return out;
  }

  if (!check_constraints(out.set, ch, cfg, sensing_slot).feasible) {
    RestorationOutcome r = restore_feasibility(out.set, c, opt);
    if (!r.feasible) {
      out.set.extract_all();
      out.objective = internal_objective(out.set, c);
      out.trace.push_back(out.objective);
      out.note = "service floors unreachable at this waypoint";
      return out;
    }
  }

  double f = internal_objective(out.set, c);
  out.trace.push_back(f);
  double metric = K > 0 ? f : detail::min_sensing_slack(out.set, c);
  for (int it = 0; it < opt.outer_cap; ++it) {
    double prev = metric;
    if (K > 0) {
      StageTrace wt = dl_transmit_loop(out.set, c, opt);
      f = wt.objective.back();
      out.trace.push_back(f);
      StageSolve vs = solve_ul_receive(out.set, c, opt);
      if (vs.solved) out.set.V = vs.matrices;
      f = internal_objective(out.set, c);
      out.trace.push_back(f);
    }
    if (sensing_slot && J > 0) {
      StageTrace st = sensing_transmit_loop(out.set, c, opt);
      f = st.objective.back();
      out.trace.push_back(f);
      SensingReceiveSolve us = solve_sensing_receive(out.set, c, opt);
      for (int j = 0; j < J; ++j)
        if (us.achieved[j] >= sensing_sinr(out.set, ch, cfg, j) - 1e-12)
          out.set.U[j] = us.matrices[j];
      out.trace.push_back(f);
    }
    out.outer_iterations = it + 1;
    metric = K > 0 ? f : detail::min_sensing_slack(out.set, c);
    if (std::abs(metric - prev) <= opt.outer_tol * std::max(1.0, std::abs(prev))) {
      out.converged = true;
      break;
    }
  }
  out.objective = f;
  out.feasible = true;
  out.set.extract_all();
  return out;
}

enum class BaselineMode { equal_power, random_direction };

// Reference designs: `equal_power` reuses the optimized beam directions but
// levels the per-beam power split; `random_direction` draws isotropic
// directions. Both use matched-filter receive beamformers.
inline LiftedBeamformerSet baseline_beamformers(BaselineMode mode, const ChannelSet& ch,
                                                const ScenarioConfig& cfg, bool sensing_slot,
                                                Rng& rng, const OptimizeOptions& opt = {}) {
  const int q = cfg.antenna_count;
  const int K = ch.ue_count();
  const int J = sensing_slot ? ch.sens_count() : 0;
  const int beams = K + J;
  const double share = beams > 0 ? cfg.uav_max_power / beams : 0.0;

  LiftedBeamformerSet set = initial_beamformers(ch, cfg, sensing_slot);
  auto direction_of = [&](const MatC& m, const VecC& fallback) {
    RankOneExtraction ex = rank_one_extract(m);
    VecC v = ex.vector;
    if (v.norm() <= 0.0) v = fallback;
    v.normalize();
    return v;
  };

  if (mode == BaselineMode::equal_power) {
    OptimizeResult ref = alternating_optimize(ch, cfg, sensing_slot, opt);
    for (int k = 0; k < K; ++k) {
      VecC d = direction_of(ref.set.W[k], ch.ue[k]);
      set.W[k] = share * (d * d.adjoint());
    }
    for (int j = 0; j < J; ++j) {
      VecC d = direction_of(ref.set.R[j], detail::dominant_direction(ch.sens[j]));
      set.R[j] = share * (d * d.adjoint());
    }
  } else {
    for (int k = 0; k < K; ++k) {
      VecC d = rng.unit_complex_vector(q);
      set.W[k] = share * (d * d.adjoint());
    }
    for (int j = 0; j < J; ++j) {
      VecC d = rng.unit_complex_vector(q);
      set.R[j] = share * (d * d.adjoint());
    }
  }
  set.extract_all();
  return set;
}

// Beamformer covariances that fail the near-rank-one check, reported with
// their residual eigenvalue ratio.
inline std::vector<std::string> rank_one_violations(const LiftedBeamformerSet& set,
                                                    double tol = 1e-4) {
  std::vector<std::string> out;
  auto scan = [&](const std::vector<RankOneExtraction>& v, const char* label) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (v[i].ratio > tol)
        out.push_back(std::string(label) + "[" + std::to_string(i) +
                      "] ratio=" + std::to_string(v[i].ratio));
  };
  scan(set.w_vec, "W");
  scan(set.v_vec, "V");
  scan(set.r_vec, "R");
  scan(set.u_vec, "U");
  return out;
}

}  // namespace aisac
