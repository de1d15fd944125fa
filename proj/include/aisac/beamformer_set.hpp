#pragma once

#include <vector>

#include "aisac/common.hpp"

namespace aisac {

struct RankOneExtraction {
  VecC vector;      // sqrt(lambda1) * v1, global phase normalized
  double ratio = 0.0;  // lambda2 / lambda1, 0 when undefined
};

// Dominant eigenpair of a Hermitian PSD matrix, scaled so that the outer
// product of the result reproduces the dominant component. The global phase
// is fixed by making the first entry above noise level real nonnegative.
inline RankOneExtraction rank_one_extract(const MatC& x) {
  const int n = static_cast<int>(x.rows());
  if (x.cols() != n) throw std::invalid_argument("rank_one_extract: matrix must be square");

  RankOneExtraction out;
  out.vector = VecC::Zero(n);
  double scale = x.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return out;  // zero matrix

  Eigen::SelfAdjointEigenSolver<MatC> es(x);
  const auto& ev = es.eigenvalues();
  double l1 = ev(n - 1);
  if (!(l1 > 0.0)) return out;
  double l2 = (n >= 2) ? std::max(0.0, ev(n - 2)) : 0.0;
  out.ratio = l2 / l1;

  VecC v = std::sqrt(l1) * es.eigenvectors().col(n - 1);
  double vn = v.norm();
  for (int i = 0; i < n; ++i) {
    if (std::abs(v(i)) > 1e-12 * vn) {
      v *= std::exp(cd(0.0, -std::arg(v(i))));
      break;
    }
  }
  out.vector = v;
  return out;
}

// Lifted covariance description of one slot's beamformers. The sensing
// members are populated only for slots that carry a pulse.
struct LiftedBeamformerSet {
  std::vector<MatC> W;  // downlink transmit, one per UE
  std::vector<MatC> V;  // uplink receive, unit trace, one per UE
  std::vector<MatC> R;  // sensing transmit, one per location (pulse slots)
  std::vector<MatC> U;  // sensing receive, unit trace (pulse slots)

  std::vector<RankOneExtraction> w_vec;  // extraction results, aligned with W/V/R/U
  std::vector<RankOneExtraction> v_vec;
  std::vector<RankOneExtraction> r_vec;
  std::vector<RankOneExtraction> u_vec;

  int ue_count() const { return static_cast<int>(W.size()); }
  int sens_count() const { return static_cast<int>(R.size()); }

  void extract_all() {
    auto fill = [](const std::vector<MatC>& mats, std::vector<RankOneExtraction>& out) {
      out.clear();
      out.reserve(mats.size());
      for (const MatC& m : mats) out.push_back(rank_one_extract(m));
    };
    fill(W, w_vec);
    fill(V, v_vec);
    fill(R, r_vec);
    fill(U, u_vec);
  }
};

}  // namespace aisac
