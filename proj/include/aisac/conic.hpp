#pragma once

// Small dense conic optimizer used by the beamforming stages. It maximizes a
// concave objective built from linear, log(affine), and sqrt(affine) trace
// terms over Hermitian PSD matrix variables, subject to affine trace
// (in)equalities and rotated quadratic cones. Complex Hermitian blocks are
// parameterized directly by their n^2 real degrees of freedom.
//
// The algorithm is a primal log-barrier method: sqrt terms are lifted to
// epigraph variables inside rotated cones, log terms stay in the objective
// (they act as their own barrier), and a slack phase finds a strictly
// feasible start when the caller's hints violate the affine inequalities.
// Everything is deterministic: identical programs produce identical iterates.

#include <algorithm>
#include <array>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "aisac/common.hpp"

namespace aisac::conic {

inline MatC hermitian_part(const MatC& a) { return 0.5 * (a + a.adjoint()); }

struct Expr {
  double constant = 0.0;
  std::vector<std::pair<int, MatC>> terms;  // (variable id, Hermitian coefficient)

  Expr& add(int var, const MatC& coef) {
    terms.emplace_back(var, coef);
    return *this;
  }
  Expr& add_scalar(int var, double coef) {
    MatC m(1, 1);
    m(0, 0) = cd(coef, 0.0);
    terms.emplace_back(var, m);
    return *this;
  }
};

inline Expr expr_const(double c) {
  Expr e;
  e.constant = c;
  return e;
}

inline Expr expr_trace(int var, const MatC& coef, double constant = 0.0) {
  Expr e;
  e.constant = constant;
  e.add(var, coef);
  return e;
}

enum class Status { optimal, infeasible, max_iterations };

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
};

struct SolveOptions {
  double tol = 1e-7;    // relative duality-gap target
  int max_iter = 200;   // total Newton step budget
};

struct Solution {
  Status status = Status::max_iterations;
  std::vector<MatC> values;
  double objective = 0.0;
  KktResiduals kkt;
  int newton_steps = 0;

  // Multipliers for the declared constraints, in declaration order.
  std::vector<double> ineq_duals;
  std::vector<double> eq_duals;
  std::vector<MatC> psd_duals;
  std::vector<std::array<double, 3>> cone_duals;
};

class Program {
 public:
  int add_variable(int dim, std::string name = "") {
    if (dim < 1) throw std::invalid_argument("conic: variable dimension must be >= 1");
    dims_.push_back(dim);
    names_.push_back(name.empty() ? "X" + std::to_string(dims_.size() - 1) : std::move(name));
    hints_.emplace_back();
    return static_cast<int>(dims_.size()) - 1;
  }

  void set_hint(int var, const MatC& value) {
    check_var(var, value);
    hints_[var] = value;
  }

  void add_constant(double c) { obj_constant_ += c; }

  void add_linear(const Expr& e) {
    check_expr(e);
    linear_.push_back(e);
  }

  // coef * log(expr), natural log; expr must be certified nonnegative:
  // nonnegative constant and PSD coefficients.
  void add_log(double coef, const Expr& e) {
    if (coef < 0.0) throw std::invalid_argument("conic: log term weight must be nonnegative");
    if (coef == 0.0) return;
    check_expr(e);
    check_certified(e, "log argument");
    logs_.emplace_back(coef, e);
  }

  void add_sqrt(double coef, const Expr& e) {
    if (coef < 0.0) throw std::invalid_argument("conic: sqrt term weight must be nonnegative");
    if (coef == 0.0) return;
    check_expr(e);
    check_certified(e, "sqrt argument");
    sqrts_.emplace_back(coef, e);
  }

  void require_nonneg(const Expr& e) {
    check_expr(e);
    nonneg_.push_back(e);
  }

  void require_zero(const Expr& e) {
    check_expr(e);
    zero_.push_back(e);
  }

  // (u, v, w) with 2*u*v >= w^2, u >= 0, v >= 0.
  void require_rotated_cone(const Expr& u, const Expr& v, const Expr& w) {
    check_expr(u);
    check_expr(v);
    check_expr(w);
    cones_.push_back({u, v, w});
  }

  int variable_count() const { return static_cast<int>(dims_.size()); }
  int variable_dim(int var) const { return dims_.at(var); }

  void dump(std::ostream& os) const {
    os << "maximize " << obj_constant_;
    for (const auto& e : linear_) { os << " + "; print_expr(os, e); }
    for (const auto& [c, e] : logs_) { os << " + " << c << "*log("; print_expr(os, e); os << ")"; }
    for (const auto& [c, e] : sqrts_) { os << " + " << c << "*sqrt("; print_expr(os, e); os << ")"; }
    os << "\nsubject to\n";
    for (const auto& e : nonneg_) { os << "  "; print_expr(os, e); os << " >= 0\n"; }
    for (const auto& e : zero_) { os << "  "; print_expr(os, e); os << " == 0\n"; }
    for (const auto& c : cones_) {
      os << "  rotated_cone(";
      print_expr(os, c[0]); os << "; ";
      print_expr(os, c[1]); os << "; ";
      print_expr(os, c[2]); os << ")\n";
    }
    for (std::size_t v = 0; v < dims_.size(); ++v)
      os << "  " << names_[v] << " (" << dims_[v] << "x" << dims_[v] << ") >= 0\n";
  }

 private:
  friend class Solver;
  friend KktResiduals validate_kkt(const Program&, const Solution&);

  void check_var(int var, const MatC& m) const {
    if (var < 0 || var >= variable_count())
      throw std::invalid_argument("conic: unknown variable id");
    int n = dims_[var];
    if (m.rows() != n || m.cols() != n)
      throw std::invalid_argument("conic: coefficient dimension mismatch on " + names_[var]);
    double scale = m.cwiseAbs().maxCoeff();
    if ((m - m.adjoint()).cwiseAbs().maxCoeff() > 1e-10 * std::max(scale, 1.0))
      throw std::invalid_argument("conic: coefficient must be Hermitian on " + names_[var]);
  }

  void check_expr(const Expr& e) const {
    for (const auto& [var, coef] : e.terms) check_var(var, coef);
  }

  // Nonnegativity certificate: PSD coefficients and nonnegative constant.
  void check_certified(const Expr& e, const char* where) const {
    if (e.constant < 0.0)
      throw std::invalid_argument(std::string("conic: ") + where + " has a negative constant");
    bool nonzero = e.constant > 0.0;
    for (const auto& [var, coef] : e.terms) {
      (void)var;
      Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(coef), Eigen::EigenvaluesOnly);
      double lmin = es.eigenvalues().minCoeff();
      double lmax = std::abs(es.eigenvalues().maxCoeff());
      if (lmin < -1e-9 * std::max(lmax, 1.0))
        throw std::invalid_argument(std::string("conic: ") + where + " coefficient is not PSD");
      if (lmax > 0.0) nonzero = true;
    }
    if (!nonzero)
      throw std::invalid_argument(std::string("conic: ") + where + " is identically zero");
  }

  static bool structurally_constant(const Expr& e) {
    for (const auto& [var, coef] : e.terms) {
      (void)var;
      if (coef.cwiseAbs().maxCoeff() > 0.0) return false;
    }
    return true;
  }

  void print_expr(std::ostream& os, const Expr& e) const {
    os << e.constant;
    for (const auto& [var, coef] : e.terms)
      os << " + tr(" << names_[var] << " * [" << coef.rows() << "x" << coef.cols()
         << " |A|=" << coef.cwiseAbs().maxCoeff() << "])";
  }

  std::vector<int> dims_;
  std::vector<std::string> names_;
  std::vector<MatC> hints_;
  double obj_constant_ = 0.0;
  std::vector<Expr> linear_;
  std::vector<std::pair<double, Expr>> logs_;
  std::vector<std::pair<double, Expr>> sqrts_;
  std::vector<Expr> nonneg_;
  std::vector<Expr> zero_;
  std::vector<std::array<Expr, 3>> cones_;
};

namespace detail {

// Real parameterization of one Hermitian block: n diagonal entries followed
// by (re, im) pairs for the strict upper triangle in row-major order.
inline int block_params(int n) { return n * n; }

inline int offdiag_index(int n, int i, int j) {  // i < j
  return n + 2 * (i * n - i * (i + 1) / 2 + (j - i - 1));
}

inline void unpack_block(const double* x, int n, MatC& out) {
  out.resize(n, n);
  for (int i = 0; i < n; ++i) out(i, i) = cd(x[i], 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      int p = offdiag_index(n, i, j);
      out(i, j) = cd(x[p], x[p + 1]);
      out(j, i) = std::conj(out(i, j));
    }
  }
}

inline void pack_block(const MatC& m, int n, double* x) {
  for (int i = 0; i < n; ++i) x[i] = std::real(m(i, i));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      int p = offdiag_index(n, i, j);
      x[p] = std::real(m(i, j));
      x[p + 1] = std::imag(m(i, j));
    }
  }
}

// tr(A * dX/dparam) accumulated for each parameter of the block.
inline void accumulate_trace_coefs(const MatC& a, int n, double scale, double* out) {
  for (int i = 0; i < n; ++i) out[i] += scale * std::real(a(i, i));
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      int p = offdiag_index(n, i, j);
      out[p] += scale * 2.0 * std::real(a(i, j));
      out[p + 1] += scale * 2.0 * std::imag(a(i, j));
    }
  }
}

struct CompiledExpr {
  VecR coef;
  double c0 = 0.0;
  double value(const VecR& x) const { return coef.dot(x) + c0; }
};

// -log det barrier derivatives for one block, in parameter space.
// H[p][q] = tr(Y E_p Y E_q) with Y = X^{-1}; each basis element E_p is a sum
// of at most two complex rank-one terms, so every entry costs O(1) given Y.
struct BasisTerm {
  int a, b;
  cd coef;
};

inline void block_basis(int n, int p, BasisTerm t[2], int& count) {
  if (p < n) {
    t[0] = {p, p, cd(1.0, 0.0)};
    count = 1;
    return;
  }
  int q = p - n;
  int pair = q / 2;
  bool imag = q % 2;
  int i = 0;
  int rem = pair;
  while (rem >= n - i - 1) {
    rem -= n - i - 1;
    ++i;
  }
  int j = i + 1 + rem;
  if (!imag) {
    t[0] = {i, j, cd(1.0, 0.0)};
    t[1] = {j, i, cd(1.0, 0.0)};
  } else {
    t[0] = {i, j, cd(0.0, 1.0)};
    t[1] = {j, i, cd(0.0, -1.0)};
  }
  count = 2;
}

inline void logdet_derivatives(const MatC& y, int n, double scale, double* grad,
                               MatR& hess, int offset) {
  // grad_p = -tr(Y E_p), hess_pq = tr(Y E_p Y E_q)
  accumulate_trace_coefs(y, n, -scale, grad);
  int np = block_params(n);
  BasisTerm tp[2], tq[2];
  int cp = 0, cq = 0;
  for (int p = 0; p < np; ++p) {
    block_basis(n, p, tp, cp);
    for (int q = p; q < np; ++q) {
      block_basis(n, q, tq, cq);
      cd acc(0.0, 0.0);
      for (int s = 0; s < cp; ++s)
        for (int u = 0; u < cq; ++u)
          acc += tp[s].coef * tq[u].coef * y(tp[s].b, tq[u].a) * y(tq[u].b, tp[s].a);
      double v = scale * std::real(acc);
      hess(offset + p, offset + q) += v;
      if (q != p) hess(offset + q, offset + p) += v;
    }
  }
}

}  // namespace detail

class Solver {
 public:
  Solver(const Program& prog, const SolveOptions& opt) : prog_(prog), opt_(opt) {}

  Solution run() {
    layout();
    compile();
    Solution sol;
    if (inconsistent_) {
      sol.status = Status::infeasible;
      sol.values = unpack(VecR::Zero(total_));
      return sol;
    }
    VecR x = initial_point();
    if (inconsistent_) {
      sol.status = Status::infeasible;
      sol.values = unpack(x);
      return sol;
    }
    if (!restore_feasibility(x, sol)) {
      finalize(sol, x, /*feasible=*/false);
      return sol;
    }
    optimize(x, sol);
    finalize(sol, x, /*feasible=*/true);
    return sol;
  }

 private:
  struct SqrtTerm {
    double weight = 0.0;
    detail::CompiledExpr arg;
    double scale = 1.0;
    int yi = -1;  // parameter index of the epigraph variable
  };

  // ---- layout / compilation ----------------------------------------------

  void layout() {
    offsets_.clear();
    int off = 0;
    for (int v = 0; v < prog_.variable_count(); ++v) {
      offsets_.push_back(off);
      off += detail::block_params(prog_.dims_[v]);
    }
    base_ = off;
    int lifted = 0;
    for (const auto& [w, e] : prog_.sqrts_) {
      (void)w;
      if (!Program::structurally_constant(e)) ++lifted;
    }
    total_ = base_ + lifted;
  }

  detail::CompiledExpr compile_expr(const Expr& e) const {
    detail::CompiledExpr c;
    c.coef = VecR::Zero(total_);
    c.c0 = e.constant;
    for (const auto& [var, coef] : e.terms)
      detail::accumulate_trace_coefs(hermitian_part(coef), prog_.dims_[var], 1.0,
                                     c.coef.data() + offsets_[var]);
    return c;
  }

  void compile() {
    inconsistent_ = false;
    lin_ = VecR::Zero(total_);
    lin_const_ = prog_.obj_constant_;
    for (const Expr& e : prog_.linear_) {
      auto c = compile_expr(e);
      lin_ += c.coef;
      lin_const_ += c.c0;
    }

    logs_.clear();
    for (const auto& [w, e] : prog_.logs_) {
      if (Program::structurally_constant(e)) lin_const_ += w * std::log(e.constant);
      else logs_.emplace_back(w, compile_expr(e));
    }

    sqrts_.clear();
    int next_yi = base_;
    for (const auto& [w, e] : prog_.sqrts_) {
      if (Program::structurally_constant(e)) {
        lin_const_ += w * std::sqrt(e.constant);
      } else {
        sqrts_.push_back({w, compile_expr(e), 1.0, next_yi});
        ++next_yi;
      }
    }

    ineqs_.clear();
    ineq_scale_.clear();
    ineq_index_.clear();
    for (std::size_t i = 0; i < prog_.nonneg_.size(); ++i) {
      auto c = compile_expr(prog_.nonneg_[i]);
      if (Program::structurally_constant(prog_.nonneg_[i])) {
        if (c.c0 < 0.0) inconsistent_ = true;
        continue;
      }
      double r = std::max(c.coef.cwiseAbs().maxCoeff(), std::abs(c.c0));
      c.coef /= r;
      c.c0 /= r;
      ineqs_.push_back(c);
      ineq_scale_.push_back(r);
      ineq_index_.push_back(static_cast<int>(i));
    }

    eqs_.clear();
    eq_scale_.clear();
    for (const Expr& e : prog_.zero_) {
      auto c = compile_expr(e);
      if (Program::structurally_constant(e)) {
        if (std::abs(c.c0) > 1e-12) inconsistent_ = true;
        continue;
      }
      double r = std::max(c.coef.cwiseAbs().maxCoeff(), std::abs(c.c0));
      c.coef /= r;
      c.c0 /= r;
      eqs_.push_back(c);
      eq_scale_.push_back(r);
    }

    cones_.clear();
    for (const auto& tri : prog_.cones_)
      cones_.push_back({compile_expr(tri[0]), compile_expr(tri[1]), compile_expr(tri[2])});

    // Barrier complexity: PSD blocks + scalar inequalities + degree-2 cones
    // (user cones and sqrt epigraphs).
    nu_ = 0.0;
    for (int v = 0; v < prog_.variable_count(); ++v) nu_ += prog_.dims_[v];
    nu_ += static_cast<double>(ineqs_.size());
    nu_ += 2.0 * static_cast<double>(cones_.size() + sqrts_.size());
    nu_ = std::max(nu_, 1.0);
  }

  // ---- point handling -----------------------------------------------------

  std::vector<MatC> unpack(const VecR& x) const {
    std::vector<MatC> out(prog_.variable_count());
    for (int v = 0; v < prog_.variable_count(); ++v)
      detail::unpack_block(x.data() + offsets_[v], prog_.dims_[v], out[v]);
    return out;
  }

  bool block_strictly_pd(const VecR& x, int v) const {
    int n = prog_.dims_[v];
    MatC m;
    detail::unpack_block(x.data() + offsets_[v], n, m);
    double tr = std::abs(std::real(m.trace()));
    m -= (1e-12 * std::max(tr, 1e-30)) * MatC::Identity(n, n);
    Eigen::LLT<MatC> llt(m);
    return llt.info() == Eigen::Success;
  }

  VecR initial_point() {
    VecR x = VecR::Zero(total_);
    for (int v = 0; v < prog_.variable_count(); ++v) {
      int n = prog_.dims_[v];
      MatC init = MatC::Identity(n, n);
      const MatC& hint = prog_.hints_[v];
      if (hint.rows() == n && hint.cols() == n) {
        double tr = std::max(std::real(hint.trace()), 0.0);
        MatC floor_mat = ((tr > 0.0 ? tr : 1.0) / n) * MatC::Identity(n, n);
        init = 0.95 * hermitian_part(hint) + 0.05 * floor_mat;
      }
      detail::pack_block(init, n, x.data() + offsets_[v]);
    }

    project_equalities(x);
    // The projection can push a block off the cone; pull back toward a
    // scaled identity until every block is comfortably interior.
    for (int round = 0; round < 40; ++round) {
      bool ok = true;
      for (int v = 0; v < prog_.variable_count() && ok; ++v)
        if (!block_strictly_pd(x, v)) ok = false;
      if (ok) break;
      for (int v = 0; v < prog_.variable_count(); ++v) {
        int n = prog_.dims_[v];
        MatC m;
        detail::unpack_block(x.data() + offsets_[v], n, m);
        double tr = std::max(std::abs(std::real(m.trace())), 1e-6);
        m = 0.7 * m + 0.3 * (tr / n) * MatC::Identity(n, n);
        detail::pack_block(m, n, x.data() + offsets_[v]);
      }
      project_equalities(x);
    }

    // Sqrt epigraph scaling from the start point, epigraph variables at zero.
    for (auto& s : sqrts_) {
      s.scale = std::max(s.arg.value(x), 1e-30);
      x(s.yi) = 0.0;
    }
    return x;
  }

  void project_equalities(VecR& x) {
    if (eqs_.empty()) return;
    const int e = static_cast<int>(eqs_.size());
    MatR a(e, total_);
    VecR r(e);
    for (int i = 0; i < e; ++i) {
      a.row(i) = eqs_[i].coef.transpose();
      r(i) = eqs_[i].value(x);
    }
    Eigen::CompleteOrthogonalDecomposition<MatR> cod(a);
    x -= cod.solve(r);
    double resid = 0.0;
    for (int i = 0; i < e; ++i) resid = std::max(resid, std::abs(eqs_[i].value(x)));
    if (resid > 1e-8) inconsistent_ = true;
  }

  MatR equality_kernel() const {
    if (eqs_.empty()) return MatR::Identity(total_, total_);
    const int e = static_cast<int>(eqs_.size());
    MatR a(e, total_);
    for (int i = 0; i < e; ++i) a.row(i) = eqs_[i].coef.transpose();
    Eigen::FullPivLU<MatR> lu(a);
    return lu.kernel();
  }

  // ---- barrier evaluation -------------------------------------------------

  struct Eval {
    bool interior = false;
    double phi = 0.0;  // -F + mu * barrier
  };

  double true_objective(const VecR& x) const {
    double f = lin_const_ + lin_.dot(x);
    for (const auto& [w, c] : logs_) f += w * std::log(std::max(c.value(x), 1e-300));
    for (const auto& s : sqrts_) f += s.weight * std::sqrt(std::max(s.arg.value(x), 0.0));
    return f;
  }

  Eval evaluate(const VecR& x, double slack, double mu) const {
    Eval ev;
    double barrier = 0.0;

    for (int v = 0; v < prog_.variable_count(); ++v) {
      int n = prog_.dims_[v];
      MatC m;
      detail::unpack_block(x.data() + offsets_[v], n, m);
      Eigen::LLT<MatC> llt(m);
      if (llt.info() != Eigen::Success) return ev;
      for (int i = 0; i < n; ++i) {
        double d = std::real(llt.matrixL()(i, i));
        if (!(d > 0.0)) return ev;
        barrier -= 2.0 * std::log(d);
      }
    }
    for (const auto& c : ineqs_) {
      double s = c.value(x) + (phase_one_ ? slack : 0.0);
      if (!(s > 0.0)) return ev;
      barrier -= std::log(s);
    }
    for (const auto& tri : cones_) {
      double u = tri[0].value(x) + (phase_one_ ? slack : 0.0);
      double v = tri[1].value(x) + (phase_one_ ? slack : 0.0);
      double w = tri[2].value(x);
      double q = 2.0 * u * v - w * w;
      if (!(q > 0.0) || !(u > 0.0) || !(v > 0.0)) return ev;
      barrier -= std::log(q);
    }
    for (const auto& s : sqrts_) {
      double y = x(s.yi);
      double q = s.arg.value(x) / s.scale - y * y;
      if (!(q > 0.0)) return ev;
      barrier -= std::log(q);
    }

    double f;
    if (phase_one_) {
      f = -slack;
    } else {
      f = lin_const_ + lin_.dot(x);
      for (const auto& [w, c] : logs_) {
        double s = c.value(x);
        if (!(s > 0.0)) return ev;
        f += w * std::log(s);
      }
      for (const auto& s : sqrts_) f += s.weight * std::sqrt(s.scale) * x(s.yi);
    }

    ev.interior = true;
    ev.phi = -f + mu * barrier;
    return ev;
  }

  // Gradient and Hessian of phi at the extended point xs (the feasibility
  // slack is the last coordinate during phase one).
  void derivatives(const VecR& xs, double mu, VecR& g, MatR& h) const {
    const int dim = static_cast<int>(xs.size());
    const int n_base = total_;
    VecR x = xs.head(n_base);
    double slack = phase_one_ ? xs(dim - 1) : 0.0;
    g = VecR::Zero(dim);
    h = MatR::Zero(dim, dim);

    // Adds wgrad * c to the gradient and whess * c c^T to the Hessian, where
    // c is cvec extended by slack_coef in the slack coordinate.
    auto rank_one = [&](const VecR& cvec, double slack_coef, double wgrad, double whess) {
      g.head(n_base) += wgrad * cvec;
      if (phase_one_ && slack_coef != 0.0) g(dim - 1) += wgrad * slack_coef;
      if (whess == 0.0) return;
      if (phase_one_ && slack_coef != 0.0) {
        VecR full = VecR::Zero(dim);
        full.head(n_base) = cvec;
        full(dim - 1) = slack_coef;
        h.noalias() += whess * full * full.transpose();
      } else {
        h.topLeftCorner(n_base, n_base).noalias() += whess * cvec * cvec.transpose();
      }
    };

    // objective part of -F
    if (phase_one_) {
      g(dim - 1) += 1.0;
    } else {
      g.head(n_base) -= lin_;
      for (const auto& [w, c] : logs_) {
        double s = c.value(x);
        rank_one(c.coef, 0.0, -w / s, w / (s * s));
      }
      for (const auto& s : sqrts_) g(s.yi) -= s.weight * std::sqrt(s.scale);
    }

    // PSD barrier
    for (int v = 0; v < prog_.variable_count(); ++v) {
      int n = prog_.dims_[v];
      MatC m;
      detail::unpack_block(x.data() + offsets_[v], n, m);
      MatC y = hermitian_part(m.llt().solve(MatC::Identity(n, n)));
      detail::logdet_derivatives(y, n, mu, g.data() + offsets_[v], h, offsets_[v]);
    }

    // affine inequality barrier
    for (const auto& c : ineqs_) {
      double s = c.value(x) + slack;
      rank_one(c.coef, 1.0, -mu / s, mu / (s * s));
    }

    // rotated cones (slack-relaxed during phase one)
    for (const auto& tri : cones_) {
      double u = tri[0].value(x) + slack;
      double v = tri[1].value(x) + slack;
      double w = tri[2].value(x);
      double q = 2.0 * u * v - w * w;

      VecR gu = VecR::Zero(dim), gv = VecR::Zero(dim), gw = VecR::Zero(dim);
      gu.head(n_base) = tri[0].coef;
      gv.head(n_base) = tri[1].coef;
      gw.head(n_base) = tri[2].coef;
      if (phase_one_) {
        gu(dim - 1) = 1.0;
        gv(dim - 1) = 1.0;
      }
      VecR gq = 2.0 * (v * gu + u * gv) - 2.0 * w * gw;
      g += (-mu / q) * gq;
      h.noalias() += (mu / (q * q)) * gq * gq.transpose();
      h.noalias() -= (mu / q) * 2.0 * (gu * gv.transpose() + gv * gu.transpose());
      h.noalias() += (mu / q) * 2.0 * gw * gw.transpose();
    }

    // sqrt epigraph cones
    for (const auto& s : sqrts_) {
      double y = x(s.yi);
      double q = s.arg.value(x) / s.scale - y * y;
      VecR gq = VecR::Zero(dim);
      gq.head(n_base) = s.arg.coef / s.scale;
      gq(s.yi) -= 2.0 * y;
      g += (-mu / q) * gq;
      h.noalias() += (mu / (q * q)) * gq * gq.transpose();
      h(s.yi, s.yi) += (mu / q) * 2.0;
    }
  }

  // ---- Newton driver --------------------------------------------------------

  struct NewtonResult {
    bool progressed = false;
    double decrement = 0.0;
  };

  NewtonResult newton_step(VecR& xs, double mu, const MatR& kernel, Solution& sol) {
    NewtonResult res;
    VecR g;
    MatR h;
    derivatives(xs, mu, g, h);

    MatR hr = kernel.transpose() * h * kernel;
    VecR gr = kernel.transpose() * g;
    VecR dz;
    double ridge = 0.0;
    bool solved = false;
    for (int attempt = 0; attempt < 8 && !solved; ++attempt) {
      MatR hreg = hr;
      if (ridge > 0.0) hreg.diagonal().array() += ridge;
      Eigen::LLT<MatR> llt(hreg);
      if (llt.info() == Eigen::Success) {
        dz = llt.solve(-gr);
        solved = true;
      } else {
        ridge = (ridge == 0.0)
                    ? 1e-10 * std::max(1.0, hr.diagonal().cwiseAbs().maxCoeff())
                    : ridge * 100.0;
      }
    }
    if (!solved) return res;
    VecR dx = kernel * dz;
    double dec = -g.dot(dx);
    if (!(dec > 0.0)) return res;
    res.decrement = dec;

    double slack = phase_one_ ? xs(xs.size() - 1) : 0.0;
    Eval cur = evaluate(xs.head(total_), slack, mu);
    double alpha = 1.0;
    for (int ls = 0; ls < 60; ++ls) {
      VecR cand = xs + alpha * dx;
      double cslack = phase_one_ ? cand(cand.size() - 1) : 0.0;
      Eval ev = evaluate(cand.head(total_), cslack, mu);
      if (ev.interior && ev.phi <= cur.phi - 1e-4 * alpha * dec) {
        xs = cand;
        res.progressed = true;
        break;
      }
      alpha *= 0.5;
    }
    ++sol.newton_steps;
    return res;
  }

  // Phase one: minimize a shared inequality slack until strictly feasible.
  bool restore_feasibility(VecR& x, Solution& sol) {
    double worst = 1.0;
    for (const auto& c : ineqs_) worst = std::min(worst, c.value(x));
    for (const auto& tri : cones_) {
      double u = tri[0].value(x), v = tri[1].value(x), w = tri[2].value(x);
      worst = std::min(worst, std::min(std::min(u, v), 2.0 * u * v - w * w));
    }
    if (worst > 1e-9) return true;

    phase_one_ = true;
    VecR xs(total_ + 1);
    xs.head(total_) = x;
    double t0 = std::max(0.0, -worst) + 1.0;
    for (int guard = 0; guard < 60; ++guard) {
      if (evaluate(x, t0, 1.0).interior) break;
      t0 *= 2.0;
    }
    xs(total_) = t0;

    MatR base_kernel = equality_kernel();
    MatR kernel = MatR::Zero(total_ + 1, base_kernel.cols() + 1);
    kernel.topLeftCorner(total_, base_kernel.cols()) = base_kernel;
    kernel(total_, base_kernel.cols()) = 1.0;

    double mu = 1.0;
    const double mu_floor = 1e-12;
    while (sol.newton_steps < opt_.max_iter) {
      NewtonResult r = newton_step(xs, mu, kernel, sol);
      if (xs(total_) < -1e-4) break;  // comfortably interior
      bool stage_done = !r.progressed || r.decrement < 0.1 * mu;
      if (stage_done) {
        if (mu <= mu_floor) break;
        mu = std::max(mu * 0.1, mu_floor);
      }
    }
    phase_one_ = false;
    double t_final = xs(total_);
    x = xs.head(total_);
    if (t_final >= -1e-9) {
      sol.status = Status::infeasible;
      return false;
    }
    return true;
  }

  void optimize(VecR& x, Solution& sol) {
    MatR kernel = equality_kernel();
    auto mu_target = [&](double fcur) {
      return std::max(opt_.tol * (1.0 + std::abs(fcur)) / (10.0 * nu_), 1e-15);
    };
    double mu = std::max((1.0 + std::abs(true_objective(x))) / nu_, 1e-12);
    mu_final_ = mu;

    while (sol.newton_steps < opt_.max_iter) {
      int stage_steps = 0;
      bool centered = false;
      while (!centered && sol.newton_steps < opt_.max_iter && stage_steps < 50) {
        NewtonResult r = newton_step(x, mu, kernel, sol);
        ++stage_steps;
        if (!r.progressed || r.decrement < std::max(0.01 * mu, 1e-18)) centered = true;
      }
      mu_final_ = mu;
      if (!centered) continue;  // keep the current barrier weight until centered
      double target = mu_target(true_objective(x));
      if (mu <= target) {
        // polish at the final barrier weight
        for (int extra = 0; extra < 10 && sol.newton_steps < opt_.max_iter; ++extra) {
          NewtonResult r = newton_step(x, mu, kernel, sol);
          if (!r.progressed || r.decrement < std::max(1e-6 * mu, 1e-20)) break;
        }
        sol.status = Status::optimal;
        return;
      }
      double factor = (stage_steps <= 2) ? 0.02 : 0.15;
      mu = std::max(mu * factor, target);
    }
    sol.status = Status::max_iterations;
  }

  // ---- reporting ------------------------------------------------------------

  void finalize(Solution& sol, const VecR& x, bool feasible) {
    sol.values = unpack(x);
    sol.objective = true_objective(x);
    if (!feasible) return;

    const double mu = mu_final_;
    sol.ineq_duals.assign(prog_.nonneg_.size(), 0.0);
    double gap = 0.0;
    for (std::size_t i = 0; i < ineqs_.size(); ++i) {
      double s = ineqs_[i].value(x);
      double lam = mu / std::max(s, 1e-300);
      sol.ineq_duals[ineq_index_[i]] = lam / ineq_scale_[i];
      gap += lam * s;
    }
    sol.psd_duals.clear();
    for (int v = 0; v < prog_.variable_count(); ++v) {
      int n = prog_.dims_[v];
      MatC m;
      detail::unpack_block(x.data() + offsets_[v], n, m);
      MatC y = hermitian_part(m.llt().solve(MatC::Identity(n, n)));
      sol.psd_duals.push_back(mu * y);
      gap += mu * n;
    }
    sol.cone_duals.clear();
    for (const auto& tri : cones_) {
      double u = tri[0].value(x), v = tri[1].value(x), w = tri[2].value(x);
      double q = std::max(2.0 * u * v - w * w, 1e-300);
      sol.cone_duals.push_back({mu / q * 2.0 * v, mu / q * 2.0 * u, -mu / q * 2.0 * w});
      gap += 2.0 * mu;
    }
    gap += 2.0 * mu * static_cast<double>(sqrts_.size());
    sol.kkt.gap = gap;

    // Equality multipliers by least squares on the stationarity condition.
    VecR resid = stationarity_vector(x, sol);
    sol.eq_duals.assign(eqs_.size(), 0.0);
    if (!eqs_.empty()) {
      const int e = static_cast<int>(eqs_.size());
      MatR a(e, total_);
      for (int i = 0; i < e; ++i) a.row(i) = eqs_[i].coef.transpose();
      VecR nu_vec = (a * a.transpose()).ldlt().solve(a * (-resid));
      for (int i = 0; i < e; ++i) sol.eq_duals[i] = nu_vec(i) / eq_scale_[i];
      resid += a.transpose() * nu_vec;
    }
    sol.kkt.dual = resid.cwiseAbs().maxCoeff();

    double primal = 0.0;
    for (const auto& c : ineqs_) primal = std::max(primal, -c.value(x));
    for (const auto& c : eqs_) primal = std::max(primal, std::abs(c.value(x)));
    for (int v = 0; v < prog_.variable_count(); ++v) {
      Eigen::SelfAdjointEigenSolver<MatC> es(sol.values[v], Eigen::EigenvaluesOnly);
      primal = std::max(primal, -es.eigenvalues().minCoeff());
    }
    for (const auto& tri : cones_) {
      double u = tri[0].value(x), v = tri[1].value(x), w = tri[2].value(x);
      primal = std::max(primal, -(2.0 * u * v - w * w));
      primal = std::max(primal, std::max(-u, -v));
    }
    sol.kkt.primal = primal;
  }

  // grad F + ineq duals + PSD duals + cone duals, in parameter space; the
  // equality contribution is appended by the caller. Sqrt terms use the
  // gradient of the true objective, which matches the epigraph multiplier
  // at the central point.
  VecR stationarity_vector(const VecR& x, const Solution& sol) const {
    VecR r = lin_;
    for (const auto& [w, c] : logs_) r += (w / c.value(x)) * c.coef;
    for (const auto& s : sqrts_) {
      double arg = std::max(s.arg.value(x), 1e-300);
      r += (s.weight / (2.0 * std::sqrt(arg))) * s.arg.coef;
    }
    for (std::size_t i = 0; i < ineqs_.size(); ++i)
      r += (sol.ineq_duals[ineq_index_[i]] * ineq_scale_[i]) * ineqs_[i].coef;
    for (int v = 0; v < prog_.variable_count(); ++v) {
      VecR zc = VecR::Zero(total_);
      detail::accumulate_trace_coefs(sol.psd_duals[v], prog_.dims_[v], 1.0,
                                     zc.data() + offsets_[v]);
      r += zc;
    }
    for (std::size_t c = 0; c < cones_.size(); ++c) {
      r += sol.cone_duals[c][0] * cones_[c][0].coef;
      r += sol.cone_duals[c][1] * cones_[c][1].coef;
      r += sol.cone_duals[c][2] * cones_[c][2].coef;
    }
    return r;
  }

  const Program& prog_;
  SolveOptions opt_;

  std::vector<int> offsets_;
  int base_ = 0, total_ = 0;
  bool inconsistent_ = false;
  bool phase_one_ = false;

  VecR lin_;
  double lin_const_ = 0.0;
  std::vector<std::pair<double, detail::CompiledExpr>> logs_;
  std::vector<SqrtTerm> sqrts_;
  std::vector<detail::CompiledExpr> ineqs_;
  std::vector<double> ineq_scale_;
  std::vector<int> ineq_index_;
  std::vector<detail::CompiledExpr> eqs_;
  std::vector<double> eq_scale_;
  std::vector<std::array<detail::CompiledExpr, 3>> cones_;
  double nu_ = 1.0;
  double mu_final_ = 1e-12;
};

inline Solution solve(const Program& prog, const SolveOptions& opt = {}) {
  Solver s(prog, opt);
  return s.run();
}

// Recomputes feasibility, stationarity, and complementarity residuals from
// the program data and a solution, without touching solver state.
inline KktResiduals validate_kkt(const Program& prog, const Solution& sol) {
  KktResiduals out;
  if (sol.values.size() != static_cast<std::size_t>(prog.variable_count()))
    throw std::invalid_argument("validate_kkt: solution/program variable mismatch");

  std::vector<int> offsets;
  int total = 0;
  for (int v = 0; v < prog.variable_count(); ++v) {
    offsets.push_back(total);
    total += detail::block_params(prog.dims_[v]);
  }
  VecR x = VecR::Zero(total);
  for (int v = 0; v < prog.variable_count(); ++v)
    detail::pack_block(hermitian_part(sol.values[v]), prog.dims_[v], x.data() + offsets[v]);

  auto compile = [&](const Expr& e) {
    detail::CompiledExpr c;
    c.coef = VecR::Zero(total);
    c.c0 = e.constant;
    for (const auto& [var, coef] : e.terms)
      detail::accumulate_trace_coefs(hermitian_part(coef), prog.dims_[var], 1.0,
                                     c.coef.data() + offsets[var]);
    return c;
  };

  // Primal feasibility, normalized per constraint.
  double primal = 0.0;
  for (const auto& e : prog.nonneg_) {
    auto c = compile(e);
    double scale = std::max({c.coef.cwiseAbs().maxCoeff(), std::abs(c.c0), 1e-300});
    primal = std::max(primal, -c.value(x) / scale);
  }
  for (const auto& e : prog.zero_) {
    auto c = compile(e);
    double scale = std::max({c.coef.cwiseAbs().maxCoeff(), std::abs(c.c0), 1e-300});
    primal = std::max(primal, std::abs(c.value(x)) / scale);
  }
  for (int v = 0; v < prog.variable_count(); ++v) {
    Eigen::SelfAdjointEigenSolver<MatC> es(hermitian_part(sol.values[v]), Eigen::EigenvaluesOnly);
    double lmax = std::abs(es.eigenvalues().maxCoeff());
    primal = std::max(primal, -es.eigenvalues().minCoeff() / std::max(lmax, 1.0));
  }
  for (const auto& tri : prog.cones_) {
    double u = compile(tri[0]).value(x);
    double v = compile(tri[1]).value(x);
    double w = compile(tri[2]).value(x);
    double scale = std::max({std::abs(u), std::abs(v), std::abs(w), 1.0});
    primal = std::max(primal, -(2.0 * u * v - w * w) / (scale * scale));
    primal = std::max(primal, std::max(-u, -v) / scale);
  }
  out.primal = primal;

  // Stationarity: grad F plus all dual contributions.
  VecR r = VecR::Zero(total);
  double grad_scale = 1.0;
  for (const auto& e : prog.linear_) {
    auto c = compile(e);
    r += c.coef;
    grad_scale = std::max(grad_scale, c.coef.cwiseAbs().maxCoeff());
  }
  for (const auto& [w, e] : prog.logs_) {
    if (Program::structurally_constant(e)) continue;
    auto c = compile(e);
    r += (w / std::max(c.value(x), 1e-300)) * c.coef;
  }
  for (const auto& [w, e] : prog.sqrts_) {
    if (Program::structurally_constant(e)) continue;
    auto c = compile(e);
    r += (w / (2.0 * std::sqrt(std::max(c.value(x), 1e-300)))) * c.coef;
  }
  for (std::size_t i = 0; i < prog.nonneg_.size(); ++i) {
    double lam = (i < sol.ineq_duals.size()) ? sol.ineq_duals[i] : 0.0;
    r += lam * compile(prog.nonneg_[i]).coef;
  }
  for (int v = 0; v < prog.variable_count(); ++v) {
    if (static_cast<std::size_t>(v) >= sol.psd_duals.size()) break;
    VecR zc = VecR::Zero(total);
    detail::accumulate_trace_coefs(hermitian_part(sol.psd_duals[v]), prog.dims_[v], 1.0,
                                   zc.data() + offsets[v]);
    r += zc;
  }
  for (std::size_t c = 0; c < prog.cones_.size() && c < sol.cone_duals.size(); ++c)
    for (int part = 0; part < 3; ++part)
      r += sol.cone_duals[c][part] * compile(prog.cones_[c][part]).coef;
  for (std::size_t i = 0; i < prog.zero_.size() && i < sol.eq_duals.size(); ++i)
    r += sol.eq_duals[i] * compile(prog.zero_[i]).coef;
  out.dual = r.cwiseAbs().maxCoeff() / grad_scale;

  // Complementarity products.
  double gap = 0.0;
  for (std::size_t i = 0; i < prog.nonneg_.size(); ++i) {
    double lam = (i < sol.ineq_duals.size()) ? sol.ineq_duals[i] : 0.0;
    gap += std::abs(lam * compile(prog.nonneg_[i]).value(x));
  }
  for (int v = 0; v < prog.variable_count(); ++v) {
    if (static_cast<std::size_t>(v) >= sol.psd_duals.size()) break;
    gap += std::abs(std::real((sol.psd_duals[v] * sol.values[v]).trace()));
  }
  out.gap = gap;
  return out;
}

}  // namespace aisac::conic
