#pragma once

// Shift-and-invert Arnoldi on (I - gamma*A~)^{-1}, realized through one LU
// factorization of C + gamma*G plus per-step updates of the bordered
// two-column input block. Includes the exponential-action evaluation with
// H~ = I - H^{-1}, the posterior error estimate that gates subspace growth,
// and a conventional-Arnoldi mode for the stiffness comparison.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mexpsim/constants.hpp"
#include "mexpsim/expm.hpp"
#include "mexpsim/mna.hpp"
#include "mexpsim/sparse.hpp"

namespace mexpsim {

struct HessenbergError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One factorization of C + gamma*G serves the whole transient run; only the
/// two-column block W~ changes between time steps.
struct BlockLuFactors {
  LuFactors lu_sub;        // C + gamma*G
  double gamma = 0.0;      // seconds
  Eigen::Matrix2d i_j_inv; // inverse of I_J = I - gamma*J, exactly [[1,g],[0,1]]
  Eigen::Matrix<double, Eigen::Dynamic, 2> W;
  bool w_set = false;
  int n = 0;

  void set_input_block(const Eigen::Matrix<double, Eigen::Dynamic, 2>& w) {
    if (w.rows() != n) throw std::invalid_argument("set_input_block: wrong dimension");
    W = w;
    w_set = true;
  }
};

inline BlockLuFactors block_lu_factor(const MnaSystem& sys, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("block_lu_factor: gamma must be positive");
  BlockLuFactors f;
  f.gamma = gamma;
  f.n = sys.n;
  f.i_j_inv << 1.0, gamma, 0.0, 1.0;
  try {
    f.lu_sub = sparse_lu(add(sys.C, sys.G, 1.0, gamma));
  } catch (const SingularMatrixError& e) {
    throw SingularMatrixError(
        "block_lu_factor: C + gamma*G is singular (gamma = " + std::to_string(gamma) +
            "); try a different gamma",
        e.pivot_column);
  }
  return f;
}

/// One application of (C~ - gamma*G~)^{-1} C~ via the bordered factors:
///   z1 = C * v_x, z2 = v_tail, y2 = I_J^{-1} z2,
///   (C + gamma*G) y1 = z1 + gamma * W~ * y2,  result = [y1; y2].
inline Eigen::VectorXd block_lu_solve(const BlockLuFactors& f, const MnaSystem& sys,
                                      const Eigen::VectorXd& v) {
  if (!f.w_set) throw std::logic_error("block_lu_solve: input block W~ not set for this step");
  if (v.size() != f.n + 2) throw std::invalid_argument("block_lu_solve: dimension mismatch");
  const Eigen::VectorXd z1 = spmv(sys.C, v.head(f.n));
  const Eigen::Vector2d y2 = f.i_j_inv * v.tail<2>();
  const Eigen::VectorXd y1 = lu_solve(f.lu_sub, z1 + f.gamma * (f.W * y2));
  Eigen::VectorXd out(f.n + 2);
  out.head(f.n) = y1;
  out.tail<2>() = y2;
  return out;
}

/// Orthonormal basis of the rational Krylov subspace together with the
/// (m+1) x m Hessenberg matrix of the shift-and-invert operator. V keeps
/// m+1 columns: the last one is v_{m+1}.
struct KrylovBasis {
  Eigen::MatrixXd V;   // (n+2) x (m+1) valid columns
  Eigen::MatrixXd H;   // (m+1) x m valid block
  Eigen::VectorXd v0;  // original start vector (alpha = 0 short-circuit)
  double beta = 0.0;   // ||v0||_2
  double gamma = 0.0;
  int m = 0;
  bool happy = false;

  double h_next() const { return m > 0 ? H(m, m - 1) : 0.0; }
  Eigen::VectorXd v_next() const {
    if (happy || m == 0) return Eigen::VectorXd::Zero(V.rows());
    return V.col(m);
  }
  Eigen::MatrixXd hm() const { return H.topLeftCorner(m, m); }
  auto vm() const { return V.leftCols(m); }
};

/// Incremental Arnoldi driver: extend() applies the solve operator once and
/// appends one basis vector (modified Gram-Schmidt with an unconditional
/// second pass). Returns false on happy breakdown.
///
/// tail_scale applies the similarity T = diag(I_n, tail_scale, 1) to the
/// augmented operator, i.e. the Arnoldi runs on T^{-1} S T. Choosing
/// tail_scale = h turns the input block into [Bu(t+h)-Bu(t), Bu(t)], which
/// removes the 1/h blow-up of the slope column (the raw column makes the
/// Hessenberg matrix artificially non-normal for picosecond steps). The
/// first n rows of T are the identity, so the x-part of any evaluated
/// action is unchanged; the start tail (0, 1) is likewise invariant.
class RationalArnoldi {
 public:
  RationalArnoldi(const BlockLuFactors& factors, const MnaSystem& sys, Eigen::VectorXd v0,
                  int m_reserve = tol::default_m_max, double tail_scale = 1.0)
      : factors_(factors), sys_(sys), tail_scale_(tail_scale) {
    if (v0.size() != factors.n + 2)
      throw std::invalid_argument("rational_arnoldi: start vector has wrong dimension");
    if (!(tail_scale > 0.0))
      throw std::invalid_argument("rational_arnoldi: tail_scale must be positive");
    v0[factors.n] /= tail_scale;
    b_.beta = v0.norm();
    if (b_.beta == 0.0) throw std::invalid_argument("rational_arnoldi: zero start vector");
    b_.gamma = factors.gamma;
    b_.v0 = std::move(v0);
    const int cap = std::max(1, m_reserve);
    b_.V.resize(b_.v0.size(), cap + 1);
    b_.H = Eigen::MatrixXd::Zero(cap + 1, cap);
    b_.V.col(0) = b_.v0 / b_.beta;
  }

  const KrylovBasis& basis() const { return b_; }

  bool extend() {
    if (b_.happy) return false;
    const int j = b_.m;
    if (j + 1 >= b_.V.cols()) grow();
    Eigen::VectorXd vin = b_.V.col(j);
    vin[factors_.n] *= tail_scale_;
    Eigen::VectorXd w = block_lu_solve(factors_, sys_, vin);
    w[factors_.n] /= tail_scale_;
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) {
        const double c = b_.V.col(i).dot(w);
        b_.H(i, j) += c;
        w -= c * b_.V.col(i);
      }
    const double h = w.norm();
    b_.H(j + 1, j) = h;
    hmax_ = std::max(hmax_, b_.H.col(j).head(j + 2).cwiseAbs().maxCoeff());
    b_.m = j + 1;
    if (h <= tol::happy_breakdown * hmax_) {
      b_.H(j + 1, j) = 0.0;
      b_.happy = true;
      return false;
    }
    b_.V.col(j + 1) = w / h;
    return true;
  }

 private:
  void grow() {
    const int cap = static_cast<int>(b_.H.cols()) * 2;
    b_.V.conservativeResize(Eigen::NoChange, cap + 1);
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(cap + 1, cap);
    h.topLeftCorner(b_.H.rows(), b_.H.cols()) = b_.H;
    b_.H = std::move(h);
  }

  const BlockLuFactors& factors_;
  const MnaSystem& sys_;
  KrylovBasis b_;
  double hmax_ = 0.0;
  double tail_scale_ = 1.0;
};

/// Build an m-dimensional basis in one call (stops early on happy breakdown).
inline KrylovBasis rational_arnoldi(const BlockLuFactors& factors, const MnaSystem& sys,
                                    const Eigen::VectorXd& v0, int m, double tail_scale = 1.0) {
  if (m < 1) throw std::invalid_argument("rational_arnoldi: m must be >= 1");
  RationalArnoldi arn(factors, sys, v0, m, tail_scale);
  for (int i = 0; i < m; ++i)
    if (!arn.extend()) break;
  return arn.basis();
}

namespace detail {

// f_k(H) for f_k(mu) = e^{alpha (1 - 1/mu)} / mu^k, extended by f_k(0) = 0.
//
// A singular C~ makes the shift-invert operator singular: the pencil's
// algebraic (infinite-eigenvalue) modes map to mu = 0, and with
// source-driven capacitor loops the zero eigenvalue is defective, so the
// null structure is a Jordan chain. The smooth DAE flow assigns 0 to those
// modes, which is the mu -> 0+ limit of every f_k. range(H) is H-invariant,
// so against an orthonormal range basis Q (from the SVD)
//   H = [Q Qp] [[H', E], [0, 0]] [Q Qp]^T,
//   f_k(H) = [Q Qp] [[f_k(H'), f_{k+1}(H') E], [0, 0]] [Q Qp]^T,
// and a defective chain just peels off one layer per recursion.
inline Eigen::MatrixXd shift_invert_flow(const Eigen::MatrixXd& H, double alpha, int k,
                                         int depth = 0) {
  const int m = static_cast<int>(H.rows());
  if (depth > 8) throw HessenbergError("H_{m,m} deflation recursed too deep");
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (m == 0 || sv[0] == 0.0) return Eigen::MatrixXd::Zero(m, m);
  const double cutoff =
      sv[0] * std::max(m * std::numeric_limits<double>::epsilon(), 1.0 / tol::hessenberg_cond_max);
  int rank = 0;
  while (rank < m && sv[rank] > cutoff) ++rank;
  if (rank == m) {
    const Eigen::MatrixXd h_inv = svd.solve(Eigen::MatrixXd::Identity(m, m));
    Eigen::MatrixXd htil = -h_inv;
    htil.diagonal().array() += 1.0;
    Eigen::MatrixXd F = dense_expm(alpha * htil);
    for (int i = 0; i < k; ++i) F = h_inv * F;
    return F;
  }
  const Eigen::MatrixXd Q = svd.matrixU().leftCols(rank);
  const Eigen::MatrixXd Qp = svd.matrixU().rightCols(m - rank);
  const Eigen::MatrixXd Hp = Q.transpose() * H * Q;
  const Eigen::MatrixXd E = Q.transpose() * H * Qp;
  const Eigen::MatrixXd G = shift_invert_flow(Hp, alpha, k, depth + 1);
  const Eigen::MatrixXd X = shift_invert_flow(Hp, alpha, k + 1, depth + 1) * E;
  return Q * (G * Q.transpose()) + Q * (X * Qp.transpose());
}

}  // namespace detail

/// e^{A~ h} v ~= beta * V_m * e^{alpha (I - H^{-1})} e_1 with alpha = h/gamma.
/// The same basis serves any alpha; alpha = 0 returns the start vector
/// exactly.
inline Eigen::VectorXd eval_expm_action(const KrylovBasis& b, double alpha) {
  if (b.m < 1) throw std::invalid_argument("eval_expm_action: empty basis");
  if (alpha < 0.0) throw std::invalid_argument("eval_expm_action: alpha must be >= 0");
  if (alpha == 0.0) return b.v0;
  return b.beta * (b.vm() * detail::shift_invert_flow(b.hm(), alpha, 0).col(0));
}

/// Posterior estimate err(m, alpha) = (beta/gamma) h_{m+1,m}
/// |e_m^T H^{-1} e^{alpha H~} e_1| * rho. The default rho = 1 treats the
/// unit-norm v_{m+1} as surrogate for (I - gamma*A~) v_{m+1}; see
/// posterior_error_exact for the solver-backed variant.
inline double posterior_error(const KrylovBasis& b, double alpha, double rho = 1.0) {
  if (b.m < 1) throw std::invalid_argument("posterior_error: empty basis");
  if (b.happy || b.h_next() == 0.0) return 0.0;
  const double scalar = std::abs(detail::shift_invert_flow(b.hm(), alpha, 1)(b.m - 1, 0));
  return (b.beta / b.gamma) * b.h_next() * scalar * rho;
}

/// Exact-mode estimate: rho = ||(I - gamma*A~) v_{m+1}||_2 computed through a
/// dense solve with C~; only available when C is nonsingular. tail_scale must
/// match the value the basis was built with.
inline double posterior_error_exact(const KrylovBasis& b, const MnaSystem& sys,
                                    const Eigen::Matrix<double, Eigen::Dynamic, 2>& W,
                                    double alpha, double tail_scale = 1.0) {
  if (b.happy || b.h_next() == 0.0) return 0.0;
  const int n = sys.n;
  const Eigen::VectorXd vn = b.v_next();
  Eigen::Vector2d tail_scaled(vn[n] * tail_scale, vn[n + 1]);
  Eigen::VectorXd gv(n + 2);
  gv.head(n) = -spmv(sys.G, vn.head(n)) + W * tail_scaled;
  gv(n) = vn(n + 1) / tail_scale;  // J on the tail, under the similarity
  gv(n + 1) = 0.0;
  // C~ is blockdiag(C, I2); solve the blocks separately so the unit tail
  // entries do not distort the rank test for tiny capacitances.
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sys.C.dense());
  if (!lu.isInvertible())
    throw std::domain_error("posterior_error_exact: C~ singular; exact mode unavailable");
  Eigen::VectorXd z(n + 2);
  z.head(n) = lu.solve(gv.head(n));
  z.tail<2>() = gv.tail<2>();
  const double rho = (vn - b.gamma * z).norm();
  return posterior_error(b, alpha, rho);
}

/// Applies A~ = C~^{-1} G~ for the conventional-Krylov comparison mode.
/// Fast path when C is diagonal (the generated meshes); otherwise a dense
/// factorization of C at validation scale. Singular C is a documented
/// limitation of this mode.
class AugmentedOperator {
 public:
  AugmentedOperator(const MnaSystem& sys, Eigen::Matrix<double, Eigen::Dynamic, 2> w,
                    double tail_scale = 1.0)
      : sys_(sys), W_(std::move(w)), tail_scale_(tail_scale) {
    const int n = sys.n;
    if (W_.rows() != n) throw std::invalid_argument("AugmentedOperator: W has wrong dimension");
    if (!(tail_scale > 0.0))
      throw std::invalid_argument("AugmentedOperator: tail_scale must be positive");
    if (sys.C.is_diagonal()) {
      inv_cdiag_.resize(n);
      for (int i = 0; i < n; ++i) {
        const double c = sys.C.coeff(i, i);
        if (c == 0.0)
          throw std::domain_error("standard_arnoldi: C is singular (zero diagonal at state '" +
                                  sys.state_label(i) + "'); this mode requires nonsingular C");
        inv_cdiag_[i] = 1.0 / c;
      }
      diagonal_ = true;
    } else {
      if (n > tol::oracle_max_dim)
        throw std::domain_error("standard_arnoldi: dense C^{-1} only at validation scale");
      lu_.compute(sys.C.dense());
      if (!lu_.isInvertible()) throw std::domain_error("standard_arnoldi: C is singular");
    }
  }

  int dim() const { return sys_.n + 2; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    const int n = sys_.n;
    if (v.size() != n + 2) throw std::invalid_argument("AugmentedOperator: dimension mismatch");
    const Eigen::Vector2d tail(v[n] * tail_scale_, v[n + 1]);
    Eigen::VectorXd gx = -spmv(sys_.G, v.head(n)) + W_ * tail;
    Eigen::VectorXd out(n + 2);
    if (diagonal_)
      out.head(n) = inv_cdiag_.cwiseProduct(gx);
    else
      out.head(n) = lu_.solve(gx);
    out(n) = v(n + 1) / tail_scale_;
    out(n + 1) = 0.0;
    return out;
  }

 private:
  const MnaSystem& sys_;
  Eigen::Matrix<double, Eigen::Dynamic, 2> W_;
  double tail_scale_ = 1.0;
  Eigen::VectorXd inv_cdiag_;
  Eigen::FullPivLU<Eigen::MatrixXd> lu_;
  bool diagonal_ = false;
};

/// Conventional Arnoldi on A~ itself, the baseline this method replaces.
inline KrylovBasis standard_arnoldi(const AugmentedOperator& op, const Eigen::VectorXd& v0,
                                    int m) {
  if (m < 1) throw std::invalid_argument("standard_arnoldi: m must be >= 1");
  KrylovBasis b;
  b.beta = v0.norm();
  if (b.beta == 0.0) throw std::invalid_argument("standard_arnoldi: zero start vector");
  b.v0 = v0;
  b.gamma = 0.0;
  b.V.resize(v0.size(), m + 1);
  b.H = Eigen::MatrixXd::Zero(m + 1, m);
  b.V.col(0) = v0 / b.beta;
  double hmax = 0.0;
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd w = op.apply(b.V.col(j));
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i <= j; ++i) {
        const double c = b.V.col(i).dot(w);
        b.H(i, j) += c;
        w -= c * b.V.col(i);
      }
    const double h = w.norm();
    b.H(j + 1, j) = h;
    hmax = std::max(hmax, b.H.col(j).head(j + 2).cwiseAbs().maxCoeff());
    b.m = j + 1;
    if (h <= tol::happy_breakdown * hmax) {
      b.H(j + 1, j) = 0.0;
      b.happy = true;
      break;
    }
    b.V.col(j + 1) = w / h;
  }
  return b;
}

/// e^{A~ h} v ~= beta * V_m e^{h H_m} e_1 for a conventional-Arnoldi basis.
inline Eigen::VectorXd eval_standard_action(const KrylovBasis& b, double h, int m_use = 0) {
  const int m = m_use > 0 ? m_use : b.m;
  if (m < 1 || m > b.m) throw std::invalid_argument("eval_standard_action: bad m");
  const Eigen::MatrixXd E = dense_expm(h * b.H.topLeftCorner(m, m));
  return b.beta * (b.V.leftCols(m) * E.col(0));
}

/// Smallest ladder dimension at which the conventional approximation reaches
/// the target error against a reference vector; -1 when even the cap fails.
inline int standard_required_m(const AugmentedOperator& op, const Eigen::VectorXd& v0, double h,
                               const Eigen::VectorXd& reference, double target_abs,
                               const std::vector<int>& ladder) {
  if (ladder.empty()) throw std::invalid_argument("standard_required_m: empty ladder");
  const KrylovBasis b = standard_arnoldi(op, v0, ladder.back());
  for (int m : ladder) {
    if (m > b.m) m = b.m;  // happy breakdown caps usable dimension
    const Eigen::VectorXd y = eval_standard_action(b, h, m);
    if (y.allFinite() && (y - reference).norm() <= target_abs) return m;
    if (b.happy && m == b.m) break;
  }
  return -1;
}

}  // namespace mexpsim
