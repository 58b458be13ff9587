#pragma once

// Dense matrix exponential (order-13 diagonal Pade with scaling and
// squaring), the augmented-operator construction that folds the zeroth,
// first and second phi-functions into a single exponential, and the exact
// dense per-step evaluator used as a validation oracle.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "mexpsim/constants.hpp"
#include "mexpsim/mna.hpp"
#include "mexpsim/sparse.hpp"

namespace mexpsim {

/// e^M for a dense square matrix. Scales so ||M/2^s||_1 <= theta13, applies
/// the order-13 diagonal Pade approximant, then squares s times.
inline Eigen::MatrixXd dense_expm(const Eigen::MatrixXd& M) {
  if (M.rows() != M.cols()) throw std::invalid_argument("dense_expm: matrix must be square");
  if (!M.allFinite()) throw std::invalid_argument("dense_expm: non-finite entries");
  const Eigen::Index n = M.rows();
  if (n == 0) return Eigen::MatrixXd(0, 0);

  static const double b[14] = {64764752532480000.0,
                               32382376266240000.0,
                               7771770303897600.0,
                               1187353796428800.0,
                               129060195264000.0,
                               10559470521600.0,
                               670442572800.0,
                               33522128640.0,
                               1323241920.0,
                               40840800.0,
                               960960.0,
                               16380.0,
                               182.0,
                               1.0};

  const double norm1 = M.cwiseAbs().colwise().sum().maxCoeff();
  if (norm1 == 0.0) return Eigen::MatrixXd::Identity(n, n);
  int s = 0;
  if (norm1 > tol::expm_theta13)
    s = static_cast<int>(std::ceil(std::log2(norm1 / tol::expm_theta13)));

  const Eigen::MatrixXd A = M / std::ldexp(1.0, s);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd A2 = A * A;
  const Eigen::MatrixXd A4 = A2 * A2;
  const Eigen::MatrixXd A6 = A4 * A2;

  const Eigen::MatrixXd U =
      A * (A6 * (b[13] * A6 + b[11] * A4 + b[9] * A2) + b[7] * A6 + b[5] * A4 + b[3] * A2 +
           b[1] * I);
  const Eigen::MatrixXd V =
      A6 * (b[12] * A6 + b[10] * A4 + b[8] * A2) + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * I;

  Eigen::MatrixXd F = (V - U).partialPivLu().solve(V + U);
  for (int k = 0; k < s; ++k) F = F * F;
  return F;
}

/// The (n+2) augmented pencil. With p(0) = e2 the tail evolves as (t, 1), so
/// the x-block of e^{A~ h} [x; e2] is exactly the exponential step plus the
/// first- and second-order phi terms of an affine input.
struct AugmentedSystem {
  SparseMatrix Ctil;  // blockdiag(C, I2)
  SparseMatrix Gtil;  // [[-G, W~], [0, J]]
  Eigen::Matrix<double, Eigen::Dynamic, 2> W;  // [ (Bu(t+h)-Bu(t))/h , Bu(t) ]
  int n = 0;

  static Eigen::Matrix2d nilpotent_j() {
    Eigen::Matrix2d j;
    j << 0.0, 1.0, 0.0, 0.0;
    return j;
  }
  static Eigen::Vector2d e2() { return Eigen::Vector2d(0.0, 1.0); }

  /// A~ = Ctil^{-1} Gtil, formed densely. Validation-scale only; requires a
  /// nonsingular C.
  Eigen::MatrixXd dense_atilde() const {
    const Eigen::MatrixXd cd = Ctil.dense();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(cd);
    if (!lu.isInvertible())
      throw std::domain_error("dense_atilde: C is singular; augmented flow undefined");
    return lu.solve(Gtil.dense());
  }
};

/// Assemble C~, G~ and the two-column input block for the step [t, t+h].
inline AugmentedSystem build_augmented(const MnaSystem& sys, double t, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("build_augmented: h must be positive");
  const int n = sys.n;
  AugmentedSystem aug;
  aug.n = n;
  aug.W.resize(n, 2);
  const Eigen::VectorXd bt = eval_b(sys, t);
  const Eigen::VectorXd bth = eval_b(sys, t + h);
  aug.W.col(0) = (bth - bt) / h;
  aug.W.col(1) = bt;

  std::vector<Triplet> tc;
  for (int j = 0; j < n; ++j)
    for (int p = sys.C.col_ptr()[j]; p < sys.C.col_ptr()[j + 1]; ++p)
      tc.push_back({sys.C.row_idx()[p], j, sys.C.values()[p]});
  tc.push_back({n, n, 1.0});
  tc.push_back({n + 1, n + 1, 1.0});
  aug.Ctil = SparseMatrix::from_triplets(n + 2, n + 2, std::move(tc));

  std::vector<Triplet> tg;
  for (int j = 0; j < n; ++j)
    for (int p = sys.G.col_ptr()[j]; p < sys.G.col_ptr()[j + 1]; ++p)
      tg.push_back({sys.G.row_idx()[p], j, -sys.G.values()[p]});
  for (int i = 0; i < n; ++i) {
    if (aug.W(i, 0) != 0.0) tg.push_back({i, n, aug.W(i, 0)});
    if (aug.W(i, 1) != 0.0) tg.push_back({i, n + 1, aug.W(i, 1)});
  }
  tg.push_back({n, n + 1, 1.0});  // J
  aug.Gtil = SparseMatrix::from_triplets(n + 2, n + 2, std::move(tg));
  return aug;
}

/// Exact one-step solution for an affine input on [t, t+h]:
///   x(t+h) = e^{Ah} x + (e^{Ah}-I) A^{-1} b(t)
///          + (e^{Ah} - Ah - I) A^{-2} (b(t+h)-b(t))/h
/// with A = -C^{-1}G and b = C^{-1}Bu, all applied through dense solves.
/// Validation tool: refuses singular C or singular A.
inline Eigen::VectorXd phi_sum_oracle(const MnaSystem& sys, const Eigen::VectorXd& x, double t,
                                      double h) {
  if (!(h > 0.0)) throw std::invalid_argument("phi_sum_oracle: h must be positive");
  if (x.size() != sys.n) throw std::invalid_argument("phi_sum_oracle: state size mismatch");
  const Eigen::MatrixXd Cd = sys.C.dense();
  Eigen::FullPivLU<Eigen::MatrixXd> luC(Cd);
  if (!luC.isInvertible()) throw std::domain_error("phi_sum_oracle: singular C");
  const Eigen::MatrixXd A = -luC.solve(sys.G.dense());
  Eigen::FullPivLU<Eigen::MatrixXd> luA(A);
  if (!luA.isInvertible()) throw std::domain_error("phi_sum_oracle: singular A");

  const Eigen::MatrixXd E = dense_expm(A * h);
  const Eigen::VectorXd b0 = luC.solve(eval_b(sys, t));
  const Eigen::VectorXd b1 = luC.solve(eval_b(sys, t + h));
  const Eigen::VectorXd slope = (b1 - b0) / h;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(sys.n, sys.n);

  Eigen::VectorXd out = E * x;
  out += luA.solve((E - I) * b0);
  out += luA.solve(luA.solve((E - A * h - I) * slope));
  return out;
}

}  // namespace mexpsim
