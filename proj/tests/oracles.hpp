#pragma once

// Test-only independent oracles and generators. These deliberately avoid the
// code paths under test: the exponential oracle is a long-double Taylor
// series, dense solves go through Eigen, and hand-stamped matrices are
// written out explicitly in the tests that use them.

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

#include "mexpsim/mna.hpp"
#include "mexpsim/netlist.hpp"
#include "mexpsim/sparse.hpp"

namespace testutil {

using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

// e^M summed as a plain Taylor series in extended precision (up to 200
// terms), with power-of-two pre-scaling so the series converges fast.
inline Eigen::MatrixXd taylor_expm(const Eigen::MatrixXd& M) {
  const Eigen::Index n = M.rows();
  LongMatrix A = M.cast<long double>();
  long double norm1 = 0.0L;
  for (Eigen::Index j = 0; j < n; ++j) {
    long double s = 0.0L;
    for (Eigen::Index i = 0; i < n; ++i) s += std::abs(A(i, j));
    norm1 = std::max(norm1, s);
  }
  int s = 0;
  while (std::ldexp(1.0L, s) * 0.5L < norm1) ++s;
  A /= std::ldexp(1.0L, s);

  LongMatrix sum = LongMatrix::Identity(n, n);
  LongMatrix term = LongMatrix::Identity(n, n);
  for (int k = 1; k <= 200; ++k) {
    term = term * A / static_cast<long double>(k);
    sum += term;
    if (term.cwiseAbs().maxCoeff() < 1e-26L * sum.cwiseAbs().maxCoeff()) break;
  }
  for (int k = 0; k < s; ++k) sum = sum * sum;
  return sum.cast<double>();
}

// Row-by-row dense mat-vec, the independent check for spmv.
inline Eigen::VectorXd dense_matvec(const Eigen::MatrixXd& A, const Eigen::VectorXd& x) {
  Eigen::VectorXd y(A.rows());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < A.cols(); ++j) acc += A(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

inline Eigen::MatrixXd randn(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = d(rng);
  return m;
}

inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double diag_boost = 1.0) {
  const Eigen::MatrixXd q = randn(rng, n, n);
  return (q * q.transpose()) / n + diag_boost * Eigen::MatrixXd::Identity(n, n);
}

// Wrap raw dense matrices as an MnaSystem so the Krylov and oracle machinery
// can run on synthetic (non-netlist) systems.
inline mexpsim::MnaSystem make_system(const Eigen::MatrixXd& C, const Eigen::MatrixXd& G,
                                      const Eigen::MatrixXd& B,
                                      std::vector<mexpsim::PwlWaveform> waves) {
  mexpsim::MnaSystem sys;
  const int n = static_cast<int>(C.rows());
  sys.C = mexpsim::SparseMatrix::from_dense(C);
  sys.G = mexpsim::SparseMatrix::from_dense(G);
  sys.B = mexpsim::SparseMatrix::from_dense(B);
  sys.n = n;
  sys.num_nodes = n;
  for (int i = 0; i < n; ++i) {
    const std::string label = "x" + std::to_string(i);
    sys.node_labels.push_back(label);
    sys.node_index.emplace(label, i);
    sys.probe_rows.push_back(i);
    sys.probe_labels.push_back(label);
  }
  for (std::size_t j = 0; j < waves.size(); ++j)
    sys.sources.push_back({"s" + std::to_string(j), std::move(waves[j])});
  return sys;
}

// Random stable dense system: SPD C and G keep -C^{-1}G well behaved, ramp
// sources make both phi terms active.
inline mexpsim::MnaSystem random_dense_system(std::mt19937_64& rng, int n, int nsrc,
                                              double ramp_end = 1.0) {
  const Eigen::MatrixXd C = random_spd(rng, n);
  const Eigen::MatrixXd G = random_spd(rng, n);
  const Eigen::MatrixXd B = randn(rng, n, nsrc);
  std::vector<mexpsim::PwlWaveform> waves;
  std::uniform_real_distribution<double> level(-1.0, 1.0);
  for (int j = 0; j < nsrc; ++j)
    waves.push_back(mexpsim::PwlWaveform{{{0.0, level(rng)}, {ramp_end, level(rng)}}});
  return make_system(C, G, B, std::move(waves));
}

}  // namespace testutil
