#include <catch2/catch.hpp>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <complex>
#include <random>
#include <vector>

#include "mexpsim/engine.hpp"
#include "mexpsim/expm.hpp"
#include "mexpsim/netlist.hpp"
#include "mexpsim/rational_krylov.hpp"
#include "oracles.hpp"

using namespace mexpsim;

namespace {

MnaSystem mesh_system(int rows, int cols, bool current_source, std::uint64_t seed,
                      double c_lo = 1e-13, double c_hi = 1e-12, double g_lo = 1e-3,
                      double g_hi = 1e-2, bool ground_leak = false) {
  MeshSpec spec;
  spec.rows = rows;
  spec.cols = cols;
  spec.seed = seed;
  spec.current_source = current_source;
  spec.c_min = c_lo;
  spec.c_max = c_hi;
  spec.r_min = 1.0 / g_hi;
  spec.r_max = 1.0 / g_lo;
  Netlist nl = generate_pdn_mesh(spec);
  if (ground_leak) {
    // a current-source mesh is resistively floating; tie one corner down so
    // G (and hence A) is nonsingular for DC and the dense phi oracle
    Element r;
    r.kind = ElementKind::Resistor;
    r.name = "Rgnd";
    r.node_pos = "n0_0";
    r.node_neg = "0";
    r.value = spec.r_min;
    nl.elements.push_back(std::move(r));
  }
  return build_mna(nl);
}

Eigen::VectorXd start_vector(const MnaSystem& sys, const Eigen::VectorXd& x) {
  Eigen::VectorXd v(sys.n + 2);
  v << x, 0.0, 1.0;
  return v;
}

// One exact augmented step: x-part from the phi oracle, tail analytic.
Eigen::VectorXd augmented_reference(const MnaSystem& sys, const Eigen::VectorXd& x, double t,
                                    double h) {
  Eigen::VectorXd ref(sys.n + 2);
  ref.head(sys.n) = phi_sum_oracle(sys, x, t, h);
  ref(sys.n) = h;
  ref(sys.n + 1) = 1.0;
  return ref;
}

}  // namespace

TEST_CASE("block_lu_factor builds the exact 2x2 tail inverse", "[rational]") {
  const MnaSystem sys = mesh_system(2, 2, true, 1);
  const BlockLuFactors f = block_lu_factor(sys, 1e-10);
  Eigen::Matrix2d expect;
  expect << 1.0, 1e-10, 0.0, 1.0;
  REQUIRE(f.i_j_inv == expect);
  REQUIRE_THROWS_AS(block_lu_factor(sys, 0.0), std::invalid_argument);
}

TEST_CASE("block_lu_factor reconstructs C + gamma*G", "[rational]") {
  const MnaSystem sys = build_mna(parse_netlist(
      "I1 0 n1 DC 1\n"
      "R1 n1 n2 10\n"
      "R2 n2 n3 20\n"
      "R3 n3 0 5\n"
      "C1 n1 0 1e-11\n"
      "C2 n2 0 2e-11\n"
      "C3 n3 0 5e-12\n"));
  const double gamma = 1e-10;
  const BlockLuFactors f = block_lu_factor(sys, gamma);
  const Eigen::MatrixXd M = add(sys.C, sys.G, 1.0, gamma).dense();

  const int n = sys.n;
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[f.lu_sub.row_perm[i]] = i;
  Eigen::MatrixXd paq(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) paq(i, j) = M(p[i], f.lu_sub.col_perm[j]);
  REQUIRE((paq - f.lu_sub.L.dense() * f.lu_sub.U.dense()).norm() <= 1e-12 * M.norm());
}

TEST_CASE("swapping the input block keeps the factor object", "[rational]") {
  const MnaSystem sys = mesh_system(3, 3, true, 2);
  BlockLuFactors f = block_lu_factor(sys, 1e-10);
  const double* lvalues = f.lu_sub.L.values().data();

  Eigen::Matrix<double, Eigen::Dynamic, 2> w1 =
      Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(sys.n, 2);
  w1(0, 0) = 1.0;
  f.set_input_block(w1);
  const Eigen::VectorXd v = Eigen::VectorXd::Ones(sys.n + 2);
  const Eigen::VectorXd r1 = block_lu_solve(f, sys, v);

  Eigen::Matrix<double, Eigen::Dynamic, 2> w2 = w1;
  w2(1, 1) = -2.0;
  f.set_input_block(w2);
  const Eigen::VectorXd r2 = block_lu_solve(f, sys, v);

  REQUIRE(f.lu_sub.L.values().data() == lvalues);  // no refactorization
  REQUIRE(r1 != r2);
}

TEST_CASE("block_lu_solve on a tail-only vector applies the 2x2 inverse", "[rational]") {
  const MnaSystem sys = mesh_system(2, 3, true, 3);
  const double gamma = 1e-10;
  BlockLuFactors f = block_lu_factor(sys, gamma);
  f.set_input_block(Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(sys.n, 2));
  Eigen::VectorXd v = Eigen::VectorXd::Zero(sys.n + 2);
  v(sys.n + 1) = 1.0;
  const Eigen::VectorXd out = block_lu_solve(f, sys, v);
  REQUIRE(out.head(sys.n).isZero(0.0));
  REQUIRE(out(sys.n) == gamma);
  REQUIRE(out(sys.n + 1) == 1.0);
}

TEST_CASE("block_lu_solve requires the input block", "[rational]") {
  const MnaSystem sys = mesh_system(2, 2, true, 4);
  BlockLuFactors f = block_lu_factor(sys, 1e-10);
  REQUIRE_THROWS_AS(block_lu_solve(f, sys, Eigen::VectorXd::Ones(sys.n + 2)), std::logic_error);
}

TEST_CASE("block_lu_solve equals the dense solve of the assembled pencil", "[rational]") {
  const MnaSystem sys = mesh_system(2, 2, false, 5);  // includes a vsource branch
  const double gamma = 1e-10;
  const AugmentedSystem aug = build_augmented(sys, 0.0, 1e-11);
  BlockLuFactors f = block_lu_factor(sys, gamma);
  f.set_input_block(aug.W);

  std::mt19937_64 rng(6);
  const Eigen::VectorXd v = testutil::randn(rng, sys.n + 2, 1);
  const Eigen::VectorXd got = block_lu_solve(f, sys, v);

  const Eigen::MatrixXd lhs = aug.Ctil.dense() - gamma * aug.Gtil.dense();
  const Eigen::VectorXd ref =
      Eigen::FullPivLU<Eigen::MatrixXd>(lhs).solve(aug.Ctil.dense() * v);
  REQUIRE((got - ref).norm() <= 1e-10 * ref.norm());
}

TEST_CASE("block_lu_solve approaches the identity as gamma -> 0 (nonsingular C)", "[rational]") {
  const MnaSystem sys = mesh_system(2, 2, true, 7);
  BlockLuFactors f = block_lu_factor(sys, 1e-18);
  f.set_input_block(Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(sys.n, 2));
  std::mt19937_64 rng(8);
  const Eigen::VectorXd v = testutil::randn(rng, sys.n + 2, 1);
  const Eigen::VectorXd out = block_lu_solve(f, sys, v);
  REQUIRE((out - v).norm() <= 1e-6 * v.norm());
}

TEST_CASE("block vs monolithic sparse solve on random systems", "[rational]") {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 5; ++trial) {
    const int n = 10 + static_cast<int>(rng() % 51);
    MnaSystem sys = testutil::random_dense_system(rng, n, 2);
    const double gamma = 1e-3;
    const AugmentedSystem aug = build_augmented(sys, 0.0, 0.25);
    BlockLuFactors f = block_lu_factor(sys, gamma);
    f.set_input_block(aug.W);

    const SparseMatrix pencil = add(aug.Ctil, aug.Gtil, 1.0, -gamma);
    const LuFactors mono = sparse_lu(pencil);

    const Eigen::VectorXd v = testutil::randn(rng, n + 2, 1);
    const Eigen::VectorXd a = block_lu_solve(f, sys, v);
    const Eigen::VectorXd b = lu_solve(mono, spmv(aug.Ctil, v));
    REQUIRE((a - b).norm() <= 1e-12 * b.norm());
  }
}

TEST_CASE("full-dimension rational subspace reproduces the dense action", "[rational]") {
  // scalar RC: n = 1 so m = n + 2 = 3 spans the whole augmented space
  const MnaSystem sys = build_mna(parse_netlist(
      "I1 0 a PWL(0 0 1 1)\n"
      "R1 a 0 1\n"
      "C1 a 0 1\n"));
  const double gamma = 0.2, h = 0.5;
  const AugmentedSystem aug = build_augmented(sys, 0.0, h);
  BlockLuFactors f = block_lu_factor(sys, gamma);
  f.set_input_block(aug.W);

  Eigen::VectorXd x0(1);
  x0 << 0.7;
  const KrylovBasis basis = rational_arnoldi(f, sys, start_vector(sys, x0), 3);
  REQUIRE(basis.m <= 3);
  const Eigen::VectorXd y = eval_expm_action(basis, h / gamma);
  const Eigen::VectorXd ref = dense_expm(aug.dense_atilde() * h) * start_vector(sys, x0);
  REQUIRE((y - ref).norm() <= 1e-12 * ref.norm());
}

TEST_CASE("orthonormality and the Arnoldi relation on a 100-node mesh", "[rational]") {
  const MnaSystem sys = mesh_system(10, 10, false, 9);
  const double gamma = 1e-10, h = 1e-11;
  const AugmentedSystem aug = build_augmented(sys, 0.0, h);
  BlockLuFactors f = block_lu_factor(sys, gamma);
  f.set_input_block(aug.W);

  const Eigen::VectorXd x0 = dc_analysis(sys);
  const KrylovBasis b = rational_arnoldi(f, sys, start_vector(sys, x0), 10);
  REQUIRE(b.m == 10);

  const Eigen::MatrixXd vtv = b.vm().transpose() * b.vm();
  REQUIRE((vtv - Eigen::MatrixXd::Identity(b.m, b.m)).cwiseAbs().maxCoeff() <= 1e-10);

  // column-wise residual of (I - gamma*A~)^{-1} V_m = V_m H + h_{m+1,m} v_{m+1} e_m^T
  const double hnorm = b.H.topLeftCorner(b.m + 1, b.m).norm();
  for (int i = 0; i < b.m; ++i) {
    Eigen::VectorXd lhs = block_lu_solve(f, sys, b.V.col(i));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(sys.n + 2);
    for (int k = 0; k <= std::min(i + 1, b.m - 1); ++k) rhs += b.H(k, i) * b.V.col(k);
    if (i == b.m - 1) rhs += b.h_next() * b.v_next();
    REQUIRE((lhs - rhs).norm() <= 1e-10 * hnorm);
  }
}

TEST_CASE("eval_expm_action at alpha = 0 returns the start vector exactly", "[rational]") {
  const MnaSystem sys = mesh_system(3, 3, true, 10);
  const AugmentedSystem aug = build_augmented(sys, 0.0, 1e-11);
  BlockLuFactors f = block_lu_factor(sys, 1e-10);
  f.set_input_block(aug.W);
  std::mt19937_64 rng(11);
  const Eigen::VectorXd v0 = testutil::randn(rng, sys.n + 2, 1);
  const KrylovBasis b = rational_arnoldi(f, sys, v0, 4);
  const Eigen::VectorXd y = eval_expm_action(b, 0.0);
  REQUIRE(y == v0);
}

TEST_CASE("expm action on a 20-node mesh matches the phi oracle at alpha = 0.1", "[rational]") {
  const MnaSystem sys = mesh_system(4, 5, true, 12, 1e-13, 1e-12, 1e-3, 1e-2, true);
  const double gamma = 1e-10, h = 1e-11;  // alpha = 0.1
  const AugmentedSystem aug = build_augmented(sys, 0.0, h);
  BlockLuFactors f = block_lu_factor(sys, gamma);
  f.set_input_block(aug.W);

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(sys.n);
  const Eigen::VectorXd v0 = start_vector(sys, x0);
  const KrylovBasis b = rational_arnoldi(f, sys, v0, sys.n + 2, h);
  const Eigen::VectorXd y = eval_expm_action(b, h / gamma);
  const Eigen::VectorXd ref = phi_sum_oracle(sys, x0, 0.0, h);
  REQUIRE((y.head(sys.n) - ref).norm() <= 1e-8 * (1.0 + ref.norm()));
}

TEST_CASE("two half steps agree with one full step on a linear segment", "[rational]") {
  const MnaSystem sys = mesh_system(4, 5, true, 13, 1e-13, 1e-12, 1e-3, 1e-2, true);
  const double gamma = 1e-10, h = 4e-10;  // inside the post-ramp hold segment
  const double t0 = 2e-11;
  const Eigen::VectorXd x0 = dc_analysis(sys, Eigen::VectorXd::Ones(1));

  auto one_step = [&](const Eigen::VectorXd& x, double t, double dt) {
    const AugmentedSystem aug = build_augmented(sys, t, dt);
    BlockLuFactors f = block_lu_factor(sys, gamma);
    f.set_input_block(aug.W);
    const KrylovBasis b = rational_arnoldi(f, sys, start_vector(sys, x), 20, dt);
    return Eigen::VectorXd(eval_expm_action(b, dt / gamma).head(sys.n));
  };

  const Eigen::VectorXd two = one_step(one_step(x0, t0, h / 2), t0 + h / 2, h / 2);
  const Eigen::VectorXd one = one_step(x0, t0, h);
  REQUIRE((two - one).norm() <= 1e-7 * (1.0 + one.norm()));
}

TEST_CASE("posterior error vanishes on happy breakdown", "[rational]") {
  const MnaSystem sys = build_mna(parse_netlist(
      "I1 0 a PWL(0 0 1 1)\n"
      "R1 a 0 1\n"
      "C1 a 0 1\n"));
  const AugmentedSystem aug = build_augmented(sys, 0.0, 0.5);
  BlockLuFactors f = block_lu_factor(sys, 0.2);
  f.set_input_block(aug.W);
  Eigen::VectorXd x0(1);
  x0 << 1.0;
  const KrylovBasis b = rational_arnoldi(f, sys, start_vector(sys, x0), 10);
  REQUIRE(b.happy);  // subspace dimension cannot exceed n + 2 = 3
  REQUIRE(b.m <= 3);
  REQUIRE(posterior_error(b, 2.5) == 0.0);
}

TEST_CASE("posterior error trends down as m grows on a stiff mesh", "[rational]") {
  const MnaSystem sys =
      mesh_system(10, 10, false, 14, 5.04e-19, 1.00e-15, 1.09e-2, 1.00e2);
  const double gamma = 1e-10, h = 1e-11;
  const AugmentedSystem aug = build_augmented(sys, 0.0, h);
  BlockLuFactors f = block_lu_factor(sys, gamma);
  f.set_input_block(aug.W);

  RationalArnoldi arn(f, sys, start_vector(sys, Eigen::VectorXd::Zero(sys.n)), 10, h);
  std::vector<double> errs;
  for (int m = 1; m <= 10; ++m) {
    arn.extend();
    errs.push_back(posterior_error(arn.basis(), h / gamma));
  }
  // strong overall decay; once the estimate reaches its floor it may wiggle
  // but must stay within a few decades of the minimum
  const double floor = *std::min_element(errs.begin(), errs.end());
  REQUIRE(errs[9] < errs[1]);
  REQUIRE(errs[9] <= 1e-6 * errs[1]);
  for (int m = 2; m + 1 < 10; ++m)
    REQUIRE(errs[m + 1] <= std::max(errs[m] * 1.01, 1e3 * floor));
}

TEST_CASE("small posterior estimate implies small true error (50-node mesh)", "[rational]") {
  const MnaSystem sys = mesh_system(7, 7, true, 15, 1e-17, 1e-14, 1e-2, 1e1, true);
  const double gamma = 1e-10, h = 1e-11;
  const AugmentedSystem aug = build_augmented(sys, 0.0, h);
  BlockLuFactors f = block_lu_factor(sys, gamma);
  f.set_input_block(aug.W);

  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(sys.n);
  const Eigen::VectorXd ref = phi_sum_oracle(sys, x0, 0.0, h);
  const double scale = 1.0 + ref.norm();

  RationalArnoldi arn(f, sys, start_vector(sys, x0), 30, h);
  double est = std::numeric_limits<double>::infinity();
  while (est > 1e-6 * scale) {
    REQUIRE(arn.extend());
    est = posterior_error(arn.basis(), h / gamma);
    REQUIRE(arn.basis().m <= 30);
  }
  const Eigen::VectorXd y = eval_expm_action(arn.basis(), h / gamma);
  REQUIRE((y.head(sys.n) - ref).norm() <= 1e-4 * scale);

  // exact-mode estimate stays finite and also implies convergence
  const double est_exact = posterior_error_exact(arn.basis(), sys, aug.W, h / gamma, h);
  REQUIRE(std::isfinite(est_exact));
  REQUIRE(est_exact >= 0.0);
}

TEST_CASE("shift-invert spectral map mu = 1/(1 - gamma*lambda)", "[rational]") {
  std::mt19937_64 rng(16);
  const MnaSystem sys = testutil::random_dense_system(rng, 12, 1);
  const double gamma = 0.31;
  const AugmentedSystem aug = build_augmented(sys, 0.0, 0.5);

  const Eigen::MatrixXd At = aug.dense_atilde();
  const Eigen::MatrixXd S =
      Eigen::FullPivLU<Eigen::MatrixXd>(aug.Ctil.dense() - gamma * aug.Gtil.dense())
          .solve(aug.Ctil.dense());

  const Eigen::VectorXcd lam = Eigen::EigenSolver<Eigen::MatrixXd>(At).eigenvalues();
  const Eigen::VectorXcd mu = Eigen::EigenSolver<Eigen::MatrixXd>(S).eigenvalues();
  for (int i = 0; i < lam.size(); ++i) {
    const std::complex<double> pred = 1.0 / (1.0 - gamma * lam[i]);
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < mu.size(); ++j) best = std::min(best, std::abs(mu[j] - pred));
    REQUIRE(best <= 1e-8 * (1.0 + std::abs(pred)));
  }
}

TEST_CASE("standard Arnoldi is exact at m = 1 for a pure decay mode", "[rational]") {
  const MnaSystem sys = build_mna(parse_netlist("I1 0 a DC 0\nR1 a 0 1\nC1 a 0 1\n"));
  const AugmentedOperator op(sys, Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(sys.n, 2));
  Eigen::VectorXd v0 = Eigen::VectorXd::Zero(sys.n + 2);
  v0(0) = 2.0;  // x-part only; A x = -x
  const KrylovBasis b = standard_arnoldi(op, v0, 5);
  REQUIRE(b.happy);
  REQUIRE(b.m == 1);
  const double h = 0.8;
  const Eigen::VectorXd y = eval_standard_action(b, h);
  REQUIRE(y(0) == Approx(2.0 * std::exp(-0.8)).epsilon(1e-13));
}

TEST_CASE("standard Arnoldi refuses singular C", "[rational]") {
  const MnaSystem sys = mesh_system(2, 2, false, 17);  // vsource branch makes C singular
  REQUIRE_THROWS_AS(
      AugmentedOperator(sys, Eigen::Matrix<double, Eigen::Dynamic, 2>::Zero(sys.n, 2)),
      std::domain_error);
}

TEST_CASE("both methods need only small m on a non-stiff 10-node mesh", "[rational]") {
  const MnaSystem sys = mesh_system(2, 5, true, 18, 1e-10, 1e-10, 1e-2, 1e-2, true);
  const double gamma = 1e-10, h = 1e-11;
  const AugmentedSystem aug = build_augmented(sys, 0.0, h);

  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(sys.n);
  Eigen::VectorXd ref = augmented_reference(sys, x0, 0.0, h);
  ref(sys.n) /= h;  // reference expressed in the tail-scaled coordinates
  const Eigen::VectorXd v0 = start_vector(sys, x0);
  const double target = 1e-8 * ref.norm();

  BlockLuFactors f = block_lu_factor(sys, gamma);
  f.set_input_block(aug.W);
  RationalArnoldi arn(f, sys, v0, 10, h);
  int m_rational = -1;
  for (int m = 1; m <= 10; ++m) {
    if (!arn.extend() && !arn.basis().happy) break;
    const Eigen::VectorXd y = eval_expm_action(arn.basis(), h / gamma);
    if ((y - ref).norm() <= target) {
      m_rational = arn.basis().m;
      break;
    }
    if (arn.basis().happy) break;
  }
  REQUIRE(m_rational >= 1);
  REQUIRE(m_rational <= 10);

  const AugmentedOperator op(sys, aug.W, h);
  const int m_standard =
      standard_required_m(op, v0, h, ref, target, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  REQUIRE(m_standard >= 1);
  REQUIRE(m_standard <= 10);
}
