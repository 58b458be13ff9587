#include <catch2/catch.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "mexpsim/expm.hpp"
#include "mexpsim/netlist.hpp"
#include "oracles.hpp"

using namespace mexpsim;

TEST_CASE("expm of the zero matrix is the identity", "[expm]") {
  REQUIRE(dense_expm(Eigen::MatrixXd::Zero(3, 3)) == Eigen::MatrixXd::Identity(3, 3));
}

TEST_CASE("expm of a diagonal matrix is elementwise analytic", "[expm]") {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2, 2);
  M(0, 0) = -1.0;
  M(1, 1) = -2.0;
  const Eigen::MatrixXd E = dense_expm(M);
  REQUIRE(E(0, 0) == Approx(0.36787944117144233).epsilon(1e-14));
  REQUIRE(E(1, 1) == Approx(0.1353352832366127).epsilon(1e-14));
  REQUIRE(E(0, 1) == 0.0);
  REQUIRE(E(1, 0) == 0.0);
}

TEST_CASE("expm matches the extended-precision Taylor oracle", "[expm]") {
  std::mt19937_64 rng(2718);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd M = testutil::randn(rng, 4, 4);
    M *= 5.0 / M.cwiseAbs().colwise().sum().maxCoeff();  // 1-norm ~ 5
    const Eigen::MatrixXd E = dense_expm(M);
    const Eigen::MatrixXd ref = testutil::taylor_expm(M);
    REQUIRE((E - ref).norm() <= 1e-12 * ref.norm());
  }
}

TEST_CASE("expm handles norms requiring scaling", "[expm]") {
  std::mt19937_64 rng(31);
  Eigen::MatrixXd M = testutil::randn(rng, 6, 6);
  M *= 80.0 / M.cwiseAbs().colwise().sum().maxCoeff();
  const Eigen::MatrixXd ref = testutil::taylor_expm(M);
  REQUIRE((dense_expm(M) - ref).norm() <= 1e-11 * ref.norm());
}

TEST_CASE("expm inverse property", "[expm]") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::MatrixXd M = testutil::randn(rng, 5, 5);
    M *= 10.0 / M.cwiseAbs().colwise().sum().maxCoeff();
    const Eigen::MatrixXd P = dense_expm(M) * dense_expm(-M);
    REQUIRE((P - Eigen::MatrixXd::Identity(5, 5)).norm() <= 1e-11);
  }
}

TEST_CASE("expm semigroup property", "[expm]") {
  std::mt19937_64 rng(7);
  Eigen::MatrixXd M = testutil::randn(rng, 5, 5);
  M *= 3.0 / M.cwiseAbs().colwise().sum().maxCoeff();
  const double s = 0.7, t = 1.9;
  const Eigen::MatrixXd lhs = dense_expm((s + t) * M);
  const Eigen::MatrixXd rhs = dense_expm(s * M) * dense_expm(t * M);
  REQUIRE((lhs - rhs).norm() <= 1e-10 * lhs.norm());
}

TEST_CASE("expm rejects non-finite and non-square input", "[expm]") {
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(2, 2);
  M(0, 0) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(dense_expm(M), std::invalid_argument);
  REQUIRE_THROWS_AS(dense_expm(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
}

namespace {

// Natural units (tau ~ 1 s) keep the augmented-matrix norm small, so the
// dense-exponential route retains full precision for the tight comparisons.
MnaSystem three_node_rc_ramp() {
  return build_mna(parse_netlist(
      "I1 0 n1 PWL(0 0 1 1)\n"
      "R1 n1 n2 1\n"
      "R2 n2 n3 2\n"
      "R3 n3 0 0.5\n"
      "C1 n1 0 1\n"
      "C2 n2 0 2\n"
      "C3 n3 0 0.5\n"));
}

}  // namespace

TEST_CASE("build_augmented layout and zero-slope column", "[expm]") {
  const MnaSystem sys = build_mna(parse_netlist("R1 a 0 1\nC1 a 0 1e-12\nI1 0 a DC 2\n"));
  const AugmentedSystem aug = build_augmented(sys, 0.0, 1e-10);
  REQUIRE(aug.W.col(0).isZero(0.0));  // constant input, zero slope
  REQUIRE(aug.W(0, 1) == 2.0);

  const Eigen::MatrixXd Ct = aug.Ctil.dense();
  REQUIRE(Ct.topLeftCorner(1, 1) == sys.C.dense());
  REQUIRE(Ct.bottomRightCorner(2, 2) == Eigen::Matrix2d::Identity());
  const Eigen::MatrixXd Gt = aug.Gtil.dense();
  REQUIRE(Gt.topLeftCorner(1, 1) == -sys.G.dense());
  REQUIRE(Gt(0, 1) == aug.W(0, 0));
  REQUIRE(Gt(0, 2) == aug.W(0, 1));
  REQUIRE(Gt(1, 2) == 1.0);  // J
  REQUIRE(Gt(2, 1) == 0.0);
  REQUIRE((AugmentedSystem::nilpotent_j() * AugmentedSystem::nilpotent_j()).isZero(0.0));
  REQUIRE_THROWS_AS(build_augmented(sys, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("zero inputs reduce the augmented flow to the homogeneous exponential", "[expm]") {
  std::mt19937_64 rng(555);
  MnaSystem sys = testutil::random_dense_system(rng, 6, 2);
  for (auto& s : sys.sources) s.wave = PwlWaveform::dc(0.0);
  const double h = 0.3;
  const AugmentedSystem aug = build_augmented(sys, 0.0, h);
  REQUIRE(aug.W.isZero(0.0));

  const Eigen::VectorXd x = testutil::randn(rng, 6, 1);
  Eigen::VectorXd v(8);
  v << x, 0.0, 1.0;
  const Eigen::VectorXd y = dense_expm(aug.dense_atilde() * h) * v;

  const Eigen::MatrixXd A =
      -Eigen::FullPivLU<Eigen::MatrixXd>(sys.C.dense()).solve(sys.G.dense());
  const Eigen::VectorXd ref = dense_expm(A * h) * x;
  REQUIRE((y.head(6) - ref).norm() <= 1e-12 * ref.norm());
}

TEST_CASE("augmented exponential equals the phi-sum oracle on a 3-node RC ramp", "[expm]") {
  const MnaSystem sys = three_node_rc_ramp();
  const double t = 0.1, h = 0.2;
  const AugmentedSystem aug = build_augmented(sys, t, h);
  std::mt19937_64 rng(12);
  const Eigen::VectorXd x = testutil::randn(rng, sys.n, 1);

  Eigen::VectorXd v(sys.n + 2);
  v << x, 0.0, 1.0;
  const Eigen::VectorXd y = dense_expm(aug.dense_atilde() * h) * v;
  const Eigen::VectorXd ref = phi_sum_oracle(sys, x, t, h);
  REQUIRE((y.head(sys.n) - ref).norm() <= 1e-12 * ref.norm());
}

TEST_CASE("augmentation identity on random dense systems", "[expm]") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 19);
    const MnaSystem sys = testutil::random_dense_system(rng, n, 1 + static_cast<int>(rng() % 2));
    const double t = 0.1, h = 0.5;
    const AugmentedSystem aug = build_augmented(sys, t, h);
    const Eigen::VectorXd x = testutil::randn(rng, n, 1);
    Eigen::VectorXd v(n + 2);
    v << x, 0.0, 1.0;
    const Eigen::VectorXd y = dense_expm(aug.dense_atilde() * h) * v;
    const Eigen::VectorXd ref = phi_sum_oracle(sys, x, t, h);
    REQUIRE((y.head(n) - ref).norm() <= 1e-10 * (1.0 + ref.norm()));
  }
}

TEST_CASE("phi_sum_oracle: scalar RC closed form", "[expm]") {
  // x' = -x + 1 from x(0) = 0: x(1) = 1 - 1/e
  const MnaSystem sys = build_mna(parse_netlist("R1 a 0 1\nC1 a 0 1\nI1 0 a DC 1\n"));
  const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd x1 = phi_sum_oracle(sys, x0, 0.0, 1.0);
  REQUIRE(x1[0] == Approx(0.6321205588285577).epsilon(1e-12));
}

TEST_CASE("phi_sum_oracle: zero input is the homogeneous map", "[expm]") {
  std::mt19937_64 rng(88);
  MnaSystem sys = testutil::random_dense_system(rng, 5, 1);
  for (auto& s : sys.sources) s.wave = PwlWaveform::dc(0.0);
  const Eigen::VectorXd x = testutil::randn(rng, 5, 1);
  const double h = 0.4;
  const Eigen::MatrixXd A =
      -Eigen::FullPivLU<Eigen::MatrixXd>(sys.C.dense()).solve(sys.G.dense());
  const Eigen::VectorXd ref = dense_expm(A * h) * x;
  REQUIRE((phi_sum_oracle(sys, x, 0.0, h) - ref).norm() <= 1e-13 * ref.norm());
}

TEST_CASE("phi_sum_oracle: h -> 0 returns the state", "[expm]") {
  const MnaSystem sys = three_node_rc_ramp();
  std::mt19937_64 rng(5);
  const Eigen::VectorXd x = testutil::randn(rng, sys.n, 1);
  // time constants are ~1 s here; step far below the smallest one
  const Eigen::VectorXd y = phi_sum_oracle(sys, x, 0.0, 1e-15);
  REQUIRE((y - x).norm() <= 1e-10 * x.norm());
}

TEST_CASE("phi_sum_oracle refuses singular C", "[expm]") {
  const MnaSystem sys = build_mna(parse_netlist("V1 a 0 DC 1\nR1 a b 1\nC1 b 0 1e-12\n"));
  REQUIRE_THROWS_AS(phi_sum_oracle(sys, Eigen::VectorXd::Zero(sys.n), 0.0, 1e-10),
                    std::domain_error);
}
