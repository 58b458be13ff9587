#pragma once

// All numerical tolerances and solver defaults in one place so that test
// expectations and engine behaviour stay reproducible.

namespace mexpsim::tol {

// Threshold for partial pivoting in the sparse LU: a row qualifies as pivot
// when |candidate| >= pivot_threshold * |column max|.
inline constexpr double pivot_threshold = 0.1;

// h_{m+1,m} <= happy_breakdown * max|H| terminates the Arnoldi process with
// an exact (invariant) subspace.
inline constexpr double happy_breakdown = 1e-14;

// Acceptable relative residual for direct solves on well-conditioned systems.
inline constexpr double solve_residual = 1e-10;

// Condition-number ceiling for H_{m,m}; beyond it the step is retried with a
// smaller h instead of trusting I - H^{-1}.
inline constexpr double hessenberg_cond_max = 1e14;

// Scaling target for the order-13 Pade approximant: ||M / 2^s||_1 <= theta13.
inline constexpr double expm_theta13 = 5.371920351148152;

inline constexpr double default_gamma = 1e-10;  // seconds
inline constexpr double default_h_max = 1e-9;   // seconds
inline constexpr int default_m_max = 30;
inline constexpr int max_step_halvings = 6;

// Dense reference engines refuse beyond this dimension.
inline constexpr int oracle_max_dim = 500;

}  // namespace mexpsim::tol
