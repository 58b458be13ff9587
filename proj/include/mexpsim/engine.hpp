#pragma once

// Transient simulation drivers. All three engines factor at most one sparse
// matrix for the whole run and share the waveform/statistics contract:
//   mexp_transient        adaptive matrix-exponential stepping
//   trapezoidal_transient fixed-step trapezoidal baseline
//   oracle_transient      dense exact stepping (validation reference)

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mexpsim/constants.hpp"
#include "mexpsim/expm.hpp"
#include "mexpsim/mna.hpp"
#include "mexpsim/netlist.hpp"
#include "mexpsim/rational_krylov.hpp"
#include "mexpsim/sparse.hpp"

namespace mexpsim {

struct SimulationError : std::runtime_error {
  SimulationError(const std::string& msg, double at_time, double last_err, int last_m)
      : std::runtime_error(msg + format_context(at_time, last_err, last_m)),
        t(at_time),
        err(last_err),
        m(last_m) {}
  double t;
  double err;
  int m;

 private:
  static std::string format_context(double t, double err, int m) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), " (t = %.6e s, err = %.3e, m = %d)", t, err, m);
    return buf;
  }
};

struct SimConfig {
  double gamma = tol::default_gamma;  // shift parameter, seconds
  double e_tol = 1e-4;                // accumulated error budget E_Tol
  double t_end = 0.0;                 // simulation span T, seconds
  double h_max = tol::default_h_max;  // maximum allowed step
  int m_max = tol::default_m_max;     // Krylov dimension cap
  double output_dt = 0.0;             // sample spacing; 0 means h_max
  double tr_h = 1e-11;                // fixed trapezoidal step
  std::ostream* diagnostics = nullptr;  // per-step CSV when set
};

struct RunStats {
  long steps = 0;
  std::vector<int> m_per_step;
  long sum_m = 0;
  int m_peak = 0;
  long factorizations = 0;  // transient factorizations (DC excluded)
  long substitutions = 0;   // forward/backward substitution pairs
  long dc_solves = 0;
  double dc_seconds = 0.0;
  double lu_seconds = 0.0;
  double wall_seconds = 0.0;
  double err_sum = 0.0;  // accumulated posterior estimates (mexp only)

  double m_avg() const { return steps > 0 ? static_cast<double>(sum_m) / steps : 0.0; }
};

struct Waveform {
  std::vector<double> times;
  std::vector<std::string> probe_names;
  std::vector<std::vector<double>> samples;  // samples[probe][k]
  RunStats stats;
};

namespace detail {

inline void wf_init(Waveform& wf, const MnaSystem& sys) {
  wf.probe_names = sys.probe_labels;
  wf.samples.assign(sys.probe_rows.size(), {});
}

inline void wf_record(Waveform& wf, const MnaSystem& sys, double t, const Eigen::VectorXd& x) {
  wf.times.push_back(t);
  for (std::size_t p = 0; p < sys.probe_rows.size(); ++p)
    wf.samples[p].push_back(x[sys.probe_rows[p]]);
}

inline double elapsed_s(std::chrono::steady_clock::time_point from) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

inline void validate_common(const MnaSystem& sys, const SimConfig& cfg) {
  if (!(cfg.t_end > 0.0)) throw std::invalid_argument("SimConfig: t_end must be positive");
  if (sys.sources.empty())
    throw std::invalid_argument("transient run requires at least one source");
}

}  // namespace detail

/// Largest step from t that stays affine in every source and inside the
/// horizon: min(next breakpoint - t, h_max, T - t).
inline double max_allowed_step(const std::vector<PwlWaveform>& sources, double t, double h_max,
                               double t_end) {
  if (!(t < t_end)) throw std::invalid_argument("max_allowed_step: t must be < t_end");
  double h = std::min(h_max, t_end - t);
  const double slack = t_end * 1e-12;
  if (const auto bp = next_breakpoint(sources, t + slack); bp && *bp - t < h) h = *bp - t;
  return h;
}

/// Adaptive matrix-exponential transient: DC start, one factorization of
/// C + gamma*G, then per step grow the rational Krylov basis until
/// err(m, alpha) <= (E_Tol / T) * h, halving h when m_max is exhausted.
/// Intermediate outputs come from re-evaluating the accepted basis at
/// alpha' = h'/gamma, never from interpolation.
inline Waveform mexp_transient(const MnaSystem& sys, const SimConfig& cfg) {
  detail::validate_common(sys, cfg);
  if (!(cfg.gamma > 0.0)) throw std::invalid_argument("SimConfig: gamma must be positive");
  if (!(cfg.e_tol > 0.0)) throw std::invalid_argument("SimConfig: e_tol must be positive");
  if (!(cfg.h_max > 0.0)) throw std::invalid_argument("SimConfig: h_max must be positive");
  if (cfg.m_max < 1) throw std::invalid_argument("SimConfig: m_max must be >= 1");
  const double T = cfg.t_end;
  const double out_dt = cfg.output_dt > 0.0 ? cfg.output_dt : cfg.h_max;
  if (out_dt > cfg.h_max * (1.0 + 1e-12))
    throw std::invalid_argument("SimConfig: output_dt must not exceed h_max");
  const double tiny = T * 1e-12;

  const auto t_run = std::chrono::steady_clock::now();
  Waveform wf;
  detail::wf_init(wf, sys);

  auto mark = std::chrono::steady_clock::now();
  Eigen::VectorXd x = dc_analysis(sys);
  wf.stats.dc_solves = 1;
  wf.stats.dc_seconds = detail::elapsed_s(mark);

  mark = std::chrono::steady_clock::now();
  BlockLuFactors factors = block_lu_factor(sys, cfg.gamma);
  wf.stats.factorizations = 1;
  wf.stats.lu_seconds = detail::elapsed_s(mark);

  detail::wf_record(wf, sys, 0.0, x);
  if (cfg.diagnostics) *cfg.diagnostics << "t,h,m,err,h_next\n";

  const auto waves = sys.source_waves();
  const double budget_rate = cfg.e_tol / T;
  Eigen::Matrix<double, Eigen::Dynamic, 2> W(sys.n, 2);
  double t = 0.0;
  long next_out = 1;

  while (t < T - tiny) {
    double h = max_allowed_step(waves, t, cfg.h_max, T);
    std::optional<RationalArnoldi> arn;
    double alpha = 0.0;
    double err = std::numeric_limits<double>::infinity();
    bool accepted = false;

    for (int attempt = 0; attempt <= tol::max_step_halvings && !accepted; ++attempt) {
      alpha = h / cfg.gamma;
      const Eigen::VectorXd bt = eval_b(sys, t);
      const Eigen::VectorXd bth = eval_b(sys, t + h);
      W.col(0) = (bth - bt) / h;
      W.col(1) = bt;
      factors.set_input_block(W);

      Eigen::VectorXd v0(sys.n + 2);
      v0.head(sys.n) = x;
      v0(sys.n) = 0.0;
      v0(sys.n + 1) = 1.0;
      // tail similarity keeps the slope column of W~ at the O(Bu) scale
      arn.emplace(factors, sys, v0, cfg.m_max, h);

      while (true) {
        arn->extend();
        if (arn->basis().happy) {
          err = 0.0;
          accepted = true;
          break;
        }
        try {
          err = posterior_error(arn->basis(), alpha);
        } catch (const HessenbergError&) {
          err = std::numeric_limits<double>::infinity();
        }
        if (err <= budget_rate * h) {
          accepted = true;
          break;
        }
        if (arn->basis().m >= cfg.m_max) break;
      }
      wf.stats.substitutions += arn->basis().m;
      if (!accepted) h *= 0.5;
    }
    if (!accepted)
      throw SimulationError("mexp_transient: no convergence after " +
                                std::to_string(tol::max_step_halvings) + " step halvings",
                            t, err, arn->basis().m);

    const KrylovBasis& basis = arn->basis();
    Eigen::VectorXd y;
    try {
      y = eval_expm_action(basis, alpha);
    } catch (const HessenbergError&) {
      throw SimulationError("mexp_transient: H_{m,m} unusable at accepted step", t, err, basis.m);
    }

    while (true) {
      const double tout = static_cast<double>(next_out) * out_dt;
      if (tout > t + h + tiny || tout > T + tiny) break;
      if (std::abs(tout - (t + h)) <= tiny) {
        detail::wf_record(wf, sys, std::min(tout, T), y);
      } else {
        const double alpha_out = (tout - t) / cfg.gamma;
        const Eigen::VectorXd ys = eval_expm_action(basis, alpha_out);
        detail::wf_record(wf, sys, std::min(tout, T), ys);
        if (cfg.diagnostics) {
          // estimates at interior alphas are informational, never gated on
          char line[160];
          std::snprintf(line, sizeof(line), "%.12e,%.12e,%d,%.6e,%.6e\n", t, tout - t, basis.m,
                        posterior_error(basis, alpha_out), basis.h_next());
          *cfg.diagnostics << line;
        }
      }
      ++next_out;
    }

    ++wf.stats.steps;
    wf.stats.m_per_step.push_back(basis.m);
    wf.stats.sum_m += basis.m;
    wf.stats.m_peak = std::max(wf.stats.m_peak, basis.m);
    wf.stats.err_sum += err;
    if (cfg.diagnostics) {
      char line[160];
      std::snprintf(line, sizeof(line), "%.12e,%.12e,%d,%.6e,%.6e\n", t, h, basis.m, err,
                    basis.h_next());
      *cfg.diagnostics << line;
    }

    x = y.head(sys.n);
    t += h;
    if (T - t <= tiny) t = T;
  }

  if (wf.times.empty() || wf.times.back() < T - tiny) detail::wf_record(wf, sys, T, x);
  wf.stats.wall_seconds = detail::elapsed_s(t_run);
  return wf;
}

/// Fixed-step trapezoidal baseline:
///   (C/h + G/2) x_{k+1} = (C/h - G/2) x_k + B (u_k + u_{k+1}) / 2
/// with one factorization and a sample at every step. When T is not an
/// integer multiple of tr_h the run uses round(T/tr_h) equal steps.
inline Waveform trapezoidal_transient(const MnaSystem& sys, const SimConfig& cfg) {
  detail::validate_common(sys, cfg);
  if (!(cfg.tr_h > 0.0)) throw std::invalid_argument("SimConfig: tr_h must be positive");
  const double T = cfg.t_end;
  const long n_steps = std::max<long>(1, std::lround(T / cfg.tr_h));
  const double h = T / static_cast<double>(n_steps);

  const auto t_run = std::chrono::steady_clock::now();
  Waveform wf;
  detail::wf_init(wf, sys);

  auto mark = std::chrono::steady_clock::now();
  Eigen::VectorXd x = dc_analysis(sys);
  wf.stats.dc_solves = 1;
  wf.stats.dc_seconds = detail::elapsed_s(mark);

  mark = std::chrono::steady_clock::now();
  const LuFactors lhs = sparse_lu(add(sys.C, sys.G, 1.0 / h, 0.5));
  wf.stats.factorizations = 1;
  wf.stats.lu_seconds = detail::elapsed_s(mark);

  detail::wf_record(wf, sys, 0.0, x);
  Eigen::VectorXd b_prev = eval_b(sys, 0.0);
  for (long k = 1; k <= n_steps; ++k) {
    const double tk = k == n_steps ? T : static_cast<double>(k) * h;
    const Eigen::VectorXd b_now = eval_b(sys, tk);
    const Eigen::VectorXd rhs =
        spmv(sys.C, x) / h - 0.5 * spmv(sys.G, x) + 0.5 * (b_prev + b_now);
    x = lu_solve(lhs, rhs);
    ++wf.stats.substitutions;
    detail::wf_record(wf, sys, tk, x);
    b_prev = b_now;
  }
  wf.stats.steps = n_steps;
  wf.stats.wall_seconds = detail::elapsed_s(t_run);
  return wf;
}

namespace detail {

// Dense reference model via exact index-1 reduction. Grounded voltage-source
// branches pin their node voltage to the source value; remaining zero-C rows
// are algebraic nodes slaved through the resistive block. The differential
// remainder is a plain ODE with nonsingular C:
//   C_RR v' = -(G_RR - G_RA G_AA^{-1} G_AR) v + r_eff(t).
struct OracleModel {
  std::vector<int> keep;         // differential states -> full state index
  std::vector<int> alg;          // algebraic (cap-less) states
  std::vector<int> pinned_node;  // full-state rows pinned to a source value
  std::vector<int> pinned_col;   // source column per pinned node
  Eigen::FullPivLU<Eigen::MatrixXd> lu_c;    // C_RR
  Eigen::FullPivLU<Eigen::MatrixXd> lu_gaa;  // G_AA
  Eigen::MatrixXd A;                         // -C_RR^{-1} G_eff
  Eigen::FullPivLU<Eigen::MatrixXd> lu_a;
  Eigen::MatrixXd Br, Grp, Crp;  // differential-row input pieces
  Eigen::MatrixXd Ba, Gap;       // algebraic-row input pieces
  Eigen::MatrixXd K;             // G_RA G_AA^{-1}
  Eigen::MatrixXd Gar;           // G_AR, for recovering algebraic states

  struct StepOps {
    Eigen::MatrixXd E;    // e^{A d}
    Eigen::MatrixXd M1;   // A^{-1} (E - I)
    Eigen::MatrixXd M2s;  // A^{-2} (E - A d - I)
  };
  std::map<std::uint64_t, StepOps> cache;

  const StepOps& ops(double d) {
    std::uint64_t key;
    static_assert(sizeof(key) == sizeof(d));
    std::memcpy(&key, &d, sizeof(d));
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    StepOps s;
    s.E = dense_expm(A * d);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(A.rows(), A.cols());
    s.M1 = lu_a.solve(s.E - I);
    s.M2s = lu_a.solve(lu_a.solve(s.E - A * d - I));
    return cache.emplace(key, std::move(s)).first->second;
  }

  Eigen::VectorXd pinned_values(const MnaSystem& sys, double t) const {
    Eigen::VectorXd u(static_cast<int>(pinned_col.size()));
    for (int j = 0; j < u.size(); ++j) u[j] = sys.sources[pinned_col[j]].wave.eval(t);
    return u;
  }

  Eigen::VectorXd alg_rhs(const MnaSystem& sys, double t) const {
    Eigen::VectorXd r = Ba * eval_u(sys, t);
    if (!pinned_node.empty()) r -= Gap * pinned_values(sys, t);
    return r;
  }

  // Effective affine input over a breakpoint-free segment with pinned-source
  // slope du: r_eff(t) = B_R u - G_RP u_P - C_RP u_P' - K (B_A u - G_AP u_P).
  Eigen::VectorXd input_term(const MnaSystem& sys, double t, const Eigen::VectorXd& du) const {
    Eigen::VectorXd r = Br * eval_u(sys, t);
    if (!pinned_node.empty()) r -= Grp * pinned_values(sys, t) + Crp * du;
    if (!alg.empty()) r -= K * alg_rhs(sys, t);
    return r;
  }

  Eigen::VectorXd recover_alg(const MnaSystem& sys, double t, const Eigen::VectorXd& v) const {
    return lu_gaa.solve(alg_rhs(sys, t) - Gar * v);
  }
};

inline OracleModel build_oracle_model(const MnaSystem& sys) {
  const int n = sys.n;
  if (n > tol::oracle_max_dim)
    throw std::domain_error("oracle_transient: dimension " + std::to_string(n) +
                            " exceeds the dense-reference cap of " +
                            std::to_string(tol::oracle_max_dim));
  const Eigen::MatrixXd Cd = sys.C.dense();
  const Eigen::MatrixXd Gd = sys.G.dense();
  const Eigen::MatrixXd Bd = sys.B.dense();

  OracleModel m;
  std::vector<char> zero_row(n, 0), pinned(n, 0), dropped_branch(n, 0);
  for (int i = 0; i < n; ++i)
    zero_row[i] = Cd.row(i).isZero(0.0) && Cd.col(i).isZero(0.0);

  // Grounded voltage-source branches first: they pin their node.
  for (int i = 0; i < n; ++i) {
    if (!zero_row[i] || i < sys.num_nodes) continue;
    const BranchInfo* info = nullptr;
    for (const auto& br : sys.branches)
      if (br.row == i) {
        info = &br;
        break;
      }
    if (!info || !info->is_vsource || info->node_neg != -1 || info->node_pos < 0 ||
        pinned[info->node_pos])
      throw std::domain_error(
          "oracle_transient: singular C outside the supported class (state '" +
          sys.state_label(i) + "')");
    dropped_branch[i] = 1;
    pinned[info->node_pos] = 1;
    m.pinned_node.push_back(info->node_pos);
    m.pinned_col.push_back(info->source_col);
  }
  for (int i = 0; i < n; ++i) {
    if (pinned[i] || dropped_branch[i]) continue;
    if (zero_row[i]) {
      if (i >= sys.num_nodes)
        throw std::domain_error("oracle_transient: branch '" + sys.state_label(i) +
                                "' carries no dynamics and is not a grounded voltage source");
      m.alg.push_back(i);
    } else {
      m.keep.push_back(i);
    }
  }

  const int nr = static_cast<int>(m.keep.size());
  const int na = static_cast<int>(m.alg.size());
  if (nr == 0) throw std::domain_error("oracle_transient: no differential states remain");

  auto pick = [](const Eigen::MatrixXd& src, const std::vector<int>& rows,
                 const std::vector<int>& cols) {
    Eigen::MatrixXd out(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) out(i, j) = src(rows[i], cols[j]);
    return out;
  };

  const Eigen::MatrixXd Cr = pick(Cd, m.keep, m.keep);
  Eigen::MatrixXd Geff = pick(Gd, m.keep, m.keep);
  if (na > 0) {
    const Eigen::MatrixXd Gaa = pick(Gd, m.alg, m.alg);
    m.lu_gaa.compute(Gaa);
    if (!m.lu_gaa.isInvertible())
      throw std::domain_error(
          "oracle_transient: algebraic nodes are not resistively determined (singular G_AA)");
    const Eigen::MatrixXd Gra = pick(Gd, m.keep, m.alg);
    m.Gar = pick(Gd, m.alg, m.keep);
    // K = G_RA G_AA^{-1}  <=>  K^T = G_AA^{-T} G_RA^T
    const Eigen::FullPivLU<Eigen::MatrixXd> lu_gaat(Gaa.transpose());
    m.K = lu_gaat.solve(Gra.transpose()).transpose();
    Geff -= m.K * m.Gar;
    m.Ba.resize(na, Bd.cols());
    for (int i = 0; i < na; ++i) m.Ba.row(i) = Bd.row(m.alg[i]);
    m.Gap = pick(Gd, m.alg, m.pinned_node);
  }

  m.lu_c.compute(Cr);
  if (!m.lu_c.isInvertible())
    throw std::domain_error(
        "oracle_transient: reduced C is singular (a state without capacitance/inductance)");
  m.A = -m.lu_c.solve(Geff);
  m.lu_a.compute(m.A);
  if (!m.lu_a.isInvertible())
    throw std::domain_error("oracle_transient: singular A; the oracle refuses this system");

  m.Br.resize(nr, Bd.cols());
  for (int i = 0; i < nr; ++i) m.Br.row(i) = Bd.row(m.keep[i]);
  m.Grp = pick(Gd, m.keep, m.pinned_node);
  m.Crp = pick(Cd, m.keep, m.pinned_node);
  return m;
}

}  // namespace detail

/// Dense exact-stepping reference. Marches the union of the output grid and
/// all source breakpoints; every interval is one exact affine-input step of
/// the reduced dense system.
inline Waveform oracle_transient(const MnaSystem& sys, const SimConfig& cfg) {
  detail::validate_common(sys, cfg);
  const double T = cfg.t_end;
  const double out_dt = cfg.output_dt > 0.0 ? cfg.output_dt : cfg.h_max;
  const double tiny = T * 1e-12;

  const auto t_run = std::chrono::steady_clock::now();
  detail::OracleModel model = detail::build_oracle_model(sys);

  Waveform wf;
  detail::wf_init(wf, sys);

  auto mark = std::chrono::steady_clock::now();
  const Eigen::VectorXd x0 = dc_analysis(sys);
  wf.stats.dc_solves = 1;
  wf.stats.dc_seconds = detail::elapsed_s(mark);

  // March grid: output instants plus breakpoints, dedup within `tiny`.
  std::vector<std::pair<double, bool>> grid;  // (time, emit sample)
  for (long k = 1;; ++k) {
    const double tk = static_cast<double>(k) * out_dt;
    if (tk > T + tiny) break;
    grid.emplace_back(std::min(tk, T), true);
  }
  for (const auto& w : sys.source_waves())
    for (const auto& p : w.points)
      if (p.first > tiny && p.first < T - tiny) grid.emplace_back(p.first, false);
  grid.emplace_back(T, true);
  std::sort(grid.begin(), grid.end());
  std::vector<std::pair<double, bool>> march;
  for (const auto& g : grid) {
    if (!march.empty() && g.first - march.back().first <= tiny) {
      march.back().second = march.back().second || g.second;
      continue;
    }
    march.push_back(g);
  }

  Eigen::VectorXd v(static_cast<int>(model.keep.size()));
  for (int i = 0; i < v.size(); ++i) v[i] = x0[model.keep[i]];
  detail::wf_record(wf, sys, 0.0, x0);

  Eigen::VectorXd full = x0;
  double a = 0.0;
  for (const auto& [b, emit] : march) {
    const double d = b - a;
    Eigen::VectorXd du = Eigen::VectorXd::Zero(static_cast<int>(model.pinned_col.size()));
    if (!model.pinned_node.empty())
      du = (model.pinned_values(sys, b) - model.pinned_values(sys, a)) / d;
    const Eigen::VectorXd b0 = model.lu_c.solve(model.input_term(sys, a, du));
    const Eigen::VectorXd b1 = model.lu_c.solve(model.input_term(sys, b, du));
    const Eigen::VectorXd slope = (b1 - b0) / d;
    const auto& ops = model.ops(d);
    v = ops.E * v + ops.M1 * b0 + ops.M2s * slope;
    ++wf.stats.steps;
    a = b;
    if (emit) {
      for (int i = 0; i < v.size(); ++i) full[model.keep[i]] = v[i];
      const Eigen::VectorXd up = model.pinned_values(sys, b);
      for (std::size_t j = 0; j < model.pinned_node.size(); ++j)
        full[model.pinned_node[j]] = up[static_cast<int>(j)];
      if (!model.alg.empty()) {
        const Eigen::VectorXd va = model.recover_alg(sys, b, v);
        for (std::size_t j = 0; j < model.alg.size(); ++j)
          full[model.alg[j]] = va[static_cast<int>(j)];
      }
      detail::wf_record(wf, sys, b, full);
    }
  }
  wf.stats.wall_seconds = detail::elapsed_s(t_run);
  return wf;
}

/// Largest |a - b| over matching sample instants of two waveforms with the
/// same probe set.
inline double max_abs_difference(const Waveform& a, const Waveform& b) {
  if (a.probe_names != b.probe_names)
    throw std::invalid_argument("max_abs_difference: probe sets differ");
  const double span = std::max(a.times.empty() ? 0.0 : a.times.back(),
                               b.times.empty() ? 0.0 : b.times.back());
  const double tiny = span * 1e-9;
  double worst = 0.0;
  std::size_t j = 0;
  for (std::size_t i = 0; i < a.times.size(); ++i) {
    while (j < b.times.size() && b.times[j] < a.times[i] - tiny) ++j;
    if (j >= b.times.size()) break;
    if (std::abs(b.times[j] - a.times[i]) > tiny) continue;
    for (std::size_t p = 0; p < a.samples.size(); ++p)
      worst = std::max(worst, std::abs(a.samples[p][i] - b.samples[p][j]));
  }
  return worst;
}

/// CSV contract: header `time,<probe1>,...`, one row per sample instant.
inline void write_waveform_csv(const Waveform& wf, std::ostream& os) {
  os << "time";
  for (const auto& p : wf.probe_names) os << ',' << p;
  os << '\n';
  char buf[40];
  for (std::size_t k = 0; k < wf.times.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.15g", wf.times[k]);
    os << buf;
    for (const auto& s : wf.samples) {
      std::snprintf(buf, sizeof(buf), "%.15g", s[k]);
      os << ',' << buf;
    }
    os << '\n';
  }
}

inline void write_stats_json(const Waveform& wf, const std::string& method, std::ostream& os) {
  nlohmann::json j;
  j["method"] = method;
  j["steps"] = wf.stats.steps;
  j["sum_m"] = wf.stats.sum_m;
  j["m_avg"] = wf.stats.m_avg();
  j["m_peak"] = wf.stats.m_peak;
  j["factorizations"] = wf.stats.factorizations;
  j["substitutions"] = wf.stats.substitutions;
  j["dc_solves"] = wf.stats.dc_solves;
  j["dc_seconds"] = wf.stats.dc_seconds;
  j["lu_seconds"] = wf.stats.lu_seconds;
  j["wall_seconds"] = wf.stats.wall_seconds;
  j["err_sum"] = wf.stats.err_sum;
  j["samples"] = wf.times.size();
  os << j.dump(2) << '\n';
}

}  // namespace mexpsim
