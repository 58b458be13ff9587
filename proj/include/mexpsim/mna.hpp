#pragma once

// Modified nodal analysis: stamp C x' = -G x + B u(t) from a netlist and
// solve the DC operating point used as the transient initial condition.
// State ordering: node voltages first (in order of first appearance), then
// one branch current per inductor/voltage source (netlist order).

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mexpsim/netlist.hpp"
#include "mexpsim/sparse.hpp"

namespace mexpsim {

struct MnaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Source {
  std::string name;
  PwlWaveform wave;
};

struct BranchInfo {
  std::string name;
  int row = -1;          // state index of the branch current
  bool is_vsource = false;
  int node_pos = -1;     // -1 denotes ground
  int node_neg = -1;
  int source_col = -1;   // column of B for voltage sources
  double inductance = 0.0;
};

struct MnaSystem {
  SparseMatrix C, G, B;
  std::unordered_map<std::string, int> node_index;    // label -> row, ground excluded
  std::unordered_map<std::string, int> branch_index;  // element name -> row
  std::vector<std::string> node_labels;               // row -> label
  std::vector<BranchInfo> branches;
  int num_nodes = 0;
  int n = 0;  // num_nodes + #branches
  std::vector<Source> sources;                        // column order of B
  std::vector<int> probe_rows;
  std::vector<std::string> probe_labels;

  std::vector<PwlWaveform> source_waves() const {
    std::vector<PwlWaveform> out;
    out.reserve(sources.size());
    for (const auto& s : sources) out.push_back(s.wave);
    return out;
  }

  std::string state_label(int row) const {
    if (row < num_nodes) return node_labels[row];
    return branches[row - num_nodes].name;
  }
};

namespace detail {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void join(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace detail

inline MnaSystem build_mna(const Netlist& nl) {
  MnaSystem sys;
  auto node_of = [&sys](const std::string& label) -> int {
    if (label == "0") return -1;
    auto it = sys.node_index.find(label);
    if (it != sys.node_index.end()) return it->second;
    const int idx = static_cast<int>(sys.node_labels.size());
    sys.node_index.emplace(label, idx);
    sys.node_labels.push_back(label);
    return idx;
  };

  for (const Element& e : nl.elements) {
    node_of(e.node_pos);
    node_of(e.node_neg);
  }
  sys.num_nodes = static_cast<int>(sys.node_labels.size());

  int branch_count = 0;
  for (const Element& e : nl.elements)
    if (e.kind == ElementKind::Inductor || e.kind == ElementKind::VoltageSource) ++branch_count;
  sys.n = sys.num_nodes + branch_count;

  // Every node must reach ground through some chain of elements.
  {
    detail::UnionFind uf(sys.num_nodes + 1);
    const int ground = sys.num_nodes;
    auto id = [&](const std::string& label) {
      return label == "0" ? ground : sys.node_index.at(label);
    };
    for (const Element& e : nl.elements) uf.join(id(e.node_pos), id(e.node_neg));
    for (int i = 0; i < sys.num_nodes; ++i)
      if (uf.find(i) != uf.find(ground))
        throw MnaError("floating node '" + sys.node_labels[i] + "': no path to ground");
  }

  std::vector<Triplet> tC, tG, tB;
  auto stamp_pair = [](std::vector<Triplet>& t, int a, int b, double v) {
    if (a >= 0) t.push_back({a, a, v});
    if (b >= 0) t.push_back({b, b, v});
    if (a >= 0 && b >= 0) {
      t.push_back({a, b, -v});
      t.push_back({b, a, -v});
    }
  };

  int next_branch = sys.num_nodes;
  for (const Element& e : nl.elements) {
    const int a = e.node_pos == "0" ? -1 : sys.node_index.at(e.node_pos);
    const int b = e.node_neg == "0" ? -1 : sys.node_index.at(e.node_neg);
    switch (e.kind) {
      case ElementKind::Resistor:
        stamp_pair(tG, a, b, 1.0 / e.value);
        break;
      case ElementKind::Capacitor:
        stamp_pair(tC, a, b, e.value);
        break;
      case ElementKind::Inductor: {
        const int j = next_branch++;
        if (a >= 0) {
          tG.push_back({a, j, 1.0});
          tG.push_back({j, a, 1.0});
        }
        if (b >= 0) {
          tG.push_back({b, j, -1.0});
          tG.push_back({j, b, -1.0});
        }
        tC.push_back({j, j, -e.value});
        sys.branch_index.emplace(e.name, j);
        sys.branches.push_back({e.name, j, false, a, b, -1, e.value});
        break;
      }
      case ElementKind::VoltageSource: {
        const int j = next_branch++;
        const int col = static_cast<int>(sys.sources.size());
        if (a >= 0) {
          tG.push_back({a, j, 1.0});
          tG.push_back({j, a, 1.0});
        }
        if (b >= 0) {
          tG.push_back({b, j, -1.0});
          tG.push_back({j, b, -1.0});
        }
        tB.push_back({j, col, 1.0});
        sys.branch_index.emplace(e.name, j);
        sys.branches.push_back({e.name, j, true, a, b, col, 0.0});
        sys.sources.push_back({e.name, e.source});
        break;
      }
      case ElementKind::CurrentSource: {
        const int col = static_cast<int>(sys.sources.size());
        if (a >= 0) tB.push_back({a, col, -1.0});
        if (b >= 0) tB.push_back({b, col, 1.0});
        sys.sources.push_back({e.name, e.source});
        break;
      }
    }
  }

  sys.C = SparseMatrix::from_triplets(sys.n, sys.n, std::move(tC));
  sys.G = SparseMatrix::from_triplets(sys.n, sys.n, std::move(tG));
  sys.B = SparseMatrix::from_triplets(sys.n, static_cast<int>(sys.sources.size()), std::move(tB));

  if (nl.probes.empty()) {
    for (int i = 0; i < sys.num_nodes; ++i) {
      sys.probe_rows.push_back(i);
      sys.probe_labels.push_back(sys.node_labels[i]);
    }
  } else {
    for (const std::string& p : nl.probes) {
      auto it = sys.node_index.find(p);
      if (it == sys.node_index.end()) throw MnaError("probe node '" + p + "' not in netlist");
      sys.probe_rows.push_back(it->second);
      sys.probe_labels.push_back(p);
    }
  }
  return sys;
}

/// Source values at time t, in B-column order.
inline Eigen::VectorXd eval_u(const MnaSystem& sys, double t) {
  Eigen::VectorXd u(static_cast<int>(sys.sources.size()));
  for (int j = 0; j < u.size(); ++j) u[j] = sys.sources[j].wave.eval(t);
  return u;
}

/// B*u(t). The division by C in b(t) = C^{-1} B u(t) is never formed.
inline Eigen::VectorXd eval_b(const MnaSystem& sys, double t) {
  return spmv(sys.B, eval_u(sys, t));
}

/// Operating point: G x = B u0 (capacitors open, inductors short). Applies
/// one round of iterative refinement before enforcing the residual contract.
inline Eigen::VectorXd dc_analysis(const MnaSystem& sys, const Eigen::VectorXd& u0) {
  if (u0.size() != static_cast<int>(sys.sources.size()))
    throw std::invalid_argument("dc_analysis: u0 has wrong size");
  LuFactors lu;
  try {
    lu = sparse_lu(sys.G);
  } catch (const SingularMatrixError& e) {
    throw MnaError("DC analysis: G is singular near '" + sys.state_label(e.pivot_column) +
                   "' (node isolated by capacitors or a source/inductor loop)");
  }
  const Eigen::VectorXd rhs = spmv(sys.B, u0);
  Eigen::VectorXd x = lu_solve(lu, rhs);
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) return Eigen::VectorXd::Zero(sys.n);
  Eigen::VectorXd r = rhs - spmv(sys.G, x);
  if (r.norm() > tol::solve_residual * bnorm) {
    x += lu_solve(lu, r);
    r = rhs - spmv(sys.G, x);
    if (r.norm() > tol::solve_residual * bnorm)
      throw MnaError("DC analysis: residual " + std::to_string(r.norm() / bnorm) +
                     " exceeds tolerance (ill-conditioned G)");
  }
  return x;
}

inline Eigen::VectorXd dc_analysis(const MnaSystem& sys) {
  return dc_analysis(sys, eval_u(sys, 0.0));
}

}  // namespace mexpsim
