#pragma once

// Compressed-sparse-column matrices plus the direct-solver kernel the
// transient engines amortize: one LU factorization with a fill-reducing
// column ordering and threshold partial pivoting, then cheap forward/backward
// substitutions for every subsequent right-hand side.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mexpsim/constants.hpp"

namespace mexpsim {

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct SingularMatrixError : std::runtime_error {
  SingularMatrixError(const std::string& msg, int pivot_col)
      : std::runtime_error(msg), pivot_column(pivot_col) {}
  // Original (unpermuted) column index at which elimination failed.
  int pivot_column;
};

/// Immutable CSC matrix. Row indices inside each column are strictly
/// increasing; duplicates are summed and exact zeros dropped at assembly.
class SparseMatrix {
 public:
  SparseMatrix() = default;

  SparseMatrix(int nrows, int ncols)
      : nrows_(nrows), ncols_(ncols), col_ptr_(static_cast<std::size_t>(ncols) + 1, 0) {
    if (nrows < 0 || ncols < 0) throw std::invalid_argument("negative matrix dimension");
  }

  static SparseMatrix from_triplets(int nrows, int ncols, std::vector<Triplet> entries) {
    for (const Triplet& t : entries) {
      if (t.row < 0 || t.row >= nrows || t.col < 0 || t.col >= ncols)
        throw std::invalid_argument("triplet index out of range");
    }
    std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
      return a.col != b.col ? a.col < b.col : a.row < b.row;
    });
    SparseMatrix m(nrows, ncols);
    m.row_idx_.reserve(entries.size());
    m.values_.reserve(entries.size());
    std::size_t i = 0;
    for (int j = 0; j < ncols; ++j) {
      m.col_ptr_[j] = static_cast<int>(m.row_idx_.size());
      while (i < entries.size() && entries[i].col == j) {
        const int r = entries[i].row;
        double v = entries[i].value;
        ++i;
        while (i < entries.size() && entries[i].col == j && entries[i].row == r) {
          v += entries[i].value;
          ++i;
        }
        if (v != 0.0) {
          m.row_idx_.push_back(r);
          m.values_.push_back(v);
        }
      }
    }
    m.col_ptr_[ncols] = static_cast<int>(m.row_idx_.size());
    return m;
  }

  static SparseMatrix identity(int n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
  }

  static SparseMatrix from_dense(const Eigen::MatrixXd& d) {
    std::vector<Triplet> t;
    for (int j = 0; j < d.cols(); ++j)
      for (int i = 0; i < d.rows(); ++i)
        if (d(i, j) != 0.0) t.push_back({i, j, d(i, j)});
    return from_triplets(static_cast<int>(d.rows()), static_cast<int>(d.cols()), std::move(t));
  }

  int rows() const { return nrows_; }
  int cols() const { return ncols_; }
  int nnz() const { return col_ptr_.empty() ? 0 : col_ptr_.back(); }

  const std::vector<int>& col_ptr() const { return col_ptr_; }
  const std::vector<int>& row_idx() const { return row_idx_; }
  const std::vector<double>& values() const { return values_; }

  double coeff(int r, int c) const {
    const auto b = row_idx_.begin() + col_ptr_[c];
    const auto e = row_idx_.begin() + col_ptr_[c + 1];
    const auto it = std::lower_bound(b, e, r);
    if (it == e || *it != r) return 0.0;
    return values_[static_cast<std::size_t>(it - row_idx_.begin())];
  }

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(nrows_, ncols_);
    for (int j = 0; j < ncols_; ++j)
      for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) d(row_idx_[p], j) = values_[p];
    return d;
  }

  /// True when every stored entry sits on the diagonal.
  bool is_diagonal() const {
    for (int j = 0; j < ncols_; ++j)
      for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p)
        if (row_idx_[p] != j) return false;
    return true;
  }

  double norm_one() const {
    double best = 0.0;
    for (int j = 0; j < ncols_; ++j) {
      double s = 0.0;
      for (int p = col_ptr_[j]; p < col_ptr_[j + 1]; ++p) s += std::abs(values_[p]);
      best = std::max(best, s);
    }
    return best;
  }

 private:
  int nrows_ = 0;
  int ncols_ = 0;
  std::vector<int> col_ptr_;
  std::vector<int> row_idx_;
  std::vector<double> values_;
};

/// y = A*x with a fixed column-major traversal, so repeated calls are
/// bitwise identical.
inline Eigen::VectorXd spmv(const SparseMatrix& A, const Eigen::VectorXd& x) {
  if (x.size() != A.cols()) throw std::invalid_argument("spmv: dimension mismatch");
  Eigen::VectorXd y = Eigen::VectorXd::Zero(A.rows());
  const auto& cp = A.col_ptr();
  const auto& ri = A.row_idx();
  const auto& vx = A.values();
  for (int j = 0; j < A.cols(); ++j) {
    const double xj = x[j];
    if (xj == 0.0) continue;
    for (int p = cp[j]; p < cp[j + 1]; ++p) y[ri[p]] += vx[p] * xj;
  }
  return y;
}

/// a*A + b*B by merging sorted columns.
inline SparseMatrix add(const SparseMatrix& A, const SparseMatrix& B, double a, double b) {
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("add: dimension mismatch");
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(A.nnz()) + B.nnz());
  for (int j = 0; j < A.cols(); ++j) {
    for (int p = A.col_ptr()[j]; p < A.col_ptr()[j + 1]; ++p)
      t.push_back({A.row_idx()[p], j, a * A.values()[p]});
    for (int p = B.col_ptr()[j]; p < B.col_ptr()[j + 1]; ++p)
      t.push_back({B.row_idx()[p], j, b * B.values()[p]});
  }
  return SparseMatrix::from_triplets(A.rows(), A.cols(), std::move(t));
}

/// Debug dump in Matrix Market coordinate format (1-based indices).
inline void write_matrix_market(const SparseMatrix& A, std::ostream& os) {
  os << "%%MatrixMarket matrix coordinate real general\n";
  os << A.rows() << ' ' << A.cols() << ' ' << A.nnz() << '\n';
  char buf[64];
  for (int j = 0; j < A.cols(); ++j)
    for (int p = A.col_ptr()[j]; p < A.col_ptr()[j + 1]; ++p) {
      std::snprintf(buf, sizeof(buf), "%d %d %.17g\n", A.row_idx()[p] + 1, j + 1, A.values()[p]);
      os << buf;
    }
}

/// Minimum-degree ordering on the symmetrized pattern of A. Eliminates the
/// lowest-degree vertex of the elimination graph at each step, turning its
/// neighbourhood into a clique; ties break on vertex index so the result is
/// deterministic.
inline std::vector<int> min_degree_order(const SparseMatrix& A) {
  const int n = A.cols();
  std::vector<std::vector<int>> adj(n);
  for (int j = 0; j < n; ++j)
    for (int p = A.col_ptr()[j]; p < A.col_ptr()[j + 1]; ++p) {
      const int i = A.row_idx()[p];
      if (i != j) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }

  std::vector<char> done(n, 0);
  std::vector<int> key(n);
  std::set<std::pair<int, int>> queue;  // (degree, vertex)
  for (int i = 0; i < n; ++i) {
    key[i] = static_cast<int>(adj[i].size());
    queue.insert({key[i], i});
  }

  std::vector<int> order;
  order.reserve(n);
  std::vector<int> alive, merged;
  while (!queue.empty()) {
    const int v = queue.begin()->second;
    queue.erase(queue.begin());
    done[v] = 1;
    order.push_back(v);

    alive.clear();
    for (int u : adj[v])
      if (!done[u]) alive.push_back(u);

    for (int u : alive) {
      // adj[u] := (adj[u] minus eliminated vertices) union (alive minus {u})
      merged.clear();
      auto& au = adj[u];
      std::size_t ia = 0, ib = 0;
      while (ia < au.size() || ib < alive.size()) {
        int ca = ia < au.size() ? au[ia] : n;
        while (ia < au.size() && (done[ca] || ca == u)) {
          ++ia;
          ca = ia < au.size() ? au[ia] : n;
        }
        int cb = ib < alive.size() ? alive[ib] : n;
        while (ib < alive.size() && cb == u) {
          ++ib;
          cb = ib < alive.size() ? alive[ib] : n;
        }
        if (ca == n && cb == n) break;
        if (ca < cb) {
          merged.push_back(ca);
          ++ia;
        } else if (cb < ca) {
          merged.push_back(cb);
          ++ib;
        } else {
          merged.push_back(ca);
          ++ia;
          ++ib;
        }
      }
      au = merged;
      queue.erase({key[u], u});
      key[u] = static_cast<int>(au.size());
      queue.insert({key[u], u});
    }
    adj[v].clear();
    adj[v].shrink_to_fit();
  }
  return order;
}

struct LuFactors {
  SparseMatrix L;  // unit lower triangular (diagonal stored)
  SparseMatrix U;  // upper triangular, nonzero diagonal
  // row_perm[original_row] = pivoted position k; col_perm[k] = original
  // column eliminated at step k. Reconstruction: A(row, col_perm[k]) entries
  // satisfy P*A*Q = L*U with (P*A*Q)(i,j) = A(p[i], col_perm[j]).
  std::vector<int> row_perm;
  std::vector<int> col_perm;
};

namespace detail {

// Sort each CSC column of (cp, ri, vx) by row index.
inline void sort_columns(int ncols, const std::vector<int>& cp, std::vector<int>& ri,
                         std::vector<double>& vx) {
  std::vector<std::pair<int, double>> buf;
  for (int j = 0; j < ncols; ++j) {
    buf.clear();
    for (int p = cp[j]; p < cp[j + 1]; ++p) buf.emplace_back(ri[p], vx[p]);
    std::sort(buf.begin(), buf.end());
    for (int p = cp[j]; p < cp[j + 1]; ++p) {
      ri[p] = buf[p - cp[j]].first;
      vx[p] = buf[p - cp[j]].second;
    }
  }
}

inline SparseMatrix csc_take(int nrows, int ncols, std::vector<int> cp, std::vector<int> ri,
                             std::vector<double> vx) {
  std::vector<Triplet> t;
  t.reserve(ri.size());
  for (int j = 0; j < ncols; ++j)
    for (int p = cp[j]; p < cp[j + 1]; ++p) t.push_back({ri[p], j, vx[p]});
  return SparseMatrix::from_triplets(nrows, ncols, std::move(t));
}

}  // namespace detail

/// Left-looking sparse LU with a minimum-degree column pre-ordering and
/// threshold partial pivoting (Gilbert-Peierls). Throws SingularMatrixError
/// naming the offending pivot column for structurally or numerically
/// singular inputs.
inline LuFactors sparse_lu(const SparseMatrix& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("sparse_lu: matrix must be square");
  const int n = A.rows();
  const std::vector<int> q = min_degree_order(A);

  std::vector<int> Lp{0}, Li, Up{0}, Ui;
  std::vector<double> Lx, Ux;
  std::vector<int> pinv(n, -1);
  std::vector<double> x(n, 0.0);
  std::vector<char> marked(n, 0);
  std::vector<int> stack(n), pstack(n), pattern;
  pattern.reserve(n);

  const auto& Ap = A.col_ptr();
  const auto& Ai = A.row_idx();
  const auto& Av = A.values();

  for (int k = 0; k < n; ++k) {
    const int col = q[k];

    // Reach: depth-first search through the columns of L already built,
    // collecting the pattern of L \ A(:, col) in post-order.
    pattern.clear();
    for (int p0 = Ap[col]; p0 < Ap[col + 1]; ++p0) {
      int root = Ai[p0];
      if (marked[root]) continue;
      int head = 0;
      stack[0] = root;
      marked[root] = 1;
      pstack[0] = pinv[root] >= 0 ? Lp[pinv[root]] + 1 : -1;
      while (head >= 0) {
        const int node = stack[head];
        bool descended = false;
        if (pinv[node] >= 0) {
          const int jcol = pinv[node];
          int& pp = pstack[head];
          while (pp < Lp[jcol + 1]) {
            const int next = Li[pp];
            ++pp;
            if (!marked[next]) {
              ++head;
              stack[head] = next;
              marked[next] = 1;
              pstack[head] = pinv[next] >= 0 ? Lp[pinv[next]] + 1 : -1;
              descended = true;
              break;
            }
          }
        }
        if (!descended) {
          pattern.push_back(node);
          --head;
        }
      }
    }

    // Numeric sparse triangular solve in topological (reverse post) order.
    for (int i : pattern) x[i] = 0.0;
    for (int p = Ap[col]; p < Ap[col + 1]; ++p) x[Ai[p]] = Av[p];
    for (auto it = pattern.rbegin(); it != pattern.rend(); ++it) {
      const int i = *it;
      const int jcol = pinv[i];
      if (jcol < 0) continue;
      const double xj = x[i];
      if (xj == 0.0) continue;
      for (int p = Lp[jcol] + 1; p < Lp[jcol + 1]; ++p) x[Li[p]] -= Lx[p] * xj;
    }

    // Pivot: largest candidate among not-yet-pivotal rows, with preference
    // for the diagonal row when it clears the threshold.
    double a_max = 0.0;
    int ipiv = -1;
    bool any_candidate = false;
    for (int i : pattern)
      if (pinv[i] < 0) {
        any_candidate = true;
        const double ax = std::abs(x[i]);
        if (ax > a_max) {
          a_max = ax;
          ipiv = i;
        }
      }
    if (!any_candidate)
      throw SingularMatrixError(
          "sparse_lu: structurally singular at pivot column " + std::to_string(col), col);
    if (a_max == 0.0 || ipiv < 0)
      throw SingularMatrixError(
          "sparse_lu: numerically singular at pivot column " + std::to_string(col), col);
    if (pinv[col] < 0 && std::abs(x[col]) >= tol::pivot_threshold * a_max && x[col] != 0.0)
      ipiv = col;

    const double pivot = x[ipiv];
    pinv[ipiv] = k;

    // Column k of U: previously pivotal rows, then the diagonal.
    for (int i : pattern)
      if (i != ipiv && pinv[i] >= 0 && pinv[i] < k && x[i] != 0.0) {
        Ui.push_back(pinv[i]);
        Ux.push_back(x[i]);
      }
    Ui.push_back(k);
    Ux.push_back(pivot);
    Up.push_back(static_cast<int>(Ui.size()));

    // Column k of L: unit diagonal first, then scaled candidates.
    Li.push_back(ipiv);
    Lx.push_back(1.0);
    for (int i : pattern)
      if (pinv[i] < 0 && x[i] != 0.0) {
        Li.push_back(i);
        Lx.push_back(x[i] / pivot);
      }
    Lp.push_back(static_cast<int>(Li.size()));

    for (int i : pattern) {
      x[i] = 0.0;
      marked[i] = 0;
    }
  }

  // L was built with original row indices; map them into pivoted order.
  for (int& i : Li) i = pinv[i];
  detail::sort_columns(n, Lp, Li, Lx);
  detail::sort_columns(n, Up, Ui, Ux);

  LuFactors f;
  f.L = detail::csc_take(n, n, std::move(Lp), std::move(Li), std::move(Lx));
  f.U = detail::csc_take(n, n, std::move(Up), std::move(Ui), std::move(Ux));
  f.row_perm = pinv;
  f.col_perm = q;
  return f;
}

/// Solve A x = b through the factors: x = Q (U \ (L \ (P b))).
inline Eigen::VectorXd lu_solve(const LuFactors& f, const Eigen::VectorXd& b) {
  const int n = f.L.rows();
  if (b.size() != n) throw std::invalid_argument("lu_solve: dimension mismatch");
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[f.row_perm[i]] = b[i];

  const auto& Lp = f.L.col_ptr();
  const auto& Li = f.L.row_idx();
  const auto& Lx = f.L.values();
  for (int j = 0; j < n; ++j) {
    const double yj = y[j];  // unit diagonal is the first entry of column j
    if (yj == 0.0) continue;
    for (int p = Lp[j] + 1; p < Lp[j + 1]; ++p) y[Li[p]] -= Lx[p] * yj;
  }

  const auto& Up = f.U.col_ptr();
  const auto& Ui = f.U.row_idx();
  const auto& Ux = f.U.values();
  for (int j = n - 1; j >= 0; --j) {
    const int pend = Up[j + 1] - 1;  // diagonal is the last entry of column j
    const double xj = y[j] / Ux[pend];
    y[j] = xj;
    if (xj == 0.0) continue;
    for (int p = Up[j]; p < pend; ++p) y[Ui[p]] -= Ux[p] * xj;
  }

  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) out[f.col_perm[k]] = y[k];
  return out;
}

}  // namespace mexpsim
