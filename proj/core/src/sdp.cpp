#include "rcq/sdp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include <json.hpp>

#if defined(RCQ_HAVE_LAPACKE)
#include <lapacke.h>
#endif

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace rcq {

namespace {

// Tiny subnormal intermediates dominate the late iterations on some
// hardware; flushing them to zero there is harmless (they are far below
// every tolerance) and removes the stalls.  Scoped so the caller's
// floating-point environment is untouched.
struct DenormalGuard {
#if defined(__SSE2__)
  unsigned int saved = _mm_getcsr();
  DenormalGuard() { _mm_setcsr(saved | 0x8040); }  // FTZ | DAZ
  ~DenormalGuard() { _mm_setcsr(saved); }
#endif
};

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Dense symmetric linear algebra, LAPACK-backed when available.
// ---------------------------------------------------------------------------

// In-place lower Cholesky A = L L^T (lower triangle of `a` on exit).
// Deliberately Eigen rather than LAPACK: the solver factors nearly
// singular matrices whose intermediates fall into the subnormal range,
// and an out-of-process BLAS does not inherit the flush-to-zero mode set
// by DenormalGuard, turning each factorization into a stall storm.
bool chol_lower(RMat& a) {
  if (a.rows() == 0) return true;
  Eigen::LLT<Eigen::Ref<RMat>> llt(a);
  return llt.info() == Eigen::Success;
}

// Solve L X = B in place for lower-triangular L (Eigen for the same
// reason as chol_lower).
void trsm_lower(const RMat& l, RMat& b) {
  l.triangularView<Eigen::Lower>().solveInPlace(b);
}

// Solve L^T X = B in place for lower-triangular L.
void trsm_lower_t(const RMat& l, RMat& b) {
  l.triangularView<Eigen::Lower>().transpose().solveInPlace(b);
}

// Solve (L L^T) X = B in place given the lower Cholesky factor.
void chol_solve(const RMat& l, RMat& b) {
  trsm_lower(l, b);
  trsm_lower_t(l, b);
}

// Extended-precision Cholesky for the final stretch of the central path,
// where the Schur system's conditioning exceeds what double-precision
// factors can solve to the requested tolerance.  The matrix is held as a
// hi/lo pair of doubles (a compensated "double-double" representation,
// ~32 significant digits): unlike 80-bit x87 arithmetic, the hot trailing
// update then runs on vectorizable double FMAs.  Column-major lower
// triangles; panels are factored in 80-bit long double (pivots need
// divisions and square roots, not throughput), the O(n^3) trailing update
// is row-tiled so the panel stays cache-resident.
bool chol_dd(std::vector<double>& hi, std::vector<double>& lo, int n) {
  constexpr int kPanel = 32;
  constexpr int kTile = 512;
  std::vector<long double> panel;
  for (int j0 = 0; j0 < n; j0 += kPanel) {
    const int j1 = std::min(j0 + kPanel, n);
    const int ph = n - j0;
    // Load panel columns [j0, j1) x rows [j0, n) into long double.
    panel.assign(static_cast<std::size_t>(j1 - j0) * ph, 0.0L);
    for (int j = j0; j < j1; ++j) {
      const double* chi = hi.data() + static_cast<std::ptrdiff_t>(j) * n;
      const double* clo = lo.data() + static_cast<std::ptrdiff_t>(j) * n;
      long double* pc = panel.data() + static_cast<std::ptrdiff_t>(j - j0) * ph;
      for (int i = j; i < n; ++i) {
        pc[i - j0] = static_cast<long double>(chi[i]) + clo[i];
      }
    }
    // Factor the panel (left-looking within the panel).
    for (int j = j0; j < j1; ++j) {
      long double* pj = panel.data() + static_cast<std::ptrdiff_t>(j - j0) * ph;
      for (int k = j0; k < j; ++k) {
        const long double* pk =
            panel.data() + static_cast<std::ptrdiff_t>(k - j0) * ph;
        const long double a = pk[j - j0];
        for (int i = j - j0; i < ph; ++i) pj[i] -= a * pk[i];
      }
      const long double d = pj[j - j0];
      if (!(d > 0.0L)) return false;
      const long double r = sqrtl(d);
      pj[j - j0] = r;
      for (int i = j - j0 + 1; i < ph; ++i) pj[i] /= r;
    }
    // Store the factored panel back as renormalized hi/lo pairs.
    for (int j = j0; j < j1; ++j) {
      double* chi = hi.data() + static_cast<std::ptrdiff_t>(j) * n;
      double* clo = lo.data() + static_cast<std::ptrdiff_t>(j) * n;
      const long double* pc =
          panel.data() + static_cast<std::ptrdiff_t>(j - j0) * ph;
      for (int i = j; i < n; ++i) {
        const long double v = pc[i - j0];
        const double h = static_cast<double>(v);
        chi[i] = h;
        clo[i] = static_cast<double>(v - static_cast<long double>(h));
      }
    }
    // Trailing update C[c:, c] -= sum_k L[c:, k] * L[c, k], row-tiled so
    // the panel rows stay cache-resident across the columns they update.
    for (int r0 = j1; r0 < n; r0 += kTile) {
      const int r1 = std::min(r0 + kTile, n);
      for (int c = j1; c < r1; ++c) {
        const int ilo = c > r0 ? c : r0;
        const int len = r1 - ilo;
        double* __restrict__ chi =
            hi.data() + static_cast<std::ptrdiff_t>(c) * n + ilo;
        double* __restrict__ clo =
            lo.data() + static_cast<std::ptrdiff_t>(c) * n + ilo;
        for (int k = j0; k < j1; ++k) {
          const double* bhik = hi.data() + static_cast<std::ptrdiff_t>(k) * n;
          const double* blok = lo.data() + static_cast<std::ptrdiff_t>(k) * n;
          const double ah = -bhik[c];
          const double al = -blok[c];
          const double* __restrict__ bhi = bhik + ilo;
          const double* __restrict__ blo = blok + ilo;
          for (int i = 0; i < len; ++i) {
            // (ah + al) * (bhi + blo) to ~1e-32 (al*blo dropped), with an
            // FMA capturing the exact product error.
            const double pr = ah * bhi[i];
            const double pe =
                std::fma(ah, bhi[i], -pr) + (ah * blo[i] + al * bhi[i]);
            // Two-sum accumulation; hi + lo stays exact, the split drifts
            // until the next panel reload renormalizes it.
            const double s = chi[i] + pr;
            const double bb = s - chi[i];
            const double se = (chi[i] - (s - bb)) + (pr - bb);
            clo[i] += se + pe;
            chi[i] = s;
          }
        }
      }
    }
  }
  return true;
}

// Solve (L L^T) x = b for the hi/lo factor produced by chol_dd; the
// substitutions are O(n^2), so plain 80-bit accumulation is fine here.
void chol_solve_dd(const std::vector<double>& hi, const std::vector<double>& lo,
                   int n, RVec& b) {
  std::vector<long double> x(n);
  for (int i = 0; i < n; ++i) x[i] = b[i];
  for (int j = 0; j < n; ++j) {
    const double* chi = hi.data() + static_cast<std::ptrdiff_t>(j) * n;
    const double* clo = lo.data() + static_cast<std::ptrdiff_t>(j) * n;
    x[j] /= static_cast<long double>(chi[j]) + clo[j];
    const long double xj = x[j];
    for (int i = j + 1; i < n; ++i) {
      x[i] -= (static_cast<long double>(chi[i]) + clo[i]) * xj;
    }
  }
  for (int j = n - 1; j >= 0; --j) {
    const double* chi = hi.data() + static_cast<std::ptrdiff_t>(j) * n;
    const double* clo = lo.data() + static_cast<std::ptrdiff_t>(j) * n;
    long double v = x[j];
    for (int i = j + 1; i < n; ++i) {
      v -= (static_cast<long double>(chi[i]) + clo[i]) * x[i];
    }
    x[j] = v / (static_cast<long double>(chi[j]) + clo[j]);
  }
  for (int i = 0; i < n; ++i) b[i] = static_cast<double>(x[i]);
}

// Full symmetric eigendecomposition a = V diag(w) V^T.
void sym_eig(const RMat& a, RVec& w, RMat& v) {
#if defined(RCQ_HAVE_LAPACKE)
  v = a;
  w.resize(a.rows());
  const int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<int>(a.rows()),
                     v.data(), static_cast<int>(a.rows()), w.data());
  if (info == 0) return;
#endif
  Eigen::SelfAdjointEigenSolver<RMat> es(a);
  w = es.eigenvalues();
  v = es.eigenvectors();
}

double min_eig_sym(const RMat& a) {
#if defined(RCQ_HAVE_LAPACKE)
  RMat tmp = a;
  RVec w(a.rows());
  const int info =
      LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'N', 'L', static_cast<int>(a.rows()),
                     tmp.data(), static_cast<int>(a.rows()), w.data());
  if (info == 0) return w.minCoeff();
#endif
  Eigen::SelfAdjointEigenSolver<RMat> es(a, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double sym_dot(const RMat& a, const RMat& b) {
  return (a.array() * b.array()).sum();
}

// ---------------------------------------------------------------------------
// Preprocessed instance
// ---------------------------------------------------------------------------

struct Entry {
  int row, col;
  double value;
};

// One fully reduced equality row: y_var = rhs - sum_j coef_j * y_j with
// every j a free (non-pivot) variable.
struct PivotRow {
  int var = -1;
  double rhs = 0.0;
  std::vector<std::pair<int, double>> terms;
};

// The solver never sees the equality rows: preprocessing substitutes them
// away (reduced row echelon form over the rows, right-hand sides carried),
// which removes the equality multipliers from the interior-point system
// entirely.  Degenerate multipliers were a reliable source of tail
// stagnation on the moment instances; the reduced problem has none.
struct Prep {
  // Reduced (equality-free) problem over the free variables.
  int m = 0;                       // number of free variables
  std::vector<int> dims;           // block dimensions
  std::vector<RMat> c0;            // constant term per block, post substitution
  // Per block: which free variables touch it and with which entries.
  std::vector<std::vector<int>> vars;                 // block -> reduced ids
  std::vector<std::vector<std::vector<Entry>>> ents;  // parallel to vars
  RVec c;                          // reduced objective, maximize sense
  double obj_const = 0.0;          // constant the substitution adds to c . y
  // Elimination record, for mapping solutions back.
  std::vector<PivotRow> pivots;
  std::vector<int> var_of_free;    // reduced id -> original id
  std::vector<int> free_of_var;    // original id -> reduced id, -1 for pivots
  // Per-variable equilibration: the solver works on A_j * colscale_j, so a
  // reduced iterate u maps to the original variable as u_j * colscale_j.
  RVec colscale;
  double norm_spread = 1.0;        // max/min entry norm before equilibration
  std::vector<SdpEquality> eq_rows;  // independent original rows
  std::vector<int> eq_origin;        // their indices in the original list
  std::size_t original_eq_count = 0;
  int full_m = 0;
  bool inconsistent = false;       // 0 = nonzero turned up during elimination
  double coeff_inf = 0, c0_inf = 0, c_inf = 0;
  bool flipped = false;            // true when the user asked to minimize
};

Prep preprocess(const SdpInstance& inst) {
  inst.validate();
  Prep p;
  p.full_m = inst.num_vars;
  p.dims = inst.block_dims;
  p.flipped = !inst.maximize;
  p.original_eq_count = inst.equalities.size();

  RVec cfull = RVec::Zero(p.full_m);
  for (const auto& [v, coef] : inst.objective) cfull[v] += coef;
  if (p.flipped) cfull = -cfull;

  // --- reduced row echelon form of the equality rows ---------------------
  struct BasisRow {
    std::map<int, double> terms;  // excludes the unit-coefficient pivot
    double rhs = 0.0;
  };
  std::map<int, BasisRow> basis;  // keyed by pivot variable
  auto clean = [](std::map<int, double>& row) {
    double scale = 0.0;
    for (const auto& [v, coef] : row) scale = std::max(scale, std::abs(coef));
    const double thresh = 1e-12 * scale;
    for (auto it = row.begin(); it != row.end();) {
      if (std::abs(it->second) <= thresh) {
        it = row.erase(it);
      } else {
        ++it;
      }
    }
  };
  for (std::size_t r = 0; r < inst.equalities.size(); ++r) {
    std::map<int, double> row;
    double rhs = inst.equalities[r].rhs;
    double scale0 = std::abs(rhs);
    for (const auto& [v, coef] : inst.equalities[r].terms) {
      if (v < 0 || v >= p.full_m) {
        throw std::invalid_argument("sdp: equality variable out of range");
      }
      row[v] += coef;
      scale0 = std::max(scale0, std::abs(coef));
    }
    if (scale0 == 0.0) continue;  // 0 = 0 row
    // Substitute every known pivot appearing in the row.
    bool changed = true;
    while (changed) {
      changed = false;
      clean(row);
      for (auto it = row.begin(); it != row.end(); ++it) {
        auto bit = basis.find(it->first);
        if (bit == basis.end()) continue;
        const double f = it->second;
        row.erase(it);
        for (const auto& [v, coef] : bit->second.terms) row[v] -= f * coef;
        rhs -= f * bit->second.rhs;
        changed = true;
        break;  // iterators invalidated; rescan
      }
    }
    if (row.empty()) {
      // Dependent on earlier rows; a leftover right-hand side means the
      // rows contradict each other.
      if (std::abs(rhs) > 1e-9 * (1.0 + scale0)) p.inconsistent = true;
      continue;
    }
    // Pivot on the largest coefficient for stability.
    int pv = -1;
    double pval = 0.0;
    for (const auto& [v, coef] : row) {
      if (std::abs(coef) > std::abs(pval)) {
        pv = v;
        pval = coef;
      }
    }
    BasisRow fresh;
    for (const auto& [v, coef] : row) {
      if (v != pv) fresh.terms[v] = coef / pval;
    }
    fresh.rhs = rhs / pval;
    // Keep the basis fully reduced: eliminate the new pivot from every
    // earlier row, so finished rows reference free variables only.
    for (auto& [bp, brow] : basis) {
      auto hit = brow.terms.find(pv);
      if (hit == brow.terms.end()) continue;
      const double f = hit->second;
      brow.terms.erase(hit);
      for (const auto& [v, coef] : fresh.terms) brow.terms[v] -= f * coef;
      brow.rhs -= f * fresh.rhs;
      clean(brow.terms);
    }
    basis.emplace(pv, std::move(fresh));
    p.eq_rows.push_back(inst.equalities[r]);
    p.eq_origin.push_back(static_cast<int>(r));
  }

  // --- free-variable numbering and pivot table ---------------------------
  p.free_of_var.assign(p.full_m, -1);
  for (int v = 0; v < p.full_m; ++v) {
    if (basis.count(v)) continue;
    p.free_of_var[v] = static_cast<int>(p.var_of_free.size());
    p.var_of_free.push_back(v);
  }
  p.m = static_cast<int>(p.var_of_free.size());
  // refs[original free id] -> (pivot index, coefficient) occurrences.
  std::vector<std::vector<std::pair<int, double>>> refs(p.full_m);
  for (auto& [pv, brow] : basis) {
    PivotRow pr;
    pr.var = pv;
    pr.rhs = brow.rhs;
    pr.terms.assign(brow.terms.begin(), brow.terms.end());
    const int pidx = static_cast<int>(p.pivots.size());
    for (const auto& [v, coef] : pr.terms) refs[v].push_back({pidx, coef});
    p.pivots.push_back(std::move(pr));
  }

  // --- substituted constant term -----------------------------------------
  const int nb = static_cast<int>(p.dims.size());
  p.c0.resize(nb);
  for (int b = 0; b < nb; ++b) p.c0[b] = RMat::Zero(p.dims[b], p.dims[b]);
  auto add_c0 = [&](const SdpCoeff& e, double factor) {
    p.c0[e.block](e.row, e.col) += factor * e.value;
    if (e.row != e.col) p.c0[e.block](e.col, e.row) += factor * e.value;
  };
  for (const SdpCoeff& e : inst.constant) add_c0(e, 1.0);
  for (const PivotRow& pr : p.pivots) {
    if (pr.rhs == 0.0) continue;
    for (const SdpCoeff& e : inst.coeffs[pr.var]) add_c0(e, pr.rhs);
  }
  for (int b = 0; b < nb; ++b) {
    p.c0_inf = std::max(p.c0_inf, p.c0[b].cwiseAbs().maxCoeff());
  }

  // --- substituted coefficient matrices and objective --------------------
  p.vars.resize(nb);
  p.ents.resize(nb);
  p.c = RVec::Zero(std::max(p.m, 1));
  p.c.conservativeResize(p.m);
  p.obj_const = 0.0;
  for (const PivotRow& pr : p.pivots) p.obj_const += pr.rhs * cfull[pr.var];
  for (int jr = 0; jr < p.m; ++jr) {
    const int j = p.var_of_free[jr];
    double cj = cfull[j];
    std::map<std::tuple<int, int, int>, double> acc;
    for (const SdpCoeff& e : inst.coeffs[j]) {
      acc[{e.block, e.row, e.col}] += e.value;
    }
    for (const auto& [pidx, coef] : refs[j]) {
      const PivotRow& pr = p.pivots[pidx];
      cj -= coef * cfull[pr.var];
      for (const SdpCoeff& e : inst.coeffs[pr.var]) {
        acc[{e.block, e.row, e.col}] -= coef * e.value;
      }
    }
    p.c[jr] = cj;
    double amax = 0.0;
    for (const auto& [key, val] : acc) amax = std::max(amax, std::abs(val));
    const double drop = 1e-14 * amax;
    std::map<int, std::vector<Entry>> by_block;
    for (const auto& [key, val] : acc) {
      if (std::abs(val) <= drop) continue;
      const auto [b, er, ec] = key;
      by_block[b].push_back(Entry{er, ec, val});
      p.coeff_inf = std::max(p.coeff_inf, std::abs(val));
    }
    for (auto& [b, list] : by_block) {
      p.vars[b].push_back(jr);
      p.ents[b].push_back(std::move(list));
    }
  }
  // --- equilibrate the variables -----------------------------------------
  // The substitution can leave variables whose constraint entries differ by
  // orders of magnitude; the Schur complement squares that imbalance into
  // its condition number, which shows up as collapsing step lengths near
  // optimality.  Scale every variable to unit entry norm.
  p.colscale = RVec::Ones(std::max(p.m, 1));
  p.colscale.conservativeResize(p.m);
  if (p.m > 0) {
    RVec nrm2 = RVec::Zero(p.m);
    for (int b = 0; b < nb; ++b) {
      for (std::size_t k = 0; k < p.vars[b].size(); ++k) {
        double acc = 0.0;
        for (const Entry& e : p.ents[b][k]) {
          acc += (e.row == e.col ? 1.0 : 2.0) * e.value * e.value;
        }
        nrm2[p.vars[b][k]] += acc;
      }
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int j = 0; j < p.m; ++j) {
      if (nrm2[j] <= 0.0) continue;  // objective-only variable
      const double nj = std::sqrt(nrm2[j]);
      lo = std::min(lo, nj);
      hi = std::max(hi, nj);
      p.colscale[j] = std::clamp(1.0 / nj, 1e-8, 1e8);
    }
    if (hi > 0.0) p.norm_spread = hi / lo;
    p.coeff_inf = 0.0;
    for (int b = 0; b < nb; ++b) {
      for (std::size_t k = 0; k < p.vars[b].size(); ++k) {
        const double d = p.colscale[p.vars[b][k]];
        for (Entry& e : p.ents[b][k]) {
          e.value *= d;
          p.coeff_inf = std::max(p.coeff_inf, std::abs(e.value));
        }
      }
    }
    for (int j = 0; j < p.m; ++j) p.c[j] *= p.colscale[j];
  }
  p.c_inf = p.m > 0 ? p.c.cwiseAbs().maxCoeff() : 0.0;
  return p;
}

// S(y) per block: C0 + sum_i y_i A_i.
std::vector<RMat> assemble_blocks(const Prep& p, const RVec& y) {
  std::vector<RMat> out(p.dims.size());
  for (std::size_t b = 0; b < p.dims.size(); ++b) {
    out[b] = p.c0[b];
    for (std::size_t k = 0; k < p.vars[b].size(); ++k) {
      const double yv = y[p.vars[b][k]];
      if (yv == 0.0) continue;
      for (const Entry& e : p.ents[b][k]) {
        out[b](e.row, e.col) += yv * e.value;
        if (e.row != e.col) out[b](e.col, e.row) += yv * e.value;
      }
    }
  }
  return out;
}

// out_i += <A_i, X>.
void accumulate_inner(const Prep& p, const std::vector<RMat>& x, RVec& out) {
  for (std::size_t b = 0; b < p.dims.size(); ++b) {
    for (std::size_t k = 0; k < p.vars[b].size(); ++k) {
      double dot = 0;
      for (const Entry& e : p.ents[b][k]) {
        dot += (e.row == e.col ? 1.0 : 2.0) * e.value * x[b](e.row, e.col);
      }
      out[p.vars[b][k]] += dot;
    }
  }
}

// In-place symmetrization. Note (x + x.transpose()) assigned back into x
// aliases through the transpose view and silently keeps part of the
// asymmetry; the explicit copy avoids that.
void symmetrize(RMat& x) {
  RMat xt = x.transpose();
  x = 0.5 * (x + xt);
}

// Largest t with X + t*D psd, given the lower Cholesky factor of X.
double max_step(const RMat& lx, const RMat& d) {
  RMat k = d;
  trsm_lower(lx, k);
  RMat kt = k.transpose();
  trsm_lower(lx, kt);  // kt = L^{-1} (L^{-1} D)^T = (L^{-1} D L^{-T})^T
  const double lam = min_eig_sym((kt + kt.transpose()) * 0.5);
  if (lam >= -1e-14) return std::numeric_limits<double>::infinity();
  return -1.0 / lam;
}

struct SchurGroups {
  // Partition of the variables for the Schur complement: one group per
  // block when every variable touches a single block, otherwise one
  // global group.
  bool blockwise = false;
  int ngroups = 1;
  std::vector<int> group_of_var;
  std::vector<int> pos_of_var;
  std::vector<std::vector<int>> group_vars;
};

SchurGroups make_groups(const Prep& p) {
  SchurGroups g;
  std::vector<int> touch(p.m, -1);
  bool disjoint = true;
  for (std::size_t b = 0; b < p.dims.size() && disjoint; ++b) {
    for (int v : p.vars[b]) {
      if (touch[v] == -1) {
        touch[v] = static_cast<int>(b);
      } else if (touch[v] != static_cast<int>(b)) {
        disjoint = false;
        break;
      }
    }
  }
  g.group_of_var.assign(p.m, 0);
  g.pos_of_var.assign(p.m, 0);
  if (disjoint && p.dims.size() > 1) {
    g.blockwise = true;
    g.ngroups = static_cast<int>(p.dims.size());
    g.group_vars.resize(g.ngroups);
    for (int v = 0; v < p.m; ++v) {
      // Variables touching no block (zero coefficient matrix) join group 0
      // and get a unit diagonal in the Schur matrix.
      const int b = touch[v] < 0 ? 0 : touch[v];
      g.group_of_var[v] = b;
      g.pos_of_var[v] = static_cast<int>(g.group_vars[b].size());
      g.group_vars[b].push_back(v);
    }
  } else {
    g.ngroups = 1;
    g.group_vars.resize(1);
    g.group_vars[0].resize(p.m);
    for (int v = 0; v < p.m; ++v) {
      g.group_of_var[v] = 0;
      g.pos_of_var[v] = v;
      g.group_vars[0][v] = v;
    }
  }
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// Instance validation
// ---------------------------------------------------------------------------

const char* to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::optimal: return "optimal";
    case SdpStatus::inaccurate: return "inaccurate";
    case SdpStatus::infeasible: return "infeasible";
    case SdpStatus::failed: return "failed";
  }
  return "unknown";
}

void SdpInstance::validate() const {
  if (block_dims.empty()) {
    throw std::invalid_argument("sdp: no blocks");
  }
  for (int d : block_dims) {
    if (d <= 0) throw std::invalid_argument("sdp: block dimension <= 0");
  }
  if (num_vars <= 0) throw std::invalid_argument("sdp: no variables");
  if (static_cast<int>(coeffs.size()) != num_vars) {
    throw std::invalid_argument("sdp: coefficient list size != num_vars");
  }
  auto check_entry = [&](const SdpCoeff& e) {
    if (e.block < 0 || e.block >= static_cast<int>(block_dims.size())) {
      throw std::invalid_argument("sdp: entry block out of range");
    }
    const int dim = block_dims[e.block];
    if (e.row < 0 || e.col < 0 || e.row >= dim || e.col >= dim) {
      throw std::invalid_argument("sdp: entry index out of range");
    }
    if (e.row > e.col) {
      throw std::invalid_argument("sdp: entries must satisfy row <= col");
    }
    if (!std::isfinite(e.value)) {
      throw std::invalid_argument("sdp: non-finite coefficient");
    }
  };
  for (const auto& list : coeffs) {
    for (const SdpCoeff& e : list) check_entry(e);
  }
  for (const SdpCoeff& e : constant) check_entry(e);
  if (equalities.empty()) {
    throw std::invalid_argument(
        "sdp: at least one equality row is required (normalization)");
  }
  for (const SdpEquality& row : equalities) {
    if (!std::isfinite(row.rhs)) {
      throw std::invalid_argument("sdp: non-finite equality rhs");
    }
    for (const auto& [v, coef] : row.terms) {
      if (v < 0 || v >= num_vars) {
        throw std::invalid_argument("sdp: equality variable out of range");
      }
      if (!std::isfinite(coef)) {
        throw std::invalid_argument("sdp: non-finite equality coefficient");
      }
    }
  }
  for (const auto& [v, coef] : objective) {
    if (v < 0 || v >= num_vars) {
      throw std::invalid_argument("sdp: objective variable out of range");
    }
    if (!std::isfinite(coef)) {
      throw std::invalid_argument("sdp: non-finite objective coefficient");
    }
  }
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

SdpSolution solve_sdp(const SdpInstance& inst, const SdpTolerances& tol) {
  Prep p = preprocess(inst);
  const int nb = static_cast<int>(p.dims.size());
  const int m = p.m;
  double ntotal = 0;
  for (int d : p.dims) ntotal += d;

  SdpSolution sol;
  sol.status = SdpStatus::failed;
  std::string detail;

  // Scatter a reduced point back to the original variables; the pivot rows
  // are satisfied exactly by construction.
  auto expand = [&](const RVec& u) {
    RVec full = RVec::Zero(p.full_m);
    for (int jr = 0; jr < m; ++jr) {
      full[p.var_of_free[jr]] = u[jr] * p.colscale[jr];
    }
    for (const PivotRow& pr : p.pivots) {
      double val = pr.rhs;
      for (const auto& [v, coef] : pr.terms) val -= coef * full[v];
      full[pr.var] = val;
    }
    return full;
  };

  // Least-squares multipliers for the independent equality rows, fitted to
  // the final dual iterate; returns the scaled residual of the fit, which
  // is the dual feasibility of the original (uneliminated) instance.
  auto fit_multipliers = [&](const std::vector<RMat>& Zb, RVec& mult_out) {
    RVec cfull = RVec::Zero(p.full_m);
    for (const auto& [v, coef] : inst.objective) cfull[v] += coef;
    if (p.flipped) cfull = -cfull;
    RVec r = cfull;
    if (static_cast<int>(Zb.size()) == nb) {
      for (int i = 0; i < p.full_m; ++i) {
        for (const SdpCoeff& e : inst.coeffs[i]) {
          r[i] += (e.row == e.col ? 1.0 : 2.0) * e.value *
                  Zb[e.block](e.row, e.col);
        }
      }
    }
    const int rrows = static_cast<int>(p.eq_rows.size());
    mult_out = RVec::Zero(static_cast<int>(p.original_eq_count));
    double resid = 0.0;
    if (rrows > 0) {
      RMat bd = RMat::Zero(rrows, p.full_m);
      for (int q = 0; q < rrows; ++q) {
        for (const auto& [v, coef] : p.eq_rows[q].terms) bd(q, v) += coef;
      }
      RMat gram = bd * bd.transpose();
      Eigen::LDLT<RMat> ldlt(gram);
      RVec lam = ldlt.solve(bd * r);
      resid = (r - bd.transpose() * lam).cwiseAbs().maxCoeff();
      for (int q = 0; q < rrows; ++q) mult_out[p.eq_origin[q]] = lam[q];
    } else if (r.size() > 0) {
      resid = r.cwiseAbs().maxCoeff();
    }
    const double cf = cfull.size() > 0 ? cfull.cwiseAbs().maxCoeff() : 0.0;
    return resid / (1.0 + cf);
  };

  if (p.inconsistent) {
    sol.status = SdpStatus::infeasible;
    sol.detail = "equality rows are mutually inconsistent";
    sol.y = RVec::Zero(p.full_m);
    sol.eq_multipliers = RVec::Zero(static_cast<int>(p.original_eq_count));
    return sol;
  }

  if (m == 0) {
    // Every variable was fixed by the equality rows; the problem is a
    // feasibility check on the constant matrix.
    double mineig = std::numeric_limits<double>::infinity();
    for (int b = 0; b < nb; ++b) {
      mineig = std::min(mineig, min_eig_sym(p.c0[b]));
    }
    sol.y = expand(RVec::Zero(0));
    sol.S = p.c0;
    sol.Z.assign(nb, RMat());
    for (int b = 0; b < nb; ++b) sol.Z[b] = RMat::Zero(p.dims[b], p.dims[b]);
    sol.primal_obj = sol.dual_obj = p.obj_const;
    sol.dual_feas = fit_multipliers(sol.Z, sol.eq_multipliers);
    if (mineig >= -tol.feas * (1.0 + p.c0_inf)) {
      sol.status = SdpStatus::optimal;
    } else {
      sol.status = SdpStatus::infeasible;
      sol.detail = "the equality rows force an indefinite slack matrix";
    }
    if (p.flipped) {
      sol.primal_obj = -sol.primal_obj;
      sol.dual_obj = -sol.dual_obj;
    }
    return sol;
  }

  SchurGroups grp = make_groups(p);

  if (tol.verbose) {
    std::fprintf(stderr,
                 "prep  m %d  blocks %d  groups %d  entry-norm spread %.2e\n",
                 m, nb, grp.ngroups, p.norm_spread);
  }

  // Identity-scaled start (schedule documented in docs/conventions.md).
  const double s_scale = 10.0 * std::max({1.0, p.c0_inf, p.coeff_inf});
  const double z_scale = 10.0 * std::max(1.0, p.c_inf);
  RVec y = RVec::Zero(m);
  std::vector<RMat> S(nb), Z(nb);
  for (int b = 0; b < nb; ++b) {
    S[b] = s_scale * RMat::Identity(p.dims[b], p.dims[b]);
    Z[b] = z_scale * RMat::Identity(p.dims[b], p.dims[b]);
  }

  std::vector<RMat> Lz(nb), Ls(nb), Winv(nb), Sinv(nb);
  std::vector<RMat> RS(nb), RC(nb), WRW(nb), dSp(nb), dZp(nb), dS(nb), dZ(nb);
  std::vector<RMat> Mg(grp.ngroups), Msave(grp.ngroups);
  std::vector<std::vector<double>> Lhi(grp.ngroups), Llo(grp.ngroups);
  bool xp_mode = false;

  const DenormalGuard denormal_guard;
  double mu = 0;
  double best_relgap = std::numeric_limits<double>::infinity();
  int stall = 0;
  int steps = 0;

  // Cleanest iterate seen so far, scored against the tolerances.  A rough
  // late step can degrade an essentially converged run; in that case the
  // answer reported is this snapshot, not the final iterate.
  struct BestIterate {
    double score = std::numeric_limits<double>::infinity();
    double pobj = 0, dobj = 0, gap = 0, relgap = 0, pfeas = 0, dfeas = 0;
    RVec y;
    std::vector<RMat> S, Z;
  } best;

  for (int it = 0;; ++it) {
    // --- residuals and convergence -----------------------------------------
    std::vector<RMat> Sy = assemble_blocks(p, y);
    double rs_inf = 0;
    for (int b = 0; b < nb; ++b) {
      RS[b] = S[b] - Sy[b];  // want 0
      rs_inf = std::max(rs_inf, RS[b].cwiseAbs().maxCoeff());
    }
    RVec D = p.c;  // c + <A_i, Z>, want 0
    accumulate_inner(p, Z, D);
    const double dres_inf = D.cwiseAbs().maxCoeff();

    double gap = 0;
    for (int b = 0; b < nb; ++b) gap += sym_dot(S[b], Z[b]);
    mu = gap / ntotal;

    const double pobj = p.obj_const + p.c.dot(y);
    double dobj = p.obj_const;
    for (int b = 0; b < nb; ++b) dobj += sym_dot(p.c0[b], Z[b]);

    const double pfeas = rs_inf / (1.0 + p.c0_inf);
    const double dfeas = dres_inf / (1.0 + p.c_inf);
    const double relgap = gap / (1.0 + std::abs(pobj) + std::abs(dobj));

    sol.primal_obj = pobj;
    sol.dual_obj = dobj;
    sol.gap = gap;
    sol.rel_gap = relgap;
    sol.primal_feas = pfeas;
    sol.dual_feas = dfeas;
    sol.gap_history.push_back(gap);

    const double score = std::max({relgap / tol.rel_gap, pfeas / tol.feas,
                                   dfeas / tol.feas});
    if (score < best.score) {
      best.score = score;
      best.pobj = pobj;
      best.dobj = dobj;
      best.gap = gap;
      best.relgap = relgap;
      best.pfeas = pfeas;
      best.dfeas = dfeas;
      best.y = y;
      best.S = S;
      best.Z = Z;
    }

    if (tol.verbose) {
      std::fprintf(stderr,
                   "iter %3d  pobj % .10e  dobj % .10e  relgap %.2e  pfeas "
                   "%.2e  dfeas %.2e\n",
                   it, pobj, dobj, relgap, pfeas, dfeas);
    }

    if (relgap <= tol.rel_gap && pfeas <= tol.feas && dfeas <= tol.feas) {
      sol.status = SdpStatus::optimal;
      break;
    }
    if (!std::isfinite(pobj) || !std::isfinite(dobj) ||
        y.cwiseAbs().maxCoeff() > 1e13) {
      sol.status = SdpStatus::infeasible;
      detail = "iterates diverged (primal unbounded or dual infeasible)";
      break;
    }
    if (relgap < best_relgap * 0.999) {
      best_relgap = relgap;
      stall = 0;
    } else if (++stall > 12) {
      sol.status = SdpStatus::inaccurate;
      detail = "progress stalled before reaching tolerance";
      break;
    }
    if (mu < 1e-13 * std::max(1.0, s_scale * z_scale) &&
        pfeas > 1e4 * tol.feas) {
      sol.status = SdpStatus::infeasible;
      detail = "complementarity vanished with a large primal residual";
      break;
    }
    if (it >= tol.max_iterations) {
      sol.status = SdpStatus::inaccurate;
      detail = "iteration limit reached";
      break;
    }

    // Fraction-to-boundary factor: more aggressive once the gap is small,
    // so the tail spends fewer iterations at extreme conditioning.
    const double tau = relgap > 1e-6 ? 0.98 : 0.995;
    // Near the end the Schur system is too ill-conditioned for a double
    // factorization; switch the solves to extended precision there (and
    // stay there: the conditioning only gets worse along the path).
    if (relgap < 8e-8) xp_mode = true;
    bool use_xp = xp_mode;

    // --- Nesterov-Todd scaling per block -----------------------------------
    bool scale_ok = true;
    for (int b = 0; b < nb; ++b) {
      Ls[b] = S[b];
      if (!chol_lower(Ls[b])) { scale_ok = false; break; }
      Lz[b] = Z[b];
      if (!chol_lower(Lz[b])) { scale_ok = false; break; }
      RMat lt = Ls[b].triangularView<Eigen::Lower>();
      RMat mt = lt.transpose() * Z[b] * lt;  // L^T Z L
      RVec g;
      RMat u;
      sym_eig(mt, g, u);
      if (g.minCoeff() <= 0) { scale_ok = false; break; }
      // W^{-1} = Q Q^T with Q = L^{-T} U diag(g^{1/4}).
      RMat q = u * g.array().pow(0.25).matrix().asDiagonal();
      trsm_lower_t(Ls[b], q);
      Winv[b] = q * q.transpose();
      RMat eye = RMat::Identity(p.dims[b], p.dims[b]);
      trsm_lower(Ls[b], eye);
      trsm_lower_t(Ls[b], eye);
      Sinv[b] = (eye + eye.transpose()) * 0.5;
      WRW[b] = Winv[b] * RS[b] * Winv[b];
    }
    if (!scale_ok) {
      sol.status = SdpStatus::failed;
      detail = "lost positive definiteness while forming the scaling";
      break;
    }

    // --- Schur complement M_ij = <A_i, W^{-1} A_j W^{-1}> ------------------
    for (int g = 0; g < grp.ngroups; ++g) {
      const int mg = static_cast<int>(grp.group_vars[g].size());
      Mg[g] = RMat::Zero(mg, mg);
    }
    for (int b = 0; b < nb; ++b) {
      const int n = p.dims[b];
      const auto& bv = p.vars[b];
      std::vector<int> where(n, -1);
      for (std::size_t jk = 0; jk < bv.size(); ++jk) {
        const int j = bv[jk];
        const auto& ej = p.ents[b][jk];
        std::vector<int> touched;
        for (const Entry& e : ej) {
          touched.push_back(e.row);
          if (e.col != e.row) touched.push_back(e.col);
        }
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()),
                      touched.end());
        for (std::size_t t = 0; t < touched.size(); ++t) {
          where[touched[t]] = static_cast<int>(t);
        }
        const int k = static_cast<int>(touched.size());
        RMat rows = RMat::Zero(k, n);  // (A_j W^{-1}) on the touched rows
        for (const Entry& e : ej) {
          rows.row(where[e.row]) += e.value * Winv[b].row(e.col);
          if (e.col != e.row) {
            rows.row(where[e.col]) += e.value * Winv[b].row(e.row);
          }
        }
        RMat wcols(n, k);
        for (int t = 0; t < k; ++t) wcols.col(t) = Winv[b].col(touched[t]);
        RMat tj = wcols * rows;  // W^{-1} A_j W^{-1}
        for (int t : touched) where[t] = -1;
        const int gj = grp.group_of_var[j];
        const int pj = grp.pos_of_var[j];
        for (std::size_t ik = 0; ik < bv.size(); ++ik) {
          const int i = bv[ik];
          if (grp.group_of_var[i] != gj) continue;
          const int pi = grp.pos_of_var[i];
          if (pi > pj) continue;
          double dot = 0;
          for (const Entry& e : p.ents[b][ik]) {
            dot += (e.row == e.col ? 1.0 : 2.0) * e.value * tj(e.row, e.col);
          }
          Mg[gj](pi, pj) += dot;
        }
      }
    }
    for (int g = 0; g < grp.ngroups; ++g) {
      const int mg = static_cast<int>(Mg[g].rows());
      for (int i = 0; i < mg; ++i) {
        if (Mg[g](i, i) == 0.0) Mg[g](i, i) = 1.0;  // block-less variables
        for (int j = i + 1; j < mg; ++j) Mg[g](j, i) = Mg[g](i, j);
      }
    }

    t_asm = lap();
    // Keep the unfactored Schur blocks: the solves below apply iterative
    // refinement, which needs M * v products.
    bool factored = true;
    int ridge_tries = 0;  // [timing]
    double t_chol = 0;    // [timing]
    for (int g = 0; g < grp.ngroups; ++g) Msave[g] = Mg[g];
    if (use_xp) {
      for (int g = 0; g < grp.ngroups && use_xp; ++g) {
        const int n = static_cast<int>(Msave[g].rows());
        Lhi[g].assign(static_cast<std::size_t>(n) * n, 0.0);
        Llo[g].assign(static_cast<std::size_t>(n) * n, 0.0);
        for (int j = 0; j < n; ++j) {
          for (int i = j; i < n; ++i) {
            Lhi[g][i + static_cast<std::ptrdiff_t>(j) * n] = Msave[g](i, j);
          }
        }
        // Singular even in extended precision: fall back to the ridged
        // double factorization for this iteration.
        if (!chol_dd(Lhi[g], Llo[g], n)) use_xp = false;
      }
    }
    if (!use_xp) {
      for (int g = 0; g < grp.ngroups && factored; ++g) {
        double ridge = 0;
        for (int attempt = 0;; ++attempt) {
          const auto c0 = Clock::now();  // [timing]
          const bool ok = chol_lower(Mg[g]);
          t_chol += std::chrono::duration<double, std::milli>(Clock::now() -
                                                             c0)
                        .count();  // [timing]
          if (ok) break;
          ++ridge_tries;  // [timing]
          if (attempt >= 3) { factored = false; break; }
          ridge = (ridge == 0 ? 1e-13 * (1.0 + Msave[g].diagonal().maxCoeff())
                              : ridge * 100);
          Mg[g] = Msave[g] +
                  ridge * RMat::Identity(Msave[g].rows(), Msave[g].cols());
        }
      }
    }
    if (!factored) {
      sol.status = SdpStatus::failed;
      detail = "Schur complement factorization failed";
      break;
    }
    t_fac = lap();

    auto solve_once = [&](const RVec& gvec, RVec& dy) {
      dy.resize(m);
      for (int g = 0; g < grp.ngroups; ++g) {
        const auto& gv = grp.group_vars[g];
        const int n = static_cast<int>(gv.size());
        if (use_xp) {
          RVec rhs(n);
          for (int k = 0; k < n; ++k) rhs[k] = gvec[gv[k]];
          chol_solve_dd(Lhi[g], Llo[g], n, rhs);
          for (int k = 0; k < n; ++k) dy[gv[k]] = rhs[k];
        } else {
          RMat rhs(n, 1);
          for (int k = 0; k < n; ++k) rhs(k, 0) = gvec[gv[k]];
          chol_solve(Mg[g], rhs);
          for (int k = 0; k < n; ++k) dy[gv[k]] = rhs(k, 0);
        }
      }
    };

    // gvec - M v against the saved unfactored blocks, accumulated in
    // extended precision: near the end of the path the Schur system is
    // ill-conditioned enough that a double-precision residual is noise.
    auto residual_ld = [&](const RVec& gvec, const RVec& v) {
      RVec out(m);
      for (int g = 0; g < grp.ngroups; ++g) {
        const auto& gv = grp.group_vars[g];
        const int n = static_cast<int>(gv.size());
        const RMat& mm = Msave[g];
        std::vector<long double> acc(n);
        for (int i = 0; i < n; ++i) {
          acc[i] = static_cast<long double>(gvec[gv[i]]);
        }
        for (int j = 0; j < n; ++j) {
          const long double vj = v[gv[j]];
          if (vj == 0.0L) continue;
          const double* col = mm.data() + static_cast<std::ptrdiff_t>(j) * n;
          for (int i = 0; i < n; ++i) {
            acc[i] -= static_cast<long double>(col[i]) * vj;
          }
        }
        for (int i = 0; i < n; ++i) out[gv[i]] = static_cast<double>(acc[i]);
      }
      return out;
    };

    // The Schur route loses digits when the scaling point is nearly
    // singular; iterative refinement restores them.  Returns the relative
    // residual of the best correction found, so the caller can tell when
    // the factorization has stopped producing usable directions.
    auto solve_kkt = [&](const RVec& gvec, RVec& dy) {
      solve_once(gvec, dy);
      // Early on, a single factored solve is accurate enough; the
      // extended-precision refinement sweeps only pay for themselves once
      // the scaling point approaches the boundary of the cone.
      if (relgap > 1e-4) return 0.0;
      const double scale = 1.0 + gvec.cwiseAbs().maxCoeff();
      RVec best_dy = dy;
      double best_err = std::numeric_limits<double>::infinity();
      double prev_err = std::numeric_limits<double>::infinity();
      for (int pass = 0; pass < 5; ++pass) {
        RVec r1 = residual_ld(gvec, dy);
        const double err = r1.cwiseAbs().maxCoeff();
        if (err < best_err) {
          best_err = err;
          best_dy = dy;
        }
        if (err <= 1e-14 * scale) break;
        if (pass >= 2 && err > 0.5 * prev_err) break;  // stagnated
        prev_err = err;
        RVec cy;
        solve_once(r1, cy);
        dy += cy;
      }
      dy = best_dy;
      return best_err / scale;
    };

    auto assemble_ds = [&](const RVec& dy, std::vector<RMat>& out) {
      for (int b = 0; b < nb; ++b) {
        out[b] = -RS[b];
        for (std::size_t k = 0; k < p.vars[b].size(); ++k) {
          const double v = dy[p.vars[b][k]];
          if (v == 0.0) continue;
          for (const Entry& e : p.ents[b][k]) {
            out[b](e.row, e.col) += v * e.value;
            if (e.row != e.col) out[b](e.col, e.row) += v * e.value;
          }
        }
      }
    };

    // g_i = <A_i, RC_b + W^{-1} R_S W^{-1}> + D_i
    auto make_g = [&](RVec& gvec) {
      gvec = D;
      std::vector<RMat> rc_tot(nb);
      for (int b = 0; b < nb; ++b) rc_tot[b] = RC[b] + WRW[b];
      accumulate_inner(p, rc_tot, gvec);
    };

    // Eigenvalue-based step estimates are verified (and if need be
    // corrected in either direction) by factorization probes: back a step
    // off until the trial iterate factors, and since the feasible steps
    // along a ray form an interval, probe a suspiciously small estimate
    // upward — under extreme conditioning the eigenvalue bound can be
    // pinned by noise far below the true boundary.
    auto stays_pd = [&](const std::vector<RMat>& base,
                        const std::vector<RMat>& dir, double a) {
      for (int b = 0; b < nb; ++b) {
        RMat trial = base[b] + a * dir[b];
        symmetrize(trial);
        if (!chol_lower(trial)) return false;
      }
      return true;
    };
    auto settle = [&](const std::vector<RMat>& base,
                      const std::vector<RMat>& dir, double s) {
      int tries = 0;
      while (!stays_pd(base, dir, s)) {
        if (++tries > 40) return -1.0;
        s *= 0.7;
      }
      if (s < 0.2) {
        double hi = s;
        for (int k = 0; k < 14 && hi < 0.999; ++k) {
          const double t = std::min(0.999, hi * 1.7);
          if (!stays_pd(base, dir, t)) break;
          hi = t;
        }
        s = std::max(s, 0.95 * hi);
      }
      return s;
    };

    // --- predictor (affine direction) --------------------------------------
    for (int b = 0; b < nb; ++b) RC[b] = -Z[b];
    RVec gvec, dy_p;
    make_g(gvec);
    double dir_err = solve_kkt(gvec, dy_p);
    assemble_ds(dy_p, dSp);
    for (int b = 0; b < nb; ++b) {
      dZp[b] = RC[b] - Winv[b] * dSp[b] * Winv[b];
      symmetrize(dZp[b]);
    }
    double ap = 1.0, ad = 1.0;
    for (int b = 0; b < nb; ++b) {
      ap = std::min(ap, max_step(Ls[b], dSp[b]));
      ad = std::min(ad, max_step(Lz[b], dZp[b]));
    }
    ap = std::max(0.0, settle(S, dSp, std::min(ap, 1.0)));
    ad = std::max(0.0, settle(Z, dZp, std::min(ad, 1.0)));
    t_pre = lap();
    // The centering weight uses the common affine step: with per-side
    // steps a blocked primal next to a free dual reports a near-zero
    // affine gap and switches centering off at the worst possible moment.
    const double alpha_aff = std::min(ap, ad);
    double gap_aff = 0;
    for (int b = 0; b < nb; ++b) {
      gap_aff += sym_dot(S[b], Z[b]) + alpha_aff * sym_dot(dSp[b], Z[b]) +
                 alpha_aff * sym_dot(S[b], dZp[b]) +
                 alpha_aff * alpha_aff * sym_dot(dSp[b], dZp[b]);
    }
    const double mu_aff = std::max(gap_aff, 0.0) / ntotal;
    double sigma = std::pow(mu_aff / mu, 3.0);
    sigma = std::min(std::max(sigma, 1e-8), 0.99999);

    // --- corrector ---------------------------------------------------------
    for (int b = 0; b < nb; ++b) {
      RMat ct = Sinv[b] * dSp[b] * dZp[b];
      symmetrize(ct);
      RC[b] = sigma * mu * Sinv[b] - Z[b] - ct;
    }
    RVec dy;
    make_g(gvec);
    dir_err = std::max(dir_err, solve_kkt(gvec, dy));
    assemble_ds(dy, dS);
    for (int b = 0; b < nb; ++b) {
      dZ[b] = RC[b] - Winv[b] * dS[b] * Winv[b];
      symmetrize(dZ[b]);
    }
    double sp = 1.0, sd = 1.0;
    for (int b = 0; b < nb; ++b) {
      sp = std::min(sp, tau * max_step(Ls[b], dS[b]));
      sd = std::min(sd, tau * max_step(Lz[b], dZ[b]));
    }
    sp = settle(S, dS, std::min(sp, 1.0));
    sd = settle(Z, dZ, std::min(sd, 1.0));
    // At off-center iterates the second-order term is unreliable; when the
    // corrected direction hits the boundary far earlier than the affine
    // one did, retry with a plainly centered first-order direction (the
    // factorization is reused, so the retry costs one extra solve).  Late
    // in the path the retry is counterproductive: step lengths are small
    // there regardless, and the occasional nearly-affine direction is what
    // actually closes the gap.
    if (relgap > 1e-6 && std::min(sp, sd) < 0.2 * tau * std::min(ap, ad)) {
      sigma = std::max(sigma, 0.5);
      for (int b = 0; b < nb; ++b) RC[b] = sigma * mu * Sinv[b] - Z[b];
      make_g(gvec);
      dir_err = std::max(dir_err, solve_kkt(gvec, dy));
      assemble_ds(dy, dS);
      for (int b = 0; b < nb; ++b) {
        dZ[b] = RC[b] - Winv[b] * dS[b] * Winv[b];
        symmetrize(dZ[b]);
      }
      sp = sd = 1.0;
      for (int b = 0; b < nb; ++b) {
        sp = std::min(sp, tau * max_step(Ls[b], dS[b]));
        sd = std::min(sd, tau * max_step(Lz[b], dZ[b]));
      }
      sp = settle(S, dS, std::min(sp, 1.0));
      sd = settle(Z, dZ, std::min(sd, 1.0));
    }
    t_cor = lap();
    if (tol.verbose) {
      std::fprintf(stderr,
                   "      sigma %.2e  ap %.2e ad %.2e  sp %.2e sd %.2e  "
                   "|dy| %.2e  err %.2e  [ms nt %.0f asm %.0f fac %.0f "
                   "pre %.0f cor %.0f]\n",
                   sigma, ap, ad, sp, sd, dy.cwiseAbs().maxCoeff(), dir_err,
                   t_nt, t_asm, t_fac, t_pre, t_cor);
      std::fprintf(stderr, "      [timing] chol %.0f ms, ridge tries %d\n",
                   t_chol, ridge_tries);
    }
    if (sp < 0 || sd < 0) {
      sol.status = SdpStatus::inaccurate;
      detail = "could not keep the iterates positive definite";
      break;
    }
    // Once refinement cannot push the Schur residual down any more the
    // directions are unreliable; stepping along them would only corrupt an
    // otherwise clean iterate.
    if (dir_err > 1e-7) {
      sol.status = SdpStatus::inaccurate;
      detail = "search directions lost accuracy";
      break;
    }
    if (sp < 1e-8 && sd < 1e-8) {
      sol.status = SdpStatus::inaccurate;
      detail = "step length collapsed";
      break;
    }

    // An exact dual step scales the dual residual by (1 - sd), so a trial
    // step that inflates it is riding direction error.  Shrink such a step;
    // if that does not cure it, stop rather than damage the iterate.
    bool dual_ok = false;
    for (int tries = 0; tries < 4 && !dual_ok; ++tries) {
      RVec dtrial = p.c;
      std::vector<RMat> ztry(nb);
      for (int b = 0; b < nb; ++b) ztry[b] = Z[b] + sd * dZ[b];
      accumulate_inner(p, ztry, dtrial);
      const double dtry = dtrial.cwiseAbs().maxCoeff() / (1.0 + p.c_inf);
      if (dtry <= std::max(10.0 * dfeas, 0.1 * tol.feas)) {
        dual_ok = true;
      } else {
        sd *= 0.3;
      }
    }
    if (!dual_ok) {
      sol.status = SdpStatus::inaccurate;
      detail = "steps kept inflating the dual residual";
      break;
    }

    y += sp * dy;
    for (int b = 0; b < nb; ++b) {
      S[b] += sp * dS[b];
      symmetrize(S[b]);
      Z[b] += sd * dZ[b];
      symmetrize(Z[b]);
    }
    ++steps;
  }

  sol.iterations = steps;
  // On any non-optimal exit, fall back to the cleanest iterate seen if the
  // final one is worse (a rough last step can degrade a converged run).
  if (sol.status != SdpStatus::optimal && best.y.size() == y.size()) {
    const double final_score =
        std::max({sol.rel_gap / tol.rel_gap, sol.primal_feas / tol.feas,
                  sol.dual_feas / tol.feas});
    if (best.score < final_score) {
      y = best.y;
      S = best.S;
      Z = best.Z;
      sol.primal_obj = best.pobj;
      sol.dual_obj = best.dobj;
      sol.gap = best.gap;
      sol.rel_gap = best.relgap;
      sol.primal_feas = best.pfeas;
      sol.dual_feas = best.dfeas;
    }
  }
  // A numerical breakdown after the gap has effectively closed is a
  // usable answer, not a failure.
  if (sol.status == SdpStatus::failed && sol.rel_gap <= 1e-5 &&
      sol.primal_feas <= 1e-6 && sol.dual_feas <= 1e-6) {
    sol.status = SdpStatus::inaccurate;
  }
  sol.y = expand(y);
  sol.S = S;
  sol.Z = Z;
  // Multipliers are fitted against the original row list; rows removed as
  // dependent carry zero.  The fit residual is the dual feasibility of the
  // uneliminated instance and is folded into the reported figure.
  const double fit_resid = fit_multipliers(Z, sol.eq_multipliers);
  if (tol.verbose) {
    std::fprintf(stderr, "      [dbg] loop dfeas %.2e fit resid %.2e\n",
                 sol.dual_feas, fit_resid);
  }
  sol.dual_feas = std::max(sol.dual_feas, fit_resid);
  if (sol.status == SdpStatus::optimal && sol.dual_feas > tol.feas) {
    sol.status = SdpStatus::inaccurate;
    detail = "the equality multiplier fit left a dual residual";
  }
  if (p.flipped) {
    sol.primal_obj = -sol.primal_obj;
    sol.dual_obj = -sol.dual_obj;
  }
  sol.detail = detail;
  return sol;
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

SdpVerification verify_sdp(const SdpInstance& inst, const SdpSolution& sol,
                           const SdpTolerances& tol) {
  SdpVerification rep;
  std::ostringstream detail;
  inst.validate();
  if (sol.y.size() != inst.num_vars) {
    rep.ok = false;
    rep.detail = "solution has wrong variable count";
    return rep;
  }

  const int nb = static_cast<int>(inst.block_dims.size());
  double coeff_inf = 0, c0_inf = 0;
  // Rebuild S(y) from the instance data alone.
  std::vector<RMat> s(nb);
  for (int b = 0; b < nb; ++b) {
    s[b] = RMat::Zero(inst.block_dims[b], inst.block_dims[b]);
  }
  for (const SdpCoeff& e : inst.constant) {
    s[e.block](e.row, e.col) += e.value;
    if (e.row != e.col) s[e.block](e.col, e.row) += e.value;
    c0_inf = std::max(c0_inf, std::abs(e.value));
  }
  for (int i = 0; i < inst.num_vars; ++i) {
    for (const SdpCoeff& e : inst.coeffs[i]) {
      coeff_inf = std::max(coeff_inf, std::abs(e.value));
      s[e.block](e.row, e.col) += sol.y[i] * e.value;
      if (e.row != e.col) s[e.block](e.col, e.row) += sol.y[i] * e.value;
    }
  }
  rep.min_eig_S = std::numeric_limits<double>::infinity();
  for (int b = 0; b < nb; ++b) {
    rep.min_eig_S = std::min(rep.min_eig_S, min_eig_sym(s[b]));
  }

  rep.min_eig_Z = std::numeric_limits<double>::infinity();
  if (static_cast<int>(sol.Z.size()) == nb) {
    for (int b = 0; b < nb; ++b) {
      rep.min_eig_Z = std::min(rep.min_eig_Z, min_eig_sym(sol.Z[b]));
    }
  } else {
    rep.min_eig_Z = -std::numeric_limits<double>::infinity();
  }

  int worst_eq = -1;
  for (std::size_t r = 0; r < inst.equalities.size(); ++r) {
    double acc = -inst.equalities[r].rhs;
    for (const auto& [v, coef] : inst.equalities[r].terms) {
      acc += coef * sol.y[v];
    }
    if (std::abs(acc) > rep.max_eq_residual) {
      rep.max_eq_residual = std::abs(acc);
      worst_eq = static_cast<int>(r);
    }
  }

  // Dual residuals, maximize sense.
  RVec c = RVec::Zero(inst.num_vars);
  for (const auto& [v, coef] : inst.objective) c[v] += coef;
  if (!inst.maximize) c = -c;
  const double c_inf = c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0;
  RVec dres = c;
  const bool have_mult =
      sol.eq_multipliers.size() ==
      static_cast<Eigen::Index>(inst.equalities.size());
  if (have_mult) {
    for (std::size_t r = 0; r < inst.equalities.size(); ++r) {
      for (const auto& [v, coef] : inst.equalities[r].terms) {
        dres[v] -= coef * sol.eq_multipliers[static_cast<int>(r)];
      }
    }
  }
  if (static_cast<int>(sol.Z.size()) == nb) {
    for (int i = 0; i < inst.num_vars; ++i) {
      for (const SdpCoeff& e : inst.coeffs[i]) {
        dres[i] += (e.row == e.col ? 1.0 : 2.0) * e.value *
                   sol.Z[e.block](e.row, e.col);
      }
    }
  }
  int worst_var = -1;
  for (int i = 0; i < inst.num_vars; ++i) {
    if (std::abs(dres[i]) > rep.max_dual_residual) {
      rep.max_dual_residual = std::abs(dres[i]);
      worst_var = i;
    }
  }

  double pobj = c.dot(sol.y);
  double dobj = 0;
  if (have_mult) {
    for (std::size_t r = 0; r < inst.equalities.size(); ++r) {
      dobj +=
          inst.equalities[r].rhs * sol.eq_multipliers[static_cast<int>(r)];
    }
  }
  if (static_cast<int>(sol.Z.size()) == nb) {
    for (const SdpCoeff& e : inst.constant) {
      dobj += (e.row == e.col ? 1.0 : 2.0) * e.value *
              sol.Z[e.block](e.row, e.col);
    }
  }
  rep.gap_rebuilt = std::abs(dobj - pobj);

  const double feas_cap = 10.0 * tol.feas;
  const double scale_p = 1.0 + c0_inf + coeff_inf;
  const double y_inf = sol.y.size() > 0 ? sol.y.cwiseAbs().maxCoeff() : 0.0;
  const double gap_cap =
      10.0 * tol.rel_gap * (1.0 + std::abs(pobj) + std::abs(dobj));
  rep.ok = true;
  if (rep.max_eq_residual > feas_cap * (1.0 + y_inf)) {
    rep.ok = false;
    detail << "equality[" << worst_eq << "] residual " << rep.max_eq_residual
           << "; ";
  }
  if (rep.min_eig_S < -feas_cap * scale_p * (1.0 + y_inf)) {
    rep.ok = false;
    detail << "primal block eigenvalue floor " << rep.min_eig_S << "; ";
  }
  if (rep.min_eig_Z < -feas_cap * scale_p) {
    rep.ok = false;
    detail << "dual block eigenvalue floor " << rep.min_eig_Z << "; ";
  }
  if (rep.max_dual_residual > feas_cap * (1.0 + c_inf)) {
    rep.ok = false;
    detail << "dual residual at variable " << worst_var << ": "
           << rep.max_dual_residual << "; ";
  }
  if (rep.gap_rebuilt > gap_cap + 1e-12) {
    rep.ok = false;
    detail << "rebuilt gap " << rep.gap_rebuilt << " exceeds " << gap_cap
           << "; ";
  }
  rep.detail = detail.str();
  return rep;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

json coeff_to_json(const SdpCoeff& e) {
  return json::array({e.block, e.row, e.col, e.value});
}

SdpCoeff coeff_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw std::invalid_argument(
        "sdp json: entry must be [block,row,col,value]");
  }
  return SdpCoeff{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(),
                  j[3].get<double>()};
}

}  // namespace

std::string sdp_to_json(const SdpInstance& inst) {
  json j;
  j["blocks"] = inst.block_dims;
  j["num_vars"] = inst.num_vars;
  j["maximize"] = inst.maximize;
  json coeffs = json::array();
  for (const auto& list : inst.coeffs) {
    json entries = json::array();
    for (const SdpCoeff& e : list) entries.push_back(coeff_to_json(e));
    coeffs.push_back(entries);
  }
  j["coefficients"] = coeffs;
  json constant = json::array();
  for (const SdpCoeff& e : inst.constant) constant.push_back(coeff_to_json(e));
  j["constant"] = constant;
  json eqs = json::array();
  for (const SdpEquality& row : inst.equalities) {
    json terms = json::array();
    for (const auto& [v, coef] : row.terms) {
      terms.push_back(json::array({v, coef}));
    }
    eqs.push_back(json{{"terms", terms}, {"rhs", row.rhs}});
  }
  j["equalities"] = eqs;
  json obj = json::array();
  for (const auto& [v, coef] : inst.objective) {
    obj.push_back(json::array({v, coef}));
  }
  j["objective"] = obj;
  return j.dump(2);
}

SdpInstance sdp_from_json(const std::string& text) {
  json j = json::parse(text);
  SdpInstance inst;
  inst.block_dims = j.at("blocks").get<std::vector<int>>();
  inst.num_vars = j.at("num_vars").get<int>();
  inst.maximize = j.value("maximize", true);
  for (const json& list : j.at("coefficients")) {
    std::vector<SdpCoeff> entries;
    for (const json& e : list) entries.push_back(coeff_from_json(e));
    inst.coeffs.push_back(std::move(entries));
  }
  if (j.contains("constant")) {
    for (const json& e : j["constant"]) {
      inst.constant.push_back(coeff_from_json(e));
    }
  }
  for (const json& row : j.at("equalities")) {
    SdpEquality eq;
    eq.rhs = row.at("rhs").get<double>();
    for (const json& t : row.at("terms")) {
      eq.terms.emplace_back(t[0].get<int>(), t[1].get<double>());
    }
    inst.equalities.push_back(std::move(eq));
  }
  if (j.contains("objective")) {
    for (const json& t : j["objective"]) {
      inst.objective.emplace_back(t[0].get<int>(), t[1].get<double>());
    }
  }
  inst.validate();
  return inst;
}

SdpInstance read_sdp_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return sdp_from_json(ss.str());
}

void write_sdp_json(const SdpInstance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << sdp_to_json(inst) << "\n";
}

std::string sdp_to_sparse_text(const SdpInstance& inst) {
  // Format documented in docs/formats.md: header counts, then one line per
  // nonzero "VAR block row col value" with VAR = 0 for the constant term,
  // then equality and objective sections.
  std::ostringstream out;
  out << std::setprecision(17);
  out << "* sparse SDP export (see docs/formats.md)\n";
  out << inst.num_vars << "\n";
  out << inst.block_dims.size() << "\n";
  for (std::size_t b = 0; b < inst.block_dims.size(); ++b) {
    out << inst.block_dims[b] << (b + 1 < inst.block_dims.size() ? ' ' : '\n');
  }
  out << (inst.maximize ? "max" : "min") << "\n";
  auto emit = [&](int var, const SdpCoeff& e) {
    out << var << ' ' << e.block << ' ' << e.row << ' ' << e.col << ' '
        << e.value << "\n";
  };
  out << "MATRICES\n";
  for (const SdpCoeff& e : inst.constant) emit(0, e);
  for (int i = 0; i < inst.num_vars; ++i) {
    for (const SdpCoeff& e : inst.coeffs[i]) emit(i + 1, e);
  }
  out << "EQUALITIES\n";
  for (std::size_t r = 0; r < inst.equalities.size(); ++r) {
    for (const auto& [v, coef] : inst.equalities[r].terms) {
      out << r << ' ' << v << ' ' << coef << "\n";
    }
    out << r << " rhs " << inst.equalities[r].rhs << "\n";
  }
  out << "OBJECTIVE\n";
  for (const auto& [v, coef] : inst.objective) {
    out << v << ' ' << coef << "\n";
  }
  return out.str();
}

}  // namespace rcq
