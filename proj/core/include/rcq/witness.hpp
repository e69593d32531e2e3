#pragma once

// The witness F, its sign table, classical and complex bounds, and a
// settings optimizer certifying attainability on the explicit network.

#include "rcq/linalg.hpp"
#include "rcq/network.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace rcq {

// Real coefficient matrix f[x][z], x in {0,1,2}, z in {0..n_z-1},
// n_z in {3,4}. Entries must be finite with at least one nonzero.
struct FMatrix {
  int n_z = 3;
  std::array<std::vector<double>, 3> f;

  static FMatrix zeros(int n_z);
  static FMatrix from_rows(const std::vector<std::vector<double>>& rows);

  double at(int x, int z) const { return f[x][z]; }
  double& at(int x, int z) { return f[x][z]; }
  bool has_nonzero() const;
  void validate() const;  // throws invalid_argument on violation
};

FMatrix read_fmatrix_json(const std::string& path);
FMatrix read_fmatrix_csv(const std::string& path);
std::string fmatrix_to_json(const FMatrix& f);

// Outcome/setting sign table sign[b][x] in {-1,+1}.
struct SignTable {
  std::array<std::array<int, 3>, 4> sign;
  int at(int b, int x) const { return sign[b][x]; }
};

// The convention this artifact uses throughout:
//   sign[b][x] = -1 if b == 0 or b == x+1 (0-indexed x), +1 otherwise.
// It is the table singled out by resolve_sign_table() and locked by a
// regression test; see docs/conventions.md.
const SignTable& resolved_sign_table();

// Exhaustive resolution: among the 8 tables of the form
// (value at b=0, value at b=x, value otherwise) = (u,v,w), find those whose
// see-saw construction maximum attains the published complex bounds on both
// anchor witnesses (3-sqrt(22) matrix and the tetrahedron family) to 1e-6,
// and return the lexicographically first. The report lists every candidate
// with its achieved values.
struct SignResolutionCandidate {
  int u, v, w;
  double value_3x3;     // see-saw value on the [[-2,3,3],...] witness
  double value_family;  // see-saw value on the tetrahedron family
  bool attains;
};
struct SignResolution {
  SignTable table;
  std::vector<SignResolutionCandidate> candidates;
};
SignResolution resolve_sign_table();

// Family parameters (alpha, beta, gamma) with alpha^2+beta^2+gamma^2 = 1
// and derived q = -sqrt(3)(alpha beta + beta gamma + gamma alpha) >= 0.
// Construction throws if the normalization fails (1e-12) or q < 0.
struct FamilyParams {
  double alpha, beta, gamma, q;
  static FamilyParams from_abg(double alpha, double beta, double gamma);
};

// The 3x4 family coefficient matrix:
//   [ alpha beta  gamma q ]
//   [ gamma alpha beta  q ]
//   [ beta  gamma alpha q ]
FMatrix family_matrix(const FamilyParams& p);

// F = sum_{x,z,b} sign[b][x] f[x][z] corr[b][x][z].
double eval_F(const FMatrix& f, const SignTable& s, const CorrelationTensor& t);

// Classical bound: max over s in {-1,+1}^3 of sum_z |sum_x f[x][z] s_x|,
// by exact enumeration; the inner t_z is resolved by sign. Ties broken by
// the lexicographically smallest maximizing s (-1 before +1).
struct ClassicalResult {
  double value;
  std::array<int, 3> s;
  std::vector<int> t;  // sign(sum_x f s), with sign(0) := +1
};
ClassicalResult classical_bound(const FMatrix& f);

// Column-norm complex value sum_z ||f_col_z||_2 of the explicit
// construction; defined for n_z = 3 witnesses.
double complex_bound_columns(const FMatrix& f);

// Family complex maximum 3 + sqrt(3) q (exact, SOS-certified).
double complex_bound_family(const FamilyParams& p);

// Measurement directions for the three A settings and n_z C settings.
struct Settings {
  std::array<Vec3, 3> a;
  std::vector<Vec3> c;
};

// Alternating (see-saw) maximization of eval_F over unit settings on the
// explicit construction: for fixed a each optimal c_z is the normalized
// gradient vector, and symmetrically for a. Multi-start; the best start
// wins, ties keeping the lower start index.
struct OptimizeOptions {
  int multistarts = 20;
  int iteration_cap = 1000;
  double tolerance = 1e-10;
  std::uint64_t seed = 20240817;
};
struct OptimizeResult {
  double value = 0.0;
  Settings settings;
  bool converged = false;
  int iterations = 0;  // of the winning start
  int best_start = -1;
};
OptimizeResult optimize_settings(const FMatrix& f, const SignTable& s,
                                 const OptimizeOptions& opt = {});

// Aggregated bounds for one witness; assembled by the bounds pipeline
// (the F_r fields are filled by the moment-relaxation layer).
struct BoundsReport {
  double F_c = 0.0;
  std::array<int, 3> s_opt{};
  std::vector<int> t_opt;
  std::optional<double> F_q;
  std::string fq_kind;  // "columns" or "family"
  std::optional<OptimizeResult> attained;
  std::optional<double> F_r;
  std::string sdp_status;
  double duality_gap = 0.0;
  int sdp_iterations = 0;
  std::optional<double> ratio_qr;  // F_q / F_r
};

}  // namespace rcq
