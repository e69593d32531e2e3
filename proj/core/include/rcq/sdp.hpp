#pragma once

// Sparse block-diagonal semidefinite programs in the linear-matrix-
// inequality form
//
//     maximize   c . y
//     subject to S(y) = C0 + sum_i y_i A_i  (block-diagonal)  >= 0
//                B y = d
//
// together with a primal-dual interior-point solver (Nesterov-Todd
// scaling, Mehrotra predictor-corrector, infeasible start) and an
// independent verification pass on returned solutions.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rcq/linalg.hpp"

namespace rcq {

struct SdpCoeff {
  int block = 0;
  int row = 0;  // row <= col; the symmetric mirror entry is implied
  int col = 0;
  double value = 0.0;
};

struct SdpEquality {
  std::vector<std::pair<int, double>> terms;  // (variable, coefficient)
  double rhs = 0.0;
};

struct SdpInstance {
  std::vector<int> block_dims;
  int num_vars = 0;
  std::vector<std::vector<SdpCoeff>> coeffs;  // per variable
  std::vector<SdpCoeff> constant;             // entries of C0
  std::vector<SdpEquality> equalities;        // at least one row required
  std::vector<std::pair<int, double>> objective;  // sparse c
  bool maximize = true;

  // Throws std::invalid_argument on malformed data (out-of-range indices,
  // lower-triangle entries, empty equality list, non-finite values).
  void validate() const;
};

enum class SdpStatus { optimal, inaccurate, infeasible, failed };

const char* to_string(SdpStatus s);

struct SdpTolerances {
  double rel_gap = 1e-8;
  double feas = 1e-9;
  int max_iterations = 200;
  bool verbose = false;
};

struct SdpSolution {
  SdpStatus status = SdpStatus::failed;
  RVec y;               // variable values
  std::vector<RMat> S;  // primal slack blocks
  std::vector<RMat> Z;  // dual blocks
  RVec eq_multipliers;  // one per equality row
  double primal_obj = 0.0;  // in the user's sense (maximize or minimize)
  double dual_obj = 0.0;
  double gap = 0.0;      // <S, Z>
  double rel_gap = 0.0;  // gap / (1 + |pobj| + |dobj|)
  double primal_feas = 0.0;  // worst scaled equality residual
  double dual_feas = 0.0;    // worst scaled dual residual
  int iterations = 0;
  std::vector<double> gap_history;  // <S, Z> at the top of each iteration
  std::string detail;               // reason for a non-optimal status
};

SdpSolution solve_sdp(const SdpInstance& inst, const SdpTolerances& tol = {});

// Recomputes every certificate quantity from the instance data alone
// (never trusting the solver's reported numbers) and checks them against
// 10x the requested tolerances.
struct SdpVerification {
  bool ok = false;
  double max_eq_residual = 0.0;
  double min_eig_S = 0.0;       // of S(y) rebuilt from y
  double min_eig_Z = 0.0;
  double max_dual_residual = 0.0;
  double gap_rebuilt = 0.0;     // |dual_obj - primal_obj| rebuilt
  std::string detail;
};

SdpVerification verify_sdp(const SdpInstance& inst, const SdpSolution& sol,
                           const SdpTolerances& tol = {});

// Serialization: a JSON standard form (round-trips through read) and a
// sparse text export; both are documented in docs/formats.md.
std::string sdp_to_json(const SdpInstance& inst);
SdpInstance sdp_from_json(const std::string& text);
SdpInstance read_sdp_json(const std::string& path);
void write_sdp_json(const SdpInstance& inst, const std::string& path);
std::string sdp_to_sparse_text(const SdpInstance& inst);

}  // namespace rcq
