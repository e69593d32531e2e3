#pragma once

// Moment-matrix relaxation for the real-model bound: four outcome blocks
// of moments of words in the observables, real symmetrization via word
// reversal, normalization of the identity moments, and the partial-
// transpose swap constraint; plus exact symmetry reduction when the
// witness matrix admits a joint relabeling symmetry.

#include <array>
#include <string>
#include <vector>

#include "rcq/sdp.hpp"
#include "rcq/witness.hpp"
#include "rcq/words.hpp"

namespace rcq {

struct RelaxationLevel {
  int n_A = 2;  // longest A-word in the index set
  int n_C = 2;  // longest C-word in the index set
};

struct MomentOptions {
  // Partial-transpose swap rows summed over the outcome blocks (the
  // separability constraint). With this off the same relaxation bounds
  // the complex-model value instead (the reversal identification alone
  // carries no realness information there).
  bool include_ppt = true;
  // Strictness toggle: impose the swap per outcome block (realized as a
  // variable merge) instead of only on the block sum.
  bool per_block_ppt = false;
  // Exact orbit folding under joint (x, z, outcome) relabelings that fix
  // f and the sign table; detected automatically, identity-safe.
  bool use_symmetry = true;
};

struct MomentProblem {
  SdpInstance sdp;
  int n_z = 3;
  RelaxationLevel level;
  MomentOptions options;
  std::vector<Word> index_words;  // row/column index of every block
  int group_order = 1;            // size of the detected symmetry group
  int blocks_emitted = 4;         // after collapsing equivalent blocks
  int num_ppt_rows = 0;
  int num_variables_unfolded = 0;  // before orbit folding
  // Variable id of the moment of A_x C_z in outcome block b (-1 unset).
  std::array<std::array<std::array<int, 4>, 3>, 4> obj_var{};
};

MomentProblem build_moment_problem(const FMatrix& f, const SignTable& s,
                                   RelaxationLevel lvl,
                                   const MomentOptions& opt = {});

struct RealBoundResult {
  double value = 0;  // primal optimum of the relaxation
  double certified_upper = 0;  // dual objective (certificate side)
  SdpSolution solution;
  SdpVerification verification;
  int group_order = 1;
  int num_variables = 0;
};

// Upper bound on the real-model value of F at the given level.
RealBoundResult real_bound(const FMatrix& f, const SignTable& s,
                           RelaxationLevel lvl, const MomentOptions& opt = {},
                           const SdpTolerances& tol = {});

// The same relaxation without the swap rows: an upper bound on the
// complex-model value at the given level.
RealBoundResult complex_relax_bound(const FMatrix& f, const SignTable& s,
                                    RelaxationLevel lvl,
                                    const SdpTolerances& tol = {});

// Documented JSON export: metadata plus the standard-form SDP.
std::string moment_problem_json(const MomentProblem& prob);

}  // namespace rcq
