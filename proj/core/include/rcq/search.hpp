#pragma once

// The two searches: the ratio scan over 3x3 witness matrices (random
// sampling plus finite-difference ascent on the top candidates) and the
// two-setting survey over random 36-parameter Bell functionals with
// optimization over two-qubit-per-source models, reporting complexness
// coordinates.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "rcq/linalg.hpp"
#include "rcq/moment.hpp"
#include "rcq/witness.hpp"

namespace rcq {

// ---------------------------------------------------------------------------
// Ratio scan
// ---------------------------------------------------------------------------

struct ScanConfig {
  int samples = 100;
  double f_lo = -6.0;  // sampling box for the f entries
  double f_hi = 6.0;
  double ascent_step = 0.5;   // initial ascent step (entry units)
  double fd_epsilon = 1e-3;   // central-difference epsilon
  std::uint64_t seed = 20240817;
  RelaxationLevel level{2, 2};
  int refine_top = 0;    // how many top candidates get ascent refinement
  int refine_steps = 1;  // gradient steps per refined candidate
  int max_halvings = 6;  // backtracking halvings per gradient step
  int threads = 0;       // 0: RCQ_THREADS environment variable, else 1
  SdpTolerances sdp_tol{};
  void validate() const;
};

struct ScanCandidate {
  int index = -1;  // sample index; -1 for an externally supplied f
  FMatrix f;
  double F_c = 0;
  double F_q = 0;     // column-norm value
  double F_r = 0;     // moment-SDP bound
  double ratio = 0;   // F_q / F_r
  bool refined = false;
  double ratio_before_refine = 0;
  bool solver_ok = true;
  std::string note;
};

struct ScanResult {
  ScanConfig config;
  std::vector<ScanCandidate> ranked;    // ratio-descending, failures excluded
  std::vector<ScanCandidate> failures;  // solver failures, logged
};

ScanResult ratio_scan(const ScanConfig& cfg);

// Ascent on ratio(f) from a given start by central finite differences with
// backtracking step halving; accepts only improvements.
ScanCandidate refine_ratio(const FMatrix& f, const ScanConfig& cfg);

// ---------------------------------------------------------------------------
// Two-setting survey
// ---------------------------------------------------------------------------

struct BellFunctional36 {
  // f[b][x][z] with b in 0..3 and x, z in 0..2; index 0 is the identity
  // observable, so x = 1, 2 address the two settings per party.
  std::array<std::array<std::array<double, 3>, 3>, 4> f{};
  void validate() const;  // entries finite and in [-1, 1]
};

std::string bell36_to_json(const BellFunctional36& fun);
BellFunctional36 bell36_from_json(const std::string& text);

struct GivensParams {
  // One (theta, psi) pair per index pair (J,K), J < K, in the order
  // (0,1), (0,2), (0,3), (1,2), (1,3), (2,3).
  std::array<double, 6> theta{};
  std::array<double, 6> psi{};
};

// Product of the six complex Givens rotations; unitary by construction.
CMat assemble_h(const GivensParams& g);

struct SurveyModel {
  std::array<double, 2> lambda_l{1.0, 0.0};  // Schmidt pairs, unit norm
  std::array<double, 2> lambda_r{1.0, 0.0};
  std::array<Vec3, 2> a_bloch{Vec3(0, 0, 1), Vec3(1, 0, 0)};
  std::array<Vec3, 2> c_bloch{Vec3(0, 0, 1), Vec3(1, 0, 0)};
  GivensParams givens{};
  void validate() const;
};

// Exact value of the functional on the model, via 2x2 contractions.
double eval_survey_F(const BellFunctional36& fun, const SurveyModel& m);

// Reference evaluation through the dense four-qubit state and embedded
// operators; slow, used for cross-checks.
double eval_survey_F_trace(const BellFunctional36& fun, const SurveyModel& m);

// Complexness coordinates: the sigma_2 components of the two observables
// per party after the residual rotation about sigma_3 is fixed so the two
// components are opposite (a_12 = -a_22 = a_i, likewise c_i).
struct ComplexnessCoords {
  double a_i = 0;
  double c_i = 0;
};
ComplexnessCoords complexness(const SurveyModel& m);

struct SurveyOptions {
  int restarts = 6;      // independent starts per point (>= 5 required)
  int max_sweeps = 300;  // coordinate-ascent sweeps per start
  double tol = 1e-9;     // value-improvement convergence threshold
  std::uint64_t seed = 20240817;
  int threads = 0;  // 0: RCQ_THREADS environment variable, else 1
  void validate() const;
};

struct SurveyPoint {
  int index = 0;
  BellFunctional36 functional;
  double value = 0;
  double a_i = 0;
  double c_i = 0;
  int restarts_used = 0;
  bool converged = false;
  SurveyModel model;
  bool both_large = false;      // |a_i| > 0.01 and |c_i| > 0.01
  bool population_split = false;  // max(|a_i|,|c_i|) > 0.9 or < 0.05
};

struct SurveyResult {
  SurveyOptions options;
  std::vector<SurveyPoint> points;
  int both_large_count = 0;
  int population_split_count = 0;
};

SurveyResult survey(int n_points, const SurveyOptions& opt);

// Thread-count resolution shared by the searches and the CLI: a positive
// request wins, otherwise the RCQ_THREADS environment variable, else 1.
int resolve_threads(int requested);

}  // namespace rcq
