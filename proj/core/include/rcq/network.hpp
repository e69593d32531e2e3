#pragma once

// The explicit three-observer network: two singlet-type sources feeding
// the middle party's Bell-basis measurement, dichotomic observables at
// the ends, and the resulting outcome-conditioned correlations.

#include "rcq/linalg.hpp"

#include <array>
#include <vector>

namespace rcq {

struct SourceStates {
  CMat rho_L;  // 4x4 on (A,P)
  CMat rho_R;  // 4x4 on (Q,C)
};

struct BMeasurement {
  std::array<CMat, 4> B;  // 4x4 projectors on (P,Q); complete and orthogonal
};

struct Network {
  SourceStates sources;
  BMeasurement meas;
  CMat state;                     // 16x16 product state on (A,P,Q,C)
  std::array<CMat, 4> B_embedded;  // 16x16 projectors
};

// Exact source states and B-projectors:
//   rho_L = (1 - sigma^A . sigma^P)/4,  rho_R = (1 - sigma^C . sigma^Q)/4,
//   B_0   = (1 - sigma^P . sigma^Q)/4,
//   B_b   = (1 - sigma^P_b sigma^Q_b + the other two axes)/4  for b = 1,2,3.
Network build_network();

// Outcome-conditioned correlations for settings a_x (x = 1..3) and c_z
// (z = 1..n_z): corr[b][x][z] = <A_x C_z || b> = Tr A_x C_z B_b rho,
// together with the unnormalized marginals and outcome probabilities.
struct CorrelationTensor {
  int n_z = 0;
  std::array<std::array<std::vector<double>, 3>, 4> corr;  // [b][x][z]
  std::array<std::array<double, 3>, 4> margA;              // [b][x]
  std::array<std::vector<double>, 4> margC;                // [b][z]
  std::array<double, 4> pb;                                // [b]
};

// Closed forms (<AC||0> = -a.c/4, <AC||b> = (a.c - 2 a_b c_b)/4, zero
// marginals, pb = 1/4); used downstream for speed.
CorrelationTensor correlations(const std::array<Vec3, 3>& a,
                               const std::vector<Vec3>& c);

// Same tensor from dense 16x16 traces; cross-check oracle for the closed
// forms.
CorrelationTensor correlations_trace(const std::array<Vec3, 3>& a,
                                     const std::vector<Vec3>& c);

// Full outcome table p(a,b,c|x,z). Outcome index layout per (x,z) cell:
// idx = ia*8 + b*2 + ic with ia,ic in {0,1} meaning outcomes {-1,+1}.
struct ProbTable {
  int n_z = 0;
  std::vector<std::array<double, 16>> p;  // cell (x,z) at x*n_z + z
  const std::array<double, 16>& cell(int x, int z) const { return p[x * n_z + z]; }
  std::array<double, 16>& cell(int x, int z) { return p[x * n_z + z]; }
};

ProbTable probabilities(const std::array<Vec3, 3>& a,
                        const std::vector<Vec3>& c);

// No-signaling diagnostic: the A-marginals must not depend on z, the
// C-marginals must not depend on x, and p(b) must not depend on either.
struct NosigReport {
  double max_dev_margA = 0.0;  // over (b,x): spread of <A_x||b> across z
  double max_dev_margC = 0.0;  // over (b,z): spread of <C_z||b> across x
  double max_dev_pb = 0.0;     // over b: spread of p(b) across (x,z)
  int argA_b = -1, argA_x = -1;
  int argC_b = -1, argC_z = -1;
  double max_violation() const;
};

NosigReport check_nosignaling(const ProbTable& t);

// The family sum-of-squares operator
//   q (sqrt(3) C_4 - A_1 - A_2 - A_3)^2 / sqrt(3)
//   + sum_z (C_z - alpha A_x1 - beta A_x2 - gamma A_x3)^2   (cyclic x per z)
// on the 4-qubit register, with A_x, C_z built from the given settings.
// PSD whenever q >= 0, for any settings and any state.
CMat sos_operator(double alpha, double beta, double gamma, double q,
                  const std::array<Vec3, 3>& a, const std::array<Vec3, 4>& c);

}  // namespace rcq
