#pragma once

// Dense complex/real matrix tools sized for the 4-qubit working space,
// plus the Pauli algebra. Register order is fixed as A, P, Q, C: qubit A
// is the most significant bit of a 16-dimensional index, C the least.

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace rcq {

using Complex = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;
using Vec3 = Eigen::Vector3d;

// The ordered 4-qubit register A, P, Q, C. A and P are fed by the left
// source, Q and C by the right one; P and Q belong to the middle party.
enum class Qubit : int { A = 0, P = 1, Q = 2, C = 3 };

inline constexpr int kNumQubits = 4;
inline constexpr int kDim = 16;  // 2^4

// Standard Pauli matrix for axis in {1,2,3}; throws on any other axis.
CMat pauli(int axis);

// 2x2 identity.
CMat identity2();

// Kronecker product (left factor on the most significant bits).
CMat kron(const CMat& x, const CMat& y);

// Levi-Civita symbol eps_{abc} for indices in {1,2,3}.
double epsilon(int a, int b, int c);

// Embed a single-qubit operator at the given register position, identity
// elsewhere: embed(op, P) = 1_A (x) op (x) 1_Q (x) 1_C. Throws unless op
// is 2x2.
CMat embed(const CMat& op, Qubit at);

// a . sigma on one qubit (2x2), for a unit (or any) real 3-vector.
CMat bloch_op(const Vec3& a);

// Partial trace of a 16x16 operator over the complement of `keep`.
// The result is ordered by the kept qubits in register order. Throws on
// an empty keep set or a dimension mismatch.
CMat partial_trace(const CMat& m, const std::vector<Qubit>& keep);

// Hermitian eigendecomposition (ascending eigenvalues). Throws if m is
// not square; callers are responsible for Hermiticity (checked to 1e-9
// and rejected otherwise, since a silent non-Hermitian input would yield
// garbage).
struct Eigh {
  RVec values;
  CMat vectors;  // columns are eigenvectors
};
Eigh eigh(const CMat& m);

bool is_hermitian(const CMat& m, double tol = 1e-12);

}  // namespace rcq
