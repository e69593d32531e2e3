#include "rcq/linalg.hpp"

#include <stdexcept>

namespace rcq {

CMat pauli(int axis) {
  CMat s(2, 2);
  const Complex i(0.0, 1.0);
  switch (axis) {
    case 1:
      s << 0, 1, 1, 0;
      break;
    case 2:
      s << 0, -i, i, 0;
      break;
    case 3:
      s << 1, 0, 0, -1;
      break;
    default:
      throw std::invalid_argument("pauli: axis must be 1, 2 or 3");
  }
  return s;
}

CMat identity2() { return CMat::Identity(2, 2); }

CMat kron(const CMat& x, const CMat& y) {
  CMat out(x.rows() * y.rows(), x.cols() * y.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      out.block(r * y.rows(), c * y.cols(), y.rows(), y.cols()) = x(r, c) * y;
  return out;
}

double epsilon(int a, int b, int c) {
  if (a < 1 || a > 3 || b < 1 || b > 3 || c < 1 || c > 3)
    throw std::invalid_argument("epsilon: indices must be in {1,2,3}");
  if (a == b || b == c || a == c) return 0.0;
  // Even permutations of (1,2,3).
  if ((a == 1 && b == 2 && c == 3) || (a == 2 && b == 3 && c == 1) ||
      (a == 3 && b == 1 && c == 2))
    return 1.0;
  return -1.0;
}

CMat embed(const CMat& op, Qubit at) {
  if (op.rows() != 2 || op.cols() != 2)
    throw std::invalid_argument("embed: operand must be 2x2");
  CMat out = CMat::Identity(1, 1);
  for (int q = 0; q < kNumQubits; ++q)
    out = kron(out, q == static_cast<int>(at) ? op : identity2());
  return out;
}

CMat bloch_op(const Vec3& a) {
  CMat out = CMat::Zero(2, 2);
  for (int i = 1; i <= 3; ++i) out += a[i - 1] * pauli(i);
  return out;
}

CMat partial_trace(const CMat& m, const std::vector<Qubit>& keep) {
  if (keep.empty())
    throw std::invalid_argument("partial_trace: keep set must be non-empty");
  if (m.rows() != kDim || m.cols() != kDim)
    throw std::invalid_argument("partial_trace: operator must be 16x16");

  bool kept[kNumQubits] = {false, false, false, false};
  for (Qubit q : keep) kept[static_cast<int>(q)] = true;

  std::vector<int> keep_pos, trace_pos;  // register order, MSB first
  for (int q = 0; q < kNumQubits; ++q)
    (kept[q] ? keep_pos : trace_pos).push_back(q);

  const int nk = static_cast<int>(keep_pos.size());
  const int nt = static_cast<int>(trace_pos.size());
  const int dk = 1 << nk, dt = 1 << nt;

  // Compose a full 4-bit register index from kept bits and traced bits.
  // Register bit q sits at position (3 - q) of the full index (A is MSB).
  auto full_index = [&](int kbits, int tbits) {
    int idx = 0;
    for (int j = 0; j < nk; ++j)
      if (kbits >> (nk - 1 - j) & 1) idx |= 1 << (3 - keep_pos[j]);
    for (int j = 0; j < nt; ++j)
      if (tbits >> (nt - 1 - j) & 1) idx |= 1 << (3 - trace_pos[j]);
    return idx;
  };

  CMat out = CMat::Zero(dk, dk);
  for (int r = 0; r < dk; ++r)
    for (int c = 0; c < dk; ++c) {
      Complex acc(0.0, 0.0);
      for (int t = 0; t < dt; ++t) acc += m(full_index(r, t), full_index(c, t));
      out(r, c) = acc;
    }
  return out;
}

bool is_hermitian(const CMat& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.adjoint()).cwiseAbs().maxCoeff() <= tol;
}

Eigh eigh(const CMat& m) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("eigh: matrix must be square");
  if (!is_hermitian(m, 1e-9))
    throw std::invalid_argument("eigh: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<CMat> es(m);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigh: eigendecomposition failed");
  return Eigh{es.eigenvalues(), es.eigenvectors()};
}

}  // namespace rcq
