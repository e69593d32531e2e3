#include "rcq/network.hpp"

#include <cmath>
#include <stdexcept>

namespace rcq {

namespace {

constexpr double kUnitTol = 1e-12;

void require_unit(const Vec3& v, const char* who) {
  if (std::abs(v.squaredNorm() - 1.0) > 64 * kUnitTol)
    throw std::invalid_argument(std::string(who) +
                                ": setting must be a unit vector");
}

// (1 - sum_i s_i sigma_i (x) sigma_i)/4 on two qubits, with per-axis signs.
CMat bell_combination(double s1, double s2, double s3) {
  CMat out = CMat::Identity(4, 4);
  const double s[3] = {s1, s2, s3};
  for (int i = 1; i <= 3; ++i)
    out -= s[i - 1] * kron(pauli(i), pauli(i));
  return out / 4.0;
}

}  // namespace

Network build_network() {
  Network net;
  net.sources.rho_L = bell_combination(1, 1, 1);
  net.sources.rho_R = bell_combination(1, 1, 1);
  net.meas.B[0] = bell_combination(1, 1, 1);
  net.meas.B[1] = bell_combination(1, -1, -1);
  net.meas.B[2] = bell_combination(-1, 1, -1);
  net.meas.B[3] = bell_combination(-1, -1, 1);
  net.state = kron(net.sources.rho_L, net.sources.rho_R);
  for (int b = 0; b < 4; ++b) {
    // B_b acts on (P,Q): embed between the A and C factors.
    net.B_embedded[b] = kron(kron(identity2(), net.meas.B[b]), identity2());
  }
  return net;
}

CorrelationTensor correlations(const std::array<Vec3, 3>& a,
                               const std::vector<Vec3>& c) {
  const int n_z = static_cast<int>(c.size());
  if (n_z < 1) throw std::invalid_argument("correlations: need c settings");
  for (const auto& v : a) require_unit(v, "correlations");
  for (const auto& v : c) require_unit(v, "correlations");

  CorrelationTensor t;
  t.n_z = n_z;
  for (int b = 0; b < 4; ++b) {
    t.pb[b] = 0.25;
    t.margC[b].assign(n_z, 0.0);
    for (int x = 0; x < 3; ++x) {
      t.margA[b][x] = 0.0;
      t.corr[b][x].resize(n_z);
      for (int z = 0; z < n_z; ++z) {
        const double ac = a[x].dot(c[z]);
        if (b == 0)
          t.corr[b][x][z] = -ac / 4.0;
        else
          t.corr[b][x][z] = (ac - 2.0 * a[x][b - 1] * c[z][b - 1]) / 4.0;
      }
    }
  }
  return t;
}

CorrelationTensor correlations_trace(const std::array<Vec3, 3>& a,
                                     const std::vector<Vec3>& c) {
  const int n_z = static_cast<int>(c.size());
  if (n_z < 1) throw std::invalid_argument("correlations_trace: need c settings");
  for (const auto& v : a) require_unit(v, "correlations_trace");
  for (const auto& v : c) require_unit(v, "correlations_trace");

  const Network net = build_network();
  CorrelationTensor t;
  t.n_z = n_z;

  std::array<CMat, 3> A;
  for (int x = 0; x < 3; ++x) A[x] = embed(bloch_op(a[x]), Qubit::A);
  std::vector<CMat> C(n_z);
  for (int z = 0; z < n_z; ++z) C[z] = embed(bloch_op(c[z]), Qubit::C);

  for (int b = 0; b < 4; ++b) {
    const CMat& Bb = net.B_embedded[b];
    const CMat Brho = Bb * net.state;
    t.pb[b] = Brho.trace().real();
    t.margC[b].assign(n_z, 0.0);
    for (int z = 0; z < n_z; ++z)
      t.margC[b][z] = (C[z] * Brho).trace().real();
    for (int x = 0; x < 3; ++x) {
      t.margA[b][x] = (A[x] * Brho).trace().real();
      t.corr[b][x].resize(n_z);
      for (int z = 0; z < n_z; ++z)
        t.corr[b][x][z] = (A[x] * C[z] * Brho).trace().real();
    }
  }
  return t;
}

ProbTable probabilities(const std::array<Vec3, 3>& a,
                        const std::vector<Vec3>& c) {
  const CorrelationTensor t = correlations(a, c);
  ProbTable tab;
  tab.n_z = t.n_z;
  tab.p.resize(3 * t.n_z);
  for (int x = 0; x < 3; ++x)
    for (int z = 0; z < t.n_z; ++z) {
      auto& cell = tab.cell(x, z);
      for (int ia = 0; ia < 2; ++ia)
        for (int b = 0; b < 4; ++b)
          for (int ic = 0; ic < 2; ++ic) {
            const double av = ia ? 1.0 : -1.0;
            const double cv = ic ? 1.0 : -1.0;
            cell[ia * 8 + b * 2 + ic] =
                (t.pb[b] + av * t.margA[b][x] + cv * t.margC[b][z] +
                 av * cv * t.corr[b][x][z]) /
                4.0;
          }
    }
  return tab;
}

double NosigReport::max_violation() const {
  return std::max(max_dev_margA, std::max(max_dev_margC, max_dev_pb));
}

NosigReport check_nosignaling(const ProbTable& t) {
  NosigReport rep;
  const int n_z = t.n_z;

  // <A_x||b> per (x,z); spread across z.
  for (int b = 0; b < 4; ++b)
    for (int x = 0; x < 3; ++x) {
      double lo = 1e300, hi = -1e300;
      for (int z = 0; z < n_z; ++z) {
        double m = 0.0;
        for (int ia = 0; ia < 2; ++ia)
          for (int ic = 0; ic < 2; ++ic)
            m += (ia ? 1.0 : -1.0) * t.cell(x, z)[ia * 8 + b * 2 + ic];
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
      if (hi - lo > rep.max_dev_margA) {
        rep.max_dev_margA = hi - lo;
        rep.argA_b = b;
        rep.argA_x = x;
      }
    }

  // <C_z||b> per (x,z); spread across x.
  for (int b = 0; b < 4; ++b)
    for (int z = 0; z < n_z; ++z) {
      double lo = 1e300, hi = -1e300;
      for (int x = 0; x < 3; ++x) {
        double m = 0.0;
        for (int ia = 0; ia < 2; ++ia)
          for (int ic = 0; ic < 2; ++ic)
            m += (ic ? 1.0 : -1.0) * t.cell(x, z)[ia * 8 + b * 2 + ic];
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
      if (hi - lo > rep.max_dev_margC) {
        rep.max_dev_margC = hi - lo;
        rep.argC_b = b;
        rep.argC_z = z;
      }
    }

  // p(b) per (x,z); spread across all cells.
  for (int b = 0; b < 4; ++b) {
    double lo = 1e300, hi = -1e300;
    for (int x = 0; x < 3; ++x)
      for (int z = 0; z < n_z; ++z) {
        double m = 0.0;
        for (int ia = 0; ia < 2; ++ia)
          for (int ic = 0; ic < 2; ++ic)
            m += t.cell(x, z)[ia * 8 + b * 2 + ic];
        lo = std::min(lo, m);
        hi = std::max(hi, m);
      }
    rep.max_dev_pb = std::max(rep.max_dev_pb, hi - lo);
  }
  return rep;
}

CMat sos_operator(double alpha, double beta, double gamma, double q,
                  const std::array<Vec3, 3>& a, const std::array<Vec3, 4>& c) {
  std::array<CMat, 3> A;
  for (int x = 0; x < 3; ++x) A[x] = embed(bloch_op(a[x]), Qubit::A);
  std::array<CMat, 4> C;
  for (int z = 0; z < 4; ++z) C[z] = embed(bloch_op(c[z]), Qubit::C);

  const double rt3 = std::sqrt(3.0);
  CMat t0 = rt3 * C[3] - A[0] - A[1] - A[2];
  CMat out = (q / rt3) * (t0 * t0);

  // Cyclic coefficient pattern: row x of the family matrix.
  const double coef[3][3] = {{alpha, beta, gamma},
                             {gamma, alpha, beta},
                             {beta, gamma, alpha}};
  for (int z = 0; z < 3; ++z) {
    CMat tz = C[z];
    for (int x = 0; x < 3; ++x) tz -= coef[x][z] * A[x];
    out += tz * tz;
  }
  return out;
}

}  // namespace rcq
