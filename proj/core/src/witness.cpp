#include "rcq/witness.hpp"

#include "rcq/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rcq {

FMatrix FMatrix::zeros(int n_z) {
  if (n_z != 3 && n_z != 4)
    throw std::invalid_argument("FMatrix: n_z must be 3 or 4");
  FMatrix m;
  m.n_z = n_z;
  for (auto& row : m.f) row.assign(n_z, 0.0);
  return m;
}

FMatrix FMatrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.size() != 3)
    throw std::invalid_argument("FMatrix: expected 3 rows");
  const int n_z = static_cast<int>(rows[0].size());
  FMatrix m = zeros(n_z);
  for (int x = 0; x < 3; ++x) {
    if (static_cast<int>(rows[x].size()) != n_z)
      throw std::invalid_argument("FMatrix: ragged rows");
    for (int z = 0; z < n_z; ++z) m.f[x][z] = rows[x][z];
  }
  m.validate();
  return m;
}

bool FMatrix::has_nonzero() const {
  for (const auto& row : f)
    for (double v : row)
      if (v != 0.0) return true;
  return false;
}

void FMatrix::validate() const {
  if (n_z != 3 && n_z != 4)
    throw std::invalid_argument("FMatrix: n_z must be 3 or 4");
  for (const auto& row : f) {
    if (static_cast<int>(row.size()) != n_z)
      throw std::invalid_argument("FMatrix: row length mismatch");
    for (double v : row)
      if (!std::isfinite(v))
        throw std::invalid_argument("FMatrix: entries must be finite");
  }
  if (!has_nonzero()) throw std::invalid_argument("f must be nonzero");
}

FMatrix read_fmatrix_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  nlohmann::json j;
  in >> j;
  const nlohmann::json& rows = j.is_object() ? j.at("f") : j;
  std::vector<std::vector<double>> r;
  for (const auto& row : rows) r.push_back(row.get<std::vector<double>>());
  return FMatrix::from_rows(r);
}

FMatrix read_fmatrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    rows.push_back(std::move(row));
  }
  return FMatrix::from_rows(rows);
}

std::string fmatrix_to_json(const FMatrix& f) {
  nlohmann::json j;
  j["n_z"] = f.n_z;
  j["f"] = {f.f[0], f.f[1], f.f[2]};
  return j.dump();
}

const SignTable& resolved_sign_table() {
  static const SignTable table = [] {
    SignTable t;
    for (int b = 0; b < 4; ++b)
      for (int x = 0; x < 3; ++x)
        t.sign[b][x] = (b == 0 || b == x + 1) ? -1 : +1;
    return t;
  }();
  return table;
}

FamilyParams FamilyParams::from_abg(double alpha, double beta, double gamma) {
  const double n2 = alpha * alpha + beta * beta + gamma * gamma;
  if (std::abs(n2 - 1.0) > 1e-10)
    throw std::invalid_argument(
        "FamilyParams: (alpha,beta,gamma) must be unit-normalized");
  double q = -std::sqrt(3.0) * (alpha * beta + beta * gamma + gamma * alpha);
  if (q < 0.0) {
    if (q < -1e-12)
      throw std::invalid_argument("FamilyParams: q must be >= 0");
    q = 0.0;  // rounding-level negative only
  }
  return FamilyParams{alpha, beta, gamma, q};
}

FMatrix family_matrix(const FamilyParams& p) {
  return FMatrix::from_rows({{p.alpha, p.beta, p.gamma, p.q},
                             {p.gamma, p.alpha, p.beta, p.q},
                             {p.beta, p.gamma, p.alpha, p.q}});
}

double eval_F(const FMatrix& f, const SignTable& s,
              const CorrelationTensor& t) {
  if (t.n_z != f.n_z)
    throw std::invalid_argument("eval_F: tensor/witness size mismatch");
  double F = 0.0;
  for (int b = 0; b < 4; ++b)
    for (int x = 0; x < 3; ++x)
      for (int z = 0; z < f.n_z; ++z)
        F += s.at(b, x) * f.at(x, z) * t.corr[b][x][z];
  return F;
}

ClassicalResult classical_bound(const FMatrix& f) {
  ClassicalResult best;
  best.value = -1.0;
  // Lexicographic enumeration (-1 before +1); strict improvement keeps the
  // first maximizer, which is the lexicographically smallest.
  for (int bits = 0; bits < 8; ++bits) {
    std::array<int, 3> s;
    for (int x = 0; x < 3; ++x) s[x] = (bits >> (2 - x) & 1) ? +1 : -1;
    double total = 0.0;
    std::vector<int> t(f.n_z);
    for (int z = 0; z < f.n_z; ++z) {
      double col = 0.0;
      for (int x = 0; x < 3; ++x) col += f.at(x, z) * s[x];
      t[z] = col < 0.0 ? -1 : +1;
      total += std::abs(col);
    }
    if (total > best.value) {
      best.value = total;
      best.s = s;
      best.t = std::move(t);
    }
  }
  return best;
}

double complex_bound_columns(const FMatrix& f) {
  if (f.n_z != 3)
    throw std::invalid_argument("complex_bound_columns: defined for n_z = 3");
  double total = 0.0;
  for (int z = 0; z < 3; ++z) {
    double s = 0.0;
    for (int x = 0; x < 3; ++x) s += f.at(x, z) * f.at(x, z);
    total += std::sqrt(s);
  }
  return total;
}

double complex_bound_family(const FamilyParams& p) {
  return 3.0 + std::sqrt(3.0) * p.q;
}

namespace {

// T[x][z] = sum_b sign[b][x] <A_x C_z||b> = a_x^T M_x c_z with
// M_x = ((sum_{b>=1} s_bx - s_0x)/4) I - (1/2) diag(s_1x, s_2x, s_3x).
std::array<Eigen::Matrix3d, 3> pair_matrices(const SignTable& s) {
  std::array<Eigen::Matrix3d, 3> M;
  for (int x = 0; x < 3; ++x) {
    double sig = 0.0;
    for (int b = 1; b < 4; ++b) sig += s.at(b, x);
    M[x] = ((sig - s.at(0, x)) / 4.0) * Eigen::Matrix3d::Identity();
    for (int i = 0; i < 3; ++i) M[x](i, i) -= 0.5 * s.at(i + 1, x);
  }
  return M;
}

double settings_value(const FMatrix& f, const std::array<Eigen::Matrix3d, 3>& M,
                      const Settings& st) {
  double v = 0.0;
  for (int z = 0; z < f.n_z; ++z) {
    Vec3 g = Vec3::Zero();
    for (int x = 0; x < 3; ++x)
      g += f.at(x, z) * (M[x].transpose() * st.a[x]);
    v += g.dot(st.c[z]);
  }
  return v;
}

}  // namespace

OptimizeResult optimize_settings(const FMatrix& f, const SignTable& s,
                                 const OptimizeOptions& opt) {
  f.validate();
  const auto M = pair_matrices(s);
  OptimizeResult best;
  best.value = -1e300;

  for (int start = 0; start < opt.multistarts; ++start) {
    Rng rng = Rng::stream(opt.seed, static_cast<std::uint64_t>(start));
    Settings st;
    for (int x = 0; x < 3; ++x) st.a[x] = rng.unit_vec3();
    st.c.resize(f.n_z);
    for (int z = 0; z < f.n_z; ++z) st.c[z] = rng.unit_vec3();

    double value = settings_value(f, M, st);
    bool converged = false;
    int iter = 0;
    for (; iter < opt.iteration_cap; ++iter) {
      // Optimal c_z for fixed a: normalized gradient.
      for (int z = 0; z < f.n_z; ++z) {
        Vec3 g = Vec3::Zero();
        for (int x = 0; x < 3; ++x)
          g += f.at(x, z) * (M[x].transpose() * st.a[x]);
        const double n = g.norm();
        if (n > 1e-300) st.c[z] = g / n;
      }
      // Optimal a_x for fixed c.
      for (int x = 0; x < 3; ++x) {
        Vec3 h = Vec3::Zero();
        for (int z = 0; z < f.n_z; ++z) h += f.at(x, z) * (M[x] * st.c[z]);
        const double n = h.norm();
        if (n > 1e-300) st.a[x] = h / n;
      }
      const double next = settings_value(f, M, st);
      if (next - value < opt.tolerance) {
        value = std::max(value, next);
        converged = true;
        break;
      }
      value = next;
    }

    if (value > best.value) {
      best.value = value;
      best.settings = st;
      best.converged = converged;
      best.iterations = iter + 1;
      best.best_start = start;
    }
  }
  return best;
}

SignResolution resolve_sign_table() {
  const FMatrix anchor3 =
      FMatrix::from_rows({{-2, 3, 3}, {3, -2, 3}, {3, 3, -2}});
  const double target3 = 3.0 * std::sqrt(22.0);
  const double r = 1.0 / std::sqrt(3.0);
  const FamilyParams tetra = FamilyParams::from_abg(-r, r, r);
  const FMatrix anchor4 = family_matrix(tetra);
  const double target4 = complex_bound_family(tetra);  // = 4

  OptimizeOptions opt;
  opt.multistarts = 8;
  opt.iteration_cap = 500;

  SignResolution res;
  bool found = false;
  // Lexicographic (u,v,w) with -1 before +1; the first attaining table wins.
  for (int u : {-1, +1})
    for (int v : {-1, +1})
      for (int w : {-1, +1}) {
        SignTable t;
        for (int b = 0; b < 4; ++b)
          for (int x = 0; x < 3; ++x)
            t.sign[b][x] = (b == 0) ? u : (b == x + 1 ? v : w);
        const double v3 = optimize_settings(anchor3, t, opt).value;
        const double v4 = optimize_settings(anchor4, t, opt).value;
        const bool attains =
            std::abs(v3 - target3) <= 1e-6 && std::abs(v4 - target4) <= 1e-6;
        res.candidates.push_back({u, v, w, v3, v4, attains});
        if (attains && !found) {
          res.table = t;
          found = true;
        }
      }
  if (!found)
    throw std::runtime_error(
        "resolve_sign_table: no candidate attains the published bounds");
  return res;
}

}  // namespace rcq
