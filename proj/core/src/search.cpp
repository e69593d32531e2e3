#include "rcq/search.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "rcq/rng.hpp"

namespace rcq {

using nlohmann::json;

int resolve_threads(int requested) {
  if (requested > 0) return std::min(requested, 256);
  if (const char* env = std::getenv("RCQ_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<int>(std::min(v, 256L));
  }
  return 1;
}

namespace {

// Runs fn(i) for i in [0, n) on the requested number of workers; results
// are written by index inside fn, so the merge is order-independent.
template <class Fn>
void parallel_for(int n, int threads, Fn&& fn) {
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        fn(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace

// ---------------------------------------------------------------------------
// Ratio scan
// ---------------------------------------------------------------------------

void ScanConfig::validate() const {
  if (samples < 0) throw std::invalid_argument("samples must be nonnegative");
  if (!(f_lo < f_hi)) throw std::invalid_argument("empty f sampling box");
  if (!(ascent_step > 0)) throw std::invalid_argument("ascent_step must be positive");
  if (!(fd_epsilon > 0)) throw std::invalid_argument("fd_epsilon must be positive");
  if (refine_top < 0 || refine_steps < 0 || max_halvings < 0)
    throw std::invalid_argument("refinement budgets must be nonnegative");
  if (level.n_A < 1 || level.n_A > 3 || level.n_C < 1 || level.n_C > 3)
    throw std::invalid_argument("relaxation level out of range");
}

namespace {

struct RatioEval {
  double F_c = 0, F_q = 0, F_r = 0, ratio = 0;
};

// One full evaluation of a candidate f. Returns nothing if the SDP did not
// reach an acceptable optimum; `note` then carries the solver detail.
std::optional<RatioEval> eval_ratio_point(const FMatrix& f, const ScanConfig& cfg,
                                          std::string* note) {
  RatioEval e;
  e.F_c = classical_bound(f).value;
  e.F_q = complex_bound_columns(f);
  RealBoundResult rb;
  try {
    rb = real_bound(f, resolved_sign_table(), cfg.level, MomentOptions{}, cfg.sdp_tol);
  } catch (const std::exception& ex) {
    if (note) *note = std::string("solver exception: ") + ex.what();
    return std::nullopt;
  }
  const SdpSolution& sol = rb.solution;
  bool ok = sol.status == SdpStatus::optimal ||
            (sol.status == SdpStatus::inaccurate && sol.rel_gap <= 1e-6 &&
             sol.primal_feas <= 1e-6 && sol.dual_feas <= 1e-6);
  if (!ok) {
    if (note) *note = std::string("sdp ") + to_string(sol.status) + ": " + sol.detail;
    return std::nullopt;
  }
  e.F_r = rb.value;
  if (!(e.F_r > 1e-12)) {
    if (note) *note = "degenerate F_r";
    return std::nullopt;
  }
  e.ratio = e.F_q / e.F_r;
  return e;
}

FMatrix sample_f(Rng& rng, double lo, double hi) {
  for (;;) {
    FMatrix f = FMatrix::zeros(3);
    double biggest = 0;
    for (int x = 0; x < 3; ++x)
      for (int z = 0; z < 3; ++z) {
        double v = rng.uniform(lo, hi);
        f.at(x, z) = v;
        biggest = std::max(biggest, std::abs(v));
      }
    if (biggest > 1e-9) return f;
  }
}

}  // namespace

ScanCandidate refine_ratio(const FMatrix& f0, const ScanConfig& cfg) {
  cfg.validate();
  ScanCandidate cand;
  cand.f = f0;
  std::string note;
  auto base = eval_ratio_point(f0, cfg, &note);
  if (!base) {
    cand.solver_ok = false;
    cand.note = note;
    return cand;
  }
  cand.F_c = base->F_c;
  cand.F_q = base->F_q;
  cand.F_r = base->F_r;
  cand.ratio = base->ratio;
  cand.ratio_before_refine = base->ratio;
  cand.refined = true;

  for (int step = 0; step < cfg.refine_steps; ++step) {
    // Central differences in the nine entries.
    double grad[3][3];
    double gnorm2 = 0;
    bool grad_ok = true;
    for (int x = 0; x < 3 && grad_ok; ++x)
      for (int z = 0; z < 3 && grad_ok; ++z) {
        FMatrix fp = cand.f, fm = cand.f;
        fp.at(x, z) += cfg.fd_epsilon;
        fm.at(x, z) -= cfg.fd_epsilon;
        auto rp = eval_ratio_point(fp, cfg, &note);
        auto rm = eval_ratio_point(fm, cfg, &note);
        if (!rp || !rm) {
          grad_ok = false;
          break;
        }
        grad[x][z] = (rp->ratio - rm->ratio) / (2 * cfg.fd_epsilon);
        gnorm2 += grad[x][z] * grad[x][z];
      }
    if (!grad_ok) {
      cand.note = "refinement stopped: " + note;
      break;
    }
    double gnorm = std::sqrt(gnorm2);
    if (gnorm < 1e-12) {
      cand.note = "refinement stopped: stationary point";
      break;
    }

    // Backtracking line search along the normalized gradient.
    double t = cfg.ascent_step;
    bool improved = false;
    for (int h = 0; h <= cfg.max_halvings; ++h, t *= 0.5) {
      FMatrix ft = cand.f;
      for (int x = 0; x < 3; ++x)
        for (int z = 0; z < 3; ++z) ft.at(x, z) += t * grad[x][z] / gnorm;
      auto rt = eval_ratio_point(ft, cfg, &note);
      if (rt && rt->ratio > cand.ratio + 1e-12) {
        cand.f = ft;
        cand.F_c = rt->F_c;
        cand.F_q = rt->F_q;
        cand.F_r = rt->F_r;
        cand.ratio = rt->ratio;
        improved = true;
        break;
      }
    }
    if (!improved) {
      cand.note = "refinement stopped: no improving step";
      break;
    }
  }
  return cand;
}

ScanResult ratio_scan(const ScanConfig& cfg) {
  cfg.validate();
  ScanResult out;
  out.config = cfg;

  std::vector<ScanCandidate> all(static_cast<std::size_t>(cfg.samples));
  int threads = resolve_threads(cfg.threads);
  parallel_for(cfg.samples, threads, [&](int i) {
    ScanCandidate& cand = all[static_cast<std::size_t>(i)];
    cand.index = i;
    Rng rng = Rng::stream(cfg.seed, static_cast<std::uint64_t>(i));
    cand.f = sample_f(rng, cfg.f_lo, cfg.f_hi);
    std::string note;
    auto e = eval_ratio_point(cand.f, cfg, &note);
    if (!e) {
      cand.solver_ok = false;
      cand.note = note;
      return;
    }
    cand.F_c = e->F_c;
    cand.F_q = e->F_q;
    cand.F_r = e->F_r;
    cand.ratio = e->ratio;
  });

  for (auto& cand : all) {
    if (cand.solver_ok)
      out.ranked.push_back(std::move(cand));
    else
      out.failures.push_back(std::move(cand));
  }
  std::sort(out.ranked.begin(), out.ranked.end(),
            [](const ScanCandidate& a, const ScanCandidate& b) {
              if (a.ratio != b.ratio) return a.ratio > b.ratio;
              return a.index < b.index;
            });

  int k = std::min<int>(cfg.refine_top, static_cast<int>(out.ranked.size()));
  for (int i = 0; i < k; ++i) {
    ScanCandidate refined = refine_ratio(out.ranked[static_cast<std::size_t>(i)].f, cfg);
    if (!refined.solver_ok) continue;  // keep the unrefined candidate
    refined.index = out.ranked[static_cast<std::size_t>(i)].index;
    out.ranked[static_cast<std::size_t>(i)] = std::move(refined);
  }
  // Re-rank: refinement may reorder the top block.
  std::sort(out.ranked.begin(), out.ranked.end(),
            [](const ScanCandidate& a, const ScanCandidate& b) {
              if (a.ratio != b.ratio) return a.ratio > b.ratio;
              return a.index < b.index;
            });
  return out;
}

// ---------------------------------------------------------------------------
// Two-setting survey
// ---------------------------------------------------------------------------

void BellFunctional36::validate() const {
  for (const auto& fb : f)
    for (const auto& fx : fb)
      for (double v : fx)
        if (!std::isfinite(v) || std::abs(v) > 1.0 + 1e-12)
          throw std::invalid_argument("functional entries must lie in [-1, 1]");
}

std::string bell36_to_json(const BellFunctional36& fun) {
  json j = json::array();
  for (const auto& fb : fun.f) {
    json jb = json::array();
    for (const auto& fx : fb) jb.push_back(fx);
    j.push_back(jb);
  }
  return json{{"f", j}}.dump(2);
}

BellFunctional36 bell36_from_json(const std::string& text) {
  json j = json::parse(text);
  const json& arr = j.is_object() ? j.at("f") : j;
  if (!arr.is_array() || arr.size() != 4)
    throw std::invalid_argument("expected 4 outcome blocks");
  BellFunctional36 fun;
  for (int b = 0; b < 4; ++b) {
    const json& jb = arr.at(static_cast<std::size_t>(b));
    if (!jb.is_array() || jb.size() != 3)
      throw std::invalid_argument("expected 3 rows per outcome block");
    for (int x = 0; x < 3; ++x) {
      const json& jx = jb.at(static_cast<std::size_t>(x));
      if (!jx.is_array() || jx.size() != 3)
        throw std::invalid_argument("expected 3 entries per row");
      for (int z = 0; z < 3; ++z)
        fun.f[static_cast<std::size_t>(b)][static_cast<std::size_t>(x)]
             [static_cast<std::size_t>(z)] = jx.at(static_cast<std::size_t>(z)).get<double>();
    }
  }
  fun.validate();
  return fun;
}

CMat assemble_h(const GivensParams& g) {
  static constexpr int kPairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  CMat h = CMat::Identity(4, 4);
  for (int p = 0; p < 6; ++p) {
    int J = kPairs[p][0], K = kPairs[p][1];
    double ct = std::cos(g.theta[static_cast<std::size_t>(p)]);
    double st = std::sin(g.theta[static_cast<std::size_t>(p)]);
    Complex ph = std::exp(Complex(0, g.psi[static_cast<std::size_t>(p)]));
    CMat rot = CMat::Identity(4, 4);
    rot(J, J) = ct;
    rot(J, K) = ph * st;
    rot(K, J) = -std::conj(ph) * st;
    rot(K, K) = ct;
    h = h * rot;
  }
  return h;
}

void SurveyModel::validate() const {
  auto unit = [](double n) { return std::abs(n - 1.0) < 1e-9; };
  if (!unit(lambda_l[0] * lambda_l[0] + lambda_l[1] * lambda_l[1]) ||
      !unit(lambda_r[0] * lambda_r[0] + lambda_r[1] * lambda_r[1]))
    throw std::invalid_argument("Schmidt pairs must have unit norm");
  for (const auto& v : a_bloch)
    if (!unit(v.squaredNorm())) throw std::invalid_argument("a vectors must be unit");
  for (const auto& v : c_bloch)
    if (!unit(v.squaredNorm())) throw std::invalid_argument("c vectors must be unit");
}

namespace {

using Mat2 = Eigen::Matrix2cd;

Mat2 observable2(const Vec3& n) {
  Mat2 m;
  m << Complex(n.z(), 0), Complex(n.x(), -n.y()), Complex(n.x(), n.y()), Complex(-n.z(), 0);
  return m;
}

// W_b[j][k] = lambdaL_j * lambdaR_k * conj(H(b, 2j + k)); the correlator of
// A (x side), outcome b, and C is tr(W^dag A W C^T).
void survey_w(const SurveyModel& m, const CMat& h, Mat2 w[4]) {
  for (int b = 0; b < 4; ++b)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k)
        w[b](j, k) = m.lambda_l[static_cast<std::size_t>(j)] *
                     m.lambda_r[static_cast<std::size_t>(k)] * std::conj(h(b, 2 * j + k));
}

}  // namespace

double eval_survey_F(const BellFunctional36& fun, const SurveyModel& m) {
  CMat h = assemble_h(m.givens);
  Mat2 w[4];
  survey_w(m, h, w);
  Mat2 ops_a[3], ops_c[3];
  ops_a[0] = Mat2::Identity();
  ops_c[0] = Mat2::Identity();
  for (int i = 0; i < 2; ++i) {
    ops_a[i + 1] = observable2(m.a_bloch[static_cast<std::size_t>(i)]);
    ops_c[i + 1] = observable2(m.c_bloch[static_cast<std::size_t>(i)]);
  }
  double total = 0;
  for (int b = 0; b < 4; ++b) {
    Mat2 wd = w[b].adjoint();
    for (int x = 0; x < 3; ++x) {
      Mat2 left = wd * ops_a[x] * w[b];
      for (int z = 0; z < 3; ++z) {
        double corr = (left * ops_c[z].transpose()).trace().real();
        total += fun.f[static_cast<std::size_t>(b)][static_cast<std::size_t>(x)]
                      [static_cast<std::size_t>(z)] *
                 corr;
      }
    }
  }
  return total;
}

double eval_survey_F_trace(const BellFunctional36& fun, const SurveyModel& m) {
  CMat h = assemble_h(m.givens);
  // Four-qubit state in register order A, P, Q, C (A most significant).
  CVec psi = CVec::Zero(16);
  for (int j = 0; j < 2; ++j)
    for (int k = 0; k < 2; ++k)
      psi(j * 8 + j * 4 + k * 2 + k) = m.lambda_l[static_cast<std::size_t>(j)] *
                                       m.lambda_r[static_cast<std::size_t>(k)];
  CMat ops_a[3], ops_c[3];
  ops_a[0] = CMat::Identity(2, 2);
  ops_c[0] = CMat::Identity(2, 2);
  for (int i = 0; i < 2; ++i) {
    ops_a[i + 1] = CMat(observable2(m.a_bloch[static_cast<std::size_t>(i)]));
    ops_c[i + 1] = CMat(observable2(m.c_bloch[static_cast<std::size_t>(i)]));
  }
  double total = 0;
  for (int b = 0; b < 4; ++b) {
    CMat proj = CMat::Zero(4, 4);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) proj(r, c) = h(b, r) * std::conj(h(b, c));
    for (int x = 0; x < 3; ++x)
      for (int z = 0; z < 3; ++z) {
        CMat op = kron(ops_a[x], kron(proj, ops_c[z]));
        double corr = (psi.adjoint() * op * psi)(0, 0).real();
        total += fun.f[static_cast<std::size_t>(b)][static_cast<std::size_t>(x)]
                      [static_cast<std::size_t>(z)] *
                 corr;
      }
  }
  return total;
}

ComplexnessCoords complexness(const SurveyModel& m) {
  // The residual local freedom is a rotation about sigma_3 (and an overall
  // conjugation, which only flips signs). Fix it so the two sigma_2
  // components are opposite: rotate the in-plane part of a1 + a2 onto the
  // sigma_1 axis; if the sum vanishes in-plane, use the difference instead.
  auto coord = [](const Vec3& v1, const Vec3& v2) {
    double s1 = v1.x() + v2.x(), s2 = v1.y() + v2.y();
    if (std::hypot(s1, s2) < 1e-12) {
      s1 = v1.x() - v2.x();
      s2 = v1.y() - v2.y();
      if (std::hypot(s1, s2) < 1e-12) return v1.y();
    }
    double phi = std::atan2(-s2, s1);
    return std::sin(phi) * v1.x() + std::cos(phi) * v1.y();
  };
  ComplexnessCoords out;
  out.a_i = coord(m.a_bloch[0], m.a_bloch[1]);
  out.c_i = coord(m.c_bloch[0], m.c_bloch[1]);
  return out;
}

void SurveyOptions::validate() const {
  if (restarts < 5) throw std::invalid_argument("survey requires at least 5 restarts");
  if (max_sweeps < 1) throw std::invalid_argument("max_sweeps must be positive");
  if (!(tol > 0)) throw std::invalid_argument("tol must be positive");
}

namespace {

constexpr int kSurveyParams = 22;

SurveyModel model_from_params(const double* p) {
  SurveyModel m;
  m.lambda_l = {std::cos(p[0]), std::sin(p[0])};
  m.lambda_r = {std::cos(p[1]), std::sin(p[1])};
  auto sphere = [](double th, double ph) {
    return Vec3(std::sin(th) * std::cos(ph), std::sin(th) * std::sin(ph), std::cos(th));
  };
  m.a_bloch[0] = sphere(p[2], p[3]);
  m.a_bloch[1] = sphere(p[4], p[5]);
  m.c_bloch[0] = sphere(p[6], p[7]);
  m.c_bloch[1] = sphere(p[8], p[9]);
  for (int i = 0; i < 6; ++i) {
    m.givens.theta[static_cast<std::size_t>(i)] = p[10 + i];
    m.givens.psi[static_cast<std::size_t>(i)] = p[16 + i];
  }
  return m;
}

void random_start(Rng& rng, double* p) {
  p[0] = rng.uniform(0.0, Rng::kPi / 2);  // Schmidt angles: positive quadrant
  p[1] = rng.uniform(0.0, Rng::kPi / 2);
  for (int v = 0; v < 4; ++v) {  // Bloch vectors: uniform on the sphere
    p[2 + 2 * v] = std::acos(rng.uniform(-1.0, 1.0));
    p[3 + 2 * v] = rng.uniform(0.0, 2 * Rng::kPi);
  }
  for (int i = 10; i < 22; ++i) p[i] = rng.uniform(0.0, 2 * Rng::kPi);
}

struct AscentOutcome {
  double value = 0;
  bool converged = false;
  std::array<double, kSurveyParams> params{};
};

AscentOutcome coordinate_ascent(const BellFunctional36& fun, const double* start,
                                const SurveyOptions& opt) {
  AscentOutcome out;
  std::copy(start, start + kSurveyParams, out.params.begin());
  std::array<double, kSurveyParams> step;
  step.fill(0.35);
  double best = eval_survey_F(fun, model_from_params(out.params.data()));
  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    double max_step = 0;
    for (int k = 0; k < kSurveyParams; ++k) {
      double h = step[static_cast<std::size_t>(k)];
      max_step = std::max(max_step, h);
      double saved = out.params[static_cast<std::size_t>(k)];
      bool moved = false;
      for (double trial : {saved + h, saved - h}) {
        out.params[static_cast<std::size_t>(k)] = trial;
        double v = eval_survey_F(fun, model_from_params(out.params.data()));
        if (v > best + opt.tol * (1 + std::abs(best)) * 1e-3) {
          best = v;
          moved = true;
          break;
        }
      }
      if (moved) {
        step[static_cast<std::size_t>(k)] = std::min(h * 1.4, 1.5);
      } else {
        out.params[static_cast<std::size_t>(k)] = saved;
        step[static_cast<std::size_t>(k)] = h * 0.5;
      }
    }
    if (max_step < 1e-7) {
      out.converged = true;
      break;
    }
  }
  out.value = best;
  return out;
}

}  // namespace

SurveyResult survey(int n_points, const SurveyOptions& opt) {
  opt.validate();
  if (n_points < 0) throw std::invalid_argument("n_points must be nonnegative");
  SurveyResult out;
  out.options = opt;
  out.points.resize(static_cast<std::size_t>(n_points));

  int threads = resolve_threads(opt.threads);
  parallel_for(n_points, threads, [&](int i) {
    SurveyPoint& pt = out.points[static_cast<std::size_t>(i)];
    pt.index = i;
    Rng rng = Rng::stream(opt.seed, static_cast<std::uint64_t>(i));
    for (int b = 0; b < 4; ++b)
      for (int x = 0; x < 3; ++x)
        for (int z = 0; z < 3; ++z)
          pt.functional.f[static_cast<std::size_t>(b)][static_cast<std::size_t>(x)]
                         [static_cast<std::size_t>(z)] = rng.uniform(-1.0, 1.0);

    AscentOutcome best;
    bool have = false;
    for (int s = 0; s < opt.restarts; ++s) {
      double start[kSurveyParams];
      random_start(rng, start);
      AscentOutcome run = coordinate_ascent(pt.functional, start, opt);
      if (!have || run.value > best.value) {
        best = run;
        have = true;
      }
    }
    pt.restarts_used = opt.restarts;
    pt.value = best.value;
    pt.converged = best.converged;
    pt.model = model_from_params(best.params.data());
    ComplexnessCoords cc = complexness(pt.model);
    pt.a_i = cc.a_i;
    pt.c_i = cc.c_i;
    pt.both_large = std::abs(pt.a_i) > 0.01 && std::abs(pt.c_i) > 0.01;
    double peak = std::max(std::abs(pt.a_i), std::abs(pt.c_i));
    pt.population_split = peak > 0.9 || peak < 0.05;
  });

  for (const auto& pt : out.points) {
    if (pt.both_large) ++out.both_large_count;
    if (pt.population_split) ++out.population_split_count;
  }
  return out;
}

}  // namespace rcq
