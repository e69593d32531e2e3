#include "rcq/moment.hpp"

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rcq {

namespace {

using json = nlohmann::json;

struct GroupElement {
  std::array<int, 3> px;  // permutation of the A settings (and outcomes 1..3)
  std::vector<int> pz;    // permutation of the C settings
  std::array<int, 4> beta;  // induced permutation of the outcome blocks
};

// Joint relabelings (x-permutation acting on settings and outcome blocks
// 1..3 together, z-permutation) fixing both f and the sign table exactly.
std::vector<GroupElement> detect_group(const FMatrix& f, const SignTable& s) {
  std::vector<GroupElement> out;
  std::array<int, 3> px = {0, 1, 2};
  std::vector<int> pz0(f.n_z);
  std::iota(pz0.begin(), pz0.end(), 0);
  do {
    GroupElement g;
    g.px = px;
    g.beta = {0, px[0] + 1, px[1] + 1, px[2] + 1};
    bool sign_ok = true;
    for (int b = 0; b < 4 && sign_ok; ++b) {
      for (int x = 0; x < 3; ++x) {
        if (s.at(g.beta[b], px[x]) != s.at(b, x)) {
          sign_ok = false;
          break;
        }
      }
    }
    if (!sign_ok) continue;
    std::vector<int> pz = pz0;
    do {
      bool ok = true;
      for (int x = 0; x < 3 && ok; ++x) {
        for (int z = 0; z < f.n_z; ++z) {
          if (f.at(px[x], pz[z]) != f.at(x, z)) {
            ok = false;
            break;
          }
        }
      }
      if (ok) {
        g.pz = pz;
        out.push_back(g);
      }
    } while (std::next_permutation(pz.begin(), pz.end()));
  } while (std::next_permutation(px.begin(), px.end()));
  return out;
}

// Letter relabeling; preserves segment order so the result stays canonical.
Word transform_word(const Word& w, const GroupElement& g) {
  Word out = w;
  for (Letter& l : out.letters) {
    if (l.alphabet == 0) {
      l.index = static_cast<std::int8_t>(g.px[l.index]);
    } else {
      l.index = static_cast<std::int8_t>(g.pz[l.index]);
    }
  }
  return out;
}

// The A-segment reversed with the C-segment kept: the partial-transpose
// partner of a moment word.
Word a_reversed(const Word& w) {
  std::vector<int> a_seg, c_seg;
  for (const Letter& l : w.letters) {
    if (l.alphabet == 0) {
      a_seg.push_back(l.index);
    } else {
      c_seg.push_back(l.index);
    }
  }
  std::reverse(a_seg.begin(), a_seg.end());
  return word_from_segments(a_seg, c_seg);
}

Word key_min_orientation(const Word& w) {
  Word r = reversed(w);
  return word_key(w) <= word_key(r) ? w : r;
}

}  // namespace

MomentProblem build_moment_problem(const FMatrix& f, const SignTable& s,
                                   RelaxationLevel lvl,
                                   const MomentOptions& opt) {
  f.validate();
  if (lvl.n_A < 1 || lvl.n_A > 3 || lvl.n_C < 1 || lvl.n_C > 3) {
    throw std::invalid_argument(
        "moment: relaxation level unsupported (need 1 <= n_A, n_C <= 3)");
  }

  MomentProblem prob;
  prob.n_z = f.n_z;
  prob.level = lvl;
  prob.options = opt;
  for (auto& bx : prob.obj_var) {
    for (auto& xz : bx) xz.fill(-1);
  }

  // Index words: every (A-segment, C-segment) pair, A-major order.
  const auto a_segs = reduced_segments(3, lvl.n_A);
  const auto c_segs = reduced_segments(f.n_z, lvl.n_C);
  for (const auto& a : a_segs) {
    for (const auto& c : c_segs) {
      prob.index_words.push_back(word_from_segments(a, c));
    }
  }
  const int nidx = static_cast<int>(prob.index_words.size());

  // Moment dictionary: entry word classes (merged with the swap partner
  // when the per-block toggle is on) and their positions in a block.
  std::map<std::uint64_t, Word> rep;
  std::map<std::uint64_t, std::vector<std::pair<int, int>>> pos;
  auto effective_key = [&](const Word& w, Word* rep_out) -> std::uint64_t {
    const std::uint64_t ck = class_key(w);
    if (!opt.per_block_ppt) {
      if (rep_out) *rep_out = key_min_orientation(w);
      return ck;
    }
    const Word pw = a_reversed(w);
    const std::uint64_t pk = class_key(pw);
    if (pk < ck) {
      if (rep_out) *rep_out = key_min_orientation(pw);
      return pk;
    }
    if (rep_out) *rep_out = key_min_orientation(w);
    return ck;
  };
  for (int i = 0; i < nidx; ++i) {
    for (int j = i; j < nidx; ++j) {
      const Word w = entry_word(prob.index_words[i], prob.index_words[j]);
      Word r;
      const std::uint64_t ek = effective_key(w, &r);
      auto it = rep.find(ek);
      if (it == rep.end()) rep.emplace(ek, std::move(r));
      pos[ek].emplace_back(i, j);
    }
  }
  prob.num_variables_unfolded = 4 * static_cast<int>(rep.size());

  // Symmetry group and its action on (block, class) pairs.
  std::vector<GroupElement> group;
  if (opt.use_symmetry) {
    group = detect_group(f, s);
  } else {
    GroupElement id;
    id.px = {0, 1, 2};
    id.pz.resize(f.n_z);
    std::iota(id.pz.begin(), id.pz.end(), 0);
    id.beta = {0, 1, 2, 3};
    group.push_back(id);
  }
  prob.group_order = static_cast<int>(group.size());

  auto transformed_key = [&](std::uint64_t ek, const GroupElement& g) {
    const Word t = transform_word(rep.at(ek), g);
    const std::uint64_t out = effective_key(t, nullptr);
    if (rep.find(out) == rep.end()) {
      throw std::logic_error("moment: class set not closed under symmetry");
    }
    return out;
  };

  // Orbit variables over (block, class), seeds in deterministic order.
  std::map<std::pair<int, std::uint64_t>, int> var_of;
  std::vector<std::vector<std::pair<int, std::uint64_t>>> orbit_members;
  for (int b = 0; b < 4; ++b) {
    for (const auto& [ek, w] : rep) {
      const std::pair<int, std::uint64_t> seed{b, ek};
      if (var_of.count(seed)) continue;
      std::set<std::pair<int, std::uint64_t>> orbit;
      for (const GroupElement& g : group) {
        orbit.emplace(g.beta[b], transformed_key(ek, g));
      }
      const int id = static_cast<int>(orbit_members.size());
      for (const auto& member : orbit) var_of[member] = id;
      orbit_members.emplace_back(orbit.begin(), orbit.end());
    }
  }
  const int nvars = static_cast<int>(orbit_members.size());

  // Collapse outcome blocks related by the group: keep the smallest block
  // of each block-orbit (the dropped ones are index permutations of it).
  std::array<int, 4> block_rep;
  for (int b = 0; b < 4; ++b) {
    int r = b;
    for (const GroupElement& g : group) r = std::min(r, g.beta[b]);
    block_rep[b] = r;
  }
  std::array<int, 4> emit_index;
  emit_index.fill(-1);
  std::vector<int> dims;
  for (int b = 0; b < 4; ++b) {
    if (block_rep[b] == b) {
      emit_index[b] = static_cast<int>(dims.size());
      dims.push_back(nidx);
    }
  }
  prob.blocks_emitted = static_cast<int>(dims.size());

  // Assemble the SDP.
  prob.sdp.block_dims = dims;
  prob.sdp.num_vars = nvars;
  prob.sdp.coeffs.assign(nvars, {});
  prob.sdp.maximize = true;
  for (int v = 0; v < nvars; ++v) {
    for (const auto& [b, ek] : orbit_members[v]) {
      const int eb = emit_index[b];
      if (eb < 0) continue;
      for (const auto& [i, j] : pos.at(ek)) {
        prob.sdp.coeffs[v].push_back(SdpCoeff{eb, i, j, 1.0});
      }
    }
  }

  // Objective: sum over (b, x, z) of sign[b][x] f[x][z] times the moment
  // of A_x C_z in block b.
  std::map<int, double> obj;
  for (int b = 0; b < 4; ++b) {
    for (int x = 0; x < 3; ++x) {
      for (int z = 0; z < f.n_z; ++z) {
        const Word w = word_from_segments({x}, {z});
        const std::uint64_t ek = effective_key(w, nullptr);
        const int v = var_of.at({b, ek});
        prob.obj_var[b][x][z] = v;
        obj[v] += static_cast<double>(s.at(b, x)) * f.at(x, z);
      }
    }
  }
  for (const auto& [v, coef] : obj) {
    if (coef != 0.0) prob.sdp.objective.emplace_back(v, coef);
  }

  // Normalization: the identity moments over all four blocks sum to one.
  const std::uint64_t unit_key = effective_key(word_from_segments({}, {}),
                                               nullptr);
  {
    std::map<int, double> row;
    for (int b = 0; b < 4; ++b) row[var_of.at({b, unit_key})] += 1.0;
    SdpEquality eq;
    eq.rhs = 1.0;
    for (const auto& [v, coef] : row) eq.terms.emplace_back(v, coef);
    prob.sdp.equalities.push_back(std::move(eq));
  }

  // Swap rows on the block sum: for each class and its partner, the summed
  // moments agree. Folded rows that cancel identically are dropped; equal
  // rows are emitted once.
  if (opt.include_ppt && !opt.per_block_ppt) {
    std::set<std::string> seen;
    for (const auto& [ek, w] : rep) {
      const std::uint64_t pk = class_key(a_reversed(w));
      if (pk <= ek) continue;  // self-paired or handled from the other side
      if (rep.find(pk) == rep.end()) {
        throw std::logic_error("moment: swap partner missing from dictionary");
      }
      std::map<int, double> row;
      for (int b = 0; b < 4; ++b) {
        row[var_of.at({b, ek})] += 1.0;
        row[var_of.at({b, pk})] -= 1.0;
      }
      SdpEquality eq;
      eq.rhs = 0.0;
      for (const auto& [v, coef] : row) {
        if (coef != 0.0) eq.terms.emplace_back(v, coef);
      }
      if (eq.terms.empty()) continue;
      // Canonical serialization (sign-normalized) for deduplication.
      std::ostringstream key;
      const double flip = eq.terms.front().second < 0 ? -1.0 : 1.0;
      for (const auto& [v, coef] : eq.terms) {
        key << v << ':' << flip * coef << ';';
      }
      if (!seen.insert(key.str()).second) continue;
      prob.sdp.equalities.push_back(std::move(eq));
      ++prob.num_ppt_rows;
    }
  }

  prob.sdp.validate();
  return prob;
}

RealBoundResult real_bound(const FMatrix& f, const SignTable& s,
                           RelaxationLevel lvl, const MomentOptions& opt,
                           const SdpTolerances& tol) {
  const MomentProblem prob = build_moment_problem(f, s, lvl, opt);
  RealBoundResult res;
  res.solution = solve_sdp(prob.sdp, tol);
  res.value = res.solution.primal_obj;
  res.certified_upper = res.solution.dual_obj;
  res.verification = verify_sdp(prob.sdp, res.solution, tol);
  res.group_order = prob.group_order;
  res.num_variables = prob.sdp.num_vars;
  return res;
}

RealBoundResult complex_relax_bound(const FMatrix& f, const SignTable& s,
                                    RelaxationLevel lvl,
                                    const SdpTolerances& tol) {
  MomentOptions opt;
  opt.include_ppt = false;
  opt.per_block_ppt = false;
  return real_bound(f, s, lvl, opt, tol);
}

std::string moment_problem_json(const MomentProblem& prob) {
  json meta;
  meta["n_z"] = prob.n_z;
  meta["level"] = {prob.level.n_A, prob.level.n_C};
  meta["include_ppt"] = prob.options.include_ppt;
  meta["per_block_ppt"] = prob.options.per_block_ppt;
  meta["use_symmetry"] = prob.options.use_symmetry;
  meta["group_order"] = prob.group_order;
  meta["blocks_emitted"] = prob.blocks_emitted;
  meta["num_ppt_rows"] = prob.num_ppt_rows;
  meta["num_variables"] = prob.sdp.num_vars;
  meta["num_variables_unfolded"] = prob.num_variables_unfolded;
  meta["index_size"] = prob.index_words.size();
  json j;
  j["meta"] = meta;
  j["sdp"] = json::parse(sdp_to_json(prob.sdp));
  return j.dump(2);
}

}  // namespace rcq
