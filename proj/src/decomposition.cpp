#include "mhl/decomposition.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "mhl/error.hpp"
#include "parallel.hpp"

namespace mhl {

const char* to_string(MaskMode m) { return m == MaskMode::Exhaustive ? "exhaustive" : "greedy"; }

namespace {

// Running sums of the four terms for a partial or full assignment.
class Accumulator {
 public:
  explicit Accumulator(const FourSummandProblem& p)
      : p_(p), n_(p.omega.size()), qc_(p.rows * n_, 0.0), qd_(p.cols * n_, 0.0) {}

  void add(std::size_t idx, MaskLabel l, double sign) {
    const std::size_t cell = idx / (n_ * n_), xi = (idx / n_) % n_, up = idx % n_;
    const std::size_t i = cell / p_.cols, j = cell % p_.cols;
    const double v = p_.values[idx], mx = p_.omega.weight(xi), my = p_.omega.weight(up);
    switch (l) {
      case MaskLabel::A: sa_ += sign * mx * my * std::abs(v); break;
      case MaskLabel::B: qb_ += sign * mx * my * v * v; break;
      case MaskLabel::C: qc_[i * n_ + xi] += sign * my * v * v; break;
      case MaskLabel::D: qd_[j * n_ + up] += sign * mx * v * v; break;
    }
  }

  double value() const {
    double t = sa_ + std::sqrt(std::max(qb_, 0.0));
    for (std::size_t k = 0; k < qc_.size(); ++k)
      t += p_.omega.weight(k % n_) * std::sqrt(std::max(qc_[k], 0.0));
    for (std::size_t k = 0; k < qd_.size(); ++k)
      t += p_.omega.weight(k % n_) * std::sqrt(std::max(qd_[k], 0.0));
    return t;
  }

 private:
  const FourSummandProblem& p_;
  std::size_t n_;
  double sa_ = 0.0, qb_ = 0.0;
  std::vector<double> qc_, qd_;
};

constexpr MaskLabel kLabels[] = {MaskLabel::A, MaskLabel::B, MaskLabel::C, MaskLabel::D};

void check_problem(const FourSummandProblem& p) {
  require(p.rows > 0 && p.cols > 0, "empty field");
  require(p.values.size() == p.rows * p.cols * p.omega.size() * p.omega.size(),
          "problem values do not match its shape");
}

std::vector<std::size_t> support_of(const FourSummandProblem& p) {
  std::vector<std::size_t> s;
  for (std::size_t k = 0; k < p.values.size(); ++k)
    if (p.values[k] != 0.0) s.push_back(k);
  return s;
}

bool strictly_better(double cand, double best) { return cand < best - 1e-14 * std::abs(best); }

FourSummandSolution greedy(const FourSummandProblem& p, std::uint64_t seed) {
  const auto supp = support_of(p);
  FourSummandSolution best;
  best.labels.assign(p.values.size(), MaskLabel::A);
  best.value = four_summand_value(p, best.labels);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, 3);
  for (std::size_t r = 0; r < kGreedyRestarts; ++r) {
    std::vector<MaskLabel> lab(p.values.size(), MaskLabel::A);
    if (r > 0)
      for (std::size_t k : supp) lab[k] = kLabels[pick(rng)];
    Accumulator acc(p);
    for (std::size_t k : supp) acc.add(k, lab[k], 1.0);
    double cur = acc.value();
    for (bool moved = true; moved;) {
      moved = false;
      for (std::size_t k : supp) {
        const MaskLabel old = lab[k];
        for (MaskLabel l : kLabels) {
          if (l == old) continue;
          acc.add(k, lab[k], -1.0);
          acc.add(k, l, 1.0);
          const double cand = acc.value();
          if (strictly_better(cand, cur)) {
            lab[k] = l;
            cur = cand;
            moved = true;
          } else {
            acc.add(k, l, -1.0);
            acc.add(k, lab[k], 1.0);
          }
        }
      }
    }
    // recompute from scratch so the reported value carries no drift
    cur = four_summand_value(p, lab);
    if (strictly_better(cur, best.value)) {
      best.value = cur;
      best.labels = std::move(lab);
    }
  }
  return best;
}

FourSummandSolution exhaustive(const FourSummandProblem& p) {
  auto supp = support_of(p);
  require(supp.size() <= kExhaustiveSupportLimit,
          "exhaustive mask search needs support <= 12, got " + std::to_string(supp.size()));
  std::stable_sort(supp.begin(), supp.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(p.values[a]) > std::abs(p.values[b]);
  });
  FourSummandSolution best;
  best.labels.assign(p.values.size(), MaskLabel::A);
  best.value = four_summand_value(p, best.labels);
  std::vector<MaskLabel> lab(p.values.size(), MaskLabel::A);
  Accumulator acc(p);
  // every term only grows as points are added, so a partial value bounds below
  auto dfs = [&](auto&& self, std::size_t depth) -> void {
    if (depth == supp.size()) {
      const double v = four_summand_value(p, lab);
      if (strictly_better(v, best.value)) {
        best.value = v;
        best.labels = lab;
      }
      return;
    }
    const std::size_t k = supp[depth];
    for (MaskLabel l : kLabels) {
      acc.add(k, l, 1.0);
      lab[k] = l;
      if (strictly_better(acc.value(), best.value)) self(self, depth + 1);
      acc.add(k, l, -1.0);
    }
    lab[k] = MaskLabel::A;
  };
  dfs(dfs, 0);
  return best;
}

}  // namespace

double four_summand_value(const FourSummandProblem& prob, const std::vector<MaskLabel>& labels) {
  check_problem(prob);
  require(labels.size() == prob.values.size(), "mask shape differs from problem");
  Accumulator acc(prob);
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (prob.values[k] != 0.0) acc.add(k, labels[k], 1.0);
  return acc.value();
}

double four_summand_lhs(const FourSummandProblem& prob) {
  check_problem(prob);
  const std::size_t n = prob.omega.size(), R = prob.rows, C = prob.cols;
  std::vector<FiniteProbSpace> factors(R + C, prob.omega);
  std::vector<std::size_t> axes(R + C);
  for (std::size_t a = 0; a < axes.size(); ++a) axes[a] = a;
  return integrate_over(factors, axes, [&](std::span<const std::size_t> c) {
    double s = 0.0;
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) {
        const double v = prob.values[((i * C + j) * n + c[i]) * n + c[R + j]];
        s += v * v;
      }
    return std::sqrt(s);
  });
}

FourSummandSolution solve_four_summand(const FourSummandProblem& prob, MaskMode mode,
                                       std::uint64_t seed) {
  check_problem(prob);
  return mode == MaskMode::Exhaustive ? exhaustive(prob) : greedy(prob, seed);
}

RandomVariable FourSummandMask::indicator(std::size_t i, std::size_t j, MaskLabel l) const {
  require(i <= N && j <= M, "mask cell out of range", ErrorCode::OutOfRange);
  const auto& lab = labels[i * (M + 1) + j];
  std::vector<double> v(lab.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = lab[k] == l ? 1.0 : 0.0;
  return RandomVariable(space, std::move(v));
}

FourSummandMask four_summand_partition(const DecoupledField& d, MaskMode mode,
                                       std::uint64_t seed, unsigned jobs) {
  require(d.two_parameter(), "four-summand masks need a two-parameter decoupled field");
  require(d.entries() > 0, "empty field");
  const std::size_t N = d.rows() - 1, M = d.cols() - 1, n0 = N + M + 2;
  const auto& omega = d.factors().front();
  const std::size_t n = omega.size();

  FourSummandMask mask;
  mask.N = N;
  mask.M = M;
  mask.mode = mode;
  mask.space = ProductSpace::power(omega, N + M + 2);
  const auto& ms = *mask.space;
  const std::size_t outer_count = ms.size() / (n * n);
  mask.labels.assign(d.entries(), std::vector<MaskLabel>(ms.size(), MaskLabel::A));

  std::vector<double> rhs(outer_count), lhs(outer_count), weight(outer_count);
  detail::parallel_for(outer_count, jobs, [&](std::size_t o) {
    // mask atom for (outer o, ξ, υ) is o·n² + ξ·n + υ
    const auto mc = ms.coordinates_of(o * n * n);
    std::vector<std::size_t> coords(2 * n0, 0);
    for (std::size_t a = 0; a < N; ++a) coords[a] = mc[a];
    for (std::size_t b = 0; b < M; ++b) coords[N + 1 + b] = mc[N + b];
    double w = 1.0;
    for (std::size_t a = 0; a < N + M; ++a) w *= omega.weight(mc[a]);
    FourSummandProblem prob{N + 1, M + 1, omega, std::vector<double>(d.entries() * n * n)};
    for (std::size_t i = 0; i <= N; ++i)
      for (std::size_t j = 0; j <= M; ++j) {
        const std::size_t cell = i * (M + 1) + j;
        for (std::size_t xi = 0; xi < n; ++xi)
          for (std::size_t up = 0; up < n; ++up) {
            auto c = coords;
            c[n0 + i] = xi;
            c[n0 + N + 1 + j] = up;
            prob.values[prob.at(cell, xi, up)] = d.value(cell, c);
          }
      }
    const auto sol = solve_four_summand(prob, mode, seed + o);
    for (std::size_t cell = 0; cell < d.entries(); ++cell)
      for (std::size_t k = 0; k < n * n; ++k)
        mask.labels[cell][o * n * n + k] = sol.labels[cell * n * n + k];
    rhs[o] = sol.value;
    lhs[o] = four_summand_lhs(prob);
    weight[o] = w;
  });
  for (std::size_t o = 0; o < outer_count; ++o) {
    mask.rhs += weight[o] * rhs[o];
    mask.lhs += weight[o] * lhs[o];
  }
  return mask;
}

const AdaptedField& DGDecomposition::part(std::size_t k) const {
  switch (k) {
    case 0: return alpha;
    case 1: return beta;
    case 2: return gamma;
    case 3: return delta;
  }
  fail(ErrorCode::OutOfRange, "part index must be 0..3");
}

RhsTerms evaluate_rhs(const AdaptedField& alpha, const AdaptedField& beta,
                      const AdaptedField& gamma, const AdaptedField& delta) {
  const auto& filt = *alpha.filtration();
  for (const auto* p : {&beta, &gamma, &delta})
    require(p->filtration() == alpha.filtration() ||
                (p->filtration()->N() == filt.N() && p->filtration()->M() == filt.M() &&
                 same_space(p->filtration()->space(), filt.space())),
            "parts live on different grids", ErrorCode::SpaceMismatch);
  const std::size_t N = filt.N(), M = filt.M();
  const auto sp = filt.space();
  using I = std::ptrdiff_t;
  RhsTerms t;
  for (const auto& e : alpha.entries()) t.tA += abs(e).expectation();

  RandomVariable qb(sp);
  for (std::size_t i = 0; i <= N; ++i)
    for (std::size_t j = 0; j <= M; ++j)
      qb += cond_expect(hadamard(beta.at(i, j), beta.at(i, j)), filt.at(I(i) - 1, I(j) - 1));
  for (std::size_t k = 0; k < qb.size(); ++k) t.tB += sp->weight(k) * std::sqrt(qb[k]);

  for (std::size_t i = 0; i <= N; ++i) {
    RandomVariable q(sp);
    for (std::size_t j = 0; j <= M; ++j)
      q += cond_expect(hadamard(gamma.at(i, j), gamma.at(i, j)), filt.at(I(N), I(j) - 1));
    for (std::size_t k = 0; k < q.size(); ++k) t.tC += sp->weight(k) * std::sqrt(q[k]);
  }
  for (std::size_t j = 0; j <= M; ++j) {
    RandomVariable q(sp);
    for (std::size_t i = 0; i <= N; ++i)
      q += cond_expect(hadamard(delta.at(i, j), delta.at(i, j)), filt.at(I(i) - 1, I(M)));
    for (std::size_t k = 0; k < q.size(); ++k) t.tD += sp->weight(k) * std::sqrt(q[k]);
  }
  return t;
}

namespace {

DGDecomposition finish(AdaptedField a, AdaptedField b, AdaptedField c, AdaptedField d,
                       double lhs, MaskMode mode) {
  DGDecomposition out;
  out.terms = evaluate_rhs(a, b, c, d);
  out.alpha = std::move(a);
  out.beta = std::move(b);
  out.gamma = std::move(c);
  out.delta = std::move(d);
  out.lhs = lhs;
  out.achieved_ratio = lhs > 0.0 ? out.terms.sum() / lhs : 0.0;
  out.mask_mode = mode;
  return out;
}

}  // namespace

DGDecomposition davis_garsia_2p(const AdaptedField& f, const FourSummandMask& mask) {
  const auto& filt = *f.filtration();
  const std::size_t N = filt.N(), M = filt.M();
  require(mask.N == N && mask.M == M && mask.labels.size() == filt.cells(),
          "mask shape differs from the field");
  const auto base = canonical_base(filt);
  require(base.has_value(), "threshold construction needs a canonical product filtration");
  require(mask.space && mask.space->size() == filt.space()->size() &&
              mask.space->factor(0) == *base,
          "mask space does not match the field", ErrorCode::SpaceMismatch);
  const auto& os = *filt.space();
  const auto& ms = *mask.space;
  const std::size_t cells = filt.cells();
  std::vector<std::vector<RandomVariable>> parts(4, std::vector<RandomVariable>(cells));
  for (std::size_t i = 0; i <= N; ++i)
    for (std::size_t j = 0; j <= M; ++j) {
      const std::size_t cell = filt.index(i, j);
      // E^{(x,y)}_{i-1,j-1}: keep x_{<i}, y_{<j}, ξ, υ and average the rest
      std::vector<std::size_t> keep;
      for (std::size_t a = 0; a < i; ++a) keep.push_back(a);
      for (std::size_t b = 0; b < j; ++b) keep.push_back(N + b);
      keep.push_back(N + M);
      keep.push_back(N + M + 1);
      const auto sigma = Partition::generated_by(mask.space, keep);
      std::array<RandomVariable, 4> frac;
      for (std::size_t l = 0; l < 4; ++l)
        frac[l] = cond_expect(mask.indicator(i, j, kLabels[l]), sigma);
      const auto& fij = f.at(i, j);
      std::array<std::vector<double>, 4> vals;
      for (auto& v : vals) v.assign(os.size(), 0.0);
      std::vector<std::size_t> mc(ms.coordinates());
      for (std::size_t w = 0; w < os.size(); ++w) {
        const auto x = os.coordinates_of(w);  // x_0..x_N, y_0..y_M
        for (std::size_t a = 0; a < N; ++a) mc[a] = x[a];
        for (std::size_t b = 0; b < M; ++b) mc[N + b] = x[N + 1 + b];
        mc[N + M] = x[i];
        mc[N + M + 1] = x[N + 1 + j];
        const std::size_t m = ms.atom_of(mc);
        for (std::size_t l = 0; l < 4; ++l)
          if (frac[l][m] >= kThreshold - 1e-12) vals[l][w] = fij[w];
      }
      for (std::size_t l = 0; l < 4; ++l)
        parts[l][cell] = RandomVariable(filt.space(), std::move(vals[l]));
    }
  return finish(AdaptedField(f.filtration(), std::move(parts[0])),
                AdaptedField(f.filtration(), std::move(parts[1])),
                AdaptedField(f.filtration(), std::move(parts[2])),
                AdaptedField(f.filtration(), std::move(parts[3])), f.square_norm(), mask.mode);
}

DGDecomposition normalize_overlaps(const DGDecomposition& dec, const AdaptedField& f) {
  const auto& fp = f.filtration();
  require(dec.alpha.filtration() == fp, "decomposition and field differ",
          ErrorCode::SpaceMismatch);
  std::array<std::vector<RandomVariable>, 4> out;
  for (std::size_t c = 0; c < f.entries().size(); ++c) {
    const auto& fc = f.entries()[c];
    std::array<std::vector<double>, 4> vals;
    for (auto& v : vals) v.assign(fc.size(), 0.0);
    for (std::size_t w = 0; w < fc.size(); ++w) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += dec.part(k).entries()[c][w];
      require(std::abs(s) >= std::abs(fc[w]), "parts violate the lattice condition");
      if (s == 0.0) continue;
      const double m = fc[w] / s;
      for (std::size_t k = 0; k < 4; ++k) vals[k][w] = m * dec.part(k).entries()[c][w];
    }
    for (std::size_t k = 0; k < 4; ++k) out[k].emplace_back(fc.space(), std::move(vals[k]));
  }
  return finish(AdaptedField(fp, std::move(out[0])), AdaptedField(fp, std::move(out[1])),
                AdaptedField(fp, std::move(out[2])), AdaptedField(fp, std::move(out[3])),
                dec.lhs, dec.mask_mode);
}

ProjectedDecomposition project_martingale_differences(const DGDecomposition& dec) {
  const auto& fp = dec.alpha.filtration();
  const auto& filt = *fp;
  std::array<AdaptedField, 4> out;
  for (std::size_t k = 0; k < 4; ++k) {
    std::vector<RandomVariable> e;
    for (std::size_t i = 0; i <= filt.N(); ++i)
      for (std::size_t j = 0; j <= filt.M(); ++j) e.push_back(delta(dec.part(k).at(i, j), filt, i, j));
    out[k] = AdaptedField(fp, std::move(e));
  }
  ProjectedDecomposition p;
  p.dec = finish(out[0], out[1], out[2], out[3], dec.lhs, dec.mask_mode);
  const auto before = dec.terms.as_array(), after = p.dec.terms.as_array();
  for (std::size_t k = 0; k < 4; ++k)
    p.inflation[k] = before[k] > 0.0 ? after[k] / before[k] : (after[k] > 0.0 ? INFINITY : 1.0);
  return p;
}

std::string to_json(const DGDecomposition& d) {
  nlohmann::ordered_json j;
  j["tA"] = d.terms.tA;
  j["tB"] = d.terms.tB;
  j["tC"] = d.terms.tC;
  j["tD"] = d.terms.tD;
  j["ratio"] = d.achieved_ratio;
  j["mask_mode"] = to_string(d.mask_mode);
  return j.dump();
}

bool mask_partition_holds(const FourSummandMask& mask) {
  for (std::size_t i = 0; i <= mask.N; ++i)
    for (std::size_t j = 0; j <= mask.M; ++j) {
      RandomVariable s(mask.space);
      for (MaskLabel l : kLabels) s += mask.indicator(i, j, l);
      for (double v : s.values())
        if (v != 1.0) return false;
    }
  return true;
}

bool lattice_condition_holds(const DGDecomposition& d, const AdaptedField& f) {
  for (std::size_t c = 0; c < f.entries().size(); ++c) {
    const auto& fc = f.entries()[c];
    for (std::size_t w = 0; w < fc.size(); ++w) {
      const double s = d.alpha.entries()[c][w] + d.beta.entries()[c][w] +
                       d.gamma.entries()[c][w] + d.delta.entries()[c][w];
      if (std::abs(s) < std::abs(fc[w])) return false;
    }
  }
  return true;
}

MartingaleDecompositionReport decompose_martingale(const FiltrationPtr& filt,
                                                   const RandomVariable& F, MaskMode mode,
                                                   std::uint64_t seed, unsigned jobs) {
  MartingaleDecompositionReport r;
  const auto f = AdaptedField::martingale_differences(filt, F);
  const auto d = decouple_2p(f);
  r.mask = four_summand_partition(d, mode, seed, jobs);
  r.raw = davis_garsia_2p(f, r.mask);
  const auto h = hardy_norms(F, *filt);
  r.h1S = h.h1S;
  r.h1star = h.h1star;
  r.mask_ok = mask_partition_holds(r.mask);
  r.lattice_ok = lattice_condition_holds(r.raw, f);
  if (!r.lattice_ok) return r;
  r.exact = normalize_overlaps(r.raw, f);
  r.projected = project_martingale_differences(r.exact);
  for (std::size_t k = 0; k < 4; ++k)
    r.part_h1star[k] = hardy_norms(r.projected.dec.part(k).sum(), *filt).h1star;
  r.reconstruction_ok = true;
  for (std::size_t c = 0; c < filt->cells(); ++c) {
    RandomVariable s(filt->space());
    for (std::size_t k = 0; k < 4; ++k) s += r.projected.dec.part(k).entries()[c];
    if ((s - f.entries()[c]).max_abs() > 1e-12 * (1.0 + f.entries()[c].max_abs()))
      r.reconstruction_ok = false;
  }
  return r;
}

}  // namespace mhl
