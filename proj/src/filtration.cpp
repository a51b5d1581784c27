#include "mhl/filtration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "mhl/error.hpp"

namespace mhl {

Filtration1::Filtration1(SpacePtr space, std::vector<Partition> levels)
    : space_(std::move(space)), levels_(std::move(levels)) {
  require(!levels_.empty(), "filtration needs at least one level");
  for (std::size_t i = 0; i < levels_.size(); ++i) {
    require(same_space(levels_[i].space(), space_), "filtration level on another space",
            ErrorCode::SpaceMismatch);
    if (i > 0) require(levels_[i].refines(levels_[i - 1]), "filtration is not increasing");
  }
}

Filtration2::Filtration2(SpacePtr space, std::size_t N, std::size_t M,
                         std::vector<Partition> grid, bool product_type)
    : space_(std::move(space)), N_(N), M_(M), grid_(std::move(grid)),
      product_type_(product_type) {
  require(grid_.size() == (N_ + 1) * (M_ + 1), "grid shape mismatch");
  for (std::size_t i = 0; i <= N_; ++i) {
    for (std::size_t j = 0; j <= M_; ++j) {
      const auto& p = grid_[index(i, j)];
      require(same_space(p.space(), space_), "grid partition on another space",
              ErrorCode::SpaceMismatch);
      if (i > 0) require(p.refines(grid_[index(i - 1, j)]), "grid not increasing in i");
      if (j > 0) require(p.refines(grid_[index(i, j - 1)]), "grid not increasing in j");
    }
  }
}

Filtration2 Filtration2::from_1p(const Filtration1& f) {
  return Filtration2(f.space(), f.N(), 0, f.levels(), false);
}

Filtration2 Filtration2::with_f4(F4Report r) const {
  Filtration2 copy = *this;
  copy.f4_ = r;
  return copy;
}

Filtration1 Filtration2::row(std::size_t i) const {
  require(i <= N_, "row out of range", ErrorCode::OutOfRange);
  std::vector<Partition> levels;
  for (std::size_t j = 0; j <= M_; ++j) levels.push_back(grid_[index(i, j)]);
  return Filtration1(space_, std::move(levels));
}

Filtration1 Filtration2::column(std::size_t j) const {
  require(j <= M_, "column out of range", ErrorCode::OutOfRange);
  std::vector<Partition> levels;
  for (std::size_t i = 0; i <= N_; ++i) levels.push_back(grid_[index(i, j)]);
  return Filtration1(space_, std::move(levels));
}

Filtration2 Filtration2::truncated(std::size_t N, std::size_t M) const {
  require(N <= N_ && M <= M_, "truncation larger than grid", ErrorCode::OutOfRange);
  std::vector<Partition> g;
  for (std::size_t i = 0; i <= N; ++i)
    for (std::size_t j = 0; j <= M; ++j) g.push_back(grid_[index(i, j)]);
  return Filtration2(space_, N, M, std::move(g), product_type_);
}

Filtration1 canonical_1p(const FiniteProbSpace& base, std::size_t N) {
  auto space = ProductSpace::power(base, N + 1);
  std::vector<Partition> levels;
  std::vector<std::size_t> axes;
  for (std::size_t i = 0; i <= N; ++i) {
    axes.push_back(i);
    levels.push_back(Partition::generated_by(space, axes));
  }
  return Filtration1(space, std::move(levels));
}

Filtration2 canonical_2p(const FiniteProbSpace& base, std::size_t N, std::size_t M) {
  auto space = ProductSpace::power(base, N + M + 2);
  std::vector<Partition> grid;
  for (std::size_t i = 0; i <= N; ++i) {
    for (std::size_t j = 0; j <= M; ++j) {
      std::vector<std::size_t> axes;
      for (std::size_t k = 0; k <= i; ++k) axes.push_back(k);
      for (std::size_t l = 0; l <= j; ++l) axes.push_back(N + 1 + l);
      grid.push_back(Partition::generated_by(space, axes));
    }
  }
  Filtration2 f(space, N, M, std::move(grid), true);
  return f.with_f4(check_f4(f));
}

Filtration2 universal_2p(const UniversalFiltrationSpec& spec, std::size_t N, std::size_t M) {
  require(spec.factors.size() >= N + 1, "grid shape mismatch: too few rows");
  for (const auto& row : spec.factors)
    require(row.size() == spec.factors.front().size(), "grid shape mismatch: ragged rows");
  require(spec.factors.front().size() >= M + 1, "grid shape mismatch: too few columns");
  std::vector<FiniteProbSpace> factors;
  for (std::size_t k = 0; k <= N; ++k)
    for (std::size_t l = 0; l <= M; ++l) factors.push_back(spec.factors[k][l]);
  auto space = ProductSpace::make(std::move(factors));
  std::vector<Partition> grid;
  for (std::size_t i = 0; i <= N; ++i) {
    for (std::size_t j = 0; j <= M; ++j) {
      std::vector<std::size_t> axes;
      for (std::size_t k = 0; k <= i; ++k)
        for (std::size_t l = 0; l <= j; ++l) axes.push_back(k * (M + 1) + l);
      grid.push_back(Partition::generated_by(space, axes));
    }
  }
  Filtration2 f(space, N, M, std::move(grid), false);
  return f.with_f4(check_f4(f));
}

Filtration2 universal_2p(const UniversalFiltrationSpec& spec) {
  require(!spec.factors.empty() && !spec.factors.front().empty(), "empty factor grid");
  return universal_2p(spec, spec.factors.size() - 1, spec.factors.front().size() - 1);
}

namespace {

// max |E_{i,M} 1_B - E_{i,j} 1_B| over blocks B of F_{N,j}, evaluated block
// by block of F_{i,j} (both sides vanish outside the block containing B).
double commutation_violation(const Partition& row_margin, const Partition& col_margin,
                             const Partition& cell) {
  const auto& space = cell.space();
  const auto a_mass = row_margin.block_weights();
  const auto b_mass = col_margin.block_weights();
  const auto c_mass = cell.block_weights();
  const auto c_members = cell.block_members();
  double worst = 0.0;
  for (std::size_t cb = 0; cb < c_members.size(); ++cb) {
    const auto& atoms = c_members[cb];
    std::unordered_map<std::size_t, std::vector<std::size_t>> b_atoms;
    for (auto k : atoms) b_atoms[col_margin.block_of(k)].push_back(k);
    for (const auto& [b, members] : b_atoms) {
      std::unordered_map<std::size_t, double> joint;
      for (auto k : members) joint[row_margin.block_of(k)] += space->weight(k);
      const double rhs = b_mass[b] / c_mass[cb];
      for (auto k : atoms) {
        const auto a = row_margin.block_of(k);
        const auto it = joint.find(a);
        const double lhs = it == joint.end() ? 0.0 : it->second / a_mass[a];
        worst = std::max(worst, std::abs(lhs - rhs));
      }
    }
  }
  return worst;
}

}  // namespace

F4Report check_f4(const Filtration2& filt, double tol) {
  F4Report r;
  const auto N = static_cast<std::ptrdiff_t>(filt.N());
  const auto M = static_cast<std::ptrdiff_t>(filt.M());
  bool commutation_holds = true;
  for (std::ptrdiff_t i = 0; i <= N; ++i) {
    for (std::ptrdiff_t j = 0; j <= M; ++j) {
      const auto& rowm = filt.at(i, M);
      const auto& colm = filt.at(N, j);
      const auto& cell = filt.at(i, j);
      const auto ind = check_cond_independence(rowm, colm, cell, tol);
      r.violation = std::max(r.violation, ind.violation);
      const double cv = commutation_violation(rowm, colm, cell);
      r.commutation_violation = std::max(r.commutation_violation, cv);
      if (cv > tol) commutation_holds = false;
    }
  }
  r.holds = r.violation <= tol;
  if (r.holds != commutation_holds &&
      std::abs(r.violation - r.commutation_violation) > 1e-9)
    fail(ErrorCode::Internal, "(F4) routes disagree: independence " +
                                  std::to_string(r.violation) + " vs commutation " +
                                  std::to_string(r.commutation_violation));
  return r;
}

bool satisfies_join_property(const Filtration2& filt) {
  const auto N = static_cast<std::ptrdiff_t>(filt.N());
  const auto M = static_cast<std::ptrdiff_t>(filt.M());
  for (std::ptrdiff_t i = 1; i <= N; ++i)
    for (std::ptrdiff_t j = 1; j <= M; ++j)
      if (!(join(filt.at(i - 1, j), filt.at(i, j - 1)) == filt.at(i, j))) return false;
  return true;
}

namespace {

double step_ratio(const Partition& coarse, const Partition& fine) {
  const auto cw = coarse.block_weights();
  const auto fw = fine.block_weights();
  double worst = 1.0;
  for (std::size_t k = 0; k < fine.block_map().size(); ++k)
    worst = std::max(worst, cw[coarse.block_of(k)] / fw[fine.block_of(k)]);
  return worst;
}

}  // namespace

double regularity_constant(const Filtration1& filt) {
  double c = 1.0;
  for (std::size_t i = 0; i < filt.N(); ++i)
    c = std::max(c, step_ratio(filt.levels()[i], filt.levels()[i + 1]));
  return c;
}

double regularity_constant(const Filtration2& filt) {
  double c = 1.0;
  const auto N = static_cast<std::ptrdiff_t>(filt.N());
  const auto M = static_cast<std::ptrdiff_t>(filt.M());
  for (std::ptrdiff_t i = 0; i <= N; ++i) {
    for (std::ptrdiff_t j = 0; j <= M; ++j) {
      if (i < N) c = std::max(c, step_ratio(filt.at(i, j), filt.at(i + 1, j)));
      if (j < M) c = std::max(c, step_ratio(filt.at(i, j), filt.at(i, j + 1)));
    }
  }
  return c;
}

namespace {

struct DoobAscent {
  std::span<const Partition> family;
  double p;
  const DoobOptions& opts;

  double norm_p(const std::vector<double>& f, const std::vector<double>& w) const {
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += w[k] * std::pow(f[k], p);
    return std::pow(s, 1.0 / p);
  }

  // Nonlinear power iteration for ‖Mf‖_p/‖f‖_p over f >= 0. With the argmax
  // assignment frozen, Mf is a positive linear operator and the step is the
  // classical p-norm power step, so the ratio never decreases.
  double run(std::vector<double> f) const {
    const auto& space = family.front().space();
    const auto& w = space->weights();
    const std::size_t n = f.size();
    double best = 0.0, prev = -1.0;
    std::vector<std::vector<double>> cond(family.size());
    for (std::size_t it = 0; it < opts.max_iterations; ++it) {
      const double fn = norm_p(f, w);
      if (!(fn > 0.0)) break;
      for (double& v : f) v /= fn;
      RandomVariable fv(space, f);
      for (std::size_t s = 0; s < family.size(); ++s) cond[s] = cond_expect(fv, family[s]).values();
      std::vector<double> m(n, 0.0);
      std::vector<std::size_t> arg(n, 0);
      for (std::size_t k = 0; k < n; ++k)
        for (std::size_t s = 0; s < family.size(); ++s)
          if (cond[s][k] > m[k]) { m[k] = cond[s][k]; arg[k] = s; }
      const double ratio = norm_p(m, w);
      best = std::max(best, ratio);
      if (prev > 0.0 && std::abs(ratio - prev) <= opts.tolerance * ratio) break;
      prev = ratio;
      std::vector<double> h(n, 0.0);
      for (std::size_t s = 0; s < family.size(); ++s) {
        std::vector<double> g(n, 0.0);
        bool any = false;
        for (std::size_t k = 0; k < n; ++k)
          if (arg[k] == s) { g[k] = std::pow(m[k], p - 1.0); any = true; }
        if (!any) continue;
        const auto eg = cond_expect(RandomVariable(space, std::move(g)), family[s]);
        for (std::size_t k = 0; k < n; ++k) h[k] += eg[k];
      }
      for (std::size_t k = 0; k < n; ++k) f[k] = std::pow(h[k], 1.0 / (p - 1.0));
    }
    return best;
  }
};

void check_family(std::span<const Partition> family, double p) {
  require(p > 1.0, "Doob constant needs p > 1");
  require(!family.empty(), "empty sigma-algebra family");
  for (const auto& s : family)
    require(same_space(s.space(), family.front().space()), "family on different spaces",
            ErrorCode::SpaceMismatch);
}

std::vector<double> random_start(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 4.0);
  const double spread = u(rng);
  std::vector<double> f(n);
  for (double& v : f) v = std::exp(spread * g(rng));
  return f;
}

}  // namespace

double doob_trial(std::span<const Partition> family, double p, std::uint64_t seed,
                  const DoobOptions& opts) {
  check_family(family, p);
  DoobAscent ascent{family, p, opts};
  const double r = ascent.run(random_start(family.front().space()->size(), seed));
  return r > 0.0 ? 1.0 / r : 1.0;
}

DoobEstimate doob_constant(std::span<const Partition> family, double p,
                           std::optional<int> directions, const DoobOptions& opts) {
  check_family(family, p);
  DoobEstimate est;
  if (directions) est.certified = std::pow(1.0 - 1.0 / p, *directions);
  DoobAscent ascent{family, p, opts};
  const std::size_t n = family.front().space()->size();
  double best = 0.0;
  for (std::size_t r = 0; r < opts.restarts; ++r)
    best = std::max(best, ascent.run(random_start(n, opts.seed + r)));
  // Point masses are the classical extremals for Doob-type ratios.
  if (n <= 256) {
    for (std::size_t k = 0; k < n; ++k) {
      std::vector<double> f(n, 1e-9);
      f[k] = 1.0;
      best = std::max(best, ascent.run(std::move(f)));
    }
  }
  est.restarts = opts.restarts;
  est.empirical = best > 0.0 ? 1.0 / best : 1.0;
  return est;
}

DoobEstimate doob_constant(const Filtration1& filt, double p, const DoobOptions& opts) {
  return doob_constant(filt.levels(), p, filt.N() > 0 ? 1 : 0, opts);
}

DoobEstimate doob_constant(const Filtration2& filt, double p, const DoobOptions& opts) {
  std::optional<int> d;
  const bool f4 = filt.is_product_type() || (filt.f4() && filt.f4()->holds);
  if (f4) d = static_cast<int>(filt.N() > 0) + static_cast<int>(filt.M() > 0);
  else if (filt.M() == 0) d = filt.N() > 0 ? 1 : 0;
  else if (filt.N() == 0) d = 1;
  return doob_constant(filt.grid(), p, d, opts);
}

namespace {

FiniteProbSpace factor_from_json(const nlohmann::json& j) {
  if (j.is_array()) return FiniteProbSpace::from_weights(j.get<std::vector<double>>());
  require(j.is_object() && j.contains("weights"), "factor needs a weights list");
  auto weights = j.at("weights").get<std::vector<double>>();
  if (!j.contains("atoms")) return FiniteProbSpace::from_weights(std::move(weights));
  std::vector<std::string> labels;
  for (const auto& a : j.at("atoms")) labels.push_back(a.is_string() ? a.get<std::string>() : a.dump());
  return FiniteProbSpace(std::move(labels), std::move(weights));
}

}  // namespace

Filtration2 filtration_from_json(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("filtration spec: ") + e.what());
  }
  try {
    if (j.contains("universal_grid")) {
      UniversalFiltrationSpec spec;
      for (const auto& row : j.at("universal_grid")) {
        spec.factors.emplace_back();
        for (const auto& f : row) spec.factors.back().push_back(factor_from_json(f));
      }
      return universal_2p(spec);
    }
    nlohmann::json base = {{"weights", j.at("base_weights")}};
    if (j.contains("base_atoms")) base["atoms"] = j.at("base_atoms");
    return canonical_2p(factor_from_json(base), j.at("N").get<std::size_t>(),
                        j.at("M").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("filtration spec: ") + e.what());
  }
}

}  // namespace mhl
