#include "mhl/decoupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mhl/error.hpp"
#include "parallel.hpp"

namespace mhl {

namespace {

bool uniform_factors(const ProductSpace& s) {
  for (const auto& f : s.factors())
    if (!(f == s.factor(0))) return false;
  return s.coordinates() > 0;
}

std::vector<std::size_t> prefix_axes(std::size_t i, std::size_t offset, std::size_t j) {
  std::vector<std::size_t> axes;
  for (std::size_t k = 0; k <= i; ++k) axes.push_back(k);
  for (std::size_t l = 0; l <= j; ++l) axes.push_back(offset + l);
  return axes;
}

}  // namespace

std::vector<std::size_t> dependent_axes(const RandomVariable& f) {
  const auto& s = *f.space();
  std::vector<std::size_t> out;
  for (std::size_t a = 0; a < s.coordinates(); ++a) {
    const std::size_t stride = s.stride(a), n = s.factor(a).size();
    bool depends = false;
    for (std::size_t k = 0; k < f.size() && !depends; ++k) {
      const std::size_t c = s.coordinate(k, a);
      if (c + 1 < n && f[k] != f[k + stride]) depends = true;
    }
    if (depends) out.push_back(a);
  }
  return out;
}

double integrate_over(const std::vector<FiniteProbSpace>& factors,
                      const std::vector<std::size_t>& axes,
                      const std::function<double(std::span<const std::size_t>)>& g) {
  std::vector<std::size_t> coords(factors.size(), 0);
  const std::size_t m = axes.size();
  double total = 0.0;
  for (;;) {
    double w = 1.0;
    for (std::size_t a : axes) w *= factors[a].weight(coords[a]);
    total += w * g(coords);
    std::size_t pos = m;
    while (pos > 0) {
      const std::size_t a = axes[pos - 1];
      if (++coords[a] < factors[a].size()) break;
      coords[a] = 0;
      --pos;
    }
    if (pos == 0) break;
  }
  return total;
}

std::optional<FiniteProbSpace> canonical_base(const Filtration1& filt) {
  const auto& s = *filt.space();
  if (!uniform_factors(s) || s.coordinates() != filt.size()) return std::nullopt;
  for (std::size_t i = 0; i < filt.size(); ++i) {
    std::vector<std::size_t> x(i + 1);
    for (std::size_t k = 0; k <= i; ++k) x[k] = k;
    if (!(filt.at(static_cast<std::ptrdiff_t>(i)) == Partition::generated_by(filt.space(), x)))
      return std::nullopt;
  }
  return s.factor(0);
}

std::optional<FiniteProbSpace> canonical_base(const Filtration2& filt) {
  const auto& s = *filt.space();
  const std::size_t N = filt.N(), M = filt.M();
  if (!uniform_factors(s) || s.coordinates() != N + M + 2) return std::nullopt;
  for (std::size_t i = 0; i <= N; ++i)
    for (std::size_t j = 0; j <= M; ++j)
      if (!(filt.grid()[filt.index(i, j)] ==
            Partition::generated_by(filt.space(), prefix_axes(i, N + 1, j))))
        return std::nullopt;
  return s.factor(0);
}

double DecoupledField::value(std::size_t k, std::span<const std::size_t> coords) const {
  const auto& src = source_[k];
  const auto& s = *original_space_;
  std::size_t atom = 0;
  for (std::size_t a = 0; a < src.size(); ++a) atom += coords[src[a]] * s.stride(a);
  return original_[k][atom];
}

std::size_t DecoupledField::enlarged_size() const {
  std::size_t n = 1;
  for (const auto& f : factors_) {
    if (n > std::numeric_limits<std::size_t>::max() / f.size())
      return std::numeric_limits<std::size_t>::max();
    n *= f.size();
  }
  return n;
}

SpacePtr DecoupledField::materialize() const {
  require(enlarged_size() <= kMaterializeLimit, "enlarged space too large to materialize",
          ErrorCode::OutOfRange);
  return ProductSpace::make(factors_);
}

RandomVariable DecoupledField::entry(std::size_t k, const SpacePtr& enlarged) const {
  require(enlarged && enlarged->factors() == factors_, "not the enlarged space of this field",
          ErrorCode::SpaceMismatch);
  std::vector<double> v(enlarged->size());
  for (std::size_t atom = 0; atom < v.size(); ++atom)
    v[atom] = value(k, enlarged->coordinates_of(atom));
  return RandomVariable(enlarged, std::move(v));
}

RandomVariable DecoupledField::diagonal(std::size_t k) const {
  const auto& s = *original_space_;
  const std::size_t n0 = s.coordinates();
  std::vector<double> v(s.size());
  std::vector<std::size_t> coords(factors_.size());
  for (std::size_t atom = 0; atom < v.size(); ++atom) {
    const auto x = s.coordinates_of(atom);
    std::copy(x.begin(), x.end(), coords.begin());
    // fresh axis n0 + a copies original axis a
    for (std::size_t a = n0; a < coords.size(); ++a) coords[a] = x[a - n0];
    v[atom] = value(k, coords);
  }
  return RandomVariable(original_space_, std::move(v));
}

double DecoupledField::lhs() const {
  const auto& s = *original_space_;
  return integrate_over(s.factors(), original_used_, [&](std::span<const std::size_t> c) {
    const std::size_t atom = s.atom_of(c);
    double sq = 0.0;
    for (const auto& f : original_) sq += f[atom] * f[atom];
    return std::sqrt(sq);
  });
}

double DecoupledField::rhs() const {
  std::vector<std::size_t> axes;
  for (const auto& u : used_) axes.insert(axes.end(), u.begin(), u.end());
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  return integrate_over(factors_, axes, [&](std::span<const std::size_t> c) {
    double sq = 0.0;
    for (std::size_t k = 0; k < original_.size(); ++k) {
      const double v = value(k, c);
      sq += v * v;
    }
    return std::sqrt(sq);
  });
}

void DecoupledField::finish() {
  used_.clear();
  std::vector<std::size_t> all;
  for (std::size_t k = 0; k < original_.size(); ++k) {
    const auto dep = dependent_axes(original_[k]);
    std::vector<std::size_t> mapped;
    for (std::size_t a : dep) mapped.push_back(source_[k][a]);
    std::sort(mapped.begin(), mapped.end());
    used_.push_back(std::move(mapped));
    all.insert(all.end(), dep.begin(), dep.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  original_used_ = std::move(all);
}

DecoupledField decouple_1p(const Filtration1& filt, const std::vector<RandomVariable>& fs) {
  const auto base = canonical_base(filt);
  require(base.has_value(), "decoupling needs a canonical product filtration");
  require(fs.size() == filt.size(), "need one entry per filtration level");
  const std::size_t n = filt.size();
  DecoupledField d;
  d.original_space_ = filt.space();
  d.rows_ = n;
  d.factors_.assign(2 * n, *base);
  for (std::size_t k = 0; k < n; ++k) {
    require(same_space(fs[k].space(), filt.space()), "entry on the wrong space",
            ErrorCode::SpaceMismatch);
    require(filt.at(static_cast<std::ptrdiff_t>(k)).is_measurable(fs[k]), "entry not adapted");
    std::vector<std::size_t> src(n);
    for (std::size_t a = 0; a < n; ++a) src[a] = a == k ? n + k : a;
    d.source_.push_back(std::move(src));
    d.original_.push_back(fs[k]);
  }
  d.finish();
  return d;
}

DecoupledField decouple_2p(const AdaptedField& f) {
  const auto& filt = *f.filtration();
  const auto base = canonical_base(filt);
  require(base.has_value(), "decoupling needs a canonical product filtration");
  const std::size_t N = filt.N(), M = filt.M(), n0 = N + M + 2;
  DecoupledField d;
  d.original_space_ = filt.space();
  d.rows_ = N + 1;
  d.cols_ = M + 1;
  d.factors_.assign(2 * n0, *base);
  // enlarged axes: x_0..x_N, y_0..y_M, η_0..η_N, θ_0..θ_M
  for (std::size_t i = 0; i <= N; ++i)
    for (std::size_t j = 0; j <= M; ++j) {
      std::vector<std::size_t> src(n0);
      for (std::size_t a = 0; a < n0; ++a) src[a] = a;
      src[i] = n0 + i;
      src[N + 1 + j] = n0 + N + 1 + j;
      d.source_.push_back(std::move(src));
      d.original_.push_back(f.at(i, j));
    }
  d.finish();
  return d;
}

namespace {

RandomVariable random_measurable(const Partition& p, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> block(p.blocks());
  for (double& v : block) v = g(rng);
  std::vector<double> vals(p.space()->size());
  for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = block[p.block_of(k)];
  return RandomVariable(p.space(), std::move(vals));
}

// table over the listed axes
RandomVariable random_on_axes(const SpacePtr& s, std::span<const std::size_t> axes,
                              std::mt19937_64& rng) {
  return random_measurable(Partition::generated_by(s, axes), rng);
}

}  // namespace

DecouplingSample decoupling_trial(const DecouplingFamily& fam, std::size_t trial,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed + trial);
  std::normal_distribution<double> g(0.0, 1.0);
  DecouplingSample out;
  out.trial = trial;
  auto entry = [&](const Partition& level, std::span<const std::size_t> own) {
    switch (fam.kind) {
      case DecouplingFamilyKind::Constant:
        return RandomVariable::constant(level.space(), g(rng));
      case DecouplingFamilyKind::CoordinateOnly:
        return random_on_axes(level.space(), own, rng);
      case DecouplingFamilyKind::RandomAdapted:
        break;
    }
    return random_measurable(level, rng);
  };
  std::optional<DecoupledField> d;
  if (fam.two_parameter) {
    auto filt = std::make_shared<const Filtration2>(canonical_2p(fam.base, fam.N, fam.M));
    std::vector<RandomVariable> e;
    for (std::size_t i = 0; i <= fam.N; ++i)
      for (std::size_t j = 0; j <= fam.M; ++j) {
        const std::size_t own[] = {i, fam.N + 1 + j};
        e.push_back(entry(filt->at(static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(j)), own));
      }
    d = decouple_2p(AdaptedField(filt, std::move(e)));
  } else {
    const auto filt = canonical_1p(fam.base, fam.N);
    std::vector<RandomVariable> e;
    for (std::size_t k = 0; k <= fam.N; ++k) {
      const std::size_t own[] = {k};
      e.push_back(entry(filt.at(static_cast<std::ptrdiff_t>(k)), own));
    }
    d = decouple_1p(filt, e);
  }
  out.lhs = d->lhs();
  out.rhs = d->rhs();
  out.ratio = out.lhs > 0.0 ? out.rhs / out.lhs : 1.0;
  return out;
}

DecouplingEnvelope estimate_decoupling_constants(const DecouplingFamily& fam,
                                                 std::size_t trials, std::uint64_t seed,
                                                 unsigned jobs) {
  require(trials >= 1, "empty family: need at least one trial");
  DecouplingEnvelope env;
  env.samples.resize(trials);
  detail::parallel_for(trials, jobs,
                       [&](std::size_t t) { env.samples[t] = decoupling_trial(fam, t, seed); });
  env.min_ratio = std::numeric_limits<double>::infinity();
  env.max_ratio = 0.0;
  for (const auto& s : env.samples) {
    env.min_ratio = std::min(env.min_ratio, s.ratio);
    env.max_ratio = std::max(env.max_ratio, s.ratio);
  }
  return env;
}

}  // namespace mhl
