#include <doctest.h>

#include <cmath>
#include <random>

#include "mhl/decoupling.hpp"
#include "mhl/error.hpp"
#include "support.hpp"

using namespace mhl;
using namespace mhl::testing;

namespace {

std::vector<RandomVariable> random_adapted_1p(const Filtration1& f, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<RandomVariable> out;
  for (const auto& p : f.levels()) {
    std::vector<double> block(p.blocks());
    for (double& v : block) v = g(rng);
    std::vector<double> vals(p.space()->size());
    for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = block[p.block_of(k)];
    out.emplace_back(p.space(), std::move(vals));
  }
  return out;
}

// Oracle: E sqrt(Σ e²) over the fully materialized enlarged space.
double brute_rhs(const DecoupledField& d) {
  const auto big = d.materialize();
  std::vector<double> sq(big->size(), 0.0);
  for (std::size_t k = 0; k < d.entries(); ++k) {
    const auto e = d.entry(k, big);
    for (std::size_t a = 0; a < sq.size(); ++a) sq[a] += e[a] * e[a];
  }
  double total = 0.0;
  for (std::size_t a = 0; a < sq.size(); ++a) total += big->weight(a) * std::sqrt(sq[a]);
  return total;
}

}  // namespace

TEST_CASE("decouple_1p") {
  const auto filt = canonical_1p(coin(), 2);
  std::vector<RandomVariable> consts;
  for (int k = 0; k < 3; ++k) consts.push_back(RandomVariable::constant(filt.space(), k - 0.5));
  const auto dc = decouple_1p(filt, consts);
  const auto big = dc.materialize();
  CHECK(big->size() == 64);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto ek = dc.entry(k, big);
    for (double v : ek.values()) CHECK(v == static_cast<double>(k) - 0.5);
  }
  CHECK(dc.lhs() == dc.rhs());

  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto fs = random_adapted_1p(filt, rng);
    const auto d = decouple_1p(filt, fs);
    const auto enlarged = d.materialize();
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(d.diagonal(k).values() == fs[k].values());
      // depends only on (x_{<k}, η_k)
      std::vector<std::size_t> axes;
      for (std::size_t a = 0; a < k; ++a) axes.push_back(a);
      axes.push_back(3 + k);
      CHECK(Partition::generated_by(enlarged, axes).is_measurable(d.entry(k, enlarged)));
    }
    CHECK(std::abs(d.rhs() - brute_rhs(d)) <= 1e-12);
    double lhs = 0.0;
    for (std::size_t a = 0; a < filt.space()->size(); ++a) {
      double s = 0.0;
      for (const auto& f : fs) s += f[a] * f[a];
      lhs += filt.space()->weight(a) * std::sqrt(s);
    }
    CHECK(std::abs(d.lhs() - lhs) <= 1e-12);
    // 1-homogeneous on both sides
    std::vector<RandomVariable> scaled;
    for (const auto& f : fs) scaled.push_back(f * -3.0);
    const auto ds = decouple_1p(filt, scaled);
    CHECK(ds.rhs() / ds.lhs() == doctest::Approx(d.rhs() / d.lhs()).epsilon(1e-13));
  }

  // coordinate-only entries: identical integrals
  std::vector<RandomVariable> own;
  for (std::size_t k = 0; k < 3; ++k) {
    const double table[] = {0.3 * k - 1.0, 2.0 + k};
    own.push_back(RandomVariable::coordinate(filt.space(), k, table));
  }
  const auto dd = decouple_1p(filt, own);
  CHECK(dd.lhs() == dd.rhs());

  // errors
  auto bad = consts;
  const double table[] = {1.0, 2.0};
  bad[0] = RandomVariable::coordinate(filt.space(), 2, table);
  CHECK_THROWS_AS(decouple_1p(filt, bad), Error);
  Filtration1 odd(filt.space(), {Partition::trivial(filt.space()), filt.at(1), filt.at(2)});
  CHECK_THROWS_AS(decouple_1p(odd, consts), Error);
}

TEST_CASE("decouple_2p") {
  auto filt = std::make_shared<const Filtration2>(canonical_2p(coin(), 1, 1));
  std::mt19937_64 rng(2);

  // single nonzero f_{0,0} on (x_0, y_0)
  std::vector<RandomVariable> e(4, RandomVariable(filt->space()));
  std::vector<double> v(filt->space()->size());
  for (std::size_t a = 0; a < v.size(); ++a)
    v[a] = 1.0 + filt->space()->coordinate(a, 0) + 3.0 * filt->space()->coordinate(a, 2);
  e[0] = RandomVariable(filt->space(), v);
  const auto single = decouple_2p(AdaptedField(filt, e));
  CHECK(single.lhs() == single.rhs());

  const auto constant = decouple_2p(AdaptedField(
      filt, std::vector<RandomVariable>(4, RandomVariable::constant(filt->space(), 0.7))));
  CHECK(constant.lhs() == constant.rhs());

  for (int t = 0; t < 10; ++t) {
    const auto f = random_adapted_field(filt, rng);
    const auto d = decouple_2p(f);
    CHECK(d.factors().size() == 8);
    const auto big = d.materialize();
    for (std::size_t i = 0; i <= 1; ++i)
      for (std::size_t j = 0; j <= 1; ++j) {
        const std::size_t k = filt->index(i, j);
        CHECK(d.diagonal(k).values() == f.at(i, j).values());
        // ((x_{<i}, η_i), (y_{<j}, θ_j)) with x at 0..1, y at 2..3, η at 4..5, θ at 6..7
        std::vector<std::size_t> axes;
        for (std::size_t a = 0; a < i; ++a) axes.push_back(a);
        axes.push_back(4 + i);
        for (std::size_t b = 0; b < j; ++b) axes.push_back(2 + b);
        axes.push_back(6 + j);
        CHECK(Partition::generated_by(big, axes).is_measurable(d.entry(k, big)));
      }
    CHECK(std::abs(d.rhs() - brute_rhs(d)) <= 1e-12);
    CHECK(d.lhs() == doctest::Approx(f.square_norm()).epsilon(1e-13));
  }

  auto uni = std::make_shared<const Filtration2>(
      universal_2p(UniversalFiltrationSpec{{{coin(), coin()}, {coin(), coin()}}}));
  CHECK_THROWS_AS(decouple_2p(AdaptedField::zero(uni)), Error);
}

TEST_CASE("estimate_decoupling_constants") {
  DecouplingFamily fam;
  fam.kind = DecouplingFamilyKind::Constant;
  auto env = estimate_decoupling_constants(fam, 20, 3);
  CHECK(env.min_ratio == 1.0);
  CHECK(env.max_ratio == 1.0);

  fam.kind = DecouplingFamilyKind::CoordinateOnly;
  env = estimate_decoupling_constants(fam, 20, 3);
  CHECK(env.min_ratio == 1.0);
  CHECK(env.max_ratio == 1.0);
  fam.two_parameter = true;
  fam.N = 1;
  fam.M = 1;
  env = estimate_decoupling_constants(fam, 10, 3);
  CHECK(env.min_ratio == 1.0);
  CHECK(env.max_ratio == 1.0);

  fam.kind = DecouplingFamilyKind::RandomAdapted;
  const auto a = estimate_decoupling_constants(fam, 40, 11, 1);
  const auto b = estimate_decoupling_constants(fam, 40, 11, 4);
  REQUIRE(a.samples.size() == 40);
  for (std::size_t t = 0; t < 40; ++t) {
    CHECK(a.samples[t].trial == t);
    CHECK(a.samples[t].ratio == b.samples[t].ratio);
  }
  CHECK(a.min_ratio > 0.0);
  CHECK(std::isfinite(a.max_ratio));
  MESSAGE("two-parameter decoupling envelope [" << a.min_ratio << ", " << a.max_ratio << "]");

  CHECK_THROWS_AS(estimate_decoupling_constants(fam, 0, 1), Error);
}
