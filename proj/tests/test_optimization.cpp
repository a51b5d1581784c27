#include <doctest.h>

#include <cmath>
#include <random>

#include "mhl/error.hpp"
#include "mhl/optimization.hpp"
#include "support.hpp"

using namespace mhl;
using namespace mhl::testing;

namespace {

SpacePtr two_atoms(double p0) { return ProductSpace::make({FiniteProbSpace::from_weights({p0, 1.0 - p0})}); }

// I = {0,1} with F_0 trivial and F_1 = everything, J = {0,1}.
WeightSystem random_weights(const SpacePtr& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  WeightSystem ws;
  ws.space = s;
  ws.sigmas = {Partition::trivial(s), Partition::finest(s)};
  ws.J = 2;
  for (int k = 0; k < 4; ++k) ws.w.emplace_back(s, std::vector<double>{u(rng), u(rng)});
  return ws;
}

Sequence random_adapted_sequence(const WeightSystem& ws, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Sequence f;
  for (std::size_t i = 0; i < ws.I(); ++i)
    for (std::size_t j = 0; j < ws.J; ++j) {
      const auto& p = ws.sigmas[i];
      std::vector<double> block(p.blocks());
      for (double& v : block) v = g(rng);
      std::vector<double> vals(ws.space->size());
      for (std::size_t a = 0; a < vals.size(); ++a) vals[a] = block[p.block_of(a)];
      f.emplace_back(ws.space, std::move(vals));
    }
  return f;
}

// E sqrt(Σ (w f)²) directly from the sequences.
double brute_phi(const WeightSystem& ws, const Sequence& f) {
  double t = 0.0;
  for (std::size_t a = 0; a < ws.space->size(); ++a) {
    double s = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) s += std::pow(ws.w[k][a] * f[k][a], 2);
    t += ws.space->weight(a) * std::sqrt(s);
  }
  return t;
}

double brute_pairing(const SpacePtr& s, const Sequence& f, const Sequence& g) {
  double t = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k)
    for (std::size_t a = 0; a < s->size(); ++a) t += s->weight(a) * f[k][a] * g[k][a];
  return t;
}

}  // namespace

TEST_CASE("verify_lemma1") {
  const auto s = two_atoms(0.5);
  std::mt19937_64 rng(5);
  auto ws = random_weights(s, rng);
  const auto f = random_adapted_sequence(ws, rng);

  auto ones = ws;
  for (auto& w : ones.w) w = RandomVariable::constant(s, 1.0);
  const auto one = verify_lemma1(ones, f, 0.7, 0.5);
  CHECK(one.holds);
  CHECK(one.rhs == doctest::Approx(0.49 * 0.5 * one.lhs).epsilon(1e-14));

  auto zeros = ws;
  for (auto& w : zeros.w) w = RandomVariable(s);
  const auto zero = verify_lemma1(zeros, f, 0.3, 0.5);
  CHECK(zero.rhs == 0.0);
  CHECK(zero.holds);

  Filtration1 filt(s, ws.sigmas);
  const double delta = *doob_constant(filt, 2.0).certified;
  CHECK(delta == 0.5);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::size_t held = 0;
  for (int t = 0; t < 10000; ++t) {
    const auto sp = two_atoms(u(rng));
    auto w = random_weights(sp, rng);
    const auto ft = random_adapted_sequence(w, rng);
    const auto r = verify_lemma1(w, ft, 0.25, delta);
    // oracle: the indicator uses E_0 w = E w and E_1 w = w
    double rhs = 0.0;
    for (std::size_t a = 0; a < 2; ++a) {
      double sq = 0.0;
      for (std::size_t k = 0; k < 4; ++k) {
        const double e = k < 2 ? w.w[k].expectation() : w.w[k][a];
        if (e >= 0.25) sq += ft[k][a] * ft[k][a];
      }
      rhs += sp->weight(a) * std::sqrt(sq);
    }
    CHECK(r.lhs == doctest::Approx(brute_phi(w, ft)).epsilon(1e-13));
    CHECK(r.rhs == doctest::Approx(0.0625 * delta * rhs).epsilon(1e-13));
    held += r.holds;
  }
  CHECK(held == 10000);

  auto bad = f;
  bad[0] = RandomVariable(s, {1.0, 2.0});
  CHECK_THROWS_AS(verify_lemma1(ws, bad, 0.25, 0.5), Error);
  bad = f;
  bad.pop_back();
  CHECK_THROWS_AS(verify_lemma1(ws, bad, 0.25, 0.5), Error);
  auto wide = ws;
  wide.w[1] = RandomVariable(s, {1.5, 0.0});
  CHECK_THROWS_AS(verify_lemma1(wide, f, 0.25, 0.5), Error);
}

TEST_CASE("adapted sequence space") {
  const auto s = two_atoms(0.3);
  WeightSystem ws;
  ws.space = s;
  ws.sigmas = {Partition::trivial(s), Partition::finest(s)};
  ws.J = 1;
  ws.w = {RandomVariable(s, {1.0, 0.0}), RandomVariable(s, {0.2, 0.6})};
  // E_0 w_0 = 0.3 ≥ 0.25; w_1 ≥ 0.25 only on the second atom
  const AdaptedSequenceSpace sp(ws, 0.25);
  CHECK(sp.dim() == 2);
  CHECK(sp.support(0, 0).values() == std::vector<double>{1.0, 1.0});
  CHECK(sp.support(1, 0).values() == std::vector<double>{0.0, 1.0});
  const Sequence x{RandomVariable(s, {2.0, 4.0}), RandomVariable(s, {5.0, -1.0})};
  const auto c = sp.project(x);
  CHECK(c[0] == doctest::Approx(0.3 * 2.0 + 0.7 * 4.0));
  CHECK(c[1] == -1.0);
  CHECK_FALSE(sp.contains(x));
  CHECK(sp.contains(sp.to_sequence(c)));
  CHECK(sp.project(sp.to_sequence(c)) == c);
  CHECK(sp.h1_norm()(c) == doctest::Approx(0.3 * std::abs(c[0]) + 0.7 * std::hypot(c[0], c[1])));
}

TEST_CASE("minimize_phi one atom") {
  const auto s = ProductSpace::make({FiniteProbSpace::uniform(1)});
  WeightSystem ws;
  ws.space = s;
  ws.sigmas = {Partition::trivial(s)};
  ws.J = 3;
  ws.w.assign(3, RandomVariable::constant(s, 1.0));
  const AdaptedSequenceSpace sp(ws, 0.5);
  const Sequence g{RandomVariable::constant(s, 0.6), RandomVariable::constant(s, 0.8),
                   RandomVariable::constant(s, 0.0)};
  const auto r = minimize_phi(sp, g);
  CHECK(r.converged);
  CHECK(r.phi == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.lambda == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.minimizer[0][0] == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(r.minimizer[1][0] == doctest::Approx(0.8).epsilon(1e-9));
  CHECK(std::abs(r.minimizer[2][0]) <= 1e-9);

  const auto d = adapted_dual_norm(sp, g);
  CHECK(d.value == doctest::Approx(1.0).epsilon(1e-7));
  CHECK_THROWS_AS(minimize_phi(sp, Sequence(3, RandomVariable(s))), Error);
}

TEST_CASE("minimize_phi single cell") {
  // g lives on one cell; the optimum is min_b E[w 1_b] / |⟨1_b, g⟩|
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.3, 1.0);
  for (int t = 0; t < 20; ++t) {
    const auto filt = canonical_1p(coin(), 2);
    const auto s = filt.space();
    WeightSystem ws;
    ws.space = s;
    ws.sigmas = filt.levels();
    ws.J = 1;
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> v(s->size());
      for (double& x : v) x = u(rng);
      ws.w.emplace_back(s, std::move(v));
    }
    const AdaptedSequenceSpace sp(ws, 0.25);
    auto g = random_adapted_sequence(ws, rng);
    g[0] = RandomVariable(s);
    g[2] = RandomVariable(s);
    const auto r = minimize_phi(sp, g);
    const auto& p = ws.sigmas[1];
    double best = std::numeric_limits<double>::infinity();
    for (const auto& block : p.block_members()) {
      double ew = 0.0, eg = 0.0;
      for (std::size_t a : block) {
        ew += s->weight(a) * ws.w[1][a];
        eg += s->weight(a) * g[1][a];
      }
      best = std::min(best, ew / std::abs(eg));
    }
    CHECK(r.converged);
    CHECK(r.phi == doctest::Approx(best).epsilon(1e-7));
    CHECK(r.lambda == doctest::Approx(r.phi).epsilon(1e-6));
  }
}

TEST_CASE("minimize_phi random instances") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double kappa = 0.25, delta = 0.5;
  int solved = 0;
  for (int t = 0; t < 30; ++t) {
    const auto s = two_atoms(0.5);
    const auto ws = random_weights(s, rng);
    const AdaptedSequenceSpace sp(ws, kappa);
    if (sp.dim() == 0) continue;
    auto g = sp.to_sequence(sp.project(random_adapted_sequence(ws, rng)));
    const double nrm = adapted_dual_norm(sp, g).value;
    for (auto& x : g) x *= 1.0 / nrm;
    const auto r = minimize_phi(sp, g);
    ++solved;
    CHECK(r.converged);
    CHECK(r.residual <= 1e-6);
    CHECK(std::abs(r.lambda - r.phi) <= 1e-6);
    CHECK(sp.contains(r.minimizer));
    CHECK(brute_pairing(s, r.minimizer, g) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(brute_phi(ws, r.minimizer) == doctest::Approx(r.phi).epsilon(1e-12));
    CHECK(r.lambda >= kappa * kappa * delta - 1e-6);

    // first-order optimality along feasible directions
    const Eigen::VectorXd a = sp.block_mass().cwiseProduct(sp.project(g));
    for (int k = 0; k < 100; ++k) {
      Eigen::VectorXd h(static_cast<Eigen::Index>(sp.dim()));
      for (auto& x : h) x = gauss(rng);
      h -= a * (a.dot(h) / a.squaredNorm());
      CHECK(sp.phi(r.coefficients, 0.0) <= sp.phi(r.coefficients + 1e-4 * h, 0.0) + 1e-12);
    }

    // analytic gradient vs central differences
    Eigen::VectorXd c(static_cast<Eigen::Index>(sp.dim()));
    for (auto& x : c) x = gauss(rng);
    const auto grad = sp.phi_gradient(c, 0.0);
    for (Eigen::Index k = 0; k < c.size(); ++k) {
      const double hstep = 1e-6;
      Eigen::VectorXd cp = c, cm = c;
      cp[k] += hstep;
      cm[k] -= hstep;
      const double fd = (sp.phi(cp) - sp.phi(cm)) / (2 * hstep);
      CHECK(std::abs(fd - grad[k]) <= 1e-6 * std::max(1.0, std::abs(grad[k])));
    }
  }
  CHECK(solved > 10);
}

TEST_CASE("dual_norm") {
  GroupNorm l2;
  l2.map = Eigen::MatrixXd::Identity(3, 3);
  l2.groups = {{0, 3, 1.0, PointwiseNorm::L2}};
  const Eigen::Vector3d g(1.0, -2.0, 2.0);
  auto r = dual_norm(l2, g);
  CHECK(r.value == doctest::Approx(3.0).epsilon(1e-7));
  CHECK(r.lower <= r.value);
  CHECK(r.value <= r.upper);
  CHECK(r.upper - r.lower <= 1e-6);
  CHECK(l2(r.witness) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(g.dot(r.witness) == doctest::Approx(r.value).epsilon(1e-12));

  r = dual_norm(l2, Eigen::Vector3d::Zero());
  CHECK(r.value == 0.0);

  GroupNorm l1 = l2;
  l1.groups[0].kind = PointwiseNorm::L1;
  CHECK(dual_norm(l1, g).value == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("hardy dual norm vs mesh") {
  const auto filt = Filtration2::from_1p(canonical_1p(coin(), 1));
  const auto s = filt.space();
  // S f = sqrt(|E_0 f|² + |f − E_0 f|²), F_0 = σ(x_0)
  auto h1S = [](const Eigen::Vector4d& f) {
    double t = 0.0;
    for (int a = 0; a < 4; ++a) {
      const int x0 = a / 2;
      const double e0 = 0.5 * (f[2 * x0] + f[2 * x0 + 1]);
      t += 0.25 * std::hypot(e0, f[a] - e0);
    }
    return t;
  };
  std::mt19937_64 rng(23);
  for (int t = 0; t < 3; ++t) {
    const auto g = random_rv(s, rng);
    auto ratio = [&](const Eigen::Vector4d& f) {
      double e = 0.0;
      for (int a = 0; a < 4; ++a) e += 0.25 * f[a] * g[static_cast<std::size_t>(a)];
      return e / h1S(f);
    };
    // cube-face mesh, then repeated zoom around the best point
    Eigen::Vector4d best = Eigen::Vector4d::Zero();
    double bv = -1.0;
    const int m = 41;
    for (int axis = 0; axis < 4; ++axis)
      for (double sign : {1.0, -1.0})
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j)
            for (int k = 0; k < m; ++k) {
              const double c[3] = {-1.0 + 2.0 * i / (m - 1), -1.0 + 2.0 * j / (m - 1),
                                   -1.0 + 2.0 * k / (m - 1)};
              Eigen::Vector4d f;
              int q = 0;
              for (int d = 0; d < 4; ++d) f[d] = d == axis ? sign : c[q++];
              const double v = ratio(f);
              if (v > bv) {
                bv = v;
                best = f;
              }
            }
    double radius = 2.0 / (m - 1);
    for (int zoom = 0; zoom < 12; ++zoom) {
      const Eigen::Vector4d centre = best;
      const int z = 9;
      for (int i = 0; i < z; ++i)
        for (int j = 0; j < z; ++j)
          for (int k = 0; k < z; ++k)
            for (int l = 0; l < z; ++l) {
              const Eigen::Vector4d off(i, j, k, l);
              const Eigen::Vector4d f =
                  centre + radius * (2.0 * off / (z - 1) - Eigen::Vector4d::Ones());
              if (f.norm() == 0.0) continue;
              const double v = ratio(f);
              if (v > bv) {
                bv = v;
                best = f;
              }
            }
      radius *= 0.5;
    }
    const auto d = hardy_dual_norm(g, filt, HardyKind::SquareH1S, 1e-6);
    CHECK(d.lower <= d.value);
    CHECK(d.value <= d.upper);
    CHECK(bv <= d.upper + 1e-9);
    CHECK(std::abs(d.value - bv) <= 1e-3);
  }
}

TEST_CASE("check_gradlemma") {
  // X = Y = ℓ², V everything, q = 2: both ratios are identically 1
  {
    GradLemmaInstance inst;
    inst.space = ProductSpace::make({FiniteProbSpace::from_weights({0.2, 0.3, 0.5})});
    inst.subspaces = {Eigen::MatrixXd::Identity(3, 3)};
    inst.pX = 2.0;
    inst.q = 2.0;
    inst.C = 0.5;
    auto r = check_gradlemma(inst, 1, 500);
    CHECK(r.dim == 3);
    CHECK(r.min_ratio_i == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.min_ratio_ii == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.holds_i);
    CHECK(r.holds_ii);
    CHECK(r.equivalent);
    inst.C = 1.5;
    r = check_gradlemma(inst, 1, 500);
    CHECK_FALSE(r.holds_i);
    CHECK_FALSE(r.holds_ii);
    CHECK(r.equivalent);
  }
  // one-dimensional V: both sides are E‖v‖_X^q for the unit v
  {
    auto inst = random_gradlemma_instance(4, 4, 2, 2, 3.0, 1.5);
    inst.subspaces[1] = Eigen::MatrixXd(4, 0);
    const auto r = check_gradlemma(inst, 2, 200);
    CHECK(r.dim == 1);
    CHECK(r.min_ratio_i == doctest::Approx(r.min_ratio_ii).epsilon(1e-12));
  }
  // three-dimensional V, X = ℓ₄
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    auto inst = random_gradlemma_instance(seed, 4, 2, 3, 4.0, 2.0);
    inst.C = 0.0;
    const auto r = check_gradlemma(inst, seed, 4000);
    CHECK(r.dim == 3);
    CHECK(std::abs(r.min_ratio_i - r.min_ratio_ii) <= 1e-3);
    CHECK(r.equivalent);
    MESSAGE("gradlemma seed " << seed << ": " << r.min_ratio_i << " vs " << r.min_ratio_ii);
  }
  // q = 1: the support-restricted condition bounds E‖f‖_X / ‖f‖_Y from below
  for (std::uint64_t seed : {21u, 22u}) {
    const auto inst = random_gradlemma_instance(seed, 3, 2, 3, 3.0, 1.0);
    const auto r = check_gradlemma(inst, seed, 2000);
    REQUIRE(r.min_ratio_restricted.has_value());
    CHECK(r.implication_ok);
    CHECK(r.min_ratio_i >= *r.min_ratio_restricted - 1e-6);
  }
  // ℓ₁ has kinks on the coordinate hyperplanes
  const auto kinked = random_gradlemma_instance(3, 3, 2, 3, 1.0, 2.0);
  CHECK_THROWS_AS(check_gradlemma(kinked, 1, 100), Error);
}

TEST_CASE("gradient_probe") {
  {
    const auto s = ProductSpace::make({FiniteProbSpace::uniform(1)});
    const Filtration2 one(s, 0, 0, {Partition::trivial(s)}, true);
    const auto F = RandomVariable::constant(s, -2.5);
    CHECK(probe_gradient(F, one, 4.0)[0] == -1.0);
    const auto r = gradient_probe(F, one, 4.0);
    CHECK(r.dual_value == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(r.primal_ratio_h1S == doctest::Approx(1.0).epsilon(1e-14));
  }
  const auto filt = canonical_2p(coin(), 1, 1);
  const auto s = filt.space();
  for (double p : {2.0, 4.0, 8.0}) {
    // f_n = c on all four cells, and only Δ_{0,0} survives
    const auto r = gradient_probe(RandomVariable::constant(s, 3.0), filt, p);
    CHECK(r.primal_ratio_h1S == doctest::Approx(std::pow(4.0, 1.0 / p)).epsilon(1e-13));
  }
  std::mt19937_64 rng(31);
  double lowest = std::numeric_limits<double>::infinity();
  for (int t = 0; t < 8; ++t) {
    const auto F = random_rv(s, rng);
    const auto a = gradient_probe(F, filt, 4.0);
    const auto b = gradient_probe(F * -2.5, filt, 4.0);
    CHECK(a.primal_ratio_h1S == doctest::Approx(b.primal_ratio_h1S).epsilon(1e-12));
    CHECK(a.primal_ratio_dual == doctest::Approx(b.primal_ratio_dual).epsilon(1e-5));
    CHECK(std::abs(a.dual_value - b.dual_value) <= 2e-6);
    CHECK(a.dual_lower <= a.dual_value);
    CHECK(a.dual_value <= a.dual_upper);
    lowest = std::min(lowest, a.dual_value);
  }
  MESSAGE("min dual value over 8 coin martingales, p = 4: " << lowest);
  CHECK_THROWS_AS(gradient_probe(RandomVariable(s), filt, 4.0), Error);
  CHECK_THROWS_AS(gradient_probe(RandomVariable::constant(s, 1.0), filt, 1.5), Error);
}
