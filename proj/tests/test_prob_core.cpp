#include <doctest.h>

#include <cmath>
#include <random>

#include "mhl/error.hpp"
#include "mhl/prob_core.hpp"
#include "support.hpp"

using namespace mhl;
using namespace mhl::testing;

TEST_CASE("probability space invariants") {
  CHECK_THROWS_AS(FiniteProbSpace::from_weights({0.5, 0.6}), Error);
  CHECK_THROWS_AS(FiniteProbSpace::from_weights({1.0, 0.0}), Error);
  CHECK_THROWS_AS(FiniteProbSpace({"a", "a"}, {0.5, 0.5}), Error);
  CHECK_NOTHROW(FiniteProbSpace({"h", "t"}, {0.25, 0.75}));

  auto space = ProductSpace::power(FiniteProbSpace::from_weights({0.2, 0.3, 0.5}), 3);
  CHECK(space->size() == 27);
  // last coordinate fastest
  CHECK(space->coordinate(1, 2) == 1);
  CHECK(space->coordinate(1, 0) == 0);
  CHECK(space->coordinate(9, 0) == 1);
  double total = 0.0;
  for (std::size_t k = 0; k < space->size(); ++k) {
    const auto c = space->coordinates_of(k);
    CHECK(space->atom_of(c) == k);
    const double w = space->factor(0).weight(c[0]) * space->factor(1).weight(c[1]) *
                     space->factor(2).weight(c[2]);
    CHECK(space->weight(k) == doctest::Approx(w).epsilon(1e-15));
    total += space->weight(k);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cond_expect examples") {
  auto space = ProductSpace::power(coin(), 2);
  std::mt19937_64 rng(1);
  const auto f = random_rv(space, rng);

  const auto fine = cond_expect(f, Partition::finest(space));
  for (std::size_t k = 0; k < f.size(); ++k) CHECK(fine[k] == doctest::Approx(f[k]).epsilon(1e-15));

  const auto triv = cond_expect(f, Partition::trivial(space));
  for (std::size_t k = 0; k < f.size(); ++k) CHECK(triv[k] == doctest::Approx(f.expectation()));

  // f = 1{x0=1, x1=1}, sigma(x0) -> 0.5·1{x0=1}
  std::vector<double> ind(4, 0.0);
  ind[space->atom_of(std::vector<std::size_t>{1, 1})] = 1.0;
  const std::size_t axes[] = {0};
  const auto e = cond_expect(RandomVariable(space, ind), Partition::generated_by(space, axes));
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(e[k] == doctest::Approx(space->coordinate(k, 0) == 1 ? 0.5 : 0.0));
}

TEST_CASE("cond_expect agrees with brute force and satisfies its properties") {
  std::mt19937_64 rng(7);
  auto space = ProductSpace::power(FiniteProbSpace::from_weights({0.1, 0.2, 0.7}), 3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto f = random_rv(space, rng);
    const auto fine = random_partition(space, rng, 8);
    const auto coarse = meet(fine, random_partition(space, rng, 4));
    REQUIRE(fine.refines(coarse));

    const auto ef = cond_expect(f, fine);
    const auto brute = brute_cond_expect(f.values(), fine);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(std::abs(ef[k] - brute[k]) <= 1e-12);

    // tower
    const auto lhs = cond_expect(ef, coarse);
    const auto rhs = cond_expect(f, coarse);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(std::abs(lhs[k] - rhs[k]) <= 1e-12);
    // expectation preserved
    CHECK(std::abs(ef.expectation() - f.expectation()) <= 1e-12);
    // idempotent
    const auto twice = cond_expect(ef, fine);
    for (std::size_t k = 0; k < f.size(); ++k) CHECK(std::abs(twice[k] - ef[k]) <= 1e-12);
    // positivity
    const auto pos = cond_expect(abs(f), fine);
    for (double v : pos.values()) CHECK(v >= 0.0);
    // measurable
    CHECK(fine.is_measurable(ef, 1e-12));
  }
}

TEST_CASE("cond_expect rejects mismatched spaces") {
  auto a = ProductSpace::power(coin(), 2);
  auto b = ProductSpace::power(coin(), 3);
  CHECK_THROWS_AS(cond_expect(RandomVariable(a), Partition::trivial(b)), Error);
  try {
    cond_expect(RandomVariable(a), Partition::trivial(b));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SpaceMismatch);
  }
}

TEST_CASE("partition lattice") {
  auto space = ProductSpace::power(coin(), 2);
  const std::size_t ax0[] = {0}, ax1[] = {1};
  const auto p0 = Partition::generated_by(space, ax0);
  const auto p1 = Partition::generated_by(space, ax1);

  CHECK(join(p0, p0) == p0);
  CHECK(meet(p0, p0) == p0);
  CHECK(join(p0, p1) == Partition::finest(space));

  // Oracle: among all 15 partitions of the 4 atoms, the common coarsenings of
  // p0 and p1; the finest of them has the most blocks.
  std::size_t best_blocks = 0;
  std::vector<std::int64_t> best;
  for_each_set_partition(4, [&](const std::vector<std::int64_t>& keys) {
    Partition q(space, keys);
    if (p0.refines(q) && p1.refines(q) && q.blocks() > best_blocks) {
      best_blocks = q.blocks();
      best = keys;
    }
  });
  CHECK(best_blocks == 1);
  CHECK(meet(p0, p1) == Partition(space, best));
  CHECK(meet(p0, p1) == Partition::trivial(space));
}

TEST_CASE("lattice ops are coarsest refinement / finest coarsening (enumeration)") {
  auto space = ProductSpace::power(FiniteProbSpace::uniform(5), 1);
  std::mt19937_64 rng(3);
  std::vector<std::vector<std::int64_t>> all;
  for_each_set_partition(5, [&](const std::vector<std::int64_t>& k) { all.push_back(k); });
  REQUIRE(all.size() == 52);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = random_partition(space, rng, 3);
    const auto b = random_partition(space, rng, 3);
    std::size_t join_blocks = 1000, meet_blocks = 0;
    for (const auto& keys : all) {
      Partition q(space, keys);
      if (q.refines(a) && q.refines(b)) join_blocks = std::min(join_blocks, q.blocks());
      if (a.refines(q) && b.refines(q)) meet_blocks = std::max(meet_blocks, q.blocks());
    }
    const auto j = join(a, b);
    const auto m = meet(a, b);
    CHECK(j.refines(a));
    CHECK(j.refines(b));
    CHECK(j.blocks() == join_blocks);
    CHECK(a.refines(m));
    CHECK(b.refines(m));
    CHECK(m.blocks() == meet_blocks);
  }
}

TEST_CASE("conditional independence") {
  auto space = ProductSpace::power(coin(), 2);
  const auto triv = Partition::trivial(space);
  auto r = check_cond_independence(triv, triv, triv);
  CHECK(r.holds);
  CHECK(r.violation == 0.0);

  const std::size_t ax0[] = {0}, ax1[] = {1};
  r = check_cond_independence(Partition::generated_by(space, ax0),
                              Partition::generated_by(space, ax1), triv);
  CHECK(r.holds);

  // 3-atom space (1/2,1/4,1/4), a = {{1},{2,3}}, b = {{1,2},{3}}.
  // Enumeration: P(A={1}) = 1/2, P(B={1,2}) = 3/4, P(A∩B) = 1/2; 1/2 - 3/8 = 1/8.
  auto s3 = ProductSpace::power(FiniteProbSpace::from_weights({0.5, 0.25, 0.25}), 1);
  const std::int64_t ka[] = {0, 1, 1}, kb[] = {0, 0, 1};
  const Partition a(s3, ka), b(s3, kb);
  double worst = 0.0;
  const double w[] = {0.5, 0.25, 0.25};
  for (int A = 0; A < 2; ++A)
    for (int B = 0; B < 2; ++B) {
      double pa = 0, pb = 0, pab = 0;
      for (int k = 0; k < 3; ++k) {
        pa += ka[k] == A ? w[k] : 0;
        pb += kb[k] == B ? w[k] : 0;
        pab += (ka[k] == A && kb[k] == B) ? w[k] : 0;
      }
      worst = std::max(worst, std::abs(pab - pa * pb));
    }
  const auto r3 = check_cond_independence(a, b, Partition::trivial(s3));
  CHECK_FALSE(r3.holds);
  CHECK(r3.violation == doctest::Approx(worst).epsilon(1e-14));
  CHECK(worst == doctest::Approx(0.125));

  // symmetric in a, b
  std::mt19937_64 rng(11);
  auto s = ProductSpace::power(FiniteProbSpace::from_weights({0.3, 0.7}), 4);
  for (int t = 0; t < 20; ++t) {
    const auto x = random_partition(s, rng, 3), y = random_partition(s, rng, 3),
               z = random_partition(s, rng, 2);
    CHECK(check_cond_independence(x, y, z).violation ==
          doctest::Approx(check_cond_independence(y, x, z).violation).epsilon(1e-14));
  }
}
