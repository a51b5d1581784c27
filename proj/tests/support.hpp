#pragma once

// Shared generators and brute-force oracles for the test binaries. Nothing
// here calls into the code paths it is used to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "mhl/operators.hpp"

namespace mhl::testing {

inline FiniteProbSpace coin() { return FiniteProbSpace::uniform(2); }

inline RandomVariable random_rv(const SpacePtr& space, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(space->size());
  for (double& x : v) x = g(rng);
  return RandomVariable(space, std::move(v));
}

/// Random partition of the space into at most `max_blocks` labels.
inline Partition random_partition(const SpacePtr& space, std::mt19937_64& rng, int max_blocks) {
  std::uniform_int_distribution<int> d(0, max_blocks - 1);
  std::vector<std::int64_t> keys(space->size());
  for (auto& k : keys) k = d(rng);
  return Partition(space, keys);
}

/// All set partitions of {0..n-1} as restricted growth strings.
inline void for_each_set_partition(std::size_t n,
                                   const std::function<void(const std::vector<std::int64_t>&)>& fn) {
  std::vector<std::int64_t> a(n, 0);
  std::function<void(std::size_t, std::int64_t)> rec = [&](std::size_t k, std::int64_t mx) {
    if (k == n) {
      fn(a);
      return;
    }
    for (std::int64_t v = 0; v <= mx + 1; ++v) {
      a[k] = v;
      rec(k + 1, std::max(mx, v));
    }
  };
  if (n == 0) return;
  a[0] = 0;
  rec(1, 0);
}

/// Conditional expectation by explicit summation over atoms sharing a block.
inline std::vector<double> brute_cond_expect(const std::vector<double>& f, const Partition& p) {
  const auto& w = p.space()->weights();
  std::vector<double> out(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    double num = 0.0, den = 0.0;
    for (std::size_t l = 0; l < f.size(); ++l)
      if (p.block_of(l) == p.block_of(k)) {
        num += w[l] * f[l];
        den += w[l];
      }
    out[k] = num / den;
  }
  return out;
}

/// Random F_{i,j}-adapted field: independent Gaussian value per block.
inline AdaptedField random_adapted_field(const FiltrationPtr& filt, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<RandomVariable> e;
  for (const auto& p : filt->grid()) {
    std::vector<double> block_val(p.blocks());
    for (double& v : block_val) v = g(rng);
    std::vector<double> vals(p.space()->size());
    for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = block_val[p.block_of(k)];
    e.emplace_back(p.space(), std::move(vals));
  }
  return AdaptedField(filt, std::move(e));
}

inline bool close(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace mhl::testing
