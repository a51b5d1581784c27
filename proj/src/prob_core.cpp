#include "mhl/prob_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "mhl/error.hpp"

namespace mhl {

FiniteProbSpace::FiniteProbSpace(std::vector<std::string> labels, std::vector<double> weights)
    : labels_(std::move(labels)), weights_(std::move(weights)) {
  require(!weights_.empty(), "probability space needs at least one atom");
  require(labels_.size() == weights_.size(), "labels and weights differ in length");
  double total = 0.0;
  for (double w : weights_) {
    require(std::isfinite(w) && w > 0.0, "atom weights must be strictly positive");
    total += w;
  }
  require(std::abs(total - 1.0) <= kWeightTolerance, "atom weights must sum to 1");
  std::set<std::string> seen(labels_.begin(), labels_.end());
  require(seen.size() == labels_.size(), "atom labels must be unique");
}

FiniteProbSpace FiniteProbSpace::uniform(std::size_t n) {
  require(n > 0, "uniform space needs n > 0");
  return from_weights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

FiniteProbSpace FiniteProbSpace::from_weights(std::vector<double> weights) {
  std::vector<std::string> labels(weights.size());
  for (std::size_t k = 0; k < labels.size(); ++k) labels[k] = std::to_string(k);
  return FiniteProbSpace(std::move(labels), std::move(weights));
}

double FiniteProbSpace::min_weight() const {
  return *std::min_element(weights_.begin(), weights_.end());
}

ProductSpace::ProductSpace(std::vector<FiniteProbSpace> factors) : factors_(std::move(factors)) {
  std::size_t n = 1;
  strides_.assign(factors_.size(), 1);
  for (std::size_t a = factors_.size(); a-- > 0;) {
    strides_[a] = n;
    require(n <= (std::size_t{1} << 40) / factors_[a].size(), "product space too large");
    n *= factors_[a].size();
  }
  weights_.assign(n, 1.0);
  for (std::size_t atom = 0; atom < n; ++atom) {
    double w = 1.0;
    for (std::size_t a = 0; a < factors_.size(); ++a) w *= factors_[a].weight(coordinate(atom, a));
    weights_[atom] = w;
  }
}

SpacePtr ProductSpace::power(const FiniteProbSpace& base, std::size_t count) {
  return make(std::vector<FiniteProbSpace>(count, base));
}

SpacePtr ProductSpace::make(std::vector<FiniteProbSpace> factors) {
  return std::make_shared<const ProductSpace>(std::move(factors));
}

double ProductSpace::min_weight() const {
  return *std::min_element(weights_.begin(), weights_.end());
}

std::vector<std::size_t> ProductSpace::coordinates_of(std::size_t atom) const {
  std::vector<std::size_t> c(factors_.size());
  for (std::size_t a = 0; a < c.size(); ++a) c[a] = coordinate(atom, a);
  return c;
}

std::size_t ProductSpace::atom_of(std::span<const std::size_t> coords) const {
  require(coords.size() == factors_.size(), "coordinate tuple has wrong arity",
          ErrorCode::OutOfRange);
  std::size_t atom = 0;
  for (std::size_t a = 0; a < coords.size(); ++a) {
    require(coords[a] < factors_[a].size(), "coordinate out of range", ErrorCode::OutOfRange);
    atom += coords[a] * strides_[a];
  }
  return atom;
}

bool same_space(const SpacePtr& a, const SpacePtr& b) {
  if (a == b) return true;
  if (!a || !b) return false;
  return *a == *b;
}

namespace {

void check_same(const SpacePtr& a, const SpacePtr& b) {
  require(same_space(a, b), "operands live on different spaces", ErrorCode::SpaceMismatch);
}

}  // namespace

RandomVariable::RandomVariable(SpacePtr space)
    : space_(std::move(space)), values_(space_ ? space_->size() : 0, 0.0) {}

RandomVariable::RandomVariable(SpacePtr space, std::vector<double> values)
    : space_(std::move(space)), values_(std::move(values)) {
  require(space_ != nullptr, "random variable needs a space");
  require(values_.size() == space_->size(), "value count differs from atom count");
}

RandomVariable RandomVariable::constant(SpacePtr space, double c) {
  const std::size_t n = space->size();
  return RandomVariable(std::move(space), std::vector<double>(n, c));
}

RandomVariable RandomVariable::coordinate(SpacePtr space, std::size_t axis,
                                          std::span<const double> table) {
  require(axis < space->coordinates(), "axis out of range", ErrorCode::OutOfRange);
  require(table.size() == space->factor(axis).size(), "table size differs from factor size");
  std::vector<double> v(space->size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = table[space->coordinate(k, axis)];
  return RandomVariable(std::move(space), std::move(v));
}

double RandomVariable::expectation() const {
  double s = 0.0;
  const auto& w = space_->weights();
  for (std::size_t k = 0; k < values_.size(); ++k) s += w[k] * values_[k];
  return s;
}

double RandomVariable::max_abs() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

RandomVariable& RandomVariable::operator+=(const RandomVariable& o) {
  check_same(space_, o.space_);
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
  return *this;
}

RandomVariable& RandomVariable::operator-=(const RandomVariable& o) {
  check_same(space_, o.space_);
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
  return *this;
}

RandomVariable& RandomVariable::operator*=(double c) {
  for (double& v : values_) v *= c;
  return *this;
}

RandomVariable operator+(RandomVariable a, const RandomVariable& b) { return a += b; }
RandomVariable operator-(RandomVariable a, const RandomVariable& b) { return a -= b; }
RandomVariable operator*(RandomVariable a, double c) { return a *= c; }
RandomVariable operator*(double c, RandomVariable a) { return a *= c; }

RandomVariable hadamard(const RandomVariable& a, const RandomVariable& b) {
  check_same(a.space(), b.space());
  RandomVariable r = a;
  for (std::size_t k = 0; k < r.size(); ++k) r[k] *= b[k];
  return r;
}

RandomVariable abs(RandomVariable a) {
  for (double& v : a.values()) v = std::abs(v);
  return a;
}

double inner(const RandomVariable& a, const RandomVariable& b) {
  check_same(a.space(), b.space());
  const auto& w = a.space()->weights();
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += w[k] * a[k] * b[k];
  return s;
}

Partition::Partition(SpacePtr space, std::span<const std::int64_t> keys)
    : space_(std::move(space)) {
  require(space_ != nullptr, "partition needs a space");
  require(keys.size() == space_->size(), "key count differs from atom count");
  std::unordered_map<std::int64_t, std::size_t> ids;
  block_of_.resize(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    auto [it, inserted] = ids.try_emplace(keys[k], ids.size());
    block_of_[k] = it->second;
  }
  blocks_ = ids.size();
}

Partition Partition::trivial(SpacePtr space) {
  std::vector<std::int64_t> keys(space->size(), 0);
  return Partition(std::move(space), keys);
}

Partition Partition::finest(SpacePtr space) {
  std::vector<std::int64_t> keys(space->size());
  std::iota(keys.begin(), keys.end(), 0);
  return Partition(std::move(space), keys);
}

Partition Partition::generated_by(SpacePtr space, std::span<const std::size_t> axes) {
  std::vector<std::int64_t> keys(space->size(), 0);
  for (std::size_t atom = 0; atom < keys.size(); ++atom) {
    std::int64_t key = 0;
    for (std::size_t a : axes) {
      require(a < space->coordinates(), "axis out of range", ErrorCode::OutOfRange);
      key = key * static_cast<std::int64_t>(space->factor(a).size()) +
            static_cast<std::int64_t>(space->coordinate(atom, a));
    }
    keys[atom] = key;
  }
  return Partition(std::move(space), keys);
}

std::vector<double> Partition::block_weights() const {
  std::vector<double> w(blocks_, 0.0);
  for (std::size_t k = 0; k < block_of_.size(); ++k) w[block_of_[k]] += space_->weight(k);
  return w;
}

std::vector<std::vector<std::size_t>> Partition::block_members() const {
  std::vector<std::vector<std::size_t>> m(blocks_);
  for (std::size_t k = 0; k < block_of_.size(); ++k) m[block_of_[k]].push_back(k);
  return m;
}

bool Partition::refines(const Partition& coarser) const {
  check_same(space_, coarser.space_);
  std::vector<std::size_t> image(blocks_, static_cast<std::size_t>(-1));
  for (std::size_t k = 0; k < block_of_.size(); ++k) {
    auto& slot = image[block_of_[k]];
    if (slot == static_cast<std::size_t>(-1)) slot = coarser.block_of_[k];
    else if (slot != coarser.block_of_[k]) return false;
  }
  return true;
}

bool Partition::is_measurable(const RandomVariable& f, double tol) const {
  check_same(space_, f.space());
  std::vector<double> first(blocks_, 0.0);
  std::vector<char> set(blocks_, 0);
  for (std::size_t k = 0; k < block_of_.size(); ++k) {
    const auto b = block_of_[k];
    if (!set[b]) {
      first[b] = f[k];
      set[b] = 1;
    } else if (std::abs(first[b] - f[k]) > tol) {
      return false;
    }
  }
  return true;
}

RandomVariable cond_expect(const RandomVariable& f, const Partition& sigma) {
  check_same(f.space(), sigma.space());
  const auto& w = f.space()->weights();
  const auto& map = sigma.block_map();
  std::vector<double> mass(sigma.blocks(), 0.0), sum(sigma.blocks(), 0.0);
  for (std::size_t k = 0; k < map.size(); ++k) {
    mass[map[k]] += w[k];
    sum[map[k]] += w[k] * f[k];
  }
  std::vector<double> out(map.size());
  for (std::size_t k = 0; k < map.size(); ++k) {
    require(mass[map[k]] > 0.0, "zero-weight block", ErrorCode::Internal);
    out[k] = sum[map[k]] / mass[map[k]];
  }
  return RandomVariable(f.space(), std::move(out));
}

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

Partition partition_lattice(const Partition& a, const Partition& b, LatticeOp op) {
  check_same(a.space(), b.space());
  const std::size_t n = a.space()->size();
  std::vector<std::int64_t> keys(n);
  if (op == LatticeOp::Join) {
    const auto nb = static_cast<std::int64_t>(b.blocks());
    for (std::size_t k = 0; k < n; ++k)
      keys[k] = static_cast<std::int64_t>(a.block_of(k)) * nb +
                static_cast<std::int64_t>(b.block_of(k));
  } else {
    // Atoms sharing a block in either partition end up in one meet block.
    DisjointSets sets(n);
    std::vector<std::size_t> rep_a(a.blocks(), n), rep_b(b.blocks(), n);
    for (std::size_t k = 0; k < n; ++k) {
      auto& ra = rep_a[a.block_of(k)];
      if (ra == n) ra = k; else sets.unite(k, ra);
      auto& rb = rep_b[b.block_of(k)];
      if (rb == n) rb = k; else sets.unite(k, rb);
    }
    for (std::size_t k = 0; k < n; ++k) keys[k] = static_cast<std::int64_t>(sets.find(k));
  }
  return Partition(a.space(), keys);
}

IndependenceReport check_cond_independence(const Partition& a, const Partition& b,
                                           const Partition& c, double tol) {
  check_same(a.space(), b.space());
  check_same(a.space(), c.space());
  const auto& w = a.space()->weights();
  const std::size_t n = w.size();

  // Per block C: masses of A∩C, B∩C and A∩B∩C.
  const auto c_mass = c.block_weights();
  std::vector<std::unordered_map<std::size_t, double>> ma(c.blocks()), mb(c.blocks());
  std::vector<std::unordered_map<std::uint64_t, double>> mab(c.blocks());
  for (std::size_t k = 0; k < n; ++k) {
    const auto cb = c.block_of(k);
    ma[cb][a.block_of(k)] += w[k];
    mb[cb][b.block_of(k)] += w[k];
    mab[cb][(static_cast<std::uint64_t>(a.block_of(k)) << 32) | b.block_of(k)] += w[k];
  }
  IndependenceReport r;
  for (std::size_t cb = 0; cb < c.blocks(); ++cb) {
    const double pc = c_mass[cb];
    for (const auto& [ab, pa] : ma[cb]) {
      for (const auto& [bb, pb] : mb[cb]) {
        const auto it = mab[cb].find((static_cast<std::uint64_t>(ab) << 32) | bb);
        const double joint = it == mab[cb].end() ? 0.0 : it->second;
        const double v = std::abs(joint / pc - (pa / pc) * (pb / pc));
        r.violation = std::max(r.violation, v);
      }
    }
  }
  r.holds = r.violation <= tol;
  return r;
}

}  // namespace mhl
