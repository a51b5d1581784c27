#pragma once

// Finite probability spaces, random variables and sigma-algebras as
// partitions. Everything here is an immutable value; spaces are shared by
// pointer between the random variables and partitions that live on them.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mhl {

/// Tolerance used for "weights sum to one" and similar identities.
inline constexpr double kWeightTolerance = 1e-12;

class FiniteProbSpace {
 public:
  FiniteProbSpace(std::vector<std::string> labels, std::vector<double> weights);

  static FiniteProbSpace uniform(std::size_t n);
  /// Labels "0".."n-1".
  static FiniteProbSpace from_weights(std::vector<double> weights);

  std::size_t size() const noexcept { return weights_.size(); }
  double weight(std::size_t k) const { return weights_[k]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  double min_weight() const;

  bool operator==(const FiniteProbSpace& o) const { return weights_ == o.weights_; }

 private:
  std::vector<std::string> labels_;
  std::vector<double> weights_;
};

/// Product of finitely many factor spaces. Atoms are enumerated mixed-radix
/// with the last coordinate running fastest.
class ProductSpace {
 public:
  explicit ProductSpace(std::vector<FiniteProbSpace> factors);

  /// base^count.
  static std::shared_ptr<const ProductSpace> power(const FiniteProbSpace& base,
                                                   std::size_t count);
  static std::shared_ptr<const ProductSpace> make(std::vector<FiniteProbSpace> factors);

  std::size_t size() const noexcept { return weights_.size(); }
  std::size_t coordinates() const noexcept { return factors_.size(); }
  const FiniteProbSpace& factor(std::size_t axis) const { return factors_[axis]; }
  const std::vector<FiniteProbSpace>& factors() const noexcept { return factors_; }
  double weight(std::size_t atom) const { return weights_[atom]; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double min_weight() const;

  std::size_t coordinate(std::size_t atom, std::size_t axis) const {
    return (atom / strides_[axis]) % factors_[axis].size();
  }
  std::size_t stride(std::size_t axis) const { return strides_[axis]; }
  std::vector<std::size_t> coordinates_of(std::size_t atom) const;
  std::size_t atom_of(std::span<const std::size_t> coords) const;

  bool operator==(const ProductSpace& o) const { return factors_ == o.factors_; }

 private:
  std::vector<FiniteProbSpace> factors_;
  std::vector<std::size_t> strides_;
  std::vector<double> weights_;
};

using SpacePtr = std::shared_ptr<const ProductSpace>;

bool same_space(const SpacePtr& a, const SpacePtr& b);

class RandomVariable {
 public:
  RandomVariable() = default;
  explicit RandomVariable(SpacePtr space);  // zero
  RandomVariable(SpacePtr space, std::vector<double> values);

  static RandomVariable constant(SpacePtr space, double c);
  /// Value of coordinate `axis` mapped through `table` (size of that factor).
  static RandomVariable coordinate(SpacePtr space, std::size_t axis,
                                   std::span<const double> table);

  const SpacePtr& space() const noexcept { return space_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  double& operator[](std::size_t k) { return values_[k]; }
  const std::vector<double>& values() const noexcept { return values_; }
  std::vector<double>& values() noexcept { return values_; }

  double expectation() const;
  double max_abs() const;

  RandomVariable& operator+=(const RandomVariable& o);
  RandomVariable& operator-=(const RandomVariable& o);
  RandomVariable& operator*=(double c);

 private:
  SpacePtr space_;
  std::vector<double> values_;
};

RandomVariable operator+(RandomVariable a, const RandomVariable& b);
RandomVariable operator-(RandomVariable a, const RandomVariable& b);
RandomVariable operator*(RandomVariable a, double c);
RandomVariable operator*(double c, RandomVariable a);
/// Pointwise product.
RandomVariable hadamard(const RandomVariable& a, const RandomVariable& b);
RandomVariable abs(RandomVariable a);
double inner(const RandomVariable& a, const RandomVariable& b);  // E[ab]

/// A sigma-algebra on a finite space, stored as atom -> block id. Block ids
/// are contiguous and numbered by first occurrence, so two partitions are
/// equal as sigma-algebras iff their block maps are equal.
class Partition {
 public:
  Partition(SpacePtr space, std::span<const std::int64_t> keys);

  static Partition trivial(SpacePtr space);
  static Partition finest(SpacePtr space);
  /// sigma(x -> (x_a)_{a in axes}).
  static Partition generated_by(SpacePtr space, std::span<const std::size_t> axes);

  const SpacePtr& space() const noexcept { return space_; }
  std::size_t blocks() const noexcept { return blocks_; }
  std::size_t block_of(std::size_t atom) const { return block_of_[atom]; }
  const std::vector<std::size_t>& block_map() const noexcept { return block_of_; }
  std::vector<double> block_weights() const;
  std::vector<std::vector<std::size_t>> block_members() const;

  /// True iff every block of *this lies inside a block of `coarser`.
  bool refines(const Partition& coarser) const;
  bool is_measurable(const RandomVariable& f, double tol = 0.0) const;

  bool operator==(const Partition& o) const {
    return same_space(space_, o.space_) && block_of_ == o.block_of_;
  }

 private:
  SpacePtr space_;
  std::vector<std::size_t> block_of_;
  std::size_t blocks_ = 0;
};

RandomVariable cond_expect(const RandomVariable& f, const Partition& sigma);

enum class LatticeOp { Join, Meet };
Partition partition_lattice(const Partition& a, const Partition& b, LatticeOp op);
inline Partition join(const Partition& a, const Partition& b) {
  return partition_lattice(a, b, LatticeOp::Join);
}
inline Partition meet(const Partition& a, const Partition& b) {
  return partition_lattice(a, b, LatticeOp::Meet);
}

struct IndependenceReport {
  bool holds = true;
  double violation = 0.0;
};

inline constexpr double kIndependenceTolerance = 1e-10;

/// Conditional independence of `a` and `b` given `c`.
IndependenceReport check_cond_independence(const Partition& a, const Partition& b,
                                           const Partition& c,
                                           double tol = kIndependenceTolerance);

}  // namespace mhl
