#pragma once

// Decoupled copies of adapted sequences on canonical product filtrations:
// entry k is re-read with its last coordinate replaced by a fresh copy.

#include <cstdint>
#include <functional>
#include <span>
#include <optional>
#include <vector>

#include "mhl/operators.hpp"

namespace mhl {

/// Entries of an adapted sequence evaluated on the enlarged space carrying
/// the fresh coordinates. Nothing is materialized unless asked for.
class DecoupledField {
 public:
  /// Enlarged coordinates, original axes first, then the fresh copies.
  const std::vector<FiniteProbSpace>& factors() const noexcept { return factors_; }
  std::size_t entries() const noexcept { return original_.size(); }
  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  /// Built by decouple_2p (axes x, y, η, θ) rather than decouple_1p (x, η).
  bool two_parameter() const noexcept { return factors_.size() == 2 * (rows_ + cols_); }
  const SpacePtr& original_space() const noexcept { return original_space_; }
  const RandomVariable& original(std::size_t k) const { return original_[k]; }
  /// Enlarged axis read for original axis a by entry k.
  const std::vector<std::size_t>& source_axes(std::size_t k) const { return source_[k]; }
  /// Enlarged axes entry k actually depends on.
  const std::vector<std::size_t>& used_axes(std::size_t k) const { return used_[k]; }

  /// Entry k at a point of the enlarged space given by its coordinates.
  double value(std::size_t k, std::span<const std::size_t> coords) const;

  /// Number of atoms of the enlarged space (saturating).
  std::size_t enlarged_size() const;
  /// The enlarged space; OutOfRange above kMaterializeLimit atoms.
  SpacePtr materialize() const;
  /// Entry k as a random variable on `materialize()`.
  RandomVariable entry(std::size_t k, const SpacePtr& enlarged) const;
  /// Entry k with every fresh coordinate set equal to its original.
  RandomVariable diagonal(std::size_t k) const;

  /// E sqrt(Σ_k f_k²) over the original space.
  double lhs() const;
  /// Same functional of the decoupled entries over the enlarged space.
  double rhs() const;

  static constexpr std::size_t kMaterializeLimit = std::size_t{1} << 20;

 private:
  friend DecoupledField decouple_1p(const Filtration1&, const std::vector<RandomVariable>&);
  friend DecoupledField decouple_2p(const AdaptedField&);
  DecoupledField() = default;
  void finish();

  SpacePtr original_space_;
  std::vector<FiniteProbSpace> factors_;
  std::size_t rows_ = 0, cols_ = 1;
  std::vector<RandomVariable> original_;
  std::vector<std::vector<std::size_t>> source_;
  std::vector<std::vector<std::size_t>> used_;
  std::vector<std::size_t> original_used_;
};

/// Axes of `space` along which f is not constant.
std::vector<std::size_t> dependent_axes(const RandomVariable& f);

/// Σ over the listed axes of μ·g(coords), every other coordinate held at 0.
/// Weights multiply in axis order and the last listed axis runs fastest.
double integrate_over(const std::vector<FiniteProbSpace>& factors,
                      const std::vector<std::size_t>& axes,
                      const std::function<double(std::span<const std::size_t>)>& g);

/// fs[k] must be F_k-measurable for the canonical filtration `filt`.
DecoupledField decouple_1p(const Filtration1& filt, const std::vector<RandomVariable>& fs);
/// Field on a canonical product filtration.
DecoupledField decouple_2p(const AdaptedField& f);

/// Recover the base factor and sizes of a canonical filtration, or nothing.
std::optional<FiniteProbSpace> canonical_base(const Filtration1& filt);
std::optional<FiniteProbSpace> canonical_base(const Filtration2& filt);

enum class DecouplingFamilyKind { Constant, CoordinateOnly, RandomAdapted };

struct DecouplingFamily {
  DecouplingFamilyKind kind = DecouplingFamilyKind::RandomAdapted;
  FiniteProbSpace base = FiniteProbSpace::uniform(2);
  std::size_t N = 2;
  std::size_t M = 0;
  bool two_parameter = false;
};

struct DecouplingSample {
  std::size_t trial = 0;
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;  // rhs / lhs
};

struct DecouplingEnvelope {
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  std::vector<DecouplingSample> samples;  // sorted by trial
};

/// One member of the family; trial t uses the RNG stream seed + t.
DecouplingSample decoupling_trial(const DecouplingFamily& fam, std::size_t trial,
                                  std::uint64_t seed);
DecouplingEnvelope estimate_decoupling_constants(const DecouplingFamily& fam,
                                                 std::size_t trials, std::uint64_t seed,
                                                 unsigned jobs = 1);

}  // namespace mhl
