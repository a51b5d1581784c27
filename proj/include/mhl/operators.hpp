#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mhl/conic.hpp"
#include "mhl/filtration.hpp"

namespace mhl {

using FiltrationPtr = std::shared_ptr<const Filtration2>;

/// f_{i,j} with f_{i,j} measurable w.r.t. F_{i,j}; entries row-major.
class AdaptedField {
 public:
  AdaptedField() = default;
  AdaptedField(FiltrationPtr filt, std::vector<RandomVariable> entries);
  static AdaptedField zero(FiltrationPtr filt);
  /// f_{i,j} = Δ_{i,j}F.
  static AdaptedField martingale_differences(FiltrationPtr filt, const RandomVariable& F);

  const FiltrationPtr& filtration() const noexcept { return filt_; }
  const RandomVariable& at(std::size_t i, std::size_t j) const {
    return entries_[filt_->index(i, j)];
  }
  const std::vector<RandomVariable>& entries() const noexcept { return entries_; }
  /// Σ_{i,j} f_{i,j}.
  RandomVariable sum() const;
  /// E sqrt(Σ |f_{i,j}|²).
  double square_norm() const;

 private:
  FiltrationPtr filt_;
  std::vector<RandomVariable> entries_;
};

/// E_{i,j} f for every cell, row-major.
std::vector<RandomVariable> conditional_grid(const RandomVariable& f, const Filtration2& filt);

RandomVariable delta(const RandomVariable& f, const Filtration2& filt, std::size_t i,
                     std::size_t j);
RandomVariable delta(const RandomVariable& f, const Filtration1& filt, std::size_t i);
/// All Δ_{i,j} f, row-major.
std::vector<RandomVariable> deltas(const RandomVariable& f, const Filtration2& filt);

/// (Σ|Δ_{i,j}f|^p)^{1/p}; the conditional variant uses E_{i-1,j-1}|Δ_{i,j}f|^p.
RandomVariable square_function(const RandomVariable& f, const Filtration2& filt, double p,
                               bool conditional);
RandomVariable square_function(const RandomVariable& f, const Filtration1& filt, double p,
                               bool conditional);

RandomVariable maximal_function(const RandomVariable& f, const Filtration2& filt);
RandomVariable maximal_function(const RandomVariable& f, const Filtration1& filt);

struct HardyReport {
  double h1S = 0.0;
  double h1s = 0.0;
  double h1star = 0.0;
};

HardyReport hardy_norms(const RandomVariable& f, const Filtration2& filt);
HardyReport hardy_norms(const RandomVariable& f, const Filtration1& filt);
std::string to_json(const HardyReport& r);

enum class HardyKind { SquareH1S, ConditionalH1s, MaximalH1star, AbsoluteS1L1 };

/// The chosen norm as a GroupNorm on functions over the filtration's space
/// (vector index = atom index).
GroupNorm hardy_group_norm(const Filtration2& filt, HardyKind kind);
/// L1 -> E|f|, L2 -> (E f²)^{1/2}, Linf -> max |f|.
GroupNorm lebesgue_group_norm(const ProductSpace& space, PointwiseNorm kind);

struct SumNormResult {
  double value = 0.0;  // best upper bound found
  double lower = 0.0;  // certified lower bound
  RandomVariable g, h; // f = g + h
  std::size_t iterations = 0;
  bool converged = false;
  double gap() const { return value - lower; }
};

/// ‖f‖_{X+Y} = inf_{f=g+h} ‖g‖_X + ‖h‖_Y.
SumNormResult sum_norm(const RandomVariable& f, const GroupNorm& normX, const GroupNorm& normY,
                       double tol = 1e-7, std::size_t max_iterations = 100000);

}  // namespace mhl
