#pragma once

// Four-summand masks on the decoupled field and the thresholded two-parameter
// Davis–Garsia decomposition built from them.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mhl/decoupling.hpp"

namespace mhl {

enum class MaskLabel : std::uint8_t { A = 0, B = 1, C = 2, D = 3 };
enum class MaskMode { Exhaustive, Greedy };

const char* to_string(MaskMode m);

/// Values v_{i,j}(ξ,υ) for one outer point, laid out [cell][ξ][υ].
struct FourSummandProblem {
  std::size_t rows = 0, cols = 0;
  FiniteProbSpace omega = FiniteProbSpace::uniform(1);
  std::vector<double> values;

  std::size_t at(std::size_t cell, std::size_t xi, std::size_t up) const {
    const std::size_t n = omega.size();
    return (cell * n + xi) * n + up;
  }
};

struct FourSummandSolution {
  std::vector<MaskLabel> labels;  // same layout as the problem values
  double value = 0.0;
};

/// The four-term functional: absolute sum, global square, row-mixed, column-mixed.
double four_summand_value(const FourSummandProblem& prob, const std::vector<MaskLabel>& labels);
/// ∫∫ sqrt(Σ v_{i,j}(x_i, y_j)²) over independent x_0..x_N, y_0..y_M.
double four_summand_lhs(const FourSummandProblem& prob);

inline constexpr std::size_t kExhaustiveSupportLimit = 12;
inline constexpr std::size_t kGreedyRestarts = 32;

/// Exhaustive: exact minimum by branch and bound (support ≤ 12). Greedy:
/// single-point coordinate descent from 32 starts (the first is all-A).
FourSummandSolution solve_four_summand(const FourSummandProblem& prob, MaskMode mode,
                                       std::uint64_t seed = 0);

/// Labels per cell over the mask space x_0..x_{N-1}, y_0..y_{M-1}, ξ, υ.
struct FourSummandMask {
  SpacePtr space;
  std::size_t N = 0, M = 0;
  MaskMode mode = MaskMode::Greedy;
  std::vector<std::vector<MaskLabel>> labels;  // [cell][mask atom]
  double rhs = 0.0;  // outer average of the per-point functional
  double lhs = 0.0;  // the decoupled integral

  /// 1{label = l} at cell (i,j) as a random variable on `space`.
  RandomVariable indicator(std::size_t i, std::size_t j, MaskLabel l) const;
};

FourSummandMask four_summand_partition(const DecoupledField& d, MaskMode mode,
                                       std::uint64_t seed = 0, unsigned jobs = 1);

struct RhsTerms {
  double tA = 0.0, tB = 0.0, tC = 0.0, tD = 0.0;
  double sum() const { return tA + tB + tC + tD; }
  std::array<double, 4> as_array() const { return {tA, tB, tC, tD}; }
};

struct DGDecomposition {
  AdaptedField alpha, beta, gamma, delta;
  RhsTerms terms;
  double lhs = 0.0;             // E sqrt(Σ f²)
  double achieved_ratio = 0.0;  // terms.sum() / lhs; 0 for f = 0
  MaskMode mask_mode = MaskMode::Greedy;

  const AdaptedField& part(std::size_t k) const;
};

/// t_A = E Σ|α|, t_B = E sqrt(Σ E_{i-1,j-1}β²), t_C = E Σ_i sqrt(Σ_j E_{N,j-1}γ²),
/// t_D = E Σ_j sqrt(Σ_i E_{i-1,M}δ²), with clamped indices.
RhsTerms evaluate_rhs(const AdaptedField& alpha, const AdaptedField& beta,
                      const AdaptedField& gamma, const AdaptedField& delta);

inline constexpr double kThreshold = 0.25;

/// Parts 1{E_{i-1,j-1} a_{i,j} ≥ 1/4} f_{i,j} and the same for b, c, d.
DGDecomposition davis_garsia_2p(const AdaptedField& f, const FourSummandMask& mask);

struct ProjectedDecomposition {
  DGDecomposition dec;
  std::array<double, 4> inflation{};  // term after / term before (1 when both vanish)
};

/// Rescales every part by f/(α+β+γ+δ) so the parts sum to f exactly. Needs the lattice
/// condition; the factor has modulus at most 1 and is F_{i,j}-measurable, so every term
/// can only shrink.
DGDecomposition normalize_overlaps(const DGDecomposition& dec, const AdaptedField& f);

/// Δ_{i,j} applied to every entry of every part.
ProjectedDecomposition project_martingale_differences(const DGDecomposition& dec);

std::string to_json(const DGDecomposition& d);

/// Mask sums to one at every point of every cell.
bool mask_partition_holds(const FourSummandMask& mask);
/// |α+β+γ+δ| ≥ |f| at every atom and cell.
bool lattice_condition_holds(const DGDecomposition& d, const AdaptedField& f);

/// Martingale pipeline: Δ_{i,j}F, decoupling, masks, thresholds, projection.
struct MartingaleDecompositionReport {
  FourSummandMask mask;
  DGDecomposition raw;
  DGDecomposition exact;  // raw parts rescaled to sum to f
  ProjectedDecomposition projected;
  double h1S = 0.0;
  double h1star = 0.0;
  std::array<double, 4> part_h1star{};  // ‖Σ_{i,j} part‖_{H1*} after projection
  bool mask_ok = false;
  bool lattice_ok = false;
  bool reconstruction_ok = false;  // Σ projected parts = Δ_{i,j}F per cell
};

MartingaleDecompositionReport decompose_martingale(const FiltrationPtr& filt,
                                                   const RandomVariable& F, MaskMode mode,
                                                   std::uint64_t seed = 0, unsigned jobs = 1);

}  // namespace mhl
