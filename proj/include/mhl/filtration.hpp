#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhl/prob_core.hpp"

namespace mhl {

/// F_0 ⊂ F_1 ⊂ ... ⊂ F_N on one space.
class Filtration1 {
 public:
  Filtration1(SpacePtr space, std::vector<Partition> levels);

  const SpacePtr& space() const noexcept { return space_; }
  std::size_t N() const noexcept { return levels_.size() - 1; }
  std::size_t size() const noexcept { return levels_.size(); }
  /// Negative indices clamp to 0.
  const Partition& at(std::ptrdiff_t i) const { return levels_[i < 0 ? 0 : i]; }
  const std::vector<Partition>& levels() const noexcept { return levels_; }

 private:
  SpacePtr space_;
  std::vector<Partition> levels_;
};

struct F4Report {
  bool holds = true;
  double violation = 0.0;           // conditional-independence route
  double commutation_violation = 0.0;  // E_{i,M} E_{N,j} = E_{i,j} route
};

/// Grid F_{i,j}, 0 <= i <= N, 0 <= j <= M, monotone in the partial order.
/// F_{i,M} and F_{N,j} stand in for F_{i,∞} and F_{∞,j}.
class Filtration2 {
 public:
  Filtration2(SpacePtr space, std::size_t N, std::size_t M, std::vector<Partition> grid,
              bool product_type = false);

  /// Column filtration (N+1)×1 with F_{i,0} = levels[i].
  static Filtration2 from_1p(const Filtration1& f);

  const SpacePtr& space() const noexcept { return space_; }
  std::size_t N() const noexcept { return N_; }
  std::size_t M() const noexcept { return M_; }
  std::size_t rows() const noexcept { return N_ + 1; }
  std::size_t cols() const noexcept { return M_ + 1; }
  std::size_t cells() const noexcept { return grid_.size(); }
  std::size_t index(std::size_t i, std::size_t j) const { return i * (M_ + 1) + j; }

  /// Clamped access: E_{i,j} = E_{i∨0, j∨0}.
  const Partition& at(std::ptrdiff_t i, std::ptrdiff_t j) const {
    return grid_[index(i < 0 ? 0 : static_cast<std::size_t>(i),
                       j < 0 ? 0 : static_cast<std::size_t>(j))];
  }
  const std::vector<Partition>& grid() const noexcept { return grid_; }

  bool is_product_type() const noexcept { return product_type_; }
  const std::optional<F4Report>& f4() const noexcept { return f4_; }
  Filtration2 with_f4(F4Report r) const;

  /// (F_{i,j})_{j} for fixed i, as a one-parameter filtration.
  Filtration1 row(std::size_t i) const;
  /// (F_{i,j})_{i} for fixed j.
  Filtration1 column(std::size_t j) const;
  /// Drop the last row / column.
  Filtration2 truncated(std::size_t N, std::size_t M) const;

 private:
  SpacePtr space_;
  std::size_t N_ = 0, M_ = 0;
  std::vector<Partition> grid_;
  bool product_type_ = false;
  std::optional<F4Report> f4_;
};

/// F_i = sigma(x_0..x_i) on base^(N+1).
Filtration1 canonical_1p(const FiniteProbSpace& base, std::size_t N);

/// F_{i,j} = sigma(x_0..x_i, y_0..y_j) on base^(N+1) × base^(M+1); the x
/// coordinates come first, then the y coordinates.
Filtration2 canonical_2p(const FiniteProbSpace& base, std::size_t N, std::size_t M);

/// Factor grid Ω_{k,l}; row-major, every row the same length.
struct UniversalFiltrationSpec {
  std::vector<std::vector<FiniteProbSpace>> factors;
};

/// F_{i,j} = sigma(x_{k,l} : k <= i, l <= j) on the tensor product of the
/// top-left (N+1)×(M+1) factors. Coordinate (k,l) is axis k*(M+1)+l.
Filtration2 universal_2p(const UniversalFiltrationSpec& spec, std::size_t N, std::size_t M);
Filtration2 universal_2p(const UniversalFiltrationSpec& spec);

F4Report check_f4(const Filtration2& filt, double tol = kIndependenceTolerance);

/// Diagnostic only: F_{i-1,j} ∨ F_{i,j-1} = F_{i,j} for all i,j >= 1.
bool satisfies_join_property(const Filtration2& filt);

double regularity_constant(const Filtration1& filt);
double regularity_constant(const Filtration2& filt);

struct DoobOptions {
  std::size_t restarts = 64;
  double tolerance = 1e-8;
  std::size_t max_iterations = 2000;
  std::uint64_t seed = 0;
};

struct DoobEstimate {
  std::optional<double> certified;  // (1-1/p)^d when a bound is known
  double empirical = 1.0;           // min over explored f of ‖f‖_p / ‖Mf‖_p
  std::size_t restarts = 0;
};

/// One ascent run of ‖Mf‖_p/‖f‖_p from a seeded random start; returns the
/// reciprocal of the ratio reached, i.e. an upper estimate of δ.
double doob_trial(std::span<const Partition> family, double p, std::uint64_t seed,
                  const DoobOptions& opts = {});

/// `directions` is the number of iterated one-parameter Doob bounds known to
/// apply (0 for a single sigma-algebra); nullopt means no certificate.
DoobEstimate doob_constant(std::span<const Partition> family, double p,
                           std::optional<int> directions, const DoobOptions& opts = {});
DoobEstimate doob_constant(const Filtration1& filt, double p, const DoobOptions& opts = {});
DoobEstimate doob_constant(const Filtration2& filt, double p, const DoobOptions& opts = {});

/// {"base_atoms":[..], "base_weights":[..], "N":n, "M":m} or
/// {"universal_grid":[[factor,...],...]} where a factor is
/// {"atoms":[..], "weights":[..]} or a bare weight list.
Filtration2 filtration_from_json(const std::string& json_text);

}  // namespace mhl
