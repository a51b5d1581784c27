#pragma once

// The weighted square-function program behind the main lemma, dual norms of
// finite-dimensional Hardy-type spaces, the gradient equivalence and the
// martingale gradient probe.

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "mhl/operators.hpp"

namespace mhl {

/// A sequence indexed by I × J, stored [i * J + j].
using Sequence = std::vector<RandomVariable>;

/// w_{i,j} ∈ [0,1] over a family (F_i)_{i∈I} of sigma-algebras on one space.
struct WeightSystem {
  SpacePtr space;
  std::vector<Partition> sigmas;  // F_i
  std::size_t J = 1;
  Sequence w;

  std::size_t I() const { return sigmas.size(); }
  std::size_t index(std::size_t i, std::size_t j) const { return i * J + j; }
  void validate() const;
};

/// Sequences with φ_{i,j} F_i-measurable and supported on A_{i,j} = {E_i w_{i,j} ≥ κ},
/// coordinatized by their values on the F_i-blocks inside A_{i,j}.
class AdaptedSequenceSpace {
 public:
  AdaptedSequenceSpace(const WeightSystem& ws, double kappa);

  std::size_t dim() const { return var_cell_.size(); }
  const WeightSystem& weights() const { return ws_; }
  double kappa() const { return kappa_; }
  /// 1_{A_{i,j}}.
  const RandomVariable& support(std::size_t i, std::size_t j) const {
    return support_[ws_.index(i, j)];
  }
  /// μ(block) per coordinate.
  const Eigen::VectorXd& block_mass() const { return mass_; }

  Sequence to_sequence(const Eigen::VectorXd& c) const;
  /// Orthogonal projection E_i(·)·1_A, in coordinates.
  Eigen::VectorXd project(const Sequence& s) const;
  bool contains(const Sequence& s, double tol = 1e-12) const;
  /// ⟨φ,ψ⟩ = Σ E φ ψ in coordinates.
  double pairing(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const;

  /// E sqrt(Σ φ²) as a norm on coordinates.
  GroupNorm h1_norm() const;

  /// Φ_ε(c) = E sqrt(Σ (w φ)² + ε²); ε = 0 gives Φ.
  double phi(const Eigen::VectorXd& c, double eps = 0.0) const;
  Eigen::VectorXd phi_gradient(const Eigen::VectorXd& c, double eps) const;
  Eigen::MatrixXd phi_hessian(const Eigen::VectorXd& c, double eps) const;

 private:
  WeightSystem ws_;
  double kappa_;
  Sequence support_;
  std::vector<std::size_t> var_cell_;  // coordinate -> cell
  std::vector<std::size_t> var_block_; // coordinate -> F_i block id
  Eigen::VectorXd mass_;
  // per atom: (coordinate, w) for every cell whose support contains the atom
  std::vector<std::vector<std::pair<std::size_t, double>>> atom_vars_;
};

struct Lemma1Check {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
};

/// lhs = E sqrt(Σ (w f)²), rhs = κ²δ E sqrt(Σ 1{E_i w ≥ κ} f²).
Lemma1Check verify_lemma1(const WeightSystem& ws, const Sequence& f, double kappa, double delta);

struct OptimizationReport {
  Sequence minimizer;
  Eigen::VectorXd coefficients;
  double lambda = 0.0;
  double phi = 0.0;
  double residual = 0.0;  // ‖∇Φ − λ g‖ in h₂
  double epsilon = 0.0;   // final smoothing
  std::size_t iterations = 0;
  bool converged = false;
};

struct PhiOptions {
  double tolerance = 1e-6;
  double eps_start = 1e-2;
  double eps_end = 1e-10;
  std::size_t max_newton = 200;
};

/// min Φ over {f ∈ h^𝒜 : ⟨f, g⟩ = 1}; g is projected onto h^𝒜 first.
OptimizationReport minimize_phi(const AdaptedSequenceSpace& space, const Sequence& g,
                                const PhiOptions& opts = {});

struct DualNormResult {
  double value = 0.0;  // attained by the witness
  double lower = 0.0;
  double upper = 0.0;
  Eigen::VectorXd witness;  // primal-unit-norm maximizer, in coordinates
  std::size_t iterations = 0;
  bool converged = false;
};

/// sup{ functional·z : primal(z) ≤ 1 }. Throws NotConverged with the bracket
/// when it stays wider than tol.
DualNormResult dual_norm(const GroupNorm& primal, const Eigen::VectorXd& functional,
                         double tol = 1e-6, std::size_t max_iterations = 200000);
/// ‖g‖ in the dual of a Hardy-type norm on functions, under ⟨f,g⟩ = E f g.
DualNormResult hardy_dual_norm(const RandomVariable& g, const Filtration2& filt, HardyKind kind,
                               double tol = 1e-6);
/// ‖g‖ in (h₁^𝒜(ℓ²))*.
DualNormResult adapted_dual_norm(const AdaptedSequenceSpace& space, const Sequence& g,
                                 double tol = 1e-6);

/// Subspaces V_k of L²(Ω), pointwise X = ℓ_pX on R^N, Y = L²(ℓ²) on V.
struct GradLemmaInstance {
  SpacePtr space;
  std::vector<Eigen::MatrixXd> subspaces;  // columns span V_k, one row per atom
  double pX = 2.0;
  double q = 2.0;
  double C = 0.0;
};

struct GradLemmaReport {
  std::size_t dim = 0;
  std::size_t samples = 0;
  double min_ratio_i = 0.0;   // inf E‖f‖_X^q / ‖f‖_Y^q
  double min_ratio_ii = 0.0;  // inf ‖P_V(‖f‖_X^{q-1}∇‖·‖_X(f))‖_{Y*} / ‖f‖_Y^{q-1}
  bool holds_i = false;
  bool holds_ii = false;
  bool equivalent = false;
  double gradient_error = 0.0;  // worst finite-difference mismatch seen
  // q = 1: support-restricted condition and its consequence
  std::optional<double> min_ratio_restricted;
  bool implication_ok = true;
};

/// Samples the unit sphere of V, then refines the minima by pattern search.
GradLemmaReport check_gradlemma(const GradLemmaInstance& inst, std::uint64_t seed,
                                std::size_t samples = 4000);
GradLemmaInstance random_gradlemma_instance(std::uint64_t seed, std::size_t atoms,
                                            std::size_t components, std::size_t dim, double pX,
                                            double q);

struct ProbeResult {
  double primal = 0.0;             // E (Σ_n |E_n F|^p)^{1/p}
  double h1S = 0.0;                // ‖F‖_{H₁^S}
  double dual_of_F = 0.0;          // ‖F‖_{(H₁^S)*}
  double primal_ratio_h1S = 0.0;
  double primal_ratio_dual = 0.0;
  double dual_value = 0.0;         // ‖Σ_k Δ_k(...)‖_{(H₁^S)*}
  double dual_lower = 0.0, dual_upper = 0.0;
};

/// The gradient expression Σ_k Δ_k(Σ_{n≥k} sgn f_n |f_n|^{p-1} / S^{(p-1)/p}).
RandomVariable probe_gradient(const RandomVariable& F, const Filtration2& filt, double p);
ProbeResult gradient_probe(const RandomVariable& F, const Filtration2& filt, double p,
                           double tol = 1e-6);

}  // namespace mhl
