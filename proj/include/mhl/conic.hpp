#pragma once

// Certified first-order solver for finite-dimensional programs of the form
//
//   minimize   Σ_g w_g ‖(K z − b)_g‖_{q_g}    subject to  C z = d
//
// with q_g ∈ {1, 2, ∞}. Every norm in this library that is an expectation of
// a pointwise norm of a linear image (H₁^S, H₁^s, H₁^*, S₁L₁, L¹(ℓ²), ...)
// fits this shape. The solver is Chambolle–Pock; each reported lower bound
// comes from a dual point repaired to exact feasibility, so
// lower <= optimum <= primal always holds.

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace mhl {

enum class PointwiseNorm { L1, L2, Linf };

struct NormGroup {
  std::size_t offset = 0;
  std::size_t size = 0;
  double weight = 1.0;
  PointwiseNorm kind = PointwiseNorm::L2;
};

double pointwise_norm(const Eigen::Ref<const Eigen::VectorXd>& v, PointwiseNorm kind);
double pointwise_dual_norm(const Eigen::Ref<const Eigen::VectorXd>& v, PointwiseNorm kind);

/// ‖v‖ = Σ_g w_g ‖(map v)_g‖.
struct GroupNorm {
  Eigen::MatrixXd map;
  std::vector<NormGroup> groups;

  std::size_t dim() const { return static_cast<std::size_t>(map.cols()); }
  double operator()(const Eigen::VectorXd& v) const;
};

/// Concatenate rows of two norms acting on the same vector.
GroupNorm stack(const GroupNorm& a, const GroupNorm& b);

struct ConicProgram {
  Eigen::MatrixXd K;
  Eigen::VectorXd b;
  std::vector<NormGroup> groups;
  Eigen::MatrixXd C;  // may have zero rows
  Eigen::VectorXd d;
};

struct ConicOptions {
  double abs_tolerance = 1e-9;
  double rel_tolerance = 1e-7;
  std::size_t max_iterations = 100000;
  std::size_t check_every = 25;
};

struct ConicResult {
  Eigen::VectorXd z;
  double primal = 0.0;
  double lower = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  double gap() const { return primal - lower; }
};

double objective(const ConicProgram& prog, const Eigen::VectorXd& z);
ConicResult solve_conic(const ConicProgram& prog, const ConicOptions& opts = {});

}  // namespace mhl
