#include "mhl/conic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mhl/error.hpp"

namespace mhl {

double pointwise_norm(const Eigen::Ref<const Eigen::VectorXd>& v, PointwiseNorm kind) {
  if (v.size() == 0) return 0.0;
  switch (kind) {
    case PointwiseNorm::L1: return v.lpNorm<1>();
    case PointwiseNorm::L2: return v.norm();
    case PointwiseNorm::Linf: return v.lpNorm<Eigen::Infinity>();
  }
  return 0.0;
}

double pointwise_dual_norm(const Eigen::Ref<const Eigen::VectorXd>& v, PointwiseNorm kind) {
  switch (kind) {
    case PointwiseNorm::L1: return pointwise_norm(v, PointwiseNorm::Linf);
    case PointwiseNorm::L2: return pointwise_norm(v, PointwiseNorm::L2);
    case PointwiseNorm::Linf: return pointwise_norm(v, PointwiseNorm::L1);
  }
  return 0.0;
}

double GroupNorm::operator()(const Eigen::VectorXd& v) const {
  const Eigen::VectorXd u = map * v;
  double s = 0.0;
  for (const auto& g : groups)
    s += g.weight * pointwise_norm(u.segment(static_cast<Eigen::Index>(g.offset),
                                             static_cast<Eigen::Index>(g.size)),
                                   g.kind);
  return s;
}

GroupNorm stack(const GroupNorm& a, const GroupNorm& b) {
  require(a.map.cols() == b.map.cols(), "stacked norms act on different dimensions");
  GroupNorm out;
  out.map.resize(a.map.rows() + b.map.rows(), a.map.cols());
  out.map << a.map, b.map;
  out.groups = a.groups;
  for (auto g : b.groups) {
    g.offset += static_cast<std::size_t>(a.map.rows());
    out.groups.push_back(g);
  }
  return out;
}

double objective(const ConicProgram& prog, const Eigen::VectorXd& z) {
  const Eigen::VectorXd u = prog.K * z - prog.b;
  double s = 0.0;
  for (const auto& g : prog.groups)
    s += g.weight * pointwise_norm(u.segment(static_cast<Eigen::Index>(g.offset),
                                             static_cast<Eigen::Index>(g.size)),
                                   g.kind);
  return s;
}

namespace {

// Euclidean projection onto {‖v‖_1 <= r}.
void project_l1_ball(Eigen::Ref<Eigen::VectorXd> v, double r) {
  if (v.lpNorm<1>() <= r) return;
  std::vector<double> a(static_cast<std::size_t>(v.size()));
  for (Eigen::Index k = 0; k < v.size(); ++k) a[static_cast<std::size_t>(k)] = std::abs(v[k]);
  std::sort(a.begin(), a.end(), std::greater<>());
  double cum = 0.0, theta = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    cum += a[k];
    const double t = (cum - r) / static_cast<double>(k + 1);
    if (k + 1 == a.size() || a[k + 1] <= t) {
      theta = t;
      break;
    }
  }
  for (Eigen::Index k = 0; k < v.size(); ++k)
    v[k] = std::copysign(std::max(std::abs(v[k]) - theta, 0.0), v[k]);
}

// Projection onto the dual-norm ball of radius r for a group of kind q.
void project_dual_ball(Eigen::Ref<Eigen::VectorXd> v, double r, PointwiseNorm kind) {
  switch (kind) {
    case PointwiseNorm::L1:
      v = v.cwiseMax(-r).cwiseMin(r);
      break;
    case PointwiseNorm::L2: {
      const double n = v.norm();
      if (n > r) v *= r / n;
      break;
    }
    case PointwiseNorm::Linf:
      project_l1_ball(v, r);
      break;
  }
}

double operator_norm(const Eigen::MatrixXd& K) {
  if (K.size() == 0) return 0.0;
  Eigen::VectorXd x = Eigen::VectorXd::Constant(K.cols(), 1.0);
  double est = 0.0;
  for (int it = 0; it < 200; ++it) {
    const Eigen::VectorXd y = K.transpose() * (K * x);
    const double n = y.norm();
    if (n == 0.0) return 0.0;
    const double next = std::sqrt(n / x.norm());
    x = y / n;
    if (std::abs(next - est) <= 1e-10 * next) return next;
    est = next;
  }
  return est;
}

class Solver {
 public:
  Solver(const ConicProgram& prog, const ConicOptions& opts) : prog_(prog), opts_(opts) {
    const auto n = prog.K.cols();
    require(prog.b.size() == prog.K.rows(), "offset length differs from row count");
    require(prog.C.rows() == 0 || prog.C.cols() == n, "constraint matrix has wrong width");
    require(prog.d.size() == prog.C.rows(), "constraint rhs has wrong length");
    std::size_t covered = 0;
    for (const auto& g : prog.groups) {
      require(g.offset + g.size <= static_cast<std::size_t>(prog.K.rows()), "group out of range");
      covered += g.size;
    }
    require(covered == static_cast<std::size_t>(prog.K.rows()), "groups must cover all rows");
    Eigen::MatrixXd kt = prog.K.transpose();
    if (prog.C.rows() > 0) {
      cc_.compute(prog.C * prog.C.transpose());
      kt = complement(kt);
    }
    repair_.compute(kt);
  }

  // Component orthogonal to the row space of C.
  Eigen::MatrixXd complement(const Eigen::MatrixXd& v) const {
    if (prog_.C.rows() == 0) return v;
    return v - prog_.C.transpose() * cc_.solve(prog_.C * v);
  }

  Eigen::VectorXd project_feasible(const Eigen::VectorXd& z) const {
    if (prog_.C.rows() == 0) return z;
    return z - prog_.C.transpose() * cc_.solve(prog_.C * z - prog_.d);
  }

  // Dual objective at a repaired, feasible version of y.
  double certified_lower(const Eigen::VectorXd& y) const {
    // smallest change of y making Kᵀy a combination of the rows of C
    const Eigen::VectorXd kty = prog_.K.transpose() * y;
    Eigen::VectorXd yc = y - repair_.solve(complement(kty));
    Eigen::VectorXd nu = Eigen::VectorXd::Zero(prog_.C.rows());
    if (prog_.C.rows() > 0) nu = cc_.solve(prog_.C * (prog_.K.transpose() * yc));
    const Eigen::VectorXd resid = prog_.K.transpose() * yc - prog_.C.transpose() * nu;
    if (resid.norm() > 1e-9 * (1.0 + kty.norm())) return -std::numeric_limits<double>::infinity();
    double scale = 1.0;
    for (const auto& g : prog_.groups) {
      const double dn = pointwise_dual_norm(
          yc.segment(static_cast<Eigen::Index>(g.offset), static_cast<Eigen::Index>(g.size)),
          g.kind);
      if (dn > g.weight) scale = std::min(scale, g.weight / dn);
    }
    yc *= scale;
    nu *= scale;
    return nu.dot(prog_.d) - yc.dot(prog_.b);
  }

  ConicResult run() {
    const auto n = prog_.K.cols();
    const auto m = prog_.K.rows();
    ConicResult best;
    best.primal = std::numeric_limits<double>::infinity();
    best.lower = -std::numeric_limits<double>::infinity();

    Eigen::VectorXd z = project_feasible(Eigen::VectorXd::Zero(n));
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
    best.z = z;
    const double L = operator_norm(prog_.K);
    if (L == 0.0) {
      best.primal = objective(prog_, z);
      best.lower = best.primal;
      best.converged = true;
      return best;
    }
    // Primal weight balancing the two step sizes; adapted at restarts.
    double omega = 1.0;
    Eigen::VectorXd z_avg = z, y_avg = y, z_start = z, y_start = y;
    std::size_t since_restart = 0;
    double last_restart_gap = std::numeric_limits<double>::infinity();

    for (std::size_t it = 1; it <= opts_.max_iterations; ++it) {
      const double tau = 0.95 / (L * omega);
      const double sigma = 0.95 * omega / L;
      const Eigen::VectorXd z_next = project_feasible(z - tau * (prog_.K.transpose() * y));
      const Eigen::VectorXd z_bar = 2.0 * z_next - z;
      Eigen::VectorXd y_next = y + sigma * (prog_.K * z_bar - prog_.b);
      for (const auto& g : prog_.groups)
        project_dual_ball(y_next.segment(static_cast<Eigen::Index>(g.offset),
                                         static_cast<Eigen::Index>(g.size)),
                          g.weight, g.kind);
      z = z_next;
      y = y_next;
      ++since_restart;
      const double k = static_cast<double>(since_restart);
      z_avg += (z - z_avg) / k;
      y_avg += (y - y_avg) / k;

      if (it % opts_.check_every != 0 && it != opts_.max_iterations) continue;

      // Candidates: current and averaged iterates.
      double gap_cur = consider(z, y, best);
      double gap_avg = consider(project_feasible(z_avg), y_avg, best);
      best.iterations = it;
      if (best.gap() <= opts_.abs_tolerance + opts_.rel_tolerance * std::abs(best.primal)) {
        best.converged = true;
        return best;
      }
      // Adaptive restart when the gap has shrunk enough since the last one.
      const double gap_now = std::min(gap_cur, gap_avg);
      if (gap_now <= 0.5 * last_restart_gap || since_restart >= 20 * opts_.check_every) {
        if (gap_avg < gap_cur) {
          z = project_feasible(z_avg);
          y = y_avg;
        }
        const double dz = (z - z_start).norm();
        const double dy = (y - y_start).norm();
        if (dz > 1e-12 && dy > 1e-12) omega = std::exp(0.5 * std::log(dy / dz) + 0.5 * std::log(omega));
        z_start = z;
        y_start = y;
        z_avg = z;
        y_avg = y;
        since_restart = 0;
        last_restart_gap = gap_now;
      }
    }
    return best;
  }

 private:
  double consider(const Eigen::VectorXd& z, const Eigen::VectorXd& y, ConicResult& best) const {
    const double primal = objective(prog_, z);
    const double lower = certified_lower(y);
    if (primal < best.primal) {
      best.primal = primal;
      best.z = z;
    }
    best.lower = std::max(best.lower, lower);
    return primal - lower;
  }

  const ConicProgram& prog_;
  const ConicOptions& opts_;
  Eigen::LDLT<Eigen::MatrixXd> cc_;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> repair_;
};

}  // namespace

ConicResult solve_conic(const ConicProgram& prog, const ConicOptions& opts) {
  Solver s(prog, opts);
  return s.run();
}

}  // namespace mhl
