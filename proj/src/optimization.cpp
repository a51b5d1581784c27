#include "mhl/optimization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "mhl/error.hpp"

namespace mhl {

namespace {

constexpr double kIndicatorSlack = 1e-12;

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

Eigen::Index ix(std::size_t k) { return static_cast<Eigen::Index>(k); }

}  // namespace

void WeightSystem::validate() const {
  require(space != nullptr, "weight system needs a space");
  require(!sigmas.empty() && J > 0, "weight system index sets must be nonempty");
  require(w.size() == sigmas.size() * J, "weight grid does not match I × J");
  for (const auto& s : sigmas)
    require(same_space(s.space(), space), "sigma-algebra on a different space",
            ErrorCode::SpaceMismatch);
  for (const auto& x : w) {
    require(same_space(x.space(), space), "weight on a different space", ErrorCode::SpaceMismatch);
    for (double v : x.values())
      require(v >= -kWeightTolerance && v <= 1.0 + kWeightTolerance, "weights must lie in [0,1]");
  }
}

// ---------------------------------------------------------------------------

AdaptedSequenceSpace::AdaptedSequenceSpace(const WeightSystem& ws, double kappa)
    : ws_(ws), kappa_(kappa) {
  ws_.validate();
  require(kappa > 0.0, "kappa must be positive");
  const std::size_t n = ws_.space->size();
  atom_vars_.assign(n, {});
  std::vector<double> mass;
  for (std::size_t i = 0; i < ws_.I(); ++i) {
    const auto& sigma = ws_.sigmas[i];
    const auto bw = sigma.block_weights();
    const auto members = sigma.block_members();
    for (std::size_t j = 0; j < ws_.J; ++j) {
      const std::size_t cell = ws_.index(i, j);
      const auto ew = cond_expect(ws_.w[cell], sigma);
      RandomVariable ind(ws_.space);
      for (std::size_t b = 0; b < members.size(); ++b) {
        if (bw[b] <= 0.0 || ew[members[b].front()] < kappa - kIndicatorSlack) continue;
        const std::size_t var = var_cell_.size();
        var_cell_.push_back(cell);
        var_block_.push_back(b);
        mass.push_back(bw[b]);
        for (std::size_t a : members[b]) {
          ind[a] = 1.0;
          atom_vars_[a].emplace_back(var, ws_.w[cell][a]);
        }
      }
      support_.push_back(std::move(ind));
    }
  }
  mass_ = Eigen::Map<const Eigen::VectorXd>(mass.data(), ix(mass.size()));
}

Sequence AdaptedSequenceSpace::to_sequence(const Eigen::VectorXd& c) const {
  require(static_cast<std::size_t>(c.size()) == dim(), "coefficient vector has the wrong size");
  Sequence out(ws_.w.size(), RandomVariable(ws_.space));
  for (std::size_t a = 0; a < atom_vars_.size(); ++a)
    for (const auto& [v, w] : atom_vars_[a]) out[var_cell_[v]][a] = c[ix(v)];
  return out;
}

Eigen::VectorXd AdaptedSequenceSpace::project(const Sequence& s) const {
  require(s.size() == ws_.w.size(), "sequence does not match I × J");
  for (const auto& x : s)
    require(same_space(x.space(), ws_.space), "sequence on a different space",
            ErrorCode::SpaceMismatch);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(ix(dim()));
  for (std::size_t a = 0; a < atom_vars_.size(); ++a)
    for (const auto& [v, w] : atom_vars_[a])
      c[ix(v)] += ws_.space->weight(a) * s[var_cell_[v]][a];
  return c.cwiseQuotient(mass_);
}

bool AdaptedSequenceSpace::contains(const Sequence& s, double tol) const {
  const auto back = to_sequence(project(s));
  for (std::size_t k = 0; k < s.size(); ++k)
    for (std::size_t a = 0; a < s[k].size(); ++a)
      if (std::abs(s[k][a] - back[k][a]) > tol) return false;
  return true;
}

double AdaptedSequenceSpace::pairing(const Eigen::VectorXd& a, const Eigen::VectorXd& b) const {
  return (mass_.array() * a.array() * b.array()).sum();
}

GroupNorm AdaptedSequenceSpace::h1_norm() const {
  std::size_t rows = 0;
  for (const auto& vars : atom_vars_) rows += vars.size();
  GroupNorm g;
  g.map = Eigen::MatrixXd::Zero(ix(rows), ix(dim()));
  std::size_t r = 0;
  for (std::size_t a = 0; a < atom_vars_.size(); ++a) {
    if (atom_vars_[a].empty()) continue;
    g.groups.push_back({r, atom_vars_[a].size(), ws_.space->weight(a), PointwiseNorm::L2});
    for (const auto& [v, w] : atom_vars_[a]) g.map(ix(r++), ix(v)) = 1.0;
  }
  return g;
}

double AdaptedSequenceSpace::phi(const Eigen::VectorXd& c, double eps) const {
  double total = 0.0;
  for (std::size_t a = 0; a < atom_vars_.size(); ++a) {
    double s = eps * eps;
    for (const auto& [v, w] : atom_vars_[a]) s += w * w * c[ix(v)] * c[ix(v)];
    total += ws_.space->weight(a) * std::sqrt(s);
  }
  return total;
}

Eigen::VectorXd AdaptedSequenceSpace::phi_gradient(const Eigen::VectorXd& c, double eps) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(ix(dim()));
  for (std::size_t a = 0; a < atom_vars_.size(); ++a) {
    double s = eps * eps;
    for (const auto& [v, w] : atom_vars_[a]) s += w * w * c[ix(v)] * c[ix(v)];
    const double r = std::sqrt(s);
    if (r == 0.0) continue;
    const double mu = ws_.space->weight(a);
    for (const auto& [v, w] : atom_vars_[a]) g[ix(v)] += mu * w * w * c[ix(v)] / r;
  }
  return g;
}

Eigen::MatrixXd AdaptedSequenceSpace::phi_hessian(const Eigen::VectorXd& c, double eps) const {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(ix(dim()), ix(dim()));
  for (std::size_t a = 0; a < atom_vars_.size(); ++a) {
    const auto& vars = atom_vars_[a];
    double s = eps * eps;
    for (const auto& [v, w] : vars) s += w * w * c[ix(v)] * c[ix(v)];
    const double r = std::sqrt(s);
    if (r == 0.0) continue;
    const double mu = ws_.space->weight(a);
    const double r3 = r * r * r;
    for (const auto& [v, w] : vars) {
      h(ix(v), ix(v)) += mu * w * w / r;
      const double gv = w * w * c[ix(v)];
      for (const auto& [v2, w2] : vars) h(ix(v), ix(v2)) -= mu * gv * w2 * w2 * c[ix(v2)] / r3;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

Lemma1Check verify_lemma1(const WeightSystem& ws, const Sequence& f, double kappa, double delta) {
  ws.validate();
  require(kappa > 0.0, "kappa must be positive");
  require(delta > 0.0 && delta <= 1.0, "Doob constant must lie in (0,1]");
  require(f.size() == ws.w.size(), "field does not match I × J");
  std::vector<RandomVariable> ew;
  for (std::size_t i = 0; i < ws.I(); ++i)
    for (std::size_t j = 0; j < ws.J; ++j) {
      const auto& x = f[ws.index(i, j)];
      require(same_space(x.space(), ws.space), "field on a different space",
              ErrorCode::SpaceMismatch);
      require(ws.sigmas[i].is_measurable(x, 1e-12 * std::max(1.0, x.max_abs())),
              "field entry is not measurable for its sigma-algebra");
      ew.push_back(cond_expect(ws.w[ws.index(i, j)], ws.sigmas[i]));
    }
  Lemma1Check out;
  double rhs = 0.0;
  for (std::size_t a = 0; a < ws.space->size(); ++a) {
    double sl = 0.0, sr = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double wf = ws.w[k][a] * f[k][a];
      sl += wf * wf;
      if (ew[k][a] >= kappa - kIndicatorSlack) sr += f[k][a] * f[k][a];
    }
    out.lhs += ws.space->weight(a) * std::sqrt(sl);
    rhs += ws.space->weight(a) * std::sqrt(sr);
  }
  out.rhs = kappa * kappa * delta * rhs;
  out.holds = out.lhs >= out.rhs - 1e-9;
  return out;
}

// ---------------------------------------------------------------------------

OptimizationReport minimize_phi(const AdaptedSequenceSpace& space, const Sequence& g,
                                const PhiOptions& opts) {
  require(opts.eps_start > 0.0 && opts.eps_end > 0.0 && opts.eps_end <= opts.eps_start,
          "smoothing schedule must decrease from a positive start");
  const Eigen::VectorXd ghat = space.project(g);
  const Eigen::VectorXd& mass = space.block_mass();
  const Eigen::VectorXd a = mass.cwiseProduct(ghat);
  const double a2 = a.squaredNorm();
  require(space.dim() > 0 && a2 > 0.0, "dual element vanishes on the adapted support space");

  Eigen::VectorXd c = a / a2;
  const double scale = space.phi(c, 0.0);
  OptimizationReport rep;

  // h₂ distance between the gradient and its best multiple of g
  auto lagrange = [&](const Eigen::VectorXd& x, double eps, double* lambda) {
    const Eigen::VectorXd G = space.phi_gradient(x, eps).cwiseQuotient(mass);
    const double l = space.pairing(G, ghat) / space.pairing(ghat, ghat);
    const Eigen::VectorXd res = G - l * ghat;
    if (lambda) *lambda = l;
    return std::sqrt(space.pairing(res, res));
  };

  // orthonormal basis of the tangent space {h : aᵀh = 0}
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr{Eigen::MatrixXd(a)};
  const Eigen::MatrixXd Z =
      (qr.householderQ() * Eigen::MatrixXd::Identity(a.size(), a.size())).rightCols(a.size() - 1);

  std::optional<Eigen::VectorXd> kept, previous;
  for (double eps = opts.eps_start * scale;; eps *= 0.1) {
    // small coordinates of the smoothed minimizer scale like ε, so the
    // previous two stages give a linear prediction for this one
    if (previous) {
      const Eigen::VectorXd guess = c + 0.1 * (c - *previous);
      previous = c;
      if (space.phi(guess, eps) <= space.phi(c, eps)) c = guess;
    } else if (kept) {
      previous = c;
    }
    double resid = lagrange(c, eps, nullptr);
    for (std::size_t it = 0; it < opts.max_newton && resid > 1e-3 * opts.tolerance; ++it) {
      const Eigen::VectorXd grad = Z.transpose() * space.phi_gradient(c, eps);
      Eigen::MatrixXd h = Z.transpose() * space.phi_hessian(c, eps) * Z;
      h.diagonal().array() += 1e-15 * std::max(h.diagonal().maxCoeff(), 1e-300);
      const Eigen::VectorXd d = -Z * Eigen::LDLT<Eigen::MatrixXd>(h).solve(grad);
      const double decrement = -grad.dot(Z.transpose() * d);
      ++rep.iterations;
      if (!(decrement > 0.0)) break;
      const double f0 = space.phi(c, eps);
      double t = 1.0;
      if (decrement > 1e-12 * f0) {
        while (t > 1e-20 && space.phi(c + t * d, eps) > f0 - 0.25 * t * decrement) t *= 0.5;
      } else {
        // below the resolution of Φ: backtrack on the stationarity residual instead
        while (t > 1e-20 && lagrange(c + t * d, eps, nullptr) >= resid) t *= 0.5;
      }
      if (t <= 1e-20) break;
      c += t * d;
      resid = lagrange(c, eps, nullptr);
    }
    // The last stage that reached stationarity is reported.
    if (resid <= 1e-3 * opts.tolerance || !kept) {
      kept = c;
      rep.epsilon = eps;
    }
    if (eps <= opts.eps_end * scale * (1.0 + 1e-9)) break;
  }

  c = *kept;
  rep.residual = lagrange(c, rep.epsilon, &rep.lambda);
  rep.phi = space.phi(c, 0.0);
  rep.coefficients = c;
  rep.minimizer = space.to_sequence(c);
  rep.converged = rep.residual <= opts.tolerance && std::abs(rep.lambda - rep.phi) <= opts.tolerance;
  return rep;
}

// ---------------------------------------------------------------------------

DualNormResult dual_norm(const GroupNorm& primal, const Eigen::VectorXd& functional, double tol,
                         std::size_t max_iterations) {
  require(tol > 0.0, "dual norm tolerance must be positive");
  require(static_cast<std::size_t>(functional.size()) == primal.dim(),
          "functional does not match the primal dimension");
  DualNormResult out;
  out.witness = Eigen::VectorXd::Zero(functional.size());
  if (functional.lpNorm<Eigen::Infinity>() == 0.0) {
    out.converged = true;
    return out;
  }
  // sup{φ·z : ‖z‖ ≤ 1} = 1 / min{‖z‖ : φ·z = 1}
  ConicProgram prog;
  prog.K = primal.map;
  prog.b = Eigen::VectorXd::Zero(primal.map.rows());
  prog.groups = primal.groups;
  prog.C = functional.transpose();
  prog.d = Eigen::VectorXd::Ones(1);

  double rel = std::min(1e-7, 0.25 * tol);
  for (int attempt = 0; attempt < 3; ++attempt) {
    ConicOptions opts;
    opts.rel_tolerance = rel;
    opts.abs_tolerance = 0.0;
    opts.max_iterations = max_iterations;
    const auto r = solve_conic(prog, opts);
    out.iterations += r.iterations;
    if (r.primal > 0.0 && std::isfinite(r.primal)) {
      out.value = 1.0 / r.primal;
      out.witness = r.z / r.primal;
    }
    out.lower = out.value;
    out.upper = r.lower > 0.0 ? std::max(out.value, 1.0 / r.lower)
                              : std::numeric_limits<double>::infinity();
    if (out.upper - out.lower <= tol) {
      out.converged = true;
      return out;
    }
    if (!std::isfinite(out.upper)) break;
    rel = std::min(rel, 0.25 * tol / out.upper) * 0.5;
  }
  std::ostringstream os;
  os.precision(17);
  os << "dual norm bracket [" << out.lower << ", " << out.upper << "] wider than " << tol;
  fail(ErrorCode::NotConverged, os.str());
}

DualNormResult hardy_dual_norm(const RandomVariable& g, const Filtration2& filt, HardyKind kind,
                               double tol) {
  require(same_space(g.space(), filt.space()), "function on a different space",
          ErrorCode::SpaceMismatch);
  require(filt.grid().back().is_measurable(g, 1e-12 * std::max(1.0, g.max_abs())),
          "functional must be measurable for the terminal sigma-algebra");
  Eigen::VectorXd phi(ix(g.size()));
  for (std::size_t a = 0; a < g.size(); ++a) phi[ix(a)] = filt.space()->weight(a) * g[a];
  return dual_norm(hardy_group_norm(filt, kind), phi, tol);
}

DualNormResult adapted_dual_norm(const AdaptedSequenceSpace& space, const Sequence& g, double tol) {
  const Eigen::VectorXd phi = space.block_mass().cwiseProduct(space.project(g));
  return dual_norm(space.h1_norm(), phi, tol);
}

// ---------------------------------------------------------------------------

namespace {

struct GradGeometry {
  std::size_t atoms = 0;
  std::vector<double> mu;
  std::vector<Eigen::MatrixXd> basis;  // μ-orthonormal columns per component
  std::vector<std::size_t> offset;
  std::size_t dim = 0;

  // f_k(ω) for all k, ω; row = atom, column = component
  Eigen::MatrixXd field(const Eigen::VectorXd& c) const {
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(ix(atoms), ix(basis.size()));
    for (std::size_t k = 0; k < basis.size(); ++k)
      if (basis[k].cols() > 0)
        f.col(ix(k)) = basis[k] * c.segment(ix(offset[k]), basis[k].cols());
    return f;
  }
  // coordinates of P_V h
  Eigen::VectorXd project(const Eigen::MatrixXd& h) const {
    Eigen::VectorXd out(ix(dim));
    const Eigen::Map<const Eigen::VectorXd> m(mu.data(), ix(atoms));
    for (std::size_t k = 0; k < basis.size(); ++k)
      if (basis[k].cols() > 0)
        out.segment(ix(offset[k]), basis[k].cols()) =
            basis[k].transpose() * m.cwiseProduct(h.col(ix(k)));
    return out;
  }
};

double lp_norm(const Eigen::RowVectorXd& x, double p) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) s += std::pow(std::abs(x[k]), p);
  return std::pow(s, 1.0 / p);
}

Eigen::RowVectorXd lp_gradient(const Eigen::RowVectorXd& x, double p) {
  const double nrm = lp_norm(x, p);
  Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(x.size());
  if (nrm == 0.0) return g;
  for (Eigen::Index k = 0; k < x.size(); ++k)
    g[k] = sgn(x[k]) * std::pow(std::abs(x[k]) / nrm, p - 1.0);
  return g;
}

// Largest disagreement between the analytic gradient and one-sided
// difference quotients at x.
double gradient_mismatch(const Eigen::RowVectorXd& x, double p) {
  // the gradient is 0-homogeneous, so the step scales with x
  const double h = 1e-6 * x.cwiseAbs().maxCoeff();
  const Eigen::RowVectorXd g = lp_gradient(x, p);
  const double f0 = lp_norm(x, p);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Eigen::RowVectorXd y = x;
    y[k] += h;
    const double fwd = (lp_norm(y, p) - f0) / h;
    y[k] = x[k] - h;
    const double bwd = (f0 - lp_norm(y, p)) / h;
    worst = std::max({worst, std::abs(fwd - g[k]), std::abs(bwd - g[k])});
  }
  return worst;
}

struct GradEvaluator {
  const GradGeometry& geo;
  double p, q;

  double ratio_i(const Eigen::VectorXd& c) const {
    const auto f = geo.field(c);
    double e = 0.0;
    for (std::size_t a = 0; a < geo.atoms; ++a) e += geo.mu[a] * std::pow(lp_norm(f.row(ix(a)), p), q);
    return e / std::pow(c.norm(), q);
  }
  double ratio_ii(const Eigen::VectorXd& c) const {
    const auto f = geo.field(c);
    Eigen::MatrixXd h(f.rows(), f.cols());
    for (std::size_t a = 0; a < geo.atoms; ++a) {
      const Eigen::RowVectorXd x = f.row(ix(a));
      h.row(ix(a)) = std::pow(lp_norm(x, p), q - 1.0) * lp_gradient(x, p);
    }
    return geo.project(h).norm() / std::pow(c.norm(), q - 1.0);
  }
  // ‖P_{V∩F} ∇‖·‖_X(f)‖ where F = {φ : φ_k(ω) = 0 whenever zero[ω·N + k]}; the
  // projection has operator norm 1 since f itself lies in V∩F.
  double ratio_restricted(const Eigen::VectorXd& c, const std::vector<char>& zero) const {
    const auto f = geo.field(c);
    const std::size_t N = geo.basis.size();
    double total = 0.0;
    for (std::size_t k = 0; k < N; ++k) {
      const auto& B = geo.basis[k];
      if (B.cols() == 0) continue;
      std::vector<Eigen::Index> off;
      for (std::size_t a = 0; a < geo.atoms; ++a)
        if (zero[a * N + k]) off.push_back(ix(a));
      const Eigen::MatrixXd K = kernel_of_rows(B, off);
      if (K.cols() == 0) continue;
      Eigen::VectorXd grad_k(ix(geo.atoms));
      for (std::size_t a = 0; a < geo.atoms; ++a)
        grad_k[ix(a)] = geo.mu[a] * lp_gradient(f.row(ix(a)), p)[ix(k)];
      total += (K.transpose() * (B.transpose() * grad_k)).squaredNorm();
    }
    return std::sqrt(total);
  }

  // Orthonormal basis of {u : (B u)(ω) = 0 for ω in rows}.
  static Eigen::MatrixXd kernel_of_rows(const Eigen::MatrixXd& B, const std::vector<Eigen::Index>& rows) {
    if (rows.empty()) return Eigen::MatrixXd::Identity(B.cols(), B.cols());
    Eigen::MatrixXd R(ix(rows.size()), B.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) R.row(ix(r)) = B.row(rows[r]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(R, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Eigen::Index rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
      if (sv[k] > 1e-10 * std::max(1.0, sv[0])) ++rank;
    return svd.matrixV().rightCols(B.cols() - rank);
  }
};

// Coordinate pattern search on the unit sphere.
template <class Fn>
double refine_min(const Fn& fn, Eigen::VectorXd c) {
  c.normalize();
  double best = fn(c);
  for (double step = 0.1; step > 1e-9; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (Eigen::Index k = 0; k < c.size(); ++k)
        for (double s : {step, -step}) {
          Eigen::VectorXd y = c;
          y[k] += s;
          y.normalize();
          const double v = fn(y);
          if (v < best) {
            best = v;
            c = y;
            improved = true;
          }
        }
    }
  }
  return best;
}

void face_grid(std::size_t d, std::size_t m, std::vector<Eigen::VectorXd>& out) {
  if (m < 2) return;
  std::vector<std::size_t> idx(d > 0 ? d - 1 : 0, 0);
  for (std::size_t axis = 0; axis < d; ++axis)
    for (double sign : {1.0, -1.0}) {
      std::fill(idx.begin(), idx.end(), 0);
      while (true) {
        Eigen::VectorXd v(ix(d));
        std::size_t t = 0;
        for (std::size_t k = 0; k < d; ++k)
          v[ix(k)] = k == axis ? sign : -1.0 + 2.0 * static_cast<double>(idx[t++]) / static_cast<double>(m - 1);
        out.push_back(v.normalized());
        std::size_t k = 0;
        while (k < idx.size() && ++idx[k] == m) idx[k++] = 0;
        if (k == idx.size()) break;
      }
    }
}

}  // namespace

GradLemmaReport check_gradlemma(const GradLemmaInstance& inst, std::uint64_t seed,
                                std::size_t samples) {
  require(inst.space != nullptr, "gradient lemma instance needs a space");
  require(!inst.subspaces.empty(), "gradient lemma instance needs at least one subspace");
  require(inst.q >= 1.0, "q must be at least 1");
  require(std::isfinite(inst.pX) && inst.pX >= 1.0, "X must be a finite l_p norm with p >= 1");
  GradGeometry geo;
  geo.atoms = inst.space->size();
  geo.mu = inst.space->weights();
  const Eigen::Map<const Eigen::VectorXd> mu(geo.mu.data(), ix(geo.atoms));
  const Eigen::VectorXd sq = mu.cwiseSqrt();
  for (const auto& V : inst.subspaces) {
    require(static_cast<std::size_t>(V.rows()) == geo.atoms, "subspace basis has the wrong height");
    geo.offset.push_back(geo.dim);
    if (V.cols() == 0) {
      geo.basis.emplace_back(ix(geo.atoms), 0);
      continue;
    }
    // orthonormalize in L²(μ)
    const Eigen::MatrixXd scaled = sq.asDiagonal() * V;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeThinU);
    Eigen::Index rank = 0;
    for (Eigen::Index s = 0; s < svd.singularValues().size(); ++s)
      if (svd.singularValues()[s] > 1e-10 * svd.singularValues()[0]) ++rank;
    geo.basis.push_back(sq.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(rank));
    geo.dim += static_cast<std::size_t>(rank);
  }
  require(geo.dim > 0, "V is the zero subspace");
  require(geo.dim <= 6, "sampling check supports dim V <= 6");

  GradLemmaReport rep;
  rep.dim = geo.dim;
  const bool q1 = inst.q == 1.0;
  GradEvaluator ev{geo, inst.pX, inst.q};

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Eigen::VectorXd> pts;
  const std::size_t m = geo.dim <= 2 ? 401 : geo.dim == 3 ? 31 : geo.dim == 4 ? 11 : 6;
  face_grid(geo.dim, m, pts);
  for (std::size_t s = 0; s < samples; ++s) {
    Eigen::VectorXd v(ix(geo.dim));
    for (auto& x : v) x = gauss(rng);
    if (v.norm() > 0.0) pts.push_back(v.normalized());
  }
  rep.samples = pts.size();

  // differentiability of X at the sampled values and at their kinks
  std::size_t probes = 0;
  for (const auto& c : pts) {
    if (probes++ >= 200) break;
    const auto f = geo.field(c);
    for (std::size_t a = 0; a < geo.atoms; ++a) {
      Eigen::RowVectorXd x = f.row(ix(a));
      if (x.cwiseAbs().maxCoeff() == 0.0) continue;
      rep.gradient_error = std::max(rep.gradient_error, gradient_mismatch(x, inst.pX));
      for (Eigen::Index k = 0; k < x.size() && x.size() > 1; ++k) {
        Eigen::RowVectorXd y = x;
        y[k] = 0.0;
        if (y.cwiseAbs().maxCoeff() > 0.0)
          rep.gradient_error = std::max(rep.gradient_error, gradient_mismatch(y, inst.pX));
      }
    }
  }
  if (rep.gradient_error > 1e-3)
    fail(ErrorCode::InvalidArgument, "X is not differentiable away from 0 (finite differences disagree)");

  auto scan = [&](auto fn) {
    std::vector<std::pair<double, std::size_t>> vals;
    vals.reserve(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k) vals.emplace_back(fn(pts[k]), k);
    const std::size_t keep = std::min<std::size_t>(8, vals.size());
    std::partial_sort(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(keep), vals.end());
    double best = vals.front().first;
    for (std::size_t k = 0; k < keep; ++k) best = std::min(best, refine_min(fn, pts[vals[k].second]));
    return best;
  };
  rep.min_ratio_i = scan([&](const Eigen::VectorXd& c) { return ev.ratio_i(c); });
  rep.min_ratio_ii = scan([&](const Eigen::VectorXd& c) { return ev.ratio_ii(c); });
  constexpr double kTol = 1e-6;
  if (q1) {
    // Both sides change character where f_k(ω) vanishes, so every zero pattern
    // is searched on its own subspace V_Z = {f ∈ V : f = 0 on Z}.
    const std::size_t N = geo.basis.size();
    const std::size_t entries = geo.atoms * N;
    require(entries <= 16, "q = 1 check supports at most 16 (atom, component) pairs");
    double restricted = std::numeric_limits<double>::infinity();
    for (std::uint32_t pattern = 0; pattern < (1u << entries); ++pattern) {
      std::vector<char> zero(entries);
      for (std::size_t e = 0; e < entries; ++e) zero[e] = (pattern >> e) & 1u;
      // basis of V_Z in coordinates, block diagonal over components
      std::vector<Eigen::MatrixXd> ks;
      Eigen::Index dz = 0;
      for (std::size_t k = 0; k < N; ++k) {
        std::vector<Eigen::Index> off;
        for (std::size_t a = 0; a < geo.atoms; ++a)
          if (zero[a * N + k]) off.push_back(ix(a));
        ks.push_back(geo.basis[k].cols() ? GradEvaluator::kernel_of_rows(geo.basis[k], off)
                                         : Eigen::MatrixXd(0, 0));
        dz += ks.back().cols();
      }
      if (dz == 0) continue;
      Eigen::MatrixXd Kz = Eigen::MatrixXd::Zero(ix(geo.dim), dz);
      Eigen::Index col = 0;
      for (std::size_t k = 0; k < N; ++k) {
        Kz.block(ix(geo.offset[k]), col, ks[k].rows(), ks[k].cols()) = ks[k];
        col += ks[k].cols();
      }
      // entries that vanish identically on V_Z
      Eigen::MatrixXd span(ix(geo.atoms), ix(N));
      span.setZero();
      for (Eigen::Index c = 0; c < dz; ++c) span += geo.field(Kz.col(c)).cwiseAbs();
      std::vector<char> closure(entries);
      for (std::size_t a = 0; a < geo.atoms; ++a)
        for (std::size_t k = 0; k < N; ++k) closure[a * N + k] = span(ix(a), ix(k)) <= 1e-10;
      if (closure != zero) continue;  // reached through its closed pattern
      auto on_vz = [&](auto fn) {
        return [&, fn](const Eigen::VectorXd& u) { return fn(Eigen::VectorXd(Kz * u)); };
      };
      const auto ri = on_vz([&](const Eigen::VectorXd& c) { return ev.ratio_i(c); });
      const auto rr = on_vz([&](const Eigen::VectorXd& c) { return ev.ratio_restricted(c, zero); });
      std::vector<Eigen::VectorXd> local;
      face_grid(static_cast<std::size_t>(dz), dz <= 2 ? 101 : dz == 3 ? 11 : 4, local);
      for (std::size_t t = 0; t < std::max<std::size_t>(64, samples / 16); ++t) {
        Eigen::VectorXd v(dz);
        for (auto& x : v) x = gauss(rng);
        if (v.norm() > 0.0) local.push_back(v.normalized());
      }
      rep.samples += local.size();
      auto local_min = [&](const auto& fn) {
        std::vector<std::pair<double, std::size_t>> vals;
        for (std::size_t k = 0; k < local.size(); ++k) vals.emplace_back(fn(local[k]), k);
        const std::size_t keep = std::min<std::size_t>(3, vals.size());
        std::partial_sort(vals.begin(), vals.begin() + static_cast<std::ptrdiff_t>(keep), vals.end());
        double best = vals.front().first;
        for (std::size_t k = 0; k < keep; ++k) best = std::min(best, refine_min(fn, local[vals[k].second]));
        return best;
      };
      rep.min_ratio_i = std::min(rep.min_ratio_i, local_min(ri));
      restricted = std::min(restricted, local_min(rr));
    }
    rep.min_ratio_restricted = restricted;
    rep.implication_ok = rep.min_ratio_i >= restricted - kTol;
    rep.equivalent = rep.implication_ok;
  }
  rep.holds_i = rep.min_ratio_i >= inst.C - kTol;
  rep.holds_ii = rep.min_ratio_ii >= inst.C - kTol;
  if (!q1) rep.equivalent = rep.holds_i == rep.holds_ii;
  return rep;
}

GradLemmaInstance random_gradlemma_instance(std::uint64_t seed, std::size_t atoms,
                                            std::size_t components, std::size_t dim, double pX,
                                            double q) {
  require(atoms > 0 && components > 0, "instance needs atoms and components");
  require(dim <= atoms * components, "dim V exceeds the ambient dimension");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> w(atoms);
  double total = 0.0;
  for (double& x : w) total += (x = u(rng));
  for (double& x : w) x /= total;
  GradLemmaInstance inst;
  inst.space = ProductSpace::make({FiniteProbSpace::from_weights(w)});
  inst.pX = pX;
  inst.q = q;
  std::size_t left = dim;
  for (std::size_t k = 0; k < components; ++k) {
    std::size_t dk = std::min(atoms, (left + (components - k) - 1) / (components - k));
    Eigen::MatrixXd V(ix(atoms), ix(dk));
    for (Eigen::Index r = 0; r < V.rows(); ++r)
      for (Eigen::Index c = 0; c < V.cols(); ++c) V(r, c) = g(rng);
    inst.subspaces.push_back(std::move(V));
    left -= dk;
  }
  return inst;
}

// ---------------------------------------------------------------------------

RandomVariable probe_gradient(const RandomVariable& F, const Filtration2& filt, double p) {
  require(same_space(F.space(), filt.space()), "martingale on a different space",
          ErrorCode::SpaceMismatch);
  require(p >= 2.0, "probe exponent must be at least 2");
  const auto fn = conditional_grid(F, filt);
  const std::size_t n = F.size();
  std::vector<RandomVariable> h(fn.size(), RandomVariable(F.space()));
  for (std::size_t a = 0; a < n; ++a) {
    double s = 0.0;
    for (const auto& f : fn) s += std::pow(std::abs(f[a]), p);
    if (s == 0.0) continue;
    const double den = std::pow(s, (p - 1.0) / p);
    for (std::size_t c = 0; c < fn.size(); ++c)
      h[c][a] = sgn(fn[c][a]) * std::pow(std::abs(fn[c][a]), p - 1.0) / den;
  }
  RandomVariable out(F.space());
  for (std::size_t i = 0; i <= filt.N(); ++i)
    for (std::size_t j = 0; j <= filt.M(); ++j) {
      RandomVariable tail(F.space());
      for (std::size_t i2 = i; i2 <= filt.N(); ++i2)
        for (std::size_t j2 = j; j2 <= filt.M(); ++j2) tail += h[filt.index(i2, j2)];
      out += delta(tail, filt, i, j);
    }
  return out;
}

ProbeResult gradient_probe(const RandomVariable& F, const Filtration2& filt, double p, double tol) {
  require(same_space(F.space(), filt.space()), "martingale on a different space",
          ErrorCode::SpaceMismatch);
  require(F.max_abs() > 0.0, "probe needs a nonzero martingale");
  require(p >= 2.0, "probe exponent must be at least 2");
  require(filt.is_product_type() || (filt.f4() && filt.f4()->holds),
          "probe needs a product or (F4) filtration");
  ProbeResult r;
  const auto fn = conditional_grid(F, filt);
  for (std::size_t a = 0; a < F.size(); ++a) {
    double s = 0.0;
    for (const auto& f : fn) s += std::pow(std::abs(f[a]), p);
    r.primal += filt.space()->weight(a) * std::pow(s, 1.0 / p);
  }
  r.h1S = hardy_norms(F, filt).h1S;
  r.dual_of_F = hardy_dual_norm(F, filt, HardyKind::SquareH1S, tol).value;
  r.primal_ratio_h1S = r.primal / r.h1S;
  r.primal_ratio_dual = r.primal / r.dual_of_F;
  const auto d = hardy_dual_norm(probe_gradient(F, filt, p), filt, HardyKind::SquareH1S, tol);
  r.dual_value = d.value;
  r.dual_lower = d.lower;
  r.dual_upper = d.upper;
  return r;
}

}  // namespace mhl
