#include "mhl/operators.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "mhl/error.hpp"

namespace mhl {

AdaptedField::AdaptedField(FiltrationPtr filt, std::vector<RandomVariable> entries)
    : filt_(std::move(filt)), entries_(std::move(entries)) {
  require(filt_ != nullptr, "adapted field needs a filtration");
  require(entries_.size() == filt_->cells(), "field shape differs from filtration grid");
  for (std::size_t i = 0; i <= filt_->N(); ++i) {
    for (std::size_t j = 0; j <= filt_->M(); ++j) {
      const auto& e = entries_[filt_->index(i, j)];
      require(same_space(e.space(), filt_->space()), "field entry on another space",
              ErrorCode::SpaceMismatch);
      require(filt_->at(static_cast<std::ptrdiff_t>(i), static_cast<std::ptrdiff_t>(j))
                  .is_measurable(e, 1e-12 * (1.0 + e.max_abs())),
              "field entry (" + std::to_string(i) + "," + std::to_string(j) +
                  ") is not adapted");
    }
  }
}

AdaptedField AdaptedField::zero(FiltrationPtr filt) {
  std::vector<RandomVariable> e(filt->cells(), RandomVariable(filt->space()));
  return AdaptedField(std::move(filt), std::move(e));
}

AdaptedField AdaptedField::martingale_differences(FiltrationPtr filt, const RandomVariable& F) {
  auto d = deltas(F, *filt);
  return AdaptedField(std::move(filt), std::move(d));
}

RandomVariable AdaptedField::sum() const {
  RandomVariable s(filt_->space());
  for (const auto& e : entries_) s += e;
  return s;
}

double AdaptedField::square_norm() const {
  const auto& w = filt_->space()->weights();
  double total = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    double s = 0.0;
    for (const auto& e : entries_) s += e[k] * e[k];
    total += w[k] * std::sqrt(s);
  }
  return total;
}

std::vector<RandomVariable> conditional_grid(const RandomVariable& f, const Filtration2& filt) {
  require(same_space(f.space(), filt.space()), "function and filtration on different spaces",
          ErrorCode::SpaceMismatch);
  std::vector<RandomVariable> out;
  out.reserve(filt.cells());
  for (const auto& p : filt.grid()) out.push_back(cond_expect(f, p));
  return out;
}

namespace {

RandomVariable delta_from_grid(const std::vector<RandomVariable>& E, const Filtration2& filt,
                               std::size_t i, std::size_t j) {
  RandomVariable d = E[filt.index(i, j)];
  if (i > 0 && j > 0) {
    d -= E[filt.index(i - 1, j)];
    d -= E[filt.index(i, j - 1)];
    d += E[filt.index(i - 1, j - 1)];
  } else if (i > 0) {
    d -= E[filt.index(i - 1, 0)];
  } else if (j > 0) {
    d -= E[filt.index(0, j - 1)];
  }
  return d;
}

}  // namespace

std::vector<RandomVariable> deltas(const RandomVariable& f, const Filtration2& filt) {
  const auto E = conditional_grid(f, filt);
  std::vector<RandomVariable> out;
  out.reserve(filt.cells());
  for (std::size_t i = 0; i <= filt.N(); ++i)
    for (std::size_t j = 0; j <= filt.M(); ++j) out.push_back(delta_from_grid(E, filt, i, j));
  return out;
}

RandomVariable delta(const RandomVariable& f, const Filtration2& filt, std::size_t i,
                     std::size_t j) {
  require(i <= filt.N() && j <= filt.M(), "delta index outside grid", ErrorCode::OutOfRange);
  require(same_space(f.space(), filt.space()), "function and filtration on different spaces",
          ErrorCode::SpaceMismatch);
  auto E = [&](std::size_t a, std::size_t b) {
    return cond_expect(f, filt.at(static_cast<std::ptrdiff_t>(a), static_cast<std::ptrdiff_t>(b)));
  };
  RandomVariable d = E(i, j);
  if (i > 0 && j > 0) {
    d -= E(i - 1, j);
    d -= E(i, j - 1);
    d += E(i - 1, j - 1);
  } else if (i > 0) {
    d -= E(i - 1, 0);
  } else if (j > 0) {
    d -= E(0, j - 1);
  }
  return d;
}

RandomVariable delta(const RandomVariable& f, const Filtration1& filt, std::size_t i) {
  return delta(f, Filtration2::from_1p(filt), i, 0);
}

RandomVariable square_function(const RandomVariable& f, const Filtration2& filt, double p,
                               bool conditional) {
  require(p >= 1.0, "square function needs p >= 1");
  const auto D = deltas(f, filt);
  RandomVariable acc(f.space());
  for (std::size_t i = 0; i <= filt.N(); ++i) {
    for (std::size_t j = 0; j <= filt.M(); ++j) {
      RandomVariable term = D[filt.index(i, j)];
      for (double& v : term.values()) v = std::pow(std::abs(v), p);
      if (conditional)
        term = cond_expect(term, filt.at(static_cast<std::ptrdiff_t>(i) - 1,
                                         static_cast<std::ptrdiff_t>(j) - 1));
      acc += term;
    }
  }
  for (double& v : acc.values()) v = std::pow(v, 1.0 / p);
  return acc;
}

RandomVariable square_function(const RandomVariable& f, const Filtration1& filt, double p,
                               bool conditional) {
  return square_function(f, Filtration2::from_1p(filt), p, conditional);
}

RandomVariable maximal_function(const RandomVariable& f, const Filtration2& filt) {
  RandomVariable m(f.space());
  for (const auto& e : conditional_grid(f, filt))
    for (std::size_t k = 0; k < m.size(); ++k) m[k] = std::max(m[k], std::abs(e[k]));
  return m;
}

RandomVariable maximal_function(const RandomVariable& f, const Filtration1& filt) {
  return maximal_function(f, Filtration2::from_1p(filt));
}

HardyReport hardy_norms(const RandomVariable& f, const Filtration2& filt) {
  return {square_function(f, filt, 2.0, false).expectation(),
          square_function(f, filt, 2.0, true).expectation(),
          maximal_function(f, filt).expectation()};
}

HardyReport hardy_norms(const RandomVariable& f, const Filtration1& filt) {
  return hardy_norms(f, Filtration2::from_1p(filt));
}

std::string to_json(const HardyReport& r) {
  return nlohmann::json{{"h1S", r.h1S}, {"h1s", r.h1s}, {"h1star", r.h1star}}.dump();
}

namespace {

// Row (cell c, atom k) of the linear map f -> E_c f or f -> Δ_c f.
struct CellMaps {
  std::vector<Eigen::MatrixXd> cond;   // per cell, n×n
  std::vector<Eigen::MatrixXd> delta;  // per cell, n×n
};

CellMaps cell_maps(const Filtration2& filt) {
  const std::size_t n = filt.space()->size();
  CellMaps m;
  m.cond.assign(filt.cells(), Eigen::MatrixXd::Zero(n, n));
  m.delta.assign(filt.cells(), Eigen::MatrixXd::Zero(n, n));
  for (std::size_t col = 0; col < n; ++col) {
    RandomVariable e(filt.space());
    e[col] = 1.0;
    const auto E = conditional_grid(e, filt);
    for (std::size_t c = 0; c < filt.cells(); ++c)
      for (std::size_t k = 0; k < n; ++k) m.cond[c](k, col) = E[c][k];
    for (std::size_t i = 0; i <= filt.N(); ++i) {
      for (std::size_t j = 0; j <= filt.M(); ++j) {
        const auto d = delta_from_grid(E, filt, i, j);
        const auto c = filt.index(i, j);
        for (std::size_t k = 0; k < n; ++k) m.delta[c](k, col) = d[k];
      }
    }
  }
  return m;
}

}  // namespace

GroupNorm hardy_group_norm(const Filtration2& filt, HardyKind kind) {
  const auto& space = *filt.space();
  const std::size_t n = space.size();
  const std::size_t cells = filt.cells();
  const auto maps = cell_maps(filt);
  GroupNorm g;
  if (kind != HardyKind::ConditionalH1s) {
    g.map.resize(static_cast<Eigen::Index>(n * cells), static_cast<Eigen::Index>(n));
    const auto& src = kind == HardyKind::MaximalH1star ? maps.cond : maps.delta;
    const PointwiseNorm q = kind == HardyKind::SquareH1S     ? PointwiseNorm::L2
                            : kind == HardyKind::AbsoluteS1L1 ? PointwiseNorm::L1
                                                              : PointwiseNorm::Linf;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t c = 0; c < cells; ++c)
        g.map.row(static_cast<Eigen::Index>(k * cells + c)) = src[c].row(static_cast<Eigen::Index>(k));
      g.groups.push_back({k * cells, cells, space.weight(k), q});
    }
    return g;
  }
  // s f(ω)² = Σ_c Σ_{ω'∈B_{c-1}(ω)} μ(ω')/μ(B) |Δ_c f(ω')|².
  std::vector<Eigen::RowVectorXd> rows;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t start = rows.size();
    for (std::size_t i = 0; i <= filt.N(); ++i) {
      for (std::size_t j = 0; j <= filt.M(); ++j) {
        const auto& prev = filt.at(static_cast<std::ptrdiff_t>(i) - 1, static_cast<std::ptrdiff_t>(j) - 1);
        const auto bw = prev.block_weights();
        const auto b = prev.block_of(k);
        for (std::size_t k2 = 0; k2 < n; ++k2) {
          if (prev.block_of(k2) != b) continue;
          rows.push_back(std::sqrt(space.weight(k2) / bw[b]) *
                         maps.delta[filt.index(i, j)].row(static_cast<Eigen::Index>(k2)));
        }
      }
    }
    g.groups.push_back({start, rows.size() - start, space.weight(k), PointwiseNorm::L2});
  }
  g.map.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n));
  for (std::size_t r = 0; r < rows.size(); ++r) g.map.row(static_cast<Eigen::Index>(r)) = rows[r];
  return g;
}

GroupNorm lebesgue_group_norm(const ProductSpace& space, PointwiseNorm kind) {
  const auto n = static_cast<Eigen::Index>(space.size());
  GroupNorm g;
  switch (kind) {
    case PointwiseNorm::L1:
      g.map = Eigen::MatrixXd::Identity(n, n);
      for (Eigen::Index k = 0; k < n; ++k)
        g.groups.push_back({static_cast<std::size_t>(k), 1, space.weight(static_cast<std::size_t>(k)),
                            PointwiseNorm::L1});
      break;
    case PointwiseNorm::L2:
      g.map = Eigen::MatrixXd::Zero(n, n);
      for (Eigen::Index k = 0; k < n; ++k) g.map(k, k) = std::sqrt(space.weight(static_cast<std::size_t>(k)));
      g.groups.push_back({0, static_cast<std::size_t>(n), 1.0, PointwiseNorm::L2});
      break;
    case PointwiseNorm::Linf:
      g.map = Eigen::MatrixXd::Identity(n, n);
      g.groups.push_back({0, static_cast<std::size_t>(n), 1.0, PointwiseNorm::Linf});
      break;
  }
  return g;
}

SumNormResult sum_norm(const RandomVariable& f, const GroupNorm& normX, const GroupNorm& normY,
                       double tol, std::size_t max_iterations) {
  require(tol > 0.0, "sum norm tolerance must be positive");
  require(normX.dim() == f.size() && normY.dim() == f.size(),
          "norm dimension differs from the function's space");
  const Eigen::Map<const Eigen::VectorXd> fv(f.values().data(), static_cast<Eigen::Index>(f.size()));
  SumNormResult out;
  out.g = RandomVariable(f.space());
  out.h = f;
  if (fv.lpNorm<Eigen::Infinity>() == 0.0) {
    out.converged = true;
    return out;
  }
  // Variable g; objective ‖L_X g‖ + ‖L_Y g − L_Y f‖.
  ConicProgram prog;
  const GroupNorm both = stack(normX, normY);
  prog.K = both.map;
  prog.b = Eigen::VectorXd::Zero(prog.K.rows());
  prog.b.tail(normY.map.rows()) = normY.map * fv;
  prog.groups = both.groups;
  prog.C.resize(0, prog.K.cols());
  prog.d.resize(0);
  ConicOptions opts;
  opts.rel_tolerance = tol;
  opts.abs_tolerance = tol * 1e-3;
  opts.max_iterations = max_iterations;
  const auto r = solve_conic(prog, opts);
  out.value = r.primal;
  out.lower = r.lower;
  out.iterations = r.iterations;
  out.converged = r.converged;
  out.g = RandomVariable(f.space(), std::vector<double>(r.z.data(), r.z.data() + r.z.size()));
  out.h = f - out.g;
  return out;
}

}  // namespace mhl
