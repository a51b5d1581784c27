#include "mhl/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "mhl/error.hpp"
#include "mhl/optimization.hpp"
#include "parallel.hpp"

namespace mhl {

using ojson = nlohmann::ordered_json;

const char* to_string(ExperimentCommand c) {
  switch (c) {
    case ExperimentCommand::Identities: return "identities";
    case ExperimentCommand::Constants: return "constants";
    case ExperimentCommand::Decompose: return "decompose";
    case ExperimentCommand::Probe: return "probe";
    case ExperimentCommand::Gradcheck: return "gradcheck";
  }
  return "?";
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string csv_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

ExperimentCommand parse_command(const std::string& s) {
  for (auto c : {ExperimentCommand::Identities, ExperimentCommand::Constants,
                 ExperimentCommand::Decompose, ExperimentCommand::Probe,
                 ExperimentCommand::Gradcheck})
    if (s == to_string(c)) return c;
  fail(ErrorCode::InvalidArgument, "unknown command '" + s + "'");
}

std::string default_filtration(ExperimentCommand c) {
  const int n = c == ExperimentCommand::Identities ? 2 : 1;
  return ojson{{"base_weights", {0.5, 0.5}}, {"N", n}, {"M", n}}.dump();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), "cannot read filtration file " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool randomized(const ExperimentConfig& cfg) {
  switch (cfg.command) {
    case ExperimentCommand::Identities: return false;
    case ExperimentCommand::Decompose: return !cfg.F.has_value();
    default: return true;
  }
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) { row(header); }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t k = 0; k < cells.size(); ++k) text_ += (k ? "," : "") + csv_field(cells[k]);
    text_ += "\r\n";
  }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
};

std::string num(double v) { return csv_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }
std::string flag(bool b) { return b ? "true" : "false"; }

struct Check {
  std::string name;
  double value;
  double tolerance;
  bool holds;
};

struct Run {
  const ExperimentConfig& cfg;
  Filtration2 filt;
  ojson results = ojson::object();
  std::vector<Check> checks;
  std::vector<std::pair<std::string, std::string>> files;
  bool not_converged = false;

  Run(const ExperimentConfig& c, Filtration2 f) : cfg(c), filt(std::move(f)) {}
  std::uint64_t seed() const { return cfg.seed.value_or(0); }
  std::size_t trials(std::size_t dflt) const { return cfg.trials ? cfg.trials : dflt; }
  std::string instance() const {
    return cfg.filtration_source + " N=" + std::to_string(filt.N()) +
           " M=" + std::to_string(filt.M()) + " atoms=" + std::to_string(filt.space()->size());
  }
  void check(std::string name, double value, double tol, bool holds) {
    checks.push_back({std::move(name), value, tol, holds});
  }
  RandomVariable random_F(std::uint64_t stream) const {
    std::mt19937_64 rng(stream);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(filt.space()->size());
    for (double& x : v) x = g(rng);
    return RandomVariable(filt.space(), std::move(v));
  }
};

// ---------------------------------------------------------------------------

void identities(Run& r) {
  const auto& filt = r.filt;
  const auto& s = filt.space();
  const std::size_t n = s->size(), cells = filt.cells();
  require(n <= 1024, "identities enumerates atom indicators; at most 1024 atoms");

  // Δ_c e_a for every atom a; by linearity the indicators cover every f.
  std::vector<std::vector<RandomVariable>> d(n);
  double recon = 0.0, adapted = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    RandomVariable e(s);
    e[a] = 1.0;
    d[a] = deltas(e, filt);
    RandomVariable sum(s);
    for (std::size_t c = 0; c < cells; ++c) {
      sum += d[a][c];
      const auto back = cond_expect(d[a][c], filt.grid()[c]);
      adapted = std::max(adapted, (back - d[a][c]).max_abs());
    }
    recon = std::max(recon, (sum - e).max_abs());
  }
  double ortho = 0.0;
  for (std::size_t c = 0; c < cells; ++c)
    for (std::size_t c2 = c + 1; c2 < cells; ++c2)
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b)
          ortho = std::max(ortho, std::abs(inner(d[a][c], d[b][c2])));

  // E_{i,j} E_{k,l} = E_{i,j} for (i,j) ≤ (k,l), checked on the indicators
  double tower = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    RandomVariable e(s);
    e[a] = 1.0;
    const auto grid = conditional_grid(e, filt);
    for (std::size_t i = 0; i <= filt.N(); ++i)
      for (std::size_t j = 0; j <= filt.M(); ++j)
        for (std::size_t k = i; k <= filt.N(); ++k)
          for (std::size_t l = j; l <= filt.M(); ++l) {
            const auto twice = cond_expect(grid[filt.index(k, l)], filt.grid()[filt.index(i, j)]);
            tower = std::max(tower, (twice - grid[filt.index(i, j)]).max_abs());
          }
  }

  const auto f4 = check_f4(filt);
  const double reg = regularity_constant(filt);
  const bool join = satisfies_join_property(filt);

  r.check("reconstruction", recon, 1e-12, recon <= 1e-12);
  r.check("orthogonality", ortho, 1e-10, ortho <= 1e-10);
  r.check("adaptedness", adapted, 1e-12, adapted <= 1e-12);
  r.check("tower", tower, 1e-12, tower <= 1e-12);
  r.check("f4", f4.violation, kIndependenceTolerance, f4.holds);
  r.check("regularity_finite", reg, 0.0, std::isfinite(reg) && reg >= 1.0);
  if (const auto base = canonical_base(filt)) {
    const double oracle = 1.0 / base->min_weight();
    r.check("regularity_product", reg, 0.0, filt.N() + filt.M() == 0 || reg == oracle);
  }

  Csv csv({"check", "value", "tolerance", "holds"});
  for (const auto& c : r.checks) csv.row({c.name, num(c.value), num(c.tolerance), flag(c.holds)});
  csv.row({"join_property", join ? "1" : "0", "", "diagnostic"});
  csv.row({"f4_commutation", num(f4.commutation_violation), "", "diagnostic"});
  r.files.emplace_back("identities.csv", csv.text());
  r.results = {{"atoms", n},
               {"cells", cells},
               {"product_type", filt.is_product_type()},
               {"join_property", join},
               {"regularity_constant", reg},
               {"f4_commutation_violation", f4.commutation_violation}};
}

// ---------------------------------------------------------------------------

struct ConstantTrial {
  HardyReport two;
  double davis = 0.0;
};

void constants(Run& r) {
  const auto& filt = r.filt;
  const std::size_t T = r.trials(200);
  const auto column = filt.column(0);
  std::vector<ConstantTrial> rows(T);
  detail::parallel_for(T, r.cfg.jobs, [&](std::size_t t) {
    const auto F = r.random_F(r.seed() + t);
    rows[t].two = hardy_norms(F, filt);
    const auto one = hardy_norms(F, column);
    rows[t].davis = one.h1S / one.h1star;
  });

  Csv trials({"trial", "h1S", "h1s", "h1star", "davis_1p"});
  const double inf = std::numeric_limits<double>::infinity();
  double dmin = inf, dmax = -inf, s_S = inf, s_star = inf, S_star_min = inf, S_star_max = -inf;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& h = rows[t].two;
    trials.row({num(t), num(h.h1S), num(h.h1s), num(h.h1star), num(rows[t].davis)});
    dmin = std::min(dmin, rows[t].davis);
    dmax = std::max(dmax, rows[t].davis);
    s_S = std::min(s_S, h.h1s / h.h1S);
    s_star = std::min(s_star, h.h1s / h.h1star);
    S_star_min = std::min(S_star_min, h.h1S / h.h1star);
    S_star_max = std::max(S_star_max, h.h1S / h.h1star);
  }

  Csv table({"quantity", "value", "instance", "seed"});
  const std::string inst = r.instance() + " trials=" + std::to_string(T);
  const std::string sd = std::to_string(r.seed());
  auto emit = [&](const std::string& q, double v, const std::string& where) {
    table.row({q, num(v), where, sd});
    r.results[q] = v;
  };
  emit("davis_1p_min", dmin, inst + " column=0");
  emit("davis_1p_max", dmax, inst + " column=0");
  emit("weisz_h1s_over_h1S_min", s_S, inst);
  emit("weisz_h1s_over_h1star_min", s_star, inst);
  emit("h1S_over_h1star_min", S_star_min, inst);
  emit("h1S_over_h1star_max", S_star_max, inst);
  r.check("davis_1p_finite", dmin, 0.0, dmin > 0.0 && std::isfinite(dmax));
  r.check("weisz_positive", std::min(s_S, s_star), 0.0, s_S > 0.0 && s_star > 0.0);
  r.check("main_ratio_positive", S_star_min, 0.0, S_star_min > 0.0 && std::isfinite(S_star_max));

  for (double p : r.cfg.p_values) {
    DoobOptions opts;
    opts.seed = r.seed();
    const auto doob = doob_constant(filt, p, opts);
    const std::string tag = "_p" + csv_number(p);
    emit("doob_empirical" + tag, doob.empirical, inst + " restarts=" + std::to_string(doob.restarts));
    if (doob.certified) {
      emit("doob_certified" + tag, *doob.certified, inst);
      r.check("doob" + tag, doob.empirical - *doob.certified, 1e-9,
              doob.empirical >= *doob.certified - 1e-9);
    }
  }
  emit("regularity", regularity_constant(filt), r.instance());

  if (const auto base = canonical_base(filt)) {
    DecouplingFamily fam;
    fam.kind = DecouplingFamilyKind::RandomAdapted;
    fam.base = *base;
    fam.N = filt.N();
    fam.M = filt.M();
    fam.two_parameter = true;
    const auto env = estimate_decoupling_constants(fam, T, r.seed(), r.cfg.jobs);
    emit("decoupling_min", env.min_ratio, inst);
    emit("decoupling_max", env.max_ratio, inst);
    r.check("decoupling_finite", env.min_ratio, 0.0,
            env.min_ratio > 0.0 && std::isfinite(env.max_ratio));
    Csv dec({"trial", "lhs", "rhs", "ratio"});
    for (const auto& s : env.samples) dec.row({num(s.trial), num(s.lhs), num(s.rhs), num(s.ratio)});
    r.files.emplace_back("decoupling.csv", dec.text());
  } else {
    r.results["decoupling"] = "skipped: not a canonical product filtration";
  }
  r.files.emplace_back("constants.csv", table.text());
  r.files.emplace_back("trials.csv", trials.text());
}

// ---------------------------------------------------------------------------

void decompose(Run& r) {
  const auto filt = std::make_shared<const Filtration2>(r.filt);
  std::vector<RandomVariable> Fs;
  if (r.cfg.F) {
    require(r.cfg.F->size() == filt->space()->size(), "F needs one value per atom (" +
                                                          std::to_string(filt->space()->size()) + ")");
    Fs.emplace_back(filt->space(), *r.cfg.F);
  } else {
    const std::size_t T = r.trials(10);
    for (std::size_t t = 0; t < T; ++t) Fs.push_back(r.random_F(r.seed() + t));
  }
  std::vector<MartingaleDecompositionReport> reps(Fs.size());
  detail::parallel_for(Fs.size(), r.cfg.jobs, [&](std::size_t t) {
    reps[t] = decompose_martingale(filt, Fs[t], r.cfg.mask_mode, r.seed() + t, 1);
  });

  Csv csv({"trial", "h1S", "h1star", "lhs", "tA", "tB", "tC", "tD", "exact_tA",
           "exact_tB", "exact_tC", "exact_tD", "projected_tA",
           "projected_tB", "projected_tC", "projected_tD", "inflation_A", "inflation_B",
           "inflation_C", "inflation_D", "lhs_over_terms", "mask_ok", "lattice_ok",
           "reconstruction_ok"});
  bool mask = true, lattice = true, recon = true;
  double worst_inflation = 0.0, min_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < reps.size(); ++t) {
    const auto& m = reps[t];
    const auto raw = m.raw.terms.as_array();
    const auto proj = m.projected.dec.terms.as_array();
    const double ratio = m.raw.terms.sum() > 0.0 ? m.raw.lhs / m.raw.terms.sum() : 0.0;
    std::vector<std::string> row{num(t), num(m.h1S), num(m.h1star), num(m.raw.lhs)};
    for (double v : raw) row.push_back(num(v));
    for (double v : m.exact.terms.as_array()) row.push_back(num(v));
    for (double v : proj) row.push_back(num(v));
    for (double v : m.projected.inflation) {
      row.push_back(num(v));
      worst_inflation = std::max(worst_inflation, v);
    }
    row.push_back(num(ratio));
    row.push_back(flag(m.mask_ok));
    row.push_back(flag(m.lattice_ok));
    row.push_back(flag(m.reconstruction_ok));
    csv.row(row);
    mask = mask && m.mask_ok;
    lattice = lattice && m.lattice_ok;
    recon = recon && m.reconstruction_ok;
    if (m.raw.lhs > 0.0) min_ratio = std::min(min_ratio, ratio);
  }
  r.check("mask_partition", mask ? 0.0 : 1.0, 0.0, mask);
  r.check("lattice", lattice ? 0.0 : 1.0, 0.0, lattice);
  r.check("reconstruction", recon ? 0.0 : 1.0, 0.0, recon);
  r.check("inflation", worst_inflation, 4.0 + 1e-9, worst_inflation <= 4.0 + 1e-9);
  r.results = {{"instances", reps.size()},
               {"mask_mode", to_string(r.cfg.mask_mode)},
               {"max_inflation", worst_inflation}};
  if (std::isfinite(min_ratio)) r.results["min_lhs_over_terms"] = min_ratio;
  if (reps.size() == 1) r.results["decomposition"] = ojson::parse(to_json(reps[0].raw));
  r.files.emplace_back("decompose.csv", csv.text());
}

// ---------------------------------------------------------------------------

void probe(Run& r) {
  const std::size_t T = r.trials(8);
  const auto& ps = r.cfg.p_values;
  struct Row {
    ProbeResult res;
    bool converged = true;
    std::string error;
  };
  std::vector<Row> rows(T * ps.size());
  detail::parallel_for(rows.size(), r.cfg.jobs, [&](std::size_t k) {
    const std::size_t t = k / ps.size();
    const auto F = r.random_F(r.seed() + t);
    try {
      rows[k].res = gradient_probe(F, r.filt, ps[k % ps.size()], r.cfg.tolerance);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotConverged) throw;
      rows[k].converged = false;
      rows[k].error = e.what();
    }
  });

  Csv csv({"trial", "seed", "p", "N", "M", "primal", "h1S", "dual_of_F", "primal_ratio_h1S",
           "primal_ratio_dual", "dual_value", "dual_lower", "dual_upper", "converged"});
  ojson per_p = ojson::object();
  std::size_t failed = 0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t t = k / ps.size();
    const double p = ps[k % ps.size()];
    const auto& x = rows[k].res;
    csv.row({num(t), std::to_string(r.seed() + t), num(p), num(r.filt.N()), num(r.filt.M()),
             num(x.primal), num(x.h1S), num(x.dual_of_F), num(x.primal_ratio_h1S),
             num(x.primal_ratio_dual), num(x.dual_value), num(x.dual_lower), num(x.dual_upper),
             flag(rows[k].converged)});
    if (!rows[k].converged) {
      ++failed;
      continue;
    }
    auto& e = per_p[csv_number(p)];
    if (e.is_null()) e = {{"min_dual_value", x.dual_value}, {"max_dual_value", x.dual_value}};
    e["min_dual_value"] = std::min(e["min_dual_value"].get<double>(), x.dual_value);
    e["max_dual_value"] = std::max(e["max_dual_value"].get<double>(), x.dual_value);
  }
  r.not_converged = failed > 0;
  r.results = {{"rows", rows.size()}, {"not_converged", failed}, {"per_p", per_p}};
  r.files.emplace_back("probe.csv", csv.text());
}

// ---------------------------------------------------------------------------

void gradcheck(Run& r) {
  const std::size_t T = r.trials(50);
  const auto& ps = r.cfg.p_values;
  std::vector<GradLemmaReport> reps(T);
  auto shape = [&](std::size_t t) {
    return std::pair{ps[t % ps.size()], 1 + (t / ps.size()) % 3};
  };
  detail::parallel_for(T, r.cfg.jobs, [&](std::size_t t) {
    const auto [pX, dim] = shape(t);
    const auto inst = random_gradlemma_instance(r.seed() + t, 4, 2, dim, pX, r.cfg.q);
    reps[t] = check_gradlemma(inst, r.seed() + t, r.cfg.samples);
  });

  Csv csv({"trial", "seed", "pX", "q", "dim", "min_ratio_i", "min_ratio_ii", "abs_diff",
           "min_ratio_restricted", "gradient_error", "agree"});
  double worst = 0.0;
  bool all = true;
  for (std::size_t t = 0; t < T; ++t) {
    const auto& g = reps[t];
    const auto [pX, dim] = shape(t);
    const double diff = std::abs(g.min_ratio_i - g.min_ratio_ii);
    const bool agree = r.cfg.q > 1.0 ? diff <= 1e-3 : g.implication_ok;
    if (r.cfg.q > 1.0) worst = std::max(worst, diff);
    all = all && agree;
    csv.row({num(t), std::to_string(r.seed() + t), num(pX), num(r.cfg.q), num(g.dim),
             num(g.min_ratio_i), num(g.min_ratio_ii), num(diff),
             g.min_ratio_restricted ? num(*g.min_ratio_restricted) : "", num(g.gradient_error),
             flag(agree)});
  }
  if (r.cfg.q > 1.0)
    r.check("ratio_agreement", worst, 1e-3, all);
  else
    r.check("support_implication", all ? 0.0 : 1.0, 0.0, all);
  r.results = {{"instances", T}, {"max_abs_diff", worst}};
  r.files.emplace_back("gradcheck.csv", csv.text());
}

ojson config_json(const ExperimentConfig& cfg) {
  ojson j;
  j["command"] = to_string(cfg.command);
  j["seed"] = cfg.seed ? ojson(*cfg.seed) : ojson(nullptr);
  j["filtration"] = ojson::parse(cfg.filtration_json);
  j["filtration_source"] = cfg.filtration_source;
  j["trials"] = cfg.trials;
  j["p_values"] = cfg.p_values;
  j["tolerance"] = cfg.tolerance;
  j["mask_mode"] = to_string(cfg.mask_mode);
  j["F"] = cfg.F ? ojson(*cfg.F) : ojson(nullptr);
  j["samples"] = cfg.samples;
  j["q"] = cfg.q;
  j["jobs"] = cfg.jobs;
  j["out"] = cfg.out;
  return j;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text, const std::string& base_dir,
                                         const ExperimentOverrides& ov) {
  nlohmann::json j;
  try {
    j = json_text.empty() ? nlohmann::json::object() : nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
  require(j.is_object(), "config must be a JSON object");
  static const char* known[] = {"command", "seed", "filtration", "trials", "p_values", "tolerance",
                                "mask_mode", "F", "samples", "q", "jobs", "out"};
  for (const auto& [key, _] : j.items())
    require(std::find(std::begin(known), std::end(known), key) != std::end(known),
            "unknown config key '" + key + "'");

  ExperimentConfig cfg;
  try {
    std::string cmd = ov.command.value_or(j.value("command", std::string()));
    require(!cmd.empty(), "no command given");
    cfg.command = parse_command(cmd);

    if (ov.seed) {
      cfg.seed = ov.seed;
    } else if (j.contains("seed") && !j["seed"].is_null()) {
      require(j["seed"].is_number_unsigned(), "seed must be a non-negative integer");
      cfg.seed = j["seed"].get<std::uint64_t>();
    }

    if (!j.contains("filtration")) {
      cfg.filtration_json = default_filtration(cfg.command);
      cfg.filtration_source = "default";
    } else if (j["filtration"].is_string()) {
      std::filesystem::path p = j["filtration"].get<std::string>();
      if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
      cfg.filtration_json = nlohmann::json::parse(read_file(p)).dump();
      cfg.filtration_source = j["filtration"].get<std::string>();
    } else {
      require(j["filtration"].is_object(), "filtration must be an object or a file path");
      cfg.filtration_json = j["filtration"].dump();
      cfg.filtration_source = "inline";
    }

    if (j.contains("trials")) {
      require(j["trials"].is_number_unsigned() && j["trials"].get<std::size_t>() > 0,
              "trials must be a positive integer");
      cfg.trials = j["trials"].get<std::size_t>();
    }
    if (j.contains("p_values")) {
      cfg.p_values = j["p_values"].get<std::vector<double>>();
      require(!cfg.p_values.empty(), "p_values must not be empty");
    } else if (cfg.command == ExperimentCommand::Probe) {
      cfg.p_values = {2.0, 4.0, 8.0};
    } else if (cfg.command == ExperimentCommand::Constants ||
               cfg.command == ExperimentCommand::Gradcheck) {
      cfg.p_values = {2.0, 4.0};
    }
    for (double p : cfg.p_values) require(std::isfinite(p) && p > 1.0, "p values must exceed 1");
    cfg.tolerance = j.value("tolerance", cfg.tolerance);
    require(cfg.tolerance > 0.0, "tolerance must be positive");
    const std::string mode = j.value("mask_mode", std::string("greedy"));
    require(mode == "greedy" || mode == "exhaustive", "mask_mode is greedy or exhaustive");
    cfg.mask_mode = mode == "greedy" ? MaskMode::Greedy : MaskMode::Exhaustive;
    if (j.contains("F")) cfg.F = j["F"].get<std::vector<double>>();
    if (j.contains("samples")) {
      require(j["samples"].is_number_unsigned() && j["samples"].get<std::size_t>() > 0,
              "samples must be a positive integer");
      cfg.samples = j["samples"].get<std::size_t>();
    }
    cfg.q = j.value("q", cfg.q);
    require(cfg.q >= 1.0, "q must be at least 1");
    if (j.contains("jobs")) {
      require(j["jobs"].is_number_unsigned(), "jobs must be a positive integer");
      cfg.jobs = j["jobs"].get<unsigned>();
    }
    if (ov.jobs) cfg.jobs = *ov.jobs;
    require(cfg.jobs > 0, "jobs must be a positive integer");
    cfg.out = ov.out.value_or(j.value("out", std::string("mhl_out")));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("bad config value: ") + e.what());
  }
  if (randomized(cfg))
    require(cfg.seed.has_value(), std::string("command '") + to_string(cfg.command) +
                                      "' is randomized and needs a seed");
  (void)filtration_from_json(cfg.filtration_json);
  return cfg;
}

ExperimentOutput run_experiment(const ExperimentConfig& cfg) {
  ExperimentOutput out;
  ojson summary;
  summary["command"] = to_string(cfg.command);
  summary["config"] = config_json(cfg);
  try {
    Run r(cfg, filtration_from_json(cfg.filtration_json));
    if (!r.filt.f4()) r.filt = r.filt.with_f4(check_f4(r.filt));
    switch (cfg.command) {
      case ExperimentCommand::Identities: identities(r); break;
      case ExperimentCommand::Constants: constants(r); break;
      case ExperimentCommand::Decompose: decompose(r); break;
      case ExperimentCommand::Probe: probe(r); break;
      case ExperimentCommand::Gradcheck: gradcheck(r); break;
    }
    bool ok = true;
    ojson checks = ojson::array();
    for (const auto& c : r.checks) {
      checks.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance},
                        {"holds", c.holds}});
      ok = ok && c.holds;
    }
    out.exit_code = r.not_converged ? kExitNotConverged : ok ? kExitOk : kExitChecksFailed;
    summary["status"] = r.not_converged ? "not_converged" : ok ? "ok" : "checks_failed";
    summary["partial"] = r.not_converged;
    summary["checks"] = checks;
    summary["results"] = r.results;
    ojson names = ojson::array();
    for (const auto& f : r.files) names.push_back(f.first);
    summary["files"] = names;
    out.files = std::move(r.files);
  } catch (const Error& e) {
    const bool nc = e.code() == ErrorCode::NotConverged;
    out.exit_code = nc ? kExitNotConverged : kExitInvalidConfig;
    summary["status"] = nc ? "not_converged" : "invalid_config";
    summary["partial"] = nc;
    summary["error"] = e.what();
  }
  summary["exit_code"] = out.exit_code;
  out.summary_json = summary.dump(2) + "\n";
  return out;
}

}  // namespace mhl
