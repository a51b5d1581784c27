#include "mhl/mhl.h"

#include <memory>
#include <new>
#include <string>

#include "mhl/error.hpp"
#include "mhl/experiments.hpp"

struct mhl_filtration {
  mhl::Filtration2 filt;
};

struct mhl_experiment {
  mhl::ExperimentOutput output;
  std::string out_dir;
};

namespace {

thread_local std::string last_error;

mhl_status status_of(mhl::ErrorCode c) {
  switch (c) {
    case mhl::ErrorCode::InvalidArgument: return MHL_INVALID_ARGUMENT;
    case mhl::ErrorCode::SpaceMismatch: return MHL_SPACE_MISMATCH;
    case mhl::ErrorCode::OutOfRange: return MHL_OUT_OF_RANGE;
    case mhl::ErrorCode::NotConverged: return MHL_NOT_CONVERGED;
    case mhl::ErrorCode::Internal: return MHL_INTERNAL;
  }
  return MHL_INTERNAL;
}

template <class Fn>
mhl_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return MHL_OK;
  } catch (const mhl::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
  } catch (const std::exception& e) {
    last_error = e.what();
  } catch (...) {
    last_error = "unknown failure";
  }
  return MHL_INTERNAL;
}

mhl_status null_arg(const char* what) {
  last_error = std::string(what) + " is NULL";
  return MHL_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* mhl_version(void) { return "1.0.0"; }

const char* mhl_last_error(void) { return last_error.c_str(); }

mhl_status mhl_filtration_canonical(const double* base_weights, size_t base_size, size_t N,
                                    size_t M, mhl_filtration** out) {
  if (!out) return null_arg("out");
  if (!base_weights) return null_arg("base_weights");
  return guarded([&] {
    auto base = mhl::FiniteProbSpace::from_weights({base_weights, base_weights + base_size});
    *out = new mhl_filtration{mhl::canonical_2p(base, N, M)};
  });
}

mhl_status mhl_filtration_from_json(const char* json, mhl_filtration** out) {
  if (!out) return null_arg("out");
  if (!json) return null_arg("json");
  return guarded([&] { *out = new mhl_filtration{mhl::filtration_from_json(json)}; });
}

void mhl_filtration_free(mhl_filtration* f) { delete f; }

mhl_status mhl_filtration_atoms(const mhl_filtration* f, size_t* atoms) {
  if (!f) return null_arg("filtration");
  if (!atoms) return null_arg("atoms");
  *atoms = f->filt.space()->size();
  return MHL_OK;
}

mhl_status mhl_filtration_shape(const mhl_filtration* f, size_t* N, size_t* M) {
  if (!f) return null_arg("filtration");
  if (!N || !M) return null_arg("N or M");
  *N = f->filt.N();
  *M = f->filt.M();
  return MHL_OK;
}

mhl_status mhl_hardy_norms(const mhl_filtration* f, const double* values, size_t n, double* h1S,
                           double* h1s, double* h1star) {
  if (!f) return null_arg("filtration");
  if (!values) return null_arg("values");
  if (!h1S || !h1s || !h1star) return null_arg("output pointer");
  return guarded([&] {
    mhl::require(n == f->filt.space()->size(), "need one value per atom",
                 mhl::ErrorCode::SpaceMismatch);
    const auto r = mhl::hardy_norms(mhl::RandomVariable(f->filt.space(), {values, values + n}),
                                    f->filt);
    *h1S = r.h1S;
    *h1s = r.h1s;
    *h1star = r.h1star;
  });
}

mhl_status mhl_experiment_run(const char* config_json, const mhl_run_options* opts,
                              mhl_experiment** out) {
  if (!out) return null_arg("out");
  return guarded([&] {
    mhl::ExperimentOverrides ov;
    std::string base = ".";
    if (opts) {
      if (opts->command) ov.command = opts->command;
      if (opts->has_seed) ov.seed = opts->seed;
      if (opts->jobs) ov.jobs = opts->jobs;
      if (opts->out_dir) ov.out = opts->out_dir;
      if (opts->base_dir) base = opts->base_dir;
    }
    const auto cfg = mhl::parse_experiment_config(config_json ? config_json : "", base, ov);
    auto e = std::make_unique<mhl_experiment>();
    e->output = mhl::run_experiment(cfg);
    e->out_dir = cfg.out;
    *out = e.release();
  });
}

void mhl_experiment_free(mhl_experiment* e) { delete e; }

int mhl_experiment_exit_code(const mhl_experiment* e) {
  return e ? e->output.exit_code : mhl::kExitInvalidConfig;
}

const char* mhl_experiment_summary(const mhl_experiment* e) {
  return e ? e->output.summary_json.c_str() : "";
}

const char* mhl_experiment_out_dir(const mhl_experiment* e) {
  return e ? e->out_dir.c_str() : "";
}

size_t mhl_experiment_file_count(const mhl_experiment* e) {
  return e ? e->output.files.size() : 0;
}

mhl_status mhl_experiment_file(const mhl_experiment* e, size_t index, const char** name,
                               const char** content, size_t* length) {
  if (!e) return null_arg("experiment");
  if (index >= e->output.files.size()) {
    last_error = "file index out of range";
    return MHL_OUT_OF_RANGE;
  }
  const auto& f = e->output.files[index];
  if (name) *name = f.first.c_str();
  if (content) *content = f.second.c_str();
  if (length) *length = f.second.size();
  return MHL_OK;
}

}  // extern "C"
