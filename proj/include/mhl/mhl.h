#ifndef MHL_H
#define MHL_H

/* C interface to the martingale Hardy-space library. Every function returns
 * an mhl_status; on failure mhl_last_error() describes the problem (per
 * thread, valid until the next call on that thread). */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MHL_API __declspec(dllexport)
#else
#define MHL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mhl_status {
  MHL_OK = 0,
  MHL_INVALID_ARGUMENT = 1,
  MHL_SPACE_MISMATCH = 2,
  MHL_OUT_OF_RANGE = 3,
  MHL_NOT_CONVERGED = 4,
  MHL_INTERNAL = 5
} mhl_status;

typedef struct mhl_filtration mhl_filtration;
typedef struct mhl_experiment mhl_experiment;

MHL_API const char* mhl_version(void);
MHL_API const char* mhl_last_error(void);

/* Canonical product filtration on base^(N+1) x base^(M+1). */
MHL_API mhl_status mhl_filtration_canonical(const double* base_weights, size_t base_size,
                                            size_t N, size_t M, mhl_filtration** out);
/* Same JSON format as filtration files used by experiment configs. */
MHL_API mhl_status mhl_filtration_from_json(const char* json, mhl_filtration** out);
MHL_API void mhl_filtration_free(mhl_filtration* f);
MHL_API mhl_status mhl_filtration_atoms(const mhl_filtration* f, size_t* atoms);
MHL_API mhl_status mhl_filtration_shape(const mhl_filtration* f, size_t* N, size_t* M);

/* H1^S, H1^s and H1^* norms of the martingale closed by `values`. */
MHL_API mhl_status mhl_hardy_norms(const mhl_filtration* f, const double* values, size_t n,
                                   double* h1S, double* h1s, double* h1star);

typedef struct mhl_run_options {
  const char* command;  /* NULL: take it from the config */
  int has_seed;
  uint64_t seed;
  unsigned jobs;        /* 0: take it from the config */
  const char* out_dir;  /* NULL: take it from the config */
  const char* base_dir; /* resolves relative filtration paths; NULL means "." */
} mhl_run_options;

/* Runs one experiment. An invalid config is reported through the status;
 * failed checks and non-convergence only through mhl_experiment_exit_code. */
MHL_API mhl_status mhl_experiment_run(const char* config_json, const mhl_run_options* opts,
                                      mhl_experiment** out);
MHL_API void mhl_experiment_free(mhl_experiment* e);
/* 0 ok, 1 checks failed, 2 invalid config, 3 not converged. */
MHL_API int mhl_experiment_exit_code(const mhl_experiment* e);
MHL_API const char* mhl_experiment_summary(const mhl_experiment* e);
MHL_API const char* mhl_experiment_out_dir(const mhl_experiment* e);
MHL_API size_t mhl_experiment_file_count(const mhl_experiment* e);
MHL_API mhl_status mhl_experiment_file(const mhl_experiment* e, size_t index, const char** name,
                                       const char** content, size_t* length);

#ifdef __cplusplus
}
#endif

#endif
