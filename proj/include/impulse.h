#ifndef IMPULSE_H
#define IMPULSE_H

/* C interface to the impulse-control toolkit. All functions are
   thread-safe; errors are reported through return codes plus a
   thread-local message readable via ic_last_error(). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Command exit codes (match the CLI contract). */
#define IC_OK 0
#define IC_ERR_CHECK_FAILED 1
#define IC_ERR_UNKNOWN_PRESET 2
#define IC_ERR_BAD_CONFIG 3
#define IC_ERR_MISSING_ARTIFACT 4
/* API-level failures. */
#define IC_ERR_INVALID_ARGUMENT -1
#define IC_ERR_INTERNAL -2

typedef struct ic_problem ic_problem;

const char* ic_version(void);

/* Message from the last failing call on this thread; empty string if the
   last call succeeded. The pointer stays valid until the next call. */
const char* ic_last_error(void);

/* Problem handles. NULL on failure (see ic_last_error). */
ic_problem* ic_problem_from_preset(const char* name);
ic_problem* ic_problem_from_config(const char* path);
void ic_problem_free(ic_problem* problem);

/* Runs the sampled assumption checks: 1 all pass, 0 a check failed,
   negative on error. */
int ic_problem_validate(const ic_problem* problem, int samples,
                        uint64_t seed);

/* Monte Carlo cost of the do-nothing control started at x0 (state dimension
   1). Fills mean and standard error; returns IC_OK or a negative code. */
int ic_problem_cost(const ic_problem* problem, double x0, size_t paths,
                    int steps, uint64_t seed, int threads, double* mean,
                    double* stderr_out);

typedef struct {
  const char* config_path; /* NULL: no config file */
  const char* preset;      /* NULL: take the problem from the config */
  const char* out_dir;     /* required */
  uint64_t seed;
  int threads;
  size_t paths; /* 0: command default */
  int steps;    /* 0: command default */
} ic_run_options;

/* Runs one toolkit command (validate, simulate, solve-qvi, check-dpp,
   adjoint, check-mp, expansion-order, report) and writes its artifacts to
   out_dir. Returns the exit-code contract above, or a negative code when
   the options themselves are unusable. */
int ic_run(const char* command, const ic_run_options* opts);

#ifdef __cplusplus
}
#endif

#endif /* IMPULSE_H */
