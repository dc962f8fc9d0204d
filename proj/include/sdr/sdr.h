#ifndef SDR_SDR_H
#define SDR_SDR_H

#include <stdint.h>

#if defined(_WIN32)
#define SDR_API __declspec(dllexport)
#else
#define SDR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sdr_status {
  SDR_OK = 0,
  SDR_ERR_INVALID_ARGUMENT = 1,
  SDR_ERR_SINGULAR_GEOMETRY = 2,
  SDR_ERR_DEGENERATE_FRAME = 3,
  SDR_ERR_INTEGRATION = 4,
  SDR_ERR_RANK_DEFICIENT = 5,
  SDR_ERR_ILL_CONDITIONED_LAPLACE = 6,
  SDR_ERR_BAD_INITIALIZATION = 7,
  SDR_ERR_IO = 8,
  SDR_ERR_PARSE = 9,
  SDR_ERR_STUDY_ABORTED = 10,
  SDR_ERR_INTERNAL = 99
} sdr_status;

typedef struct sdr_manifold sdr_manifold;
typedef struct sdr_dataset sdr_dataset;
typedef struct sdr_fit_result sdr_fit_result;

SDR_API const char* sdr_version(void);
SDR_API const char* sdr_status_name(sdr_status status);
/* Message of the last failing call on this thread; empty after success. */
SDR_API const char* sdr_last_error(void);
/* Frees strings returned through char** out-parameters. */
SDR_API void sdr_string_free(char* s);

/* Manifolds. spec_json: {"kind": "flat", "dim": d} | {"kind": "sphere2"} |
   {"kind": "landmarks", "num_landmarks": n, "kernel_sigma": s}.
   Matrices are row-major. */
SDR_API sdr_status sdr_manifold_create(const char* spec_json, sdr_manifold** out);
SDR_API void sdr_manifold_destroy(sdr_manifold* m);
SDR_API sdr_status sdr_manifold_dims(const sdr_manifold* m, int* dim, int* ambient_dim);
SDR_API sdr_status sdr_manifold_metric(const sdr_manifold* m, const double* p, double* out_d_by_d);
SDR_API sdr_status sdr_manifold_cometric(const sdr_manifold* m, const double* p, double* out_d_by_d);
/* out[(k * d + i) * d + j] = Gamma^k_ij */
SDR_API sdr_status sdr_manifold_christoffel(const sdr_manifold* m, const double* p, double* out_d3);
SDR_API sdr_status sdr_manifold_embed(const sdr_manifold* m, const double* p, double* out_k);

/* Develops a piecewise-linear driver. frame is d x r, increments is steps x r;
   out_path receives (steps + 1) x k ambient points. */
SDR_API sdr_status sdr_develop(const sdr_manifold* m, const double* base, const double* frame, int r,
                               const double* increments, int steps, int substeps, double* out_path);

/* Datasets. X is n x m, Y is n x k; random_flags may be NULL (all fixed). */
SDR_API sdr_status sdr_dataset_create(int n, int m, int k, const double* X, const double* Y,
                                      const int* random_flags, sdr_dataset** out);
SDR_API sdr_status sdr_dataset_load(const char* shapes_csv, const char* covariates_csv, const char* spec_json,
                                    sdr_dataset** out);
SDR_API void sdr_dataset_destroy(sdr_dataset* d);
SDR_API sdr_status sdr_dataset_info(const sdr_dataset* d, int* n, int* m, int* k);
SDR_API sdr_status sdr_dataset_summary_json(const sdr_dataset* d, char** out_json);

/* Fitting. config_json has the same schema as the fit configuration file. */
SDR_API sdr_status sdr_fit(const sdr_dataset* d, const char* config_json, sdr_fit_result** out);
SDR_API void sdr_fit_result_destroy(sdr_fit_result* r);
SDR_API sdr_status sdr_fit_result_log_likelihood(const sdr_fit_result* r, double* out);
SDR_API sdr_status sdr_fit_result_theta_json(const sdr_fit_result* r, char** out_json);
SDR_API sdr_status sdr_fit_result_diagnostics_json(const sdr_fit_result* r, char** out_json);
/* Writes theta_hat.json, diagnostics.json, residuals.csv and mode_residuals.csv. */
SDR_API sdr_status sdr_fit_result_write(const sdr_fit_result* r, const char* out_dir);

/* File-level operations used by the command line tool. Each writes a
   manifest.json next to its outputs. */
SDR_API sdr_status sdr_simulate_study(const char* study, int n, uint64_t seed, const char* out_dir);
SDR_API sdr_status sdr_fit_files(const char* shapes_csv, const char* covariates_csv, const char* spec_json,
                                 const char* config_json, const char* out_dir);
SDR_API sdr_status sdr_develop_files(const char* theta_json, const char* path_json, const char* out_csv);
SDR_API sdr_status sdr_check(const char* out_json, int* all_passed);
/* kind: "recovery" or "frame". replicates <= 0 keeps the configured count. */
SDR_API sdr_status sdr_run_study(const char* kind, const char* config_json, const char* out_dir, int replicates);

#ifdef __cplusplus
}
#endif

#endif
