/* qlc: quasi-likelihood concentration toolkit, C interface.
 *
 * Opaque handles plus status codes. Strings returned through char** are
 * heap-allocated; release them with qlc_string_free. Error messages are
 * thread-local and valid until the next failing call on the same thread.
 */
#ifndef QLC_H
#define QLC_H

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define QLC_API __declspec(dllexport)
#else
#define QLC_API __attribute__((visibility("default")))
#endif

typedef enum qlc_status {
  QLC_OK = 0,
  QLC_ERR_INVALID = 1,  /* bad arguments or configuration */
  QLC_ERR_DOMAIN = 2,   /* evaluation outside a natural domain */
  QLC_ERR_NUMERIC = 3,  /* non-convergence, divergence, rank failure */
  QLC_ERR_IO = 4,
  QLC_ERR_INTERNAL = 5
} qlc_status;

QLC_API const char* qlc_version(void);

/* Message for the most recent failure on this thread; never NULL. */
QLC_API const char* qlc_last_error(void);

/* ---- exponential families ---- */

typedef struct qlc_family qlc_family;

/* token: "gaussian:SIGMA" | "poisson" | "bernoulli" */
QLC_API qlc_status qlc_family_create(const char* token, qlc_family** out);
QLC_API void qlc_family_destroy(qlc_family* family);

QLC_API qlc_status qlc_family_log_partition(const qlc_family* family, double u, double* out);
QLC_API qlc_status qlc_family_mean(const qlc_family* family, double u, double* out);
QLC_API qlc_status qlc_family_centered_cumulant(const qlc_family* family, double u, double t,
                                                double* out);
QLC_API qlc_status qlc_family_subgaussian_scale(const qlc_family* family, double u,
                                                double lambda1_star, double* out);

/* ---- command runner ----
 *
 * command: "fit" | "target" | "rate" | "bounds" | "entropy" | "simulate" | "verify"
 * config_json: UTF-8 JSON configuration for the command.
 * workers: thread count; <= 0 picks QLC_THREADS or the hardware count.
 *
 * On success *out_json holds {"report": {...}, "artifacts": {name: content}}.
 * "verify" reports with failed checks return QLC_OK with report.passed=false.
 */
QLC_API qlc_status qlc_run(const char* command, const char* config_json, int workers,
                           char** out_json);

QLC_API void qlc_string_free(char* s);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* QLC_H */
