#ifndef STARCM_CAPI_H
#define STARCM_CAPI_H

/*
 * C interface to the specification-test library. All entry points return a
 * status code; on success *out receives an opaque result handle owning the
 * serialized reports. On failure the handle is NULL and starcm_last_error()
 * describes the problem (thread-local storage).
 */

#ifdef __cplusplus
extern "C" {
#endif

enum {
    STARCM_OK = 0,
    STARCM_ERR_ESTIMATION = 2, /* optimizer / rank failures */
    STARCM_ERR_IO = 3,         /* file or CSV problems */
    STARCM_ERR_CONFIG = 4,     /* bad option keys or values */
    STARCM_ERR_INTERNAL = 5
};

typedef struct starcm_result starcm_result;

/*
 * Runs the full test battery on CSV data with header y,x1[,x2,...].
 * options_json keys (all optional): lambda_lo, lambda_hi, lambda_points,
 * boot_draws, seed, hgrid_pi (array), hgrid_b (array), kappa_a, speed,
 * intercept (bool), robust (bool), strong (bool), n_starts, pi_star_grid.
 * The result carries a JSON report (starcm_result_json) and a plain-text
 * decision table (starcm_result_text).
 */
int starcm_test_csv(const char* csv_text, const char* options_json, starcm_result** out);
int starcm_test_file(const char* csv_path, const char* options_json, starcm_result** out);

/*
 * Runs a Monte Carlo experiment from `key = value` config text (one pair
 * per line, '#' comments). Unknown keys are rejected with STARCM_ERR_CONFIG.
 * JSON accessor returns the rejection table as JSON, text accessor as CSV.
 */
int starcm_mc(const char* config_text, starcm_result** out);

/*
 * Simulates the reference data generating process. options_json keys:
 * n, zeta0, beta_mode ("strong"|"weak"|"none"), pi0, varpi0, speed,
 * burn_in, seed, replication, zero_noise. Text accessor returns the
 * y,x1 CSV; JSON accessor a small config echo.
 */
int starcm_dgp(const char* options_json, starcm_result** out);

const char* starcm_result_json(const starcm_result* r);
const char* starcm_result_text(const starcm_result* r);
void starcm_result_free(starcm_result* r);

/* Message for the most recent failure on this thread; empty on success. */
const char* starcm_last_error(void);

#ifdef __cplusplus
}
#endif

#endif /* STARCM_CAPI_H */
