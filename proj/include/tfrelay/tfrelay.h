/* C interface of the tfrelay library.
 *
 * Objects are opaque handles released with the matching *_free function.
 * Every fallible call returns a tfr_status; on failure tfr_last_error()
 * holds a one-line message for the calling thread.
 */
#ifndef TFRELAY_H
#define TFRELAY_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TFR_API __declspec(dllexport)
#else
#define TFR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values 0-3 double as process exit codes. */
typedef enum tfr_status {
  TFR_OK = 0,
  TFR_SECURE = 1,         /* nothing to attack */
  TFR_PROTOCOL_ABORT = 2, /* a wire run aborted */
  TFR_INVALID_ARGUMENT = 3,
  TFR_LIMIT_EXCEEDED = 4,
  TFR_IO_ERROR = 5,
  TFR_INTERNAL = 6
} tfr_status;

typedef struct tfr_scenario tfr_scenario;
typedef struct tfr_trace tfr_trace;
typedef struct tfr_text tfr_text;

TFR_API const char* tfr_version(void);
TFR_API const char* tfr_last_error(void);
TFR_API const char* tfr_status_name(tfr_status status);

/* Owned byte strings returned by the library. */
TFR_API const char* tfr_text_data(const tfr_text* text);
TFR_API size_t tfr_text_size(const tfr_text* text);
TFR_API void tfr_text_free(tfr_text* text);

/* ------------------------------------------------------------ scenarios */

/* "key = value" lines: shape, m, paths, t, link_length_km, and optionally
 * variant (default per shape), n (default 128) and seed (default 1). */
TFR_API tfr_status tfr_scenario_from_config(const char* text, tfr_scenario** out);
TFR_API void tfr_scenario_free(tfr_scenario* scenario);
/* Canonical config text of the scenario. */
TFR_API tfr_status tfr_scenario_describe(const tfr_scenario* scenario, tfr_text** out);

/* ----------------------------------------------------------- simulation */

typedef enum tfr_format { TFR_FORMAT_TEXT = 0, TFR_FORMAT_JSON = 1 } tfr_format;

TFR_API tfr_status tfr_simulate(const tfr_scenario* scenario, tfr_trace** out);
TFR_API void tfr_trace_free(tfr_trace* trace);
TFR_API tfr_status tfr_trace_export(const tfr_trace* trace, tfr_format format, tfr_text** out);
TFR_API size_t tfr_trace_message_count(const tfr_trace* trace);
/* 1 when both endpoint outputs are equal and equal the XOR of the nonces. */
TFR_API int tfr_trace_outputs_agree(const tfr_trace* trace);
/* endpoint: 'A' or 'B'. */
TFR_API tfr_status tfr_trace_output_hex(const tfr_trace* trace, char endpoint, tfr_text** out);

/* ------------------------------------------------------------- analysis */

typedef enum tfr_verdict {
  TFR_VERDICT_SECURE = 0,
  TFR_VERDICT_BROKEN = 1,
  TFR_VERDICT_PARTIAL = 2 /* oracle only */
} tfr_verdict;

typedef struct tfr_coalition_result {
  tfr_verdict verdict;
  int degenerate;       /* the coalition holds an endpoint */
  int oracle_run;       /* the n = 1 brute-force oracle was consulted */
  tfr_verdict oracle;   /* valid when oracle_run */
} tfr_coalition_result;

/* coalition: comma-separated node labels ("N1,N2"), "" for none.
 * target: secret expression such as "X[A]", or NULL for the final key.
 * collaborating = 0 treats members as corrupt but working alone. */
TFR_API tfr_status tfr_analyze_coalition(const tfr_scenario* scenario, const char* coalition,
                                         const char* target, int collaborating, int with_oracle,
                                         tfr_coalition_result* result, tfr_text** report);

typedef struct tfr_enumeration {
  size_t minimal_count;      /* inclusion-minimal breaking coalitions */
  size_t minimum_size;       /* 0 when nothing breaks the target */
  size_t checked;            /* intermediary subsets examined */
  size_t oracle_disagreements;
} tfr_enumeration;

/* Minimal breaking coalitions, as a human table, plus the per-coalition CSV
 * report. TFR_LIMIT_EXCEEDED above 20 intermediaries. */
TFR_API tfr_status tfr_enumerate_minimal(const tfr_scenario* scenario, const char* target,
                                         int with_oracle, tfr_enumeration* summary,
                                         tfr_text** table, tfr_text** csv);

/* Demonstrates key recovery by `coalition` (may be NULL or ""). TFR_OK when
 * the final key falls, TFR_SECURE when no recovery exists. */
TFR_API tfr_status tfr_attack(const tfr_scenario* scenario, const char* coalition,
                              tfr_text** narrative);

/* Largest mutual information, in bits, an active second intermediary of the
 * two-intermediary chain extracts at n = 1 over all deterministic strategies. */
TFR_API tfr_status tfr_active_attack_leakage(double* max_bits);

/* ----------------------------------------------------------- rate model */

typedef struct tfr_rate_params {
  double alpha_db_per_km;
  double c_tf;
  double c_p2p;
  double threshold_bps;
  int serial_multipath;
} tfr_rate_params;

TFR_API void tfr_rate_params_default(tfr_rate_params* params);
/* Missing keys keep their defaults. */
TFR_API tfr_status tfr_rate_params_from_config(const char* text, tfr_rate_params* params);
/* family: "p2p", "tf", "scheme_m<k>" or "scheme_m<k>_M<paths>". */
TFR_API tfr_status tfr_rate_eval(const tfr_rate_params* params, const char* family,
                                 double distance_km, double* rate_bps);
/* Largest distance still at or above the threshold: the relay scheme over m
 * intermediaries, or plain TF. */
TFR_API tfr_status tfr_rate_max_range(const tfr_rate_params* params, int m, double* distance_km);
TFR_API tfr_status tfr_rate_max_range_tf(const tfr_rate_params* params, double* distance_km);
TFR_API tfr_status tfr_rate_curves_csv(const tfr_rate_params* params, const char* families,
                                       double from_km, double to_km, double step_km,
                                       tfr_text** csv);

/* ----------------------------------------------------------------- wire */

typedef struct tfr_wire_options {
  int tamper_message; /* corrupt relay message M<k> in flight; -1 for none */
  const char* drop_key_node;   /* with drop_key_secret: delete that oracle line */
  const char* drop_key_secret;
  const char* misconfigure_node;    /* with misconfigure_variant */
  const char* misconfigure_variant;
  int timeout_ms;
} tfr_wire_options;

TFR_API void tfr_wire_options_default(tfr_wire_options* options);

/* Runs every node as its own process on ports base_port + i, with working
 * files under work_dir. TFR_OK when both endpoints hold the same key,
 * TFR_PROTOCOL_ABORT on any abort, TFR_INVALID_ARGUMENT on configuration
 * problems such as a port already in use. key_hex (optional) receives
 * Alice's key, and stays empty unless the run succeeded. */
TFR_API tfr_status tfr_wire_orchestrate(const tfr_scenario* scenario, uint16_t base_port,
                                        const char* work_dir, const tfr_wire_options* options,
                                        tfr_text** report, tfr_text** key_hex);

/* Runs one node from its config file and returns its exit code (0, 2, 3). */
TFR_API int tfr_wire_run_node(const char* config_path);

#ifdef __cplusplus
}
#endif

#endif /* TFRELAY_H */
