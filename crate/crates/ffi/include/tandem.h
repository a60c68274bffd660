#ifndef TANDEM_H
#define TANDEM_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum TandemStatus {
  TANDEM_STATUS_OK = 0,
  // A required pointer argument was null.
  TANDEM_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  TANDEM_STATUS_INVALID_UTF8 = 2,
  // The transcript has error-severity parse issues.
  TANDEM_STATUS_PARSE_ERROR = 3,
  // The configuration text was rejected.
  TANDEM_STATUS_CONFIG_ERROR = 4,
  // A Rust panic was caught at the boundary.
  TANDEM_STATUS_INTERNAL = 5,
} TandemStatus;

// Turns and metrics of one transcript.
typedef struct TandemAnalysis TandemAnalysis;

// Analysis parameters.
typedef struct TandemConfig TandemConfig;

// A parsed transcript.
typedef struct TandemTranscript TandemTranscript;

// Where playback should go for an instant. Cue positions are -1 when there
// is no such cue.
typedef struct TandemSeek {
  uint64_t offset_ms;
  int64_t active_cue;
  int64_t next_cue;
} TandemSeek;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// Valid until the next library call on the same thread.
const char *tandem_last_error(void);

// Library version, static storage.
const char *tandem_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void tandem_string_free(char *s);

// Parses `len` bytes of WebVTT. Warnings are tolerated; error-severity
// issues fail with `ParseError` and list the issues in the last error.
//
// # Safety
// `data` must point to `len` readable bytes; `out` must be writable.
enum TandemStatus tandem_transcript_parse(const uint8_t *data,
                                          size_t len,
                                          struct TandemTranscript **out);

// # Safety
// `t` must be null or a live handle from [`tandem_transcript_parse`].
void tandem_transcript_free(struct TandemTranscript *t);

// Number of cues; 0 for a null handle.
//
// # Safety
// `t` must be null or a live transcript handle.
size_t tandem_transcript_cue_count(const struct TandemTranscript *t);

// End of the last cue in milliseconds; 0 for a null handle.
//
// # Safety
// `t` must be null or a live transcript handle.
uint64_t tandem_transcript_duration_ms(const struct TandemTranscript *t);

// The transcript as canonical JSON.
//
// # Safety
// `t` must be a live transcript handle; `out` must be writable.
enum TandemStatus tandem_transcript_json(const struct TandemTranscript *t, char **out);

// Maps an instant to a playback offset and cue positions.
//
// # Safety
// `t` must be a live transcript handle; `out` must be writable.
enum TandemStatus tandem_seek(const struct TandemTranscript *t,
                              uint64_t t_ms,
                              struct TandemSeek *out);

// Default parameters. Never null.
struct TandemConfig *tandem_config_default(void);

// Parameters from TOML text; keys left out keep their defaults.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum TandemStatus tandem_config_from_toml(const char *toml, struct TandemConfig **out);

// # Safety
// `c` must be null or a live config handle.
void tandem_config_free(struct TandemConfig *c);

// Segments turns and computes metrics. A null `config` means defaults.
//
// # Safety
// `t` must be a live transcript handle, `config` null or a live config
// handle, `out` writable.
enum TandemStatus tandem_analyze(const struct TandemTranscript *t,
                                 const struct TandemConfig *config,
                                 struct TandemAnalysis **out);

// # Safety
// `a` must be null or a live analysis handle.
void tandem_analysis_free(struct TandemAnalysis *a);

// Session metrics as canonical JSON, byte-identical to the CLI and API.
//
// # Safety
// `a` must be a live analysis handle; `out` must be writable.
enum TandemStatus tandem_analysis_metrics_json(const struct TandemAnalysis *a, char **out);

// Timeline tracks as canonical JSON, one per speaker in order of first
// appearance.
//
// # Safety
// `a` must be a live analysis handle; `out` must be writable.
enum TandemStatus tandem_analysis_timeline_json(const struct TandemAnalysis *a, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TANDEM_H */
