/* Prints session metrics for a WebVTT file.
 *
 *   cargo build -p tandem-ffi
 *   cc -Icrates/ffi/include crates/ffi/examples/analyze.c \
 *      -Ltarget/debug -ltandem_ffi -o analyze
 *   LD_LIBRARY_PATH=target/debug ./analyze session.vtt
 */
#include <stdio.h>
#include <stdlib.h>

#include "tandem.h"

int main(int argc, char **argv) {
  if (argc != 2) {
    fprintf(stderr, "usage: %s transcript.vtt\n", argv[0]);
    return 1;
  }
  FILE *f = fopen(argv[1], "rb");
  if (!f) {
    perror(argv[1]);
    return 1;
  }
  fseek(f, 0, SEEK_END);
  long len = ftell(f);
  rewind(f);
  uint8_t *buf = malloc(len > 0 ? (size_t)len : 1);
  size_t got = fread(buf, 1, (size_t)len, f);
  fclose(f);

  TandemTranscript *t = NULL;
  if (tandem_transcript_parse(buf, got, &t) != TANDEM_STATUS_OK) {
    fprintf(stderr, "%s\n", tandem_last_error());
    free(buf);
    return 1;
  }
  free(buf);

  TandemAnalysis *a = NULL;
  char *json = NULL;
  if (tandem_analyze(t, NULL, &a) != TANDEM_STATUS_OK ||
      tandem_analysis_metrics_json(a, &json) != TANDEM_STATUS_OK) {
    fprintf(stderr, "%s\n", tandem_last_error());
    tandem_transcript_free(t);
    return 2;
  }
  fputs(json, stdout);

  TandemSeek s;
  tandem_seek(t, 60000, &s);
  fprintf(stderr, "%zu cues; at 60 s: offset %llu, active %lld, next %lld\n",
          tandem_transcript_cue_count(t), (unsigned long long)s.offset_ms,
          (long long)s.active_cue, (long long)s.next_cue);

  tandem_string_free(json);
  tandem_analysis_free(a);
  tandem_transcript_free(t);
  return 0;
}
