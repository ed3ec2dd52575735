#ifndef SIMULST_H
#define SIMULST_H

/*
 * simulst.h — C interface to the simultaneous speech translation toolkit.
 *
 * Two layers share this header:
 *
 *   1. Handles: open a model checkpoint, then run live streams against it.
 *      Audio arrives as fixed-size feature chunks; every push returns one
 *      decode step (WAIT or a content token). Handles are opaque; a model
 *      may serve many streams, each stream is single-owner.
 *
 *   2. Commands: file-level operations (corpus synthesis, alignment,
 *      catch-up shard building, training, streaming, evaluation, bias
 *      sweeps). Each takes a flat list of key=value options — the same
 *      vocabulary the bundled CLI exposes — and reads/writes files only.
 *
 * Every function returns sst_status; on failure sst_last_error() holds a
 * message for the calling thread. No function prints, no function keeps
 * global state beyond that message.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SIMULST_API __declspec(dllexport)
#else
#define SIMULST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sst_status {
    SST_OK = 0,
    SST_RUNTIME = 1,        /* I/O failures, divergence, internal errors */
    SST_VALIDATION = 2,     /* bad arguments, malformed files, bad config */
    SST_STRICT_DROP = 3,    /* strict mode refused to drop content */
    SST_NOT_APPLICABLE = 4  /* the operation has no valid result here */
} sst_status;

/* Library and file-format versions, e.g. "simulst 0.1.0 (sstf 1, sstc 1)". */
SIMULST_API const char *sst_version(void);

/* Message from this thread's most recent failing call; "" after success. */
SIMULST_API const char *sst_last_error(void);

/* ── Model handle ─────────────────────────────────────────────────────────── */

typedef struct sst_model sst_model;

SIMULST_API sst_status sst_model_open(const char *checkpoint_path, sst_model **out);
SIMULST_API void sst_model_close(sst_model *model);

/* Model configuration as a JSON object (dimensions, vocabulary, dilation).
 * Fails with SST_VALIDATION if the buffer is too small. */
SIMULST_API sst_status sst_model_info(const sst_model *model, char *buf, size_t cap);

/* ── Streams ──────────────────────────────────────────────────────────────── */

typedef struct sst_stream sst_stream;

typedef struct sst_stream_params {
    double wait_bias;            /* added to the WAIT logit before argmax */
    int32_t cached;              /* nonzero = incremental mode (default) */
    int32_t window_stride_chunks;/* audio-window origin advance when full */
    int32_t virtual_clock;       /* nonzero = deterministic wall clock */
    int64_t step_overhead_ms;    /* virtual clock: per-step wall overhead */
    const char *lang;            /* NULL = "en" */
    const char *task;            /* NULL = "transcribe" */
} sst_stream_params;

/* Fills in the defaults above (bias 0, cached, stride 25, virtual clock). */
SIMULST_API void sst_stream_params_init(sst_stream_params *params);

SIMULST_API sst_status sst_stream_open(sst_model *model,
                                       const sst_stream_params *params,
                                       sst_stream **out);
SIMULST_API void sst_stream_close(sst_stream *stream);

SIMULST_API int32_t sst_stream_feat_dim(const sst_stream *stream);
SIMULST_API int32_t sst_stream_chunk_frames(const sst_stream *stream);
SIMULST_API int64_t sst_stream_chunk_ms(const sst_stream *stream);

typedef struct sst_emission {
    int32_t tok;
    int64_t src_ms;   /* audio ingested when this step committed */
    int64_t wall_ms;  /* wall clock relative to stream start */
    char action;      /* 'W' = wrote a content token, 'R' = read more audio */
    char text[16];    /* decoded content text, NUL-terminated ("" for reads) */
} sst_emission;

/* One chunk in, one decode step out. `frames` is frame-major:
 * chunk_frames x feat_dim floats, frames[t * feat_dim + c]. */
SIMULST_API sst_status sst_stream_push(sst_stream *stream, const float *frames,
                                       sst_emission *out);

/* ── Commands ─────────────────────────────────────────────────────────────── */

/* Each command takes n option pairs: keys[i] = values[i]. Unknown keys are
 * validation errors. Shared keys and defaults (per command below):
 *
 * synth   out= (dir, required) task=delayed-copy minutes=30 file_minutes=2
 *         seed=1 wpm=0
 * align   transcript= (required) targets= (required, text file)
 *         alignment= ("fallback" or a JSONL path; default fallback)
 *         out= (required, shard JSONL) report= (default out+".report.json")
 *         D=4 delta=uniform:0,200 lang=en task=transcribe vocab=toy
 *         tokenizer=byte seed=1 strict=0
 * sft     in= out= (required, shard JSONL) seed=1 vocab=toy
 *         strict_mask=0 strict_drops=0
 * train   corpus= run= (required dirs) steps=200 batch=4 seed=1
 *         peak_lr=4e-5 warmup=100 schedule=linear_decay clip=1.0
 *         weight_decay=0.01 D=4 delta=uniform:400,600 sft_ratio=0
 *         log_every=10 stop_after=0 resume=0
 *         init= (optional weights-only starting checkpoint)
 *         `steps` is the run's total update count and fixes the schedule;
 *         stop_after > 0 pauses after that many updates this call, and
 *         resume=1 continues toward `steps` with the optimizer settings
 *         stored in run/checkpoint.sstc (a paused-then-resumed run matches
 *         an uninterrupted one bit for bit).
 * stream  model= (required) features=|wav= (exactly one) out= (required)
 *         summary= (default out+".summary.json") bias=0 cached=1 stride=25
 *         clock=virtual|real overhead_ms=0 lang=en task=transcribe
 *         stalls= (e.g. "10-20,40-45", chunk ranges forced to WAIT)
 * eval    log= refs= out= (required) bias=0 segment_ms=10000
 * sweep   model= corpus= out= (required) biases=0,-1,-2,-4 jobs=1
 *         cached=1 stride=25 segment... (segments fixed at 10 s)
 */
SIMULST_API sst_status sst_cmd_synth(const char *const *keys,
                                     const char *const *values, size_t n);
SIMULST_API sst_status sst_cmd_align(const char *const *keys,
                                     const char *const *values, size_t n);
SIMULST_API sst_status sst_cmd_sft(const char *const *keys,
                                   const char *const *values, size_t n);
SIMULST_API sst_status sst_cmd_train(const char *const *keys,
                                     const char *const *values, size_t n);
SIMULST_API sst_status sst_cmd_stream(const char *const *keys,
                                      const char *const *values, size_t n);
SIMULST_API sst_status sst_cmd_eval(const char *const *keys,
                                    const char *const *values, size_t n);
SIMULST_API sst_status sst_cmd_sweep(const char *const *keys,
                                     const char *const *values, size_t n);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SIMULST_H */
