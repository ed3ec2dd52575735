#pragma once

//
// engine.hpp — streaming inference. Audio arrives in fixed chunks (2·D
// feature frames = 20·D ms each, 80 ms at the stock dilation); every chunk
// triggers exactly one decode step that emits one token — WAIT ("read more")
// or content ("write"). State between steps:
//
//   · Audio window: raw chunks are kept for at most the encoder span (30 s);
//     the window fed to the encoder is always padded to the full span, and
//     once real audio fills it the window origin jumps forward by
//     window_stride_chunks and the encoder state is rebuilt from the
//     retained chunks. The decode therefore always sees between
//     span − stride and span of real audio, padded with silence.
//   · Token context: starts as the 4-token prompt; each step appends its
//     emission. When the context is full the earliest non-prompt token is
//     evicted — one per step, never re-anchored to the audio window.
//
// Two execution modes share this state machine. The reference mode re-runs
// the batch encoder and decoder from scratch every step. The cached mode
// keeps per-layer encoder key/value columns: settled keys are appended once
// and never recomputed (causality makes them final on arrival), and only the
// zero-padded lookahead tail up to the decode row's horizon is refreshed
// each step. Both modes run the same per-position primitives, so their
// logits and emissions are bit-identical — the cached mode is an
// optimization, never an approximation.
//

#include <chrono>
#include <cstdint>
#include <deque>
#include <string>
#include <utility>
#include <vector>

#include "sst/common.hpp"
#include "sst/mel.hpp"
#include "sst/metrics.hpp"
#include "sst/model.hpp"
#include "sst/timeline.hpp"

namespace sst {

// ─── Configuration ───────────────────────────────────────────────────────────

struct StreamConfig {
    float wait_bias = 0.0f;        // added to the WAIT logit before argmax
    bool cached = true;            // false = from-scratch reference mode
    int window_stride_chunks = 25; // origin advance once the span is full
    bool virtual_clock = true;     // wall = src + step_overhead (deterministic)
    int64_t step_overhead_ms = 0;  // virtual clock only
    std::string lang = "en";
    std::string task = "transcribe";
    // Forced-WAIT chunk ranges [first, last), 0-based: the decode is skipped
    // and the step emits WAIT, simulating an output stall.
    std::vector<std::pair<int64_t, int64_t>> stalls;
};

// ─── Stream ──────────────────────────────────────────────────────────────────

// One live stream. `w`, `vocab` and `tok` must outlive the stream.
class Stream {
  public:
    Stream(const Weights<float> &w, const Vocabulary &vocab, const Tokenizer &tok,
           const StreamConfig &cfg);

    int chunk_frames() const { return chunk_frames_; }
    int64_t chunk_ms() const { return chunk_ms_; }

    // One chunk (feat_dim × chunk_frames) in, one decode step out.
    EmissionRecord push_chunk(const Mat<float> &frames);

    const EmissionLog &log() const { return log_; }
    const std::vector<int32_t> &context() const { return ctx_; }
    int64_t chunks_pushed() const { return chunks_; }
    int64_t origin_chunks() const { return origin_; }
    int64_t audio_ms() const { return chunk_ms_ * chunks_; }
    const Mat<float> &window_features() const { return feats_win_; }
    // Raw logits of the latest decode (vocab × 1, before the WAIT bias);
    // empty when the step was stalled or nothing was pushed yet.
    const Mat<float> &last_logits() const { return last_logits_; }
    double processing_ms() const { return processing_ms_; }

  private:
    void rebase();
    void append_settled();
    void refresh_tail(int horizon);
    void encode_key(int n);
    bool stalled(int64_t chunk) const;

    const Weights<float> &w_;
    const Vocabulary &vocab_;
    const Tokenizer &tok_;
    StreamConfig cfg_;

    int D_, chunk_frames_, prompt_len_;
    int64_t chunk_ms_, window_chunks_;
    int n_keys_, n_frames_;

    int64_t chunks_ = 0, origin_ = 0;
    std::deque<Mat<float>> raw_;  // chunks [origin_, chunks_)
    Mat<float> feats_win_;        // window-local, zero beyond settled audio
    std::vector<int32_t> ctx_;
    EmissionLog log_;
    Mat<float> last_logits_;
    int64_t last_wall_ = -1;
    double processing_ms_ = 0;
    std::chrono::steady_clock::time_point epoch_;

    // Cached-mode encoder state (window-local).
    int settled_frames_ = 0, settled_keys_ = 0;
    Mat<float> conv1_post_;
    struct EncKV {
        Mat<float> k, v;
    };
    std::vector<EncKV> enc_kv_;
    Mat<float> enc_out_;
};

// ─── Drivers ─────────────────────────────────────────────────────────────────

// Splits the features into whole chunks (a trailing partial chunk is
// dropped) and pushes them through one stream.
void feed_stream(Stream &stream, const Features &feats);

EmissionLog run_stream(const Weights<float> &w, const Vocabulary &vocab,
                       const Tokenizer &tok, const Features &feats,
                       const StreamConfig &cfg, double *processing_ms = nullptr);

// ─── Latency/quality sweep ───────────────────────────────────────────────────

struct EvalStream {
    Features feats;
    Transcript transcript;
};

// Reference text of a transcript span: " " + word, concatenated.
std::string transcript_text(const Transcript &t);

// Partition [0, total_ms] into segment_ms pieces; each word's text joins the
// segment containing its end time. total_ms = 0 uses the audio duration.
std::vector<RefSegment> transcript_segments(const Transcript &t, int64_t segment_ms,
                                            int64_t total_ms = 0);

// Runs every stream at every WAIT bias and aggregates one row per bias:
// mean whole-stream LAAL, mean 10 s StreamLAAL-lite, mean computation-aware
// LAAL, corpus BLEU, and pooled RTF.
std::vector<SweepRow> latency_quality_sweep(const Weights<float> &w,
                                            const Vocabulary &vocab,
                                            const Tokenizer &tok,
                                            const std::vector<EvalStream> &streams,
                                            const std::vector<double> &biases,
                                            const StreamConfig &base);

} // namespace sst
