#pragma once

//
// metrics.hpp — latency and quality metrology. Latency follows the
// length-adaptive average-lagging family: with delays d_i (ms), source
// duration T, γ = max(|y|, |y*|) and τ = the first index whose delay hits T
// (else |y|),
//
//     LAAL = (1/τ) · Σ_{i=1..τ} [ d_i − (i−1)·T/γ ].
//
// Long-form output is scored by partitioning hypothesis tokens into reference
// segments by their source commit time and duration-weighting the per-segment
// values — a timestamp simplification of the published resegmentation
// machinery, labeled "StreamLAAL-lite" in every output. The computationally-
// aware variant replaces d_i with wall-clock elapsed time (clamped from below
// by the ideal delay). Quality is corpus BLEU (4-gram, brevity penalty, no
// smoothing unless asked).
//

#include <cstdint>
#include <string>
#include <vector>

#include "sst/common.hpp"
#include "sst/timeline.hpp"

namespace sst {

// ─── Emission log ────────────────────────────────────────────────────────────

// One record per decode step: action 'W' commits a content token, action 'R'
// reads more source (a WAIT emission).
struct EmissionRecord {
    int32_t tok = 0;
    std::string text;
    int64_t src_ms = 0;  // source audio ingested when the step committed
    int64_t wall_ms = 0; // wall clock relative to stream origin
    char action = 'R';

    bool operator==(const EmissionRecord &) const = default;
};

struct EmissionLog {
    std::vector<EmissionRecord> records;

    std::vector<EmissionRecord> writes() const;

    bool operator==(const EmissionLog &) const = default;
};

// src_ms non-decreasing, wall_ms strictly increasing.
void validate_log(const EmissionLog &log);

std::string emission_log_to_jsonl(const EmissionLog &log);
EmissionLog emission_log_from_jsonl(const std::string &text);

// ─── Segment-level evaluation ────────────────────────────────────────────────

struct SegmentEval {
    std::vector<int64_t> delays_ms; // non-decreasing, within [0, duration]
    int64_t ref_token_count = 0;    // |y*|
    int64_t duration_ms = 0;        // T

    bool operator==(const SegmentEval &) const = default;
};

// Builds delays from the W records of a log: d_i = clamp(src_ms, 0, T).
// word_level aggregates consecutive tokens into words at whitespace
// boundaries in their text and keeps the max (= last) delay per word.
SegmentEval segment_from_log(const EmissionLog &log, int64_t duration_ms,
                             int64_t ref_token_count,
                             bool word_level = false);

double laal(const SegmentEval &seg); // milliseconds

// Same formula with d_i replaced by max(wall_ms_i − wall_origin_ms, d_i);
// τ and γ stay those of the ideal delays.
double ca_laal(const SegmentEval &seg, const std::vector<int64_t> &wall_ms,
               int64_t wall_origin_ms);

// ─── Long-form latency ───────────────────────────────────────────────────────

struct RefSegment {
    int64_t start_ms = 0;
    int64_t end_ms = 0;
    std::string text;

    bool operator==(const RefSegment &) const = default;
};

std::string ref_segments_to_jsonl(const std::vector<RefSegment> &segs);
std::vector<RefSegment> ref_segments_from_jsonl(const std::string &text);

// Duration-weighted mean of per-segment LAAL. Hypothesis tokens are assigned
// to the segment containing their src_ms ((start, end]; the first segment
// also owns its start); delays are re-based to the segment start. A segment
// with
// reference tokens but no hypothesis tokens scores its full duration (its
// content never arrived before the segment ended); segments empty on both
// sides are skipped. Tokens outside every segment are an error.
// ca = true applies the CA delay substitution inside each segment.
double stream_laal_lite(const EmissionLog &log,
                        const std::vector<RefSegment> &refs,
                        const Tokenizer &tokenizer, bool ca = false,
                        int64_t wall_origin_ms = 0);

// ─── RTF ─────────────────────────────────────────────────────────────────────

double rtf(double processing_ms, double audio_ms);

// ─── BLEU ────────────────────────────────────────────────────────────────────

// tokenization_mode: "ws" (whitespace; en/de/ru) or "char" (ja).
double bleu(const std::vector<std::string> &hypotheses,
            const std::vector<std::string> &references,
            const std::string &tokenization_mode = "ws",
            bool smooth = false);

// ─── Sweep report ────────────────────────────────────────────────────────────

struct SweepRow {
    double bias = 0;
    double bleu = 0;
    double laal_ms = 0;
    double stream_laal_ms = 0;
    double ca_ms = 0;
    double rtf = 0;
};

// CSV with the fixed header bias,bleu,laal_ms,stream_laal_ms,ca_ms,rtf.
std::string report_csv(const std::vector<SweepRow> &rows);

} // namespace sst
