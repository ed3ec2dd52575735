#pragma once

//
// synth.hpp — synthetic delayed-copy speech. Each "word" is a single glyph
// ('a'..'j') rendered as a constant 80-dim feature pattern held for the
// word's duration, separated by exact silence (all-zero frames, the same
// value features padding uses). The reference translation of a stream is its
// own transcript with a leading space per word, so the task is: copy each
// glyph, delayed until after it has been heard. Ground-truth word end times
// are exact by construction, which is what makes causality checkable.
//
// Everything here is a pure function of its seeds: regenerating a corpus
// with the same spec writes byte-identical files.
//

#include <cstdint>
#include <string>
#include <vector>

#include "sst/align.hpp"
#include "sst/common.hpp"
#include "sst/mel.hpp"
#include "sst/model.hpp"
#include "sst/timeline.hpp"
#include "sst/train.hpp"

namespace sst {

// ─── Stream sampling ─────────────────────────────────────────────────────────

struct SynthConfig {
    int n_glyphs = 10;           // 'a' + 0 .. 'a' + n_glyphs-1
    uint64_t pattern_seed = 7;   // glyph pattern table (independent of corpus seed)
    int feat_dim = 80;
    int64_t dur_lo_ms = 400, dur_hi_ms = 800; // word duration
    int64_t gap_lo_ms = 200, gap_hi_ms = 500; // silence before each word
    int64_t tail_silence_ms = 500;            // words never end after D - tail
};

void validate_synth(const SynthConfig &cfg);

// Same pattern table, duration/gap ranges scaled so the mean word cadence
// hits roughly `wpm` words per minute.
SynthConfig rate_config(const SynthConfig &base, int wpm);

struct GlyphWord {
    char glyph = 'a';
    int64_t start_ms = 0, end_ms = 0;
    bool operator==(const GlyphWord &) const = default;
};

struct SynthStream {
    std::vector<GlyphWord> words;
    int64_t duration_ms = 0;
    bool operator==(const SynthStream &) const = default;
};

// Gap, word, gap, word, ... until no further word fits before
// duration - tail_silence. Glyphs drawn uniformly.
SynthStream synth_stream(const SynthConfig &cfg, int64_t duration_ms, Rng &rng);

// ─── Rendering ───────────────────────────────────────────────────────────────

// feat_dim × n_glyphs, entries i.i.d. U(-1, 1) from pattern_seed.
Mat<float> glyph_patterns(const SynthConfig &cfg);

// 10 ms frames. A frame carries a word's pattern iff it lies fully inside
// [start_ms, end_ms]; edge frames that straddle a boundary stay silent, so
// no audible evidence of a glyph exists outside its labelled span.
Features render_features(const SynthConfig &cfg, const std::vector<WordSpan> &words,
                         int64_t duration_ms);
Features synth_features(const SynthConfig &cfg, const SynthStream &stream);

// ─── Documents ───────────────────────────────────────────────────────────────

Transcript stream_transcript(const SynthStream &stream);

// Source word i ("x") ↔ target word i (" x"), identity alignment. The
// leading space makes decoded output whitespace-segmentable and gives the
// canonical two tokens per word under byte tokenization.
AlignedDocument delayed_copy_document(const SynthStream &stream);

// Rebuild the glyph stream from a transcript (inverse of stream_transcript;
// word text must be a single glyph character).
SynthStream transcript_stream(const Transcript &t);

// ─── Corpus files ────────────────────────────────────────────────────────────

struct CorpusSpec {
    SynthConfig synth;
    int total_minutes = 30;
    int file_minutes = 2;
    uint64_t seed = 1;
};

void validate_corpus_spec(const CorpusSpec &spec);

// Writes NNN.sstf + NNN.transcript.jsonl per file plus manifest.json.
// Deterministic: same spec, same bytes.
void write_corpus(const std::string &dir, const CorpusSpec &spec);

struct Corpus {
    SynthConfig synth;
    uint64_t seed = 0;
    std::vector<Transcript> transcripts;
    std::vector<std::string> feature_paths; // parallel to transcripts
};

Corpus read_corpus(const std::string &dir);

// ─── Training samples ────────────────────────────────────────────────────────

struct TaskDataConfig {
    DilationConfig dilation;  // derive_dilation(cfg.dilation)
    DelayModel delay = DelayModel::uniform(400, 600);
    double sft_ratio = 0.0;   // probability a window is recast as catch-up
    std::string lang = "en", task = "transcribe";
};

// Draws one 30 s training window from a random corpus document: sample the
// window, align it, optionally recast as a catch-up sample, and re-render
// features from the window-local transcript. Pure function of `rng`.
TrainSample sample_from_corpus(const Corpus &corpus, const TaskDataConfig &data,
                               const ModelConfig &model, const Tokenizer &tok,
                               const Vocabulary &vocab, Rng &rng);

// SampleSource adapter for train_loop.
SampleSource corpus_source(const Corpus &corpus, const TaskDataConfig &data,
                           const ModelConfig &model, const Tokenizer &tok,
                           const Vocabulary &vocab);

} // namespace sst
