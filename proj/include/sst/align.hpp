#pragma once

//
// align.hpp — causal alignment: converts a timestamped transcript plus target
// words and a target→source alignment into a WAIT-interleaved label sequence.
// Each aligned target word's first token is placed at
//
//     t_start = max( ceil((e_i + δ) / Δt), t_last + 1 )
//
// (1-based decoder index; e_i = end of its source word; δ a sampled delay);
// unaligned words defer to t_last + 1; multi-token words occupy consecutive
// indices; everything else is WAIT. Tokens that would land at index ≥ l are
// dropped and counted. Index l itself always stays WAIT.
//
// Also here: window sampling for long inputs, wait-fraction analytics, the
// deterministic fallback aligner, target-word segmentation, and the shard
// record format shared with the SFT builder.
//

#include <string>
#include <vector>

#include "sst/common.hpp"
#include "sst/timeline.hpp"

namespace sst {

// ─── Delay model ─────────────────────────────────────────────────────────────

// Stochastic release delay δ, sampled independently for each aligned word.
// Integer milliseconds, like every other timestamp.
struct DelayModel {
    enum class Kind { fixed, uniform };

    Kind kind = Kind::uniform;
    int64_t fixed_ms = 0;
    int64_t lo_ms = 0, hi_ms = 200;
    uint64_t seed = 0; // used by file-level wrappers to build their Rng

    static DelayModel fixed(int64_t delta_ms) {
        DelayModel m;
        m.kind = Kind::fixed;
        m.fixed_ms = delta_ms;
        return m;
    }
    static DelayModel uniform(int64_t lo_ms, int64_t hi_ms) {
        if (lo_ms > hi_ms)
            fail_validation("delay model: lo > hi");
        DelayModel m;
        m.kind = Kind::uniform;
        m.lo_ms = lo_ms;
        m.hi_ms = hi_ms;
        return m;
    }
    // "fixed:120" or "uniform:0,200" (the CLI --delta syntax).
    static DelayModel parse(const std::string &spec);

    int64_t sample(Rng &rng) const {
        return kind == Kind::fixed ? fixed_ms : rng.uniform_int(lo_ms, hi_ms);
    }
};

// ─── Alignment pass ──────────────────────────────────────────────────────────

struct AlignmentReport {
    int64_t placed = 0;     // content tokens written into the label sequence
    int64_t dropped = 0;    // content tokens truncated at index l
    int64_t collisions = 0; // words whose t_start was forced up by monotonicity

    bool operator==(const AlignmentReport &) const = default;
};

// [start-of-transcript, language marker, task marker, no-timestamps].
// task=transcribe requires lang=en.
std::vector<int32_t> prompt_tokens(const std::string &lang,
                                   const std::string &task,
                                   const Vocabulary &vocab);

struct AlignResult {
    LabelSequence labels;
    AlignmentReport report;
};

// The core pass. alignment.links must have one entry per target word, every
// link within the transcript; prompt must be shorter than dilation.l; the
// tokenizer must never produce vocab.wait for content text.
AlignResult causal_align(const Transcript &transcript,
                         const std::vector<std::string> &target_words,
                         const AlignmentMap &alignment,
                         const DilationConfig &dilation,
                         const DelayModel &delay,
                         const Tokenizer &tokenizer,
                         const std::vector<int32_t> &prompt,
                         const Vocabulary &vocab, Rng &rng);

// (#WAIT among non-prompt positions) / (l − prompt_len).
double wait_fraction(const LabelSequence &labels, const Vocabulary &vocab);

// ─── Window sampling ─────────────────────────────────────────────────────────

// A source document with its translation, ready for label building.
struct AlignedDocument {
    Transcript transcript;
    std::vector<std::string> target_words;
    AlignmentMap alignment;
};

struct TrainingWindow {
    int64_t window_start_ms = 0;
    Transcript transcript; // re-based to window-local time
    std::vector<std::string> target_words;
    AlignmentMap alignment;
    LabelSequence labels;
    AlignmentReport report;
};

// Draws a 30 s window (uniform start) from a long document, keeping source
// words fully inside it; windows with < 4 source words are rejected and
// redrawn up to max_redraws. Inputs shorter than 30 s use the whole document
// (labels are right-padded with WAIT by construction). Target words ride
// along with their aligned source word; unaligned target words follow their
// closest preceding aligned neighbor and are dropped when there is none.
TrainingWindow pad_or_sample_window(const AlignedDocument &doc,
                                    const DilationConfig &dilation,
                                    const DelayModel &delay,
                                    const Tokenizer &tokenizer,
                                    const std::vector<int32_t> &prompt,
                                    const Vocabulary &vocab, Rng &rng,
                                    int max_redraws = 100);

// ─── Fallback aligner and segmentation ───────────────────────────────────────

// Strictly monotone proportional map for when no alignment file exists:
// target j → source floor((j−1)·M/N) + 1.
AlignmentMap fallback_align(int n_source_words, int n_target_words);

// Splits target text into alignable words: whitespace for en/de/ru,
// character bigrams for ja (no external morphological analyzer).
std::vector<std::string> segment_words(const std::string &text,
                                       const std::string &lang);

// ─── Shard records ───────────────────────────────────────────────────────────

// One training example. loss_mask is indexed by label position (1 = loss
// active for predicting that position); prompt positions are always inactive.
struct ShardRecord {
    std::vector<int32_t> labels;
    std::vector<uint8_t> loss_mask;
    std::string lang = "en";
    std::string task = "transcribe";
    int D = 4;
    AlignmentReport report;
    bool sft = false;
    int pivot = 0;   // SFT only
    int delta_s = 0; // SFT only

    bool operator==(const ShardRecord &) const = default;
};

std::string shard_record_to_json(const ShardRecord &r);
ShardRecord shard_record_from_json(const std::string &line);
std::vector<ShardRecord> shards_from_jsonl(const std::string &text);
std::string shards_to_jsonl(const std::vector<ShardRecord> &records);

// Builds the default loss mask for a plain (non-SFT) record: active
// everywhere except prompt positions.
std::vector<uint8_t> default_loss_mask(int l, int prompt_len);

} // namespace sst
