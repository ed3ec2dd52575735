#pragma once

//
// timeline.hpp — domain types shared by every other module: timestamped
// transcripts, target→source alignment maps, the dilation configuration that
// ties decoder positions to audio time, vocabularies, and token label
// sequences. All types are immutable values; timestamps are integer
// milliseconds so index arithmetic stays exact.
//

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sst/common.hpp"

namespace sst {

// ─── Words on a timeline ─────────────────────────────────────────────────────

struct WordSpan {
    std::string text;
    int64_t start_ms = 0;
    int64_t end_ms = 0;

    bool operator==(const WordSpan &) const = default;
};

struct Transcript {
    std::vector<WordSpan> words; // ordered, non-overlapping
    int64_t audio_duration_ms = 0;

    bool operator==(const Transcript &) const = default;
};

// Returns the transcript iff every invariant holds: non-empty word text,
// start ≤ end, words ordered without overlap, end within the audio.
// Error messages name the offending word index (1-based).
Transcript validate_transcript(const Transcript &raw);

// ─── Target→source alignment ─────────────────────────────────────────────────

// links[j-1] is the source word index (1-based) for target word j, or
// kUnaligned when the word has no source correspondence.
struct AlignmentMap {
    static constexpr int32_t kUnaligned = 0;

    std::vector<int32_t> links;

    bool aligned(int j) const { return links[j - 1] != kUnaligned; }
    int32_t source_of(int j) const { return links[j - 1]; }

    bool operator==(const AlignmentMap &) const = default;
};

// Validates that every link points inside [1, n_source_words].
void validate_alignment(const AlignmentMap &map, int n_source_words);

// ─── Dilation configuration ──────────────────────────────────────────────────

// One decoder step consumes D encoder keys; the encoder always covers 30 s as
// 1500 keys of 20 ms each, so l·dt_ms = 30000 for every valid D.
struct DilationConfig {
    int D = 4;       // encoder keys consumed per decoder step
    int l = 375;     // decoder context length = 1500 / D
    int dt_ms = 80;  // decoder token duration = 30000 / l

    static constexpr int encoder_keys = 1500;
    static constexpr int encoder_key_ms = 20;

    bool operator==(const DilationConfig &) const = default;
};

// Errors with "D must divide 1500" otherwise.
DilationConfig derive_dilation(int D);

// ─── Vocabulary ──────────────────────────────────────────────────────────────

enum class VocabMode { toy, whisper_compat };

// Two layouts share one shape: content ids live in [0, n_content) and the
// special ids are pairwise distinct. In whisper-compat mode the WAIT id (93)
// sits inside the content range — the byte it shadows must never be produced
// for content text (causal alignment enforces this).
struct Vocabulary {
    VocabMode mode = VocabMode::toy;
    int n_content = 256;
    int vocab_size = 265;

    int sot = 256;
    int lang_en = 257, lang_ja = 258, lang_ru = 259, lang_de = 260;
    int task_transcribe = 261, task_translate = 262;
    int notimestamps = 263;
    int wait = 264;

    static Vocabulary toy();
    static Vocabulary whisper_compat();
    static Vocabulary from_mode_name(const std::string &name);
    std::string mode_name() const;

    int lang_id(const std::string &lang) const;  // "en" | "ja" | "ru" | "de"
    int task_id(const std::string &task) const;  // "transcribe" | "translate"
    bool is_special(int id) const;

    bool operator==(const Vocabulary &) const = default;
};

// ─── Label sequences ─────────────────────────────────────────────────────────

// Fixed-length token sequence of length dilation.l: prompt tokens in positions
// 1..prompt_len, then content tokens and WAITs. Positions are 1-based in all
// commentary and APIs that speak "position"; the tokens vector itself is a
// plain 0-based array.
struct LabelSequence {
    std::vector<int32_t> tokens;
    int prompt_len = 4;
    DilationConfig dilation;

    int32_t at(int position) const { return tokens[position - 1]; } // 1-based

    bool operator==(const LabelSequence &) const = default;
};

// Checks length, prompt_len < l, and that non-prompt positions hold either
// WAIT or a content-range token.
void validate_labels(const LabelSequence &labels, const Vocabulary &vocab);

// ─── Tokenizers ──────────────────────────────────────────────────────────────

// Pluggable; the default scheme is reversible byte-level.
class Tokenizer {
  public:
    virtual ~Tokenizer() = default;
    virtual std::vector<int32_t> encode(const std::string &text) const = 0;
    virtual std::string decode(const std::vector<int32_t> &tokens) const = 0;
    virtual std::string name() const = 0;
};

// One token per byte, ids 0..255; decode is the exact inverse of encode.
class ByteTokenizer : public Tokenizer {
  public:
    std::vector<int32_t> encode(const std::string &text) const override;
    std::string decode(const std::vector<int32_t> &tokens) const override;
    std::string name() const override { return "byte"; }
};

// Analytics-only tokenizer emitting at most max_tokens_per_word ids per
// whitespace word (hashed into 0..255, not reversible). Used to model a
// subword tokenizer's token budget when only counts matter.
class HashWordTokenizer : public Tokenizer {
  public:
    explicit HashWordTokenizer(int max_tokens_per_word = 2)
        : max_tokens_per_word_(max_tokens_per_word) {}

    std::vector<int32_t> encode(const std::string &text) const override;
    std::string decode(const std::vector<int32_t> &tokens) const override;
    std::string name() const override { return "hash-word"; }

  private:
    int max_tokens_per_word_;
};

// ─── Serialization ───────────────────────────────────────────────────────────
//
// Transcript JSONL: header line {"duration_ms": int}, then one line
// {"w": str, "s": int_ms, "e": int_ms} per word.
// Alignment JSONL: one line {"tgt": int, "src": int|null} per target word,
// 0-based on disk (internal indices are 1-based).

std::string transcript_to_jsonl(const Transcript &t);
Transcript transcript_from_jsonl(const std::string &text);

std::string alignment_to_jsonl(const AlignmentMap &m);
AlignmentMap alignment_from_jsonl(const std::string &text);

std::string dilation_to_json(const DilationConfig &d);
DilationConfig dilation_from_json(const std::string &text);

std::string labels_to_json(const LabelSequence &l);
LabelSequence labels_from_json(const std::string &text);

// ─── Small file helpers ──────────────────────────────────────────────────────

std::string read_text_file(const std::string &path);
void write_text_file(const std::string &path, const std::string &content);

} // namespace sst
