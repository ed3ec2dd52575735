#pragma once

//
// translate.hpp — sentence-by-sentence translation orchestration. Prompts
// carry a sliding context of up to 4 previous source sentences; responses
// must wrap the translation in <TRANSLATION>..</TRANSLATION> tags. The
// transport is an injectable request→response function (an HTTP POST variant
// configured from the environment is provided); failures retry with
// exponential backoff and then become gap records, never batch failures.
//

#include <functional>
#include <string>
#include <vector>

#include "sst/common.hpp"

namespace sst {

// ─── Prompting ───────────────────────────────────────────────────────────────

struct PromptRequest {
    std::string src_sentence;
    std::vector<std::string> prev_sentences; // at most 4, oldest first
    std::string src_lang = "English";
    std::string tgt_lang = "Japanese";
};

// Emits the no-context template when prev_sentences is empty, else the
// with-context template (previous sentences joined by newlines).
std::string build_prompt(const PromptRequest &req);

// Content between the first <TRANSLATION> and its closing tag, trimmed.
std::string parse_translation(const std::string &response);

// ─── Transport and orchestration ─────────────────────────────────────────────

// Returns the raw model response for a prompt; throws on transport failure.
using Transport = std::function<std::string(const std::string &prompt)>;

// Injectable so tests don't sleep.
using Sleeper = std::function<void(int64_t ms)>;

struct RetryPolicy {
    int max_tries = 5;
    int64_t base_delay_ms = 1000;
    int factor = 2;
};

struct SentenceResult {
    bool ok = false;
    std::string translation; // empty on gap
    std::string error;       // last failure reason on gap
    int attempts = 0;
};

struct DocumentTranslation {
    std::vector<SentenceResult> results; // one per input sentence
    std::string audit_jsonl;             // request/response log
    size_t n_ok = 0;
};

DocumentTranslation
translate_document(const std::vector<std::string> &sentences,
                   const std::string &src_lang, const std::string &tgt_lang,
                   const Transport &transport,
                   const RetryPolicy &retry = RetryPolicy{},
                   const Sleeper &sleeper = nullptr);

// Rule-based splitter: terminal punctuation (ASCII and CJK) ends a sentence;
// trailing closing quotes/brackets stay attached.
std::vector<std::string> split_sentences(const std::string &text);

// POST transport reading endpoint (and optional bearer token) from
// SST_TRANSLATE_ENDPOINT / SST_TRANSLATE_TOKEN. Errors at call time if the
// endpoint is missing or unreachable.
Transport http_transport_from_env();

} // namespace sst
