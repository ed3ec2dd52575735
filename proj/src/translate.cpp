#include "sst/translate.hpp"

#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace sst {

using nlohmann::json;

// ─── Prompting ───────────────────────────────────────────────────────────────

std::string build_prompt(const PromptRequest &req) {
    if (req.src_sentence.empty())
        fail_validation("empty source sentence");
    if (req.prev_sentences.size() > 4)
        fail_validation("at most 4 previous sentences allowed");

    std::ostringstream out;
    if (req.prev_sentences.empty()) {
        out << "You have an " << req.src_lang
            << " sentence. Translate the sentence into " << req.tgt_lang
            << ". Your translation must be surrounded by the <TRANSLATION> "
               "and </TRANSLATION> tags. Here's the sentence to translate:\n\n"
            << req.src_sentence;
    } else {
        out << "Here's a text snippet:\n\n";
        for (size_t i = 0; i < req.prev_sentences.size(); ++i)
            out << req.prev_sentences[i]
                << (i + 1 < req.prev_sentences.size() ? "\n" : "");
        out << "\n\nUsing the snippet above as context, translate another "
               "sentence into "
            << req.tgt_lang
            << ". Your translation must (1) be surrounded by the "
               "<TRANSLATION> and </TRANSLATION> tags and (2) contain "
               "nothing but the translation of the source sentence. Here's "
               "the sentence for you to translate:\n\n"
            << req.src_sentence;
    }
    return out.str();
}

static std::string trim(const std::string &s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos)
        return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string parse_translation(const std::string &response) {
    const std::string open = "<TRANSLATION>", close = "</TRANSLATION>";
    size_t a = response.find(open);
    if (a == std::string::npos)
        fail_validation("tags not found in response");
    size_t b = response.find(close, a + open.size());
    if (b == std::string::npos)
        fail_validation("unbalanced tags in response");
    std::string body = trim(response.substr(a + open.size(), b - a - open.size()));
    if (body.empty())
        fail_validation("empty translation body");
    return body;
}

// ─── Orchestration ───────────────────────────────────────────────────────────

DocumentTranslation
translate_document(const std::vector<std::string> &sentences,
                   const std::string &src_lang, const std::string &tgt_lang,
                   const Transport &transport, const RetryPolicy &retry,
                   const Sleeper &sleeper) {
    if (sentences.empty())
        fail_validation("no sentences to translate");
    if (!transport)
        fail_validation("transport is not callable");
    Sleeper sleep_fn = sleeper ? sleeper : [](int64_t ms) {
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    };

    DocumentTranslation doc;
    std::ostringstream audit;
    for (size_t i = 0; i < sentences.size(); ++i) {
        PromptRequest req;
        req.src_sentence = sentences[i];
        req.src_lang = src_lang;
        req.tgt_lang = tgt_lang;
        size_t ctx_begin = i >= 4 ? i - 4 : 0;
        for (size_t j = ctx_begin; j < i; ++j)
            req.prev_sentences.push_back(sentences[j]);

        std::string prompt = build_prompt(req);
        SentenceResult res;
        int64_t delay = retry.base_delay_ms;
        for (int attempt = 1; attempt <= retry.max_tries; ++attempt) {
            res.attempts = attempt;
            std::string response;
            try {
                response = transport(prompt);
                res.translation = parse_translation(response);
                res.ok = true;
            } catch (const std::exception &e) {
                res.error = e.what();
            }
            audit << json{{"sentence", (int64_t)i},
                          {"attempt", attempt},
                          {"prompt", prompt},
                          {"response", res.ok ? res.translation : ""},
                          {"ok", res.ok},
                          {"error", res.error}}
                         .dump()
                  << "\n";
            if (res.ok)
                break;
            if (attempt < retry.max_tries) {
                sleep_fn(delay);
                delay *= retry.factor;
            }
        }
        if (res.ok)
            doc.n_ok++;
        doc.results.push_back(std::move(res));
    }
    doc.audit_jsonl = audit.str();
    return doc;
}

// ─── Sentence splitting ──────────────────────────────────────────────────────

std::vector<std::string> split_sentences(const std::string &text) {
    // Terminal punctuation, ASCII and CJK; closing quotes stay attached.
    auto is_terminal = [](const std::string &ch) {
        return ch == "." || ch == "!" || ch == "?" || ch == "。" ||
               ch == "！" || ch == "？";
    };
    auto is_closer = [](const std::string &ch) {
        return ch == "\"" || ch == "'" || ch == ")" || ch == "]" ||
               ch == "”" || ch == "’" || ch == "»" || ch == "」";
    };

    // Walk UTF-8 characters.
    std::vector<std::string> chars;
    for (size_t i = 0; i < text.size();) {
        unsigned char c = text[i];
        size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3
                     : (c >> 3) == 0x1e            ? 4
                                                   : 1;
        len = std::min(len, text.size() - i);
        chars.push_back(text.substr(i, len));
        i += len;
    }

    std::vector<std::string> out;
    std::string current;
    for (size_t i = 0; i < chars.size(); ++i) {
        current += chars[i];
        if (!is_terminal(chars[i]))
            continue;
        // Group runs of terminators ("...", "?!") and trailing closers.
        while (i + 1 < chars.size() &&
               (is_terminal(chars[i + 1]) || is_closer(chars[i + 1])))
            current += chars[++i];
        std::string s = trim(current);
        if (!s.empty())
            out.push_back(s);
        current.clear();
    }
    std::string tail = trim(current);
    if (!tail.empty())
        out.push_back(tail);
    return out;
}

// ─── HTTP transport ──────────────────────────────────────────────────────────

Transport http_transport_from_env() {
    return [](const std::string &prompt) -> std::string {
        const char *endpoint = std::getenv("SST_TRANSLATE_ENDPOINT");
        if (!endpoint || !*endpoint)
            fail_runtime("SST_TRANSLATE_ENDPOINT is not set");
        std::string url(endpoint);
        auto scheme_end = url.find("://");
        auto path_begin = url.find('/', scheme_end == std::string::npos
                                            ? 0
                                            : scheme_end + 3);
        std::string host =
            path_begin == std::string::npos ? url : url.substr(0, path_begin);
        std::string path =
            path_begin == std::string::npos ? "/" : url.substr(path_begin);

        httplib::Client client(host);
        client.set_read_timeout(60, 0);
        httplib::Headers headers;
        if (const char *token = std::getenv("SST_TRANSLATE_TOKEN"))
            headers.emplace("Authorization", std::string("Bearer ") + token);
        auto res = client.Post(path, headers,
                               json{{"prompt", prompt}}.dump(),
                               "application/json");
        if (!res)
            fail_runtime("transport failure: no response from " + host);
        if (res->status != 200)
            fail_runtime("transport failure: HTTP " +
                         std::to_string(res->status));
        return res->body;
    };
}

} // namespace sst
