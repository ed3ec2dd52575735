#include "sst/align.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

namespace sst {

using nlohmann::json;

// ─── Delay model ─────────────────────────────────────────────────────────────

DelayModel DelayModel::parse(const std::string &spec) {
    auto colon = spec.find(':');
    std::string kind = spec.substr(0, colon);
    std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
    try {
        if (kind == "fixed")
            return fixed(std::stoll(args));
        if (kind == "uniform") {
            auto comma = args.find(',');
            if (comma == std::string::npos)
                fail_validation("uniform delay needs lo,hi");
            return uniform(std::stoll(args.substr(0, comma)),
                           std::stoll(args.substr(comma + 1)));
        }
    } catch (const std::logic_error &) {
        fail_validation("bad delay spec: " + spec);
    }
    fail_validation("unknown delay model: " + spec +
                    " (expected fixed:MS or uniform:LO,HI)");
}

// ─── Prompt ──────────────────────────────────────────────────────────────────

std::vector<int32_t> prompt_tokens(const std::string &lang,
                                   const std::string &task,
                                   const Vocabulary &vocab) {
    int lang_id = vocab.lang_id(lang);
    int task_id = vocab.task_id(task);
    if (task == "transcribe" && lang != "en")
        fail_validation("transcribe requires lang=en, got " + lang);
    return {(int32_t)vocab.sot, (int32_t)lang_id, (int32_t)task_id,
            (int32_t)vocab.notimestamps};
}

// ─── Core alignment pass ─────────────────────────────────────────────────────

AlignResult causal_align(const Transcript &transcript,
                         const std::vector<std::string> &target_words,
                         const AlignmentMap &alignment,
                         const DilationConfig &dilation,
                         const DelayModel &delay,
                         const Tokenizer &tokenizer,
                         const std::vector<int32_t> &prompt,
                         const Vocabulary &vocab, Rng &rng) {
    const int l = dilation.l;
    if ((int)prompt.size() >= l)
        fail_validation("prompt longer than l");
    if (alignment.links.size() != target_words.size())
        fail_validation("alignment has " +
                        std::to_string(alignment.links.size()) +
                        " links for " + std::to_string(target_words.size()) +
                        " target words");
    validate_alignment(alignment, (int)transcript.words.size());

    AlignResult out;
    out.labels.dilation = dilation;
    out.labels.prompt_len = (int)prompt.size();
    out.labels.tokens.assign(l, (int32_t)vocab.wait);
    std::copy(prompt.begin(), prompt.end(), out.labels.tokens.begin());

    int t_last = (int)prompt.size(); // 1-based index of last written position

    for (size_t j1 = 1; j1 <= target_words.size(); ++j1) {
        std::vector<int32_t> toks = tokenizer.encode(target_words[j1 - 1]);
        for (int32_t t : toks)
            if (t == vocab.wait)
                fail_validation("tokenizer produced the WAIT id for content "
                                "word '" + target_words[j1 - 1] + "'");
        if (toks.empty())
            continue;

        int t_start;
        if (alignment.aligned((int)j1)) {
            const WordSpan &src = transcript.words[alignment.source_of((int)j1) - 1];
            int64_t release_ms = src.end_ms + delay.sample(rng);
            // Integer ceiling; exact, no float rounding.
            int t_target =
                (int)((release_ms + dilation.dt_ms - 1) / dilation.dt_ms);
            t_start = std::max(t_target, t_last + 1);
            if (t_target < t_last + 1)
                out.report.collisions++;
        } else {
            t_start = t_last + 1; // unaligned: defer to the next index
        }

        for (size_t k = 0; k < toks.size(); ++k) {
            int idx = t_start + (int)k;
            if (idx < l) { // index l stays WAIT; content ends at l-1
                out.labels.tokens[idx - 1] = toks[k];
                out.report.placed++;
                t_last = idx;
            } else {
                out.report.dropped++;
            }
        }
    }
    return out;
}

double wait_fraction(const LabelSequence &labels, const Vocabulary &vocab) {
    validate_labels(labels, vocab);
    int64_t waits = 0;
    for (int p = labels.prompt_len + 1; p <= labels.dilation.l; ++p)
        if (labels.at(p) == vocab.wait)
            ++waits;
    return (double)waits / (double)(labels.dilation.l - labels.prompt_len);
}

// ─── Window sampling ─────────────────────────────────────────────────────────

static TrainingWindow cut_window(const AlignedDocument &doc, int64_t w_start,
                                 int64_t w_len) {
    TrainingWindow win;
    win.window_start_ms = w_start;
    win.transcript.audio_duration_ms =
        std::min(w_len, doc.transcript.audio_duration_ms - w_start);

    // Source words fully inside the window, re-based to window-local time.
    std::vector<int32_t> new_index(doc.transcript.words.size() + 1, 0);
    for (size_t i = 0; i < doc.transcript.words.size(); ++i) {
        const WordSpan &w = doc.transcript.words[i];
        if (w.start_ms >= w_start && w.end_ms <= w_start + w_len) {
            win.transcript.words.push_back(
                {w.text, w.start_ms - w_start, w.end_ms - w_start});
            new_index[i + 1] = (int32_t)win.transcript.words.size();
        }
    }

    // Target words ride with their anchor source word; an unaligned target's
    // anchor is its closest preceding aligned neighbor.
    int32_t anchor = AlignmentMap::kUnaligned;
    for (size_t j = 0; j < doc.target_words.size(); ++j) {
        int32_t src = doc.alignment.links[j];
        if (src != AlignmentMap::kUnaligned)
            anchor = src;
        if (anchor == AlignmentMap::kUnaligned)
            continue; // leading unaligned words have nowhere to go
        if (new_index[anchor] == 0)
            continue; // anchor outside the window
        win.target_words.push_back(doc.target_words[j]);
        win.alignment.links.push_back(src == AlignmentMap::kUnaligned
                                          ? AlignmentMap::kUnaligned
                                          : new_index[src]);
    }
    return win;
}

TrainingWindow pad_or_sample_window(const AlignedDocument &doc,
                                    const DilationConfig &dilation,
                                    const DelayModel &delay,
                                    const Tokenizer &tokenizer,
                                    const std::vector<int32_t> &prompt,
                                    const Vocabulary &vocab, Rng &rng,
                                    int max_redraws) {
    constexpr int64_t kWindowMs = 30000;
    if (doc.alignment.links.size() != doc.target_words.size())
        fail_validation("document alignment/target length mismatch");
    validate_alignment(doc.alignment, (int)doc.transcript.words.size());

    const int64_t dur = doc.transcript.audio_duration_ms;
    for (int attempt = 0; attempt < max_redraws; ++attempt) {
        int64_t w_start =
            dur <= kWindowMs ? 0 : rng.uniform_int(0, dur - kWindowMs);
        TrainingWindow win = cut_window(doc, w_start, kWindowMs);
        if ((int)win.transcript.words.size() < 4)
            continue; // resample until there are 4 or more words
        AlignResult r =
            causal_align(win.transcript, win.target_words, win.alignment,
                         dilation, delay, tokenizer, prompt, vocab, rng);
        win.labels = std::move(r.labels);
        win.report = r.report;
        return win;
    }
    throw Error(Status::not_applicable,
                "no qualifying 30 s window with >= 4 words after " +
                    std::to_string(max_redraws) + " redraws");
}

// ─── Fallback aligner and segmentation ───────────────────────────────────────

AlignmentMap fallback_align(int n_source_words, int n_target_words) {
    if (n_source_words < 1 && n_target_words > 0)
        fail_validation("fallback aligner needs at least one source word");
    AlignmentMap m;
    m.links.reserve(n_target_words);
    for (int j = 1; j <= n_target_words; ++j)
        m.links.push_back(
            (int32_t)((int64_t)(j - 1) * n_source_words / n_target_words + 1));
    return m;
}

std::vector<std::string> segment_words(const std::string &text,
                                       const std::string &lang) {
    std::vector<std::string> words;
    if (lang != "ja") {
        std::istringstream in(text);
        std::string w;
        while (in >> w)
            words.push_back(w);
        return words;
    }
    // Japanese: split into UTF-8 character bigrams, ignoring ASCII whitespace.
    std::vector<std::string> chars;
    for (size_t i = 0; i < text.size();) {
        unsigned char c = text[i];
        size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3
                     : (c >> 3) == 0x1e            ? 4
                                                   : 1;
        len = std::min(len, text.size() - i);
        std::string ch = text.substr(i, len);
        i += len;
        if (ch == " " || ch == "\t" || ch == "\n" || ch == "\r")
            continue;
        chars.push_back(ch);
    }
    for (size_t i = 0; i < chars.size(); i += 2) {
        std::string w = chars[i];
        if (i + 1 < chars.size())
            w += chars[i + 1];
        words.push_back(w);
    }
    return words;
}

// ─── Shard records ───────────────────────────────────────────────────────────

std::vector<uint8_t> default_loss_mask(int l, int prompt_len) {
    std::vector<uint8_t> mask(l, 1);
    for (int p = 0; p < prompt_len; ++p)
        mask[p] = 0;
    return mask;
}

std::string shard_record_to_json(const ShardRecord &r) {
    json j{{"labels", r.labels},
           {"loss_mask", r.loss_mask},
           {"lang", r.lang},
           {"task", r.task},
           {"D", r.D},
           {"report",
            {{"placed", r.report.placed},
             {"dropped", r.report.dropped},
             {"collisions", r.report.collisions}}}};
    if (r.sft) {
        j["sft"] = true;
        j["pivot"] = r.pivot;
        j["delta_s"] = r.delta_s;
    }
    return j.dump();
}

ShardRecord shard_record_from_json(const std::string &line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception &e) {
        fail_validation(std::string("bad shard record: ") + e.what());
    }
    ShardRecord r;
    r.labels = j.at("labels").get<std::vector<int32_t>>();
    r.loss_mask = j.at("loss_mask").get<std::vector<uint8_t>>();
    r.lang = j.at("lang").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.D = j.at("D").get<int>();
    const json &rep = j.at("report");
    r.report.placed = rep.at("placed").get<int64_t>();
    r.report.dropped = rep.at("dropped").get<int64_t>();
    r.report.collisions = rep.at("collisions").get<int64_t>();
    if (j.value("sft", false)) {
        r.sft = true;
        r.pivot = j.at("pivot").get<int>();
        r.delta_s = j.at("delta_s").get<int>();
    }
    if (r.labels.size() != r.loss_mask.size())
        fail_validation("shard record: labels/loss_mask length mismatch");
    return r;
}

std::vector<ShardRecord> shards_from_jsonl(const std::string &text) {
    std::vector<ShardRecord> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty())
            out.push_back(shard_record_from_json(line));
    return out;
}

std::string shards_to_jsonl(const std::vector<ShardRecord> &records) {
    std::ostringstream out;
    for (const ShardRecord &r : records)
        out << shard_record_to_json(r) << "\n";
    return out.str();
}

} // namespace sst
