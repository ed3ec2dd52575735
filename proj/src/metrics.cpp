#include "sst/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace sst {

using nlohmann::json;

namespace {

// Token text is raw bytes — a byte-level tokenizer can split a UTF-8
// character across tokens — but JSON strings must be valid Unicode. Each
// byte maps to the code point of its value on write and back on read, which
// round-trips any byte sequence.
std::string bytes_to_codepoints(const std::string &bytes) {
    std::string out;
    out.reserve(bytes.size());
    for (unsigned char b : bytes) {
        if (b < 0x80) {
            out.push_back((char)b);
        } else {
            out.push_back((char)(0xC0 | (b >> 6)));
            out.push_back((char)(0x80 | (b & 0x3F)));
        }
    }
    return out;
}

std::string codepoints_to_bytes(const std::string &utf8) {
    std::string out;
    out.reserve(utf8.size());
    for (size_t i = 0; i < utf8.size();) {
        unsigned char c = utf8[i];
        if (c < 0x80) {
            out.push_back((char)c);
            i += 1;
        } else if ((c == 0xC2 || c == 0xC3) && i + 1 < utf8.size()) {
            unsigned char c2 = utf8[i + 1];
            out.push_back((char)(((c & 0x03) << 6) | (c2 & 0x3F)));
            i += 2;
        } else {
            fail_validation("emission text code point beyond U+00FF");
        }
    }
    return out;
}

} // namespace

// ─── Emission log ────────────────────────────────────────────────────────────

std::vector<EmissionRecord> EmissionLog::writes() const {
    std::vector<EmissionRecord> out;
    for (const EmissionRecord &r : records)
        if (r.action == 'W')
            out.push_back(r);
    return out;
}

void validate_log(const EmissionLog &log) {
    for (size_t i = 0; i < log.records.size(); ++i) {
        const EmissionRecord &r = log.records[i];
        const std::string where = " at record " + std::to_string(i + 1);
        if (r.action != 'W' && r.action != 'R')
            fail_validation("unknown action" + where);
        if (r.src_ms < 0)
            fail_validation("negative source time" + where);
        if (i > 0) {
            if (r.src_ms < log.records[i - 1].src_ms)
                fail_validation("source times go backwards" + where);
            if (r.wall_ms <= log.records[i - 1].wall_ms)
                fail_validation("wall clock not strictly increasing" + where);
        }
    }
}

std::string emission_log_to_jsonl(const EmissionLog &log) {
    std::ostringstream out;
    for (const EmissionRecord &r : log.records)
        out << json{{"tok", r.tok},
                    {"text", bytes_to_codepoints(r.text)},
                    {"src_ms", r.src_ms},
                    {"wall_ms", r.wall_ms},
                    {"action", std::string(1, r.action)}}
                   .dump()
            << "\n";
    return out.str();
}

EmissionLog emission_log_from_jsonl(const std::string &text) {
    EmissionLog log;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception &e) {
            fail_validation("emission line " + std::to_string(lineno) + ": " +
                            e.what());
        }
        EmissionRecord r;
        r.tok = j.at("tok").get<int32_t>();
        r.text = codepoints_to_bytes(j.at("text").get<std::string>());
        r.src_ms = j.at("src_ms").get<int64_t>();
        r.wall_ms = j.at("wall_ms").get<int64_t>();
        std::string action = j.at("action").get<std::string>();
        if (action.size() != 1)
            fail_validation("emission line " + std::to_string(lineno) +
                            ": action must be a single character");
        r.action = action[0];
        log.records.push_back(std::move(r));
    }
    validate_log(log);
    return log;
}

// ─── LAAL ────────────────────────────────────────────────────────────────────

static void check_segment(const SegmentEval &seg) {
    if (seg.delays_ms.empty())
        fail_validation("no delays to score");
    if (seg.duration_ms <= 0)
        fail_validation("segment duration must be positive");
    if (seg.ref_token_count < 0)
        fail_validation("negative reference token count");
    for (size_t i = 0; i < seg.delays_ms.size(); ++i) {
        if (seg.delays_ms[i] < 0 || seg.delays_ms[i] > seg.duration_ms)
            fail_validation("delay outside [0, duration] at index " +
                            std::to_string(i + 1));
        if (i > 0 && seg.delays_ms[i] < seg.delays_ms[i - 1])
            fail_validation("delays go backwards at index " +
                            std::to_string(i + 1));
    }
}

// τ: first delay that has consumed the whole source, else the last index.
static size_t cutoff_index(const SegmentEval &seg) {
    for (size_t i = 0; i < seg.delays_ms.size(); ++i)
        if (seg.delays_ms[i] >= seg.duration_ms)
            return i + 1;
    return seg.delays_ms.size();
}

static double laal_core(const std::vector<double> &delays, double T,
                        double gamma, size_t tau) {
    double sum = 0;
    for (size_t i = 0; i < tau; ++i)
        sum += delays[i] - (double)i * T / gamma;
    return sum / (double)tau;
}

double laal(const SegmentEval &seg) {
    check_segment(seg);
    const double gamma =
        (double)std::max<int64_t>((int64_t)seg.delays_ms.size(),
                                  seg.ref_token_count);
    std::vector<double> d(seg.delays_ms.begin(), seg.delays_ms.end());
    return laal_core(d, (double)seg.duration_ms, gamma, cutoff_index(seg));
}

double ca_laal(const SegmentEval &seg, const std::vector<int64_t> &wall_ms,
               int64_t wall_origin_ms) {
    check_segment(seg);
    if (wall_ms.size() != seg.delays_ms.size())
        fail_validation("wall clock count does not match delay count");
    for (size_t i = 1; i < wall_ms.size(); ++i)
        if (wall_ms[i] < wall_ms[i - 1])
            fail_validation("out-of-order wall timestamps at index " +
                            std::to_string(i + 1));
    // Elapsed wall time can only add to the ideal delay, never subtract.
    std::vector<double> d(seg.delays_ms.size());
    for (size_t i = 0; i < d.size(); ++i)
        d[i] = std::max((double)(wall_ms[i] - wall_origin_ms),
                        (double)seg.delays_ms[i]);
    const double gamma =
        (double)std::max<int64_t>((int64_t)seg.delays_ms.size(),
                                  seg.ref_token_count);
    return laal_core(d, (double)seg.duration_ms, gamma, cutoff_index(seg));
}

// ─── Segment construction ────────────────────────────────────────────────────

SegmentEval segment_from_log(const EmissionLog &log, int64_t duration_ms,
                             int64_t ref_token_count, bool word_level) {
    validate_log(log);
    if (duration_ms <= 0)
        fail_validation("segment duration must be positive");
    SegmentEval seg;
    seg.duration_ms = duration_ms;
    seg.ref_token_count = ref_token_count;
    bool in_word = false;
    for (const EmissionRecord &r : log.records) {
        if (r.action != 'W')
            continue;
        int64_t d = std::clamp<int64_t>(r.src_ms, 0, duration_ms);
        bool all_space = !r.text.empty() &&
                         r.text.find_first_not_of(" \t\n\r") ==
                             std::string::npos;
        bool starts_space = !r.text.empty() && std::isspace(
                                                   (unsigned char)r.text[0]);
        if (!word_level) {
            seg.delays_ms.push_back(d);
        } else if (all_space) {
            in_word = false; // pure delimiter: closes the word, not counted
        } else if (!in_word || starts_space) {
            seg.delays_ms.push_back(d); // first subword opens a new word
            in_word = true;
        } else {
            seg.delays_ms.back() = d; // later subwords keep the last delay
        }
    }
    return seg;
}

// ─── Long-form latency ───────────────────────────────────────────────────────

std::string ref_segments_to_jsonl(const std::vector<RefSegment> &segs) {
    std::ostringstream out;
    for (const RefSegment &s : segs)
        out << json{{"s", s.start_ms}, {"e", s.end_ms}, {"text", s.text}}
                   .dump()
            << "\n";
    return out.str();
}

std::vector<RefSegment> ref_segments_from_jsonl(const std::string &text) {
    std::vector<RefSegment> segs;
    std::istringstream in(text);
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty())
            continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception &e) {
            fail_validation("segment line " + std::to_string(lineno) + ": " +
                            e.what());
        }
        RefSegment s;
        s.start_ms = j.at("s").get<int64_t>();
        s.end_ms = j.at("e").get<int64_t>();
        s.text = j.at("text").get<std::string>();
        segs.push_back(std::move(s));
    }
    return segs;
}

static void check_ref_segments(const std::vector<RefSegment> &refs) {
    if (refs.empty())
        fail_validation("no reference segments");
    for (size_t k = 0; k < refs.size(); ++k) {
        const std::string where = " at segment " + std::to_string(k + 1);
        if (refs[k].start_ms >= refs[k].end_ms)
            fail_validation("segment start must precede end" + where);
        if (k > 0 && refs[k].start_ms != refs[k - 1].end_ms)
            fail_validation("reference segments must tile the timeline" +
                            where);
    }
}

double stream_laal_lite(const EmissionLog &log,
                        const std::vector<RefSegment> &refs,
                        const Tokenizer &tokenizer, bool ca,
                        int64_t wall_origin_ms) {
    validate_log(log);
    check_ref_segments(refs);
    std::vector<EmissionRecord> hyp = log.writes();
    if (hyp.empty())
        fail_validation("emission log has no content tokens");

    // Assign each content token to the segment covering its source time.
    // Intervals are right-closed: a token emitted exactly at a boundary has
    // consumed all of the earlier segment and none of the later one, so it
    // belongs to the earlier segment at full lag.
    std::vector<std::vector<EmissionRecord>> by_seg(refs.size());
    for (const EmissionRecord &r : hyp) {
        size_t k = refs.size();
        for (size_t i = 0; i < refs.size(); ++i) {
            bool at_start = r.src_ms == refs[i].start_ms && i == 0;
            if ((r.src_ms > refs[i].start_ms || at_start) &&
                r.src_ms <= refs[i].end_ms) {
                k = i;
                break;
            }
        }
        if (k == refs.size())
            fail_validation("hypothesis token at " + std::to_string(r.src_ms) +
                            " ms not covered by any reference segment");
        by_seg[k].push_back(r);
    }

    double weighted = 0, weight = 0;
    for (size_t k = 0; k < refs.size(); ++k) {
        const int64_t dur = refs[k].end_ms - refs[k].start_ms;
        const int64_t n_ref =
            (int64_t)tokenizer.encode(refs[k].text).size();
        double value;
        if (by_seg[k].empty()) {
            if (n_ref == 0)
                continue; // nothing expected, nothing produced
            // Content never surfaced before the segment ended: full lag.
            value = (double)dur;
        } else {
            SegmentEval seg;
            seg.duration_ms = dur;
            seg.ref_token_count = n_ref;
            std::vector<int64_t> walls;
            for (const EmissionRecord &r : by_seg[k]) {
                seg.delays_ms.push_back(
                    std::clamp<int64_t>(r.src_ms - refs[k].start_ms, 0, dur));
                walls.push_back(r.wall_ms);
            }
            value = ca ? ca_laal(seg, walls,
                                 wall_origin_ms + refs[k].start_ms)
                       : laal(seg);
        }
        weighted += value * (double)dur;
        weight += (double)dur;
    }
    if (weight == 0)
        fail_validation("no scorable segments");
    return weighted / weight;
}

// ─── RTF ─────────────────────────────────────────────────────────────────────

double rtf(double processing_ms, double audio_ms) {
    if (audio_ms <= 0)
        fail_validation("audio duration must be positive");
    if (processing_ms < 0)
        fail_validation("negative processing time");
    return processing_ms / audio_ms;
}

// ─── BLEU ────────────────────────────────────────────────────────────────────

static std::vector<std::string> ws_tokens(const std::string &text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok)
        out.push_back(tok);
    return out;
}

static std::vector<std::string> char_tokens(const std::string &text) {
    std::vector<std::string> out;
    size_t i = 0;
    while (i < text.size()) {
        unsigned char c = (unsigned char)text[i];
        size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3
                                                          : 4;
        len = std::min(len, text.size() - i);
        std::string ch = text.substr(i, len);
        i += len;
        if (ch.find_first_not_of(" \t\n\r") == std::string::npos)
            continue;
        out.push_back(ch);
    }
    return out;
}

static std::unordered_map<std::string, int64_t>
ngram_counts(const std::vector<std::string> &toks, size_t n) {
    std::unordered_map<std::string, int64_t> counts;
    if (toks.size() < n)
        return counts;
    for (size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key;
        for (size_t j = 0; j < n; ++j) {
            key += toks[i + j];
            key += '\x1f';
        }
        ++counts[key];
    }
    return counts;
}

double bleu(const std::vector<std::string> &hypotheses,
            const std::vector<std::string> &references,
            const std::string &tokenization_mode, bool smooth) {
    if (hypotheses.empty())
        fail_validation("empty corpus");
    if (hypotheses.size() != references.size())
        fail_validation("hypothesis/reference count mismatch");
    bool char_mode;
    if (tokenization_mode == "ws")
        char_mode = false;
    else if (tokenization_mode == "char")
        char_mode = true;
    else
        fail_validation("unknown tokenization mode: " + tokenization_mode);

    int64_t hyp_len = 0, ref_len = 0;
    int64_t matches[4] = {0, 0, 0, 0}, totals[4] = {0, 0, 0, 0};
    for (size_t s = 0; s < hypotheses.size(); ++s) {
        std::vector<std::string> hyp = char_mode
                                           ? char_tokens(hypotheses[s])
                                           : ws_tokens(hypotheses[s]);
        std::vector<std::string> ref = char_mode
                                           ? char_tokens(references[s])
                                           : ws_tokens(references[s]);
        if (ref.empty())
            fail_validation("empty reference at sentence " +
                            std::to_string(s + 1));
        hyp_len += (int64_t)hyp.size();
        ref_len += (int64_t)ref.size();
        for (size_t n = 1; n <= 4; ++n) {
            auto hc = ngram_counts(hyp, n);
            auto rc = ngram_counts(ref, n);
            for (const auto &[gram, count] : hc) {
                auto it = rc.find(gram);
                if (it != rc.end())
                    matches[n - 1] += std::min(count, it->second);
                totals[n - 1] += count;
            }
        }
    }
    if (hyp_len == 0)
        return 0.0;

    double log_prec = 0;
    for (size_t n = 0; n < 4; ++n) {
        double p;
        if (totals[n] == 0)
            p = smooth ? 1.0 : 0.0;
        else if (matches[n] > 0)
            p = (double)matches[n] / (double)totals[n];
        else
            p = smooth ? 1.0 / (2.0 * (double)totals[n]) : 0.0;
        if (p == 0.0)
            return 0.0;
        log_prec += std::log(p);
    }
    double bp = hyp_len > ref_len
                    ? 1.0
                    : std::exp(1.0 - (double)ref_len / (double)hyp_len);
    return 100.0 * bp * std::exp(log_prec / 4.0);
}

// ─── Sweep report ────────────────────────────────────────────────────────────

static std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string report_csv(const std::vector<SweepRow> &rows) {
    std::ostringstream out;
    out << "bias,bleu,laal_ms,stream_laal_ms,ca_ms,rtf\n";
    for (const SweepRow &r : rows)
        out << fmt_num(r.bias) << ',' << fmt_num(r.bleu) << ','
            << fmt_num(r.laal_ms) << ',' << fmt_num(r.stream_laal_ms) << ','
            << fmt_num(r.ca_ms) << ',' << fmt_num(r.rtf) << "\n";
    return out.str();
}

} // namespace sst
