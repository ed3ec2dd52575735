#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sst/metrics.hpp"

using namespace sst;

namespace {

// Literal transcription of the lagging formula, kept deliberately naive: find
// the cutoff by scanning, then sum term by term in long double. The module
// under test must agree on randomized instances.
long double oracle_laal(const std::vector<int64_t> &d, int64_t T,
                        int64_t n_ref) {
    size_t tau = d.size();
    for (size_t i = 0; i < d.size(); ++i)
        if (d[i] >= T) {
            tau = i + 1;
            break;
        }
    long double gamma = (long double)std::max<int64_t>((int64_t)d.size(),
                                                       n_ref);
    long double sum = 0;
    for (size_t i = 1; i <= tau; ++i)
        sum += (long double)d[i - 1] -
               (long double)(i - 1) * (long double)T / gamma;
    return sum / (long double)tau;
}

SegmentEval make_seg(std::vector<int64_t> d, int64_t T, int64_t n_ref) {
    SegmentEval s;
    s.delays_ms = std::move(d);
    s.duration_ms = T;
    s.ref_token_count = n_ref;
    return s;
}

EmissionRecord rec(char action, int64_t src, int64_t wall,
                   const std::string &text = "x") {
    EmissionRecord r;
    r.tok = 1;
    r.text = text;
    r.src_ms = src;
    r.wall_ms = wall;
    r.action = action;
    return r;
}

// Reference BLEU built on ordered maps keyed by token vectors — a different
// data layout from the implementation's joined-string hashing.
double oracle_bleu(const std::vector<std::vector<std::string>> &hyps,
                   const std::vector<std::vector<std::string>> &refs) {
    long long c = 0, r = 0;
    long long match[4] = {0, 0, 0, 0}, total[4] = {0, 0, 0, 0};
    for (size_t s = 0; s < hyps.size(); ++s) {
        c += (long long)hyps[s].size();
        r += (long long)refs[s].size();
        for (size_t n = 1; n <= 4; ++n) {
            std::map<std::vector<std::string>, long long> hc, rc;
            for (size_t i = 0; i + n <= hyps[s].size(); ++i)
                ++hc[{hyps[s].begin() + i, hyps[s].begin() + i + n}];
            for (size_t i = 0; i + n <= refs[s].size(); ++i)
                ++rc[{refs[s].begin() + i, refs[s].begin() + i + n}];
            for (const auto &[gram, count] : hc) {
                total[n - 1] += count;
                auto it = rc.find(gram);
                if (it != rc.end())
                    match[n - 1] += std::min(count, it->second);
            }
        }
    }
    if (c == 0)
        return 0;
    double logp = 0;
    for (int n = 0; n < 4; ++n) {
        if (total[n] == 0 || match[n] == 0)
            return 0;
        logp += std::log((double)match[n] / (double)total[n]);
    }
    double bp = c > r ? 1.0 : std::exp(1.0 - (double)r / (double)c);
    return 100.0 * bp * std::exp(logp / 4.0);
}

std::string join_ws(const std::vector<std::string> &toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i)
            out += ' ';
        out += toks[i];
    }
    return out;
}

} // namespace

// ─── LAAL ────────────────────────────────────────────────────────────────────

TEST_CASE("single token emitted at the end lags by the full duration") {
    CHECK(laal(make_seg({1000}, 1000, 1)) == doctest::Approx(1000.0));
}

TEST_CASE("two-token example") {
    // d = [1000, 2000], T = 2000, two reference tokens:
    // (1000 − 0) + (2000 − 1000) over τ = 2.
    CHECK(laal(make_seg({1000, 2000}, 2000, 2)) == doctest::Approx(1000.0));
}

TEST_CASE("instantaneous translation lags by one oracle step") {
    // d_i = i·T/n with |y| = |y*| = n collapses every term to T/n.
    for (int64_t n : {1, 2, 5, 10, 25}) {
        const int64_t T = n * 120;
        std::vector<int64_t> d;
        for (int64_t i = 1; i <= n; ++i)
            d.push_back(i * 120);
        CHECK(laal(make_seg(d, T, n)) ==
              doctest::Approx((double)T / (double)n).epsilon(1e-9));
    }
}

TEST_CASE("cutoff stops the sum at the first delay reaching the duration") {
    // Everything after the first full-duration delay is ignored.
    double a = laal(make_seg({500, 2000, 2000, 2000}, 2000, 4));
    double b = laal(make_seg({500, 2000}, 2000, 4));
    CHECK(a == doctest::Approx(b));
}

TEST_CASE("longer reference stretches the oracle and raises the lag") {
    double short_ref = laal(make_seg({400, 800, 1200}, 1200, 3));
    double long_ref = laal(make_seg({400, 800, 1200}, 1200, 6));
    CHECK(long_ref > short_ref);
}

TEST_CASE("lagging matches the literal formula on randomized instances") {
    Rng rng(20240817);
    for (int trial = 0; trial < 500; ++trial) {
        int64_t T = 200 + rng.uniform_int(0, 30) * 100;
        int n = 1 + (int)rng.uniform_int(0, 39);
        std::vector<int64_t> d(n);
        for (auto &v : d)
            v = rng.uniform_int(0, T);
        std::sort(d.begin(), d.end());
        int64_t n_ref = 1 + rng.uniform_int(0, 59);
        double got = laal(make_seg(d, T, n_ref));
        long double want = oracle_laal(d, T, n_ref);
        CHECK(std::abs(got - (double)want) < 1e-6);
    }
}

TEST_CASE("lagging rejects malformed segments") {
    CHECK_THROWS_AS(laal(make_seg({}, 1000, 1)), Error);
    CHECK_THROWS_AS(laal(make_seg({100}, 0, 1)), Error);
    CHECK_THROWS_AS(laal(make_seg({500, 400}, 1000, 1)), Error);
    CHECK_THROWS_AS(laal(make_seg({1200}, 1000, 1)), Error);
    CHECK_THROWS_AS(laal(make_seg({-5}, 1000, 1)), Error);
}

// ─── Computationally-aware variant ───────────────────────────────────────────

TEST_CASE("virtual clock equal to the source clock reproduces the ideal lag") {
    SegmentEval seg = make_seg({300, 700, 1000}, 1000, 3);
    std::vector<int64_t> wall = {300, 700, 1000};
    CHECK(ca_laal(seg, wall, 0) == doctest::Approx(laal(seg)));
}

TEST_CASE("constant compute overhead shifts the lag by exactly that much") {
    SegmentEval seg = make_seg({300, 700, 900}, 1000, 3);
    std::vector<int64_t> wall = {400, 800, 1000};
    CHECK(ca_laal(seg, wall, 0) == doctest::Approx(laal(seg) + 100.0));
}

TEST_CASE("wall clock never lowers the lag below the ideal") {
    SegmentEval seg = make_seg({300, 700, 900}, 1000, 3);
    std::vector<int64_t> wall = {0, 1, 2}; // absurdly fast
    CHECK(ca_laal(seg, wall, 0) == doctest::Approx(laal(seg)));
}

TEST_CASE("cutoff and normalizer come from the ideal delays") {
    // The second ideal delay hits T, so the third wall time must not matter.
    SegmentEval seg = make_seg({500, 1000, 1000}, 1000, 3);
    std::vector<int64_t> slow = {600, 1100, 99999};
    std::vector<int64_t> fast = {600, 1100, 1101};
    CHECK(ca_laal(seg, slow, 0) == doctest::Approx(ca_laal(seg, fast, 0)));
}

TEST_CASE("out-of-order wall timestamps are rejected") {
    SegmentEval seg = make_seg({300, 700}, 1000, 2);
    std::vector<int64_t> wall = {500, 400};
    CHECK_THROWS_AS(ca_laal(seg, wall, 0), Error);
    CHECK_THROWS_AS(ca_laal(seg, {500}, 0), Error); // count mismatch
}

// ─── Emission logs ───────────────────────────────────────────────────────────

TEST_CASE("emission log round-trips through JSONL") {
    EmissionLog log;
    log.records = {rec('R', 80, 5, ""), rec('W', 160, 12, "a"),
                   rec('W', 240, 19, "b")};
    EmissionLog back = emission_log_from_jsonl(emission_log_to_jsonl(log));
    CHECK(back == log);
}

TEST_CASE("emission log preserves arbitrary text bytes") {
    // Byte-level tokens can split a UTF-8 character; the serialized form
    // must carry any byte value and restore it exactly.
    EmissionLog log;
    std::string bytes;
    for (int b = 0; b < 256; ++b)
        if (b != 0) bytes.push_back((char)b);
    log.records = {rec('W', 80, 5, bytes), rec('W', 160, 9, "\xCA\xFE")};
    EmissionLog back = emission_log_from_jsonl(emission_log_to_jsonl(log));
    CHECK(back == log);
}

TEST_CASE("log validation enforces clock discipline") {
    EmissionLog bad_src;
    bad_src.records = {rec('W', 200, 5), rec('W', 100, 9)};
    CHECK_THROWS_AS(validate_log(bad_src), Error);

    EmissionLog bad_wall;
    bad_wall.records = {rec('W', 100, 9), rec('W', 200, 9)};
    CHECK_THROWS_AS(validate_log(bad_wall), Error);

    EmissionLog bad_action;
    bad_action.records = {rec('X', 100, 9)};
    CHECK_THROWS_AS(validate_log(bad_action), Error);
}

TEST_CASE("segment extraction keeps only content tokens and clamps delays") {
    EmissionLog log;
    log.records = {rec('R', 80, 1, ""), rec('W', 160, 2, "a"),
                   rec('R', 240, 3, ""), rec('W', 1200, 4, "b")};
    SegmentEval seg = segment_from_log(log, 1000, 2);
    CHECK(seg.delays_ms == std::vector<int64_t>{160, 1000});
    CHECK(seg.ref_token_count == 2);
}

TEST_CASE("word-level aggregation keeps one delay per word") {
    EmissionLog log;
    log.records = {rec('W', 100, 1, "he"),  rec('W', 200, 2, "llo"),
                   rec('W', 300, 3, " "),   rec('W', 400, 4, "wor"),
                   rec('W', 500, 5, "ld"),  rec('W', 600, 6, " there")};
    SegmentEval seg = segment_from_log(log, 1000, 3, /*word_level=*/true);
    // "hello" finishes at 200, "world" at 500, " there" opens fresh at 600.
    CHECK(seg.delays_ms == std::vector<int64_t>{200, 500, 600});
}

// ─── StreamLAAL-lite ─────────────────────────────────────────────────────────

TEST_CASE("a single covering segment reduces to plain lagging") {
    EmissionLog log;
    log.records = {rec('W', 300, 1, "a"), rec('W', 700, 2, "b"),
                   rec('W', 1000, 3, "c")};
    std::vector<RefSegment> refs = {{0, 1000, "abc"}};
    ByteTokenizer tok;
    double direct = laal(make_seg({300, 700, 1000}, 1000, 3));
    CHECK(stream_laal_lite(log, refs, tok) == doctest::Approx(direct));
}

TEST_CASE("symmetric halves average to the per-segment value") {
    EmissionLog log;
    log.records = {rec('W', 300, 1, "a"), rec('W', 700, 2, "b"),
                   rec('W', 1300, 3, "c"), rec('W', 1700, 4, "d")};
    std::vector<RefSegment> refs = {{0, 1000, "ab"}, {1000, 2000, "cd"}};
    ByteTokenizer tok;
    double per = laal(make_seg({300, 700}, 1000, 2));
    CHECK(stream_laal_lite(log, refs, tok) == doctest::Approx(per));
}

TEST_CASE("longer segments carry more weight") {
    // Segment 1 (3000 ms) lags hard; segment 2 (1000 ms) is instant.
    EmissionLog log;
    log.records = {rec('W', 3000, 1, "a"), rec('W', 3100, 2, "b")};
    std::vector<RefSegment> refs = {{0, 3000, "a"}, {3000, 4000, "b"}};
    ByteTokenizer tok;
    double v1 = laal(make_seg({3000}, 3000, 1));
    double v2 = laal(make_seg({100}, 1000, 1));
    double want = (v1 * 3000 + v2 * 1000) / 4000;
    CHECK(stream_laal_lite(log, refs, tok) == doctest::Approx(want));
}

TEST_CASE("a silent segment with expected content scores its full duration") {
    EmissionLog log;
    log.records = {rec('W', 500, 1, "a")};
    std::vector<RefSegment> refs = {{0, 1000, "a"}, {1000, 3000, "bc"}};
    ByteTokenizer tok;
    double v1 = laal(make_seg({500}, 1000, 1));
    double want = (v1 * 1000 + 2000.0 * 2000) / 3000;
    CHECK(stream_laal_lite(log, refs, tok) == doctest::Approx(want));
}

TEST_CASE("segments empty on both sides are skipped") {
    EmissionLog log;
    log.records = {rec('W', 500, 1, "a")};
    std::vector<RefSegment> refs = {{0, 1000, "a"}, {1000, 3000, ""}};
    ByteTokenizer tok;
    double v1 = laal(make_seg({500}, 1000, 1));
    CHECK(stream_laal_lite(log, refs, tok) == doctest::Approx(v1));
}

TEST_CASE("uncovered hypothesis tokens are an error") {
    EmissionLog log;
    log.records = {rec('W', 2500, 1, "a")};
    std::vector<RefSegment> refs = {{0, 1000, "a"}, {1000, 2000, "b"}};
    ByteTokenizer tok;
    CHECK_THROWS_AS(stream_laal_lite(log, refs, tok), Error);
}

TEST_CASE("gapped or empty reference segments are rejected") {
    EmissionLog log;
    log.records = {rec('W', 500, 1, "a")};
    ByteTokenizer tok;
    std::vector<RefSegment> gap = {{0, 1000, "a"}, {1500, 2000, "b"}};
    CHECK_THROWS_AS(stream_laal_lite(log, gap, tok), Error);
    CHECK_THROWS_AS(stream_laal_lite(log, {}, tok), Error);

    EmissionLog silent;
    silent.records = {rec('R', 500, 1, "")};
    std::vector<RefSegment> refs = {{0, 1000, "a"}};
    CHECK_THROWS_AS(stream_laal_lite(silent, refs, tok), Error);
}

TEST_CASE("stream lag with the computational clock stays above the ideal") {
    Rng rng(904511);
    for (int trial = 0; trial < 50; ++trial) {
        EmissionLog log;
        int64_t src = 0, wall = 0;
        int n = 4 + (int)rng.uniform_int(0, 11);
        for (int i = 0; i < n; ++i) {
            src += rng.uniform_int(50, 300);
            wall += rng.uniform_int(60, 400);
            log.records.push_back(rec('W', src, wall, "a"));
        }
        int64_t mid = src / 2 + 1, end = src + 100;
        std::vector<RefSegment> refs = {{0, mid, "abcd"},
                                        {mid, end, "efgh"}};
        ByteTokenizer tok;
        double ideal = stream_laal_lite(log, refs, tok);
        double aware = stream_laal_lite(log, refs, tok, /*ca=*/true, 0);
        CHECK(aware >= ideal - 1e-9);
    }
}

TEST_CASE("reference segments round-trip through JSONL") {
    std::vector<RefSegment> segs = {{0, 1200, "hello there"},
                                    {1200, 2400, "再び"}};
    auto back = ref_segments_from_jsonl(ref_segments_to_jsonl(segs));
    CHECK(back == segs);
}

// ─── RTF ─────────────────────────────────────────────────────────────────────

TEST_CASE("real-time factor is processing over audio") {
    CHECK(rtf(5000, 10000) == doctest::Approx(0.5));
    CHECK(rtf(0, 1000) == doctest::Approx(0.0));
    CHECK_THROWS_AS(rtf(1000, 0), Error);
    CHECK_THROWS_AS(rtf(-1, 1000), Error);
}

// ─── BLEU ────────────────────────────────────────────────────────────────────

TEST_CASE("identical corpora score exactly 100") {
    std::vector<std::string> text = {"the cat sat on the mat",
                                     "a stitch in time saves nine"};
    CHECK(bleu(text, text) == 100.0);
}

TEST_CASE("disjoint corpora score zero") {
    CHECK(bleu({"aa bb cc dd"}, {"ee ff gg hh"}) == 0.0);
}

TEST_CASE("a missing higher-order match zeroes the unsmoothed score") {
    // Shared unigrams but no shared 4-gram.
    double plain = bleu({"a b c x"}, {"a b c d"});
    CHECK(plain == 0.0);
    double smoothed = bleu({"a b c x"}, {"a b c d"}, "ws", true);
    CHECK(smoothed > 0.0);
    CHECK(smoothed < 100.0);
}

TEST_CASE("brevity penalty punishes short hypotheses") {
    double full = bleu({"a b c d e f"}, {"a b c d e f"});
    double cut = bleu({"a b c d"}, {"a b c d e f"});
    CHECK(full == 100.0);
    CHECK(cut < full);
    CHECK(cut == doctest::Approx(100.0 * std::exp(1.0 - 6.0 / 4.0)));
}

TEST_CASE("corpus score is invariant to sentence order") {
    std::vector<std::string> hyp = {"the cat sat", "dogs bark loudly",
                                    "rain falls here today"};
    std::vector<std::string> ref = {"the cat sat down", "dogs bark loud",
                                    "rain fell here today"};
    double forward = bleu(hyp, ref);
    std::vector<std::string> hyp_r(hyp.rbegin(), hyp.rend());
    std::vector<std::string> ref_r(ref.rbegin(), ref.rend());
    CHECK(bleu(hyp_r, ref_r) == doctest::Approx(forward));
}

TEST_CASE("character tokenization scores unspaced text") {
    // No whitespace tokens at all: ws mode sees one giant token per side,
    // char mode sees per-character overlap.
    double ws = bleu({"あいうえおかきくけこ"}, {"あいうえおかきくけこ"}, "ws");
    double ch = bleu({"あいうえおかきくけこ"}, {"あいうえおかきくけこ"}, "char");
    CHECK(ws == 0.0); // single token, no 4-grams
    CHECK(ch == 100.0);
    double part = bleu({"あいうえおかき"}, {"あいうえおかきくけこ"}, "char");
    CHECK(part > 0.0);
    CHECK(part < 100.0);
}

TEST_CASE("quality scoring rejects malformed corpora") {
    CHECK_THROWS_AS(bleu({}, {}), Error);
    CHECK_THROWS_AS(bleu({"a"}, {"a", "b"}), Error);
    CHECK_THROWS_AS(bleu({"a"}, {""}), Error);
    CHECK_THROWS_AS(bleu({"a"}, {"a"}, "bytes"), Error);
}

TEST_CASE("quality score matches an independent counter on random corpora") {
    Rng rng(77130212);
    const std::vector<std::string> vocab = {"ka", "to", "mi", "su", "re",
                                            "no", "ha", "yu"};
    for (int trial = 0; trial < 200; ++trial) {
        int n_sent = 1 + (int)rng.uniform_int(0, 4);
        std::vector<std::vector<std::string>> hyps, refs;
        std::vector<std::string> hyp_text, ref_text;
        for (int s = 0; s < n_sent; ++s) {
            int hn = 1 + (int)rng.uniform_int(0, 11);
            int rn = 1 + (int)rng.uniform_int(0, 11);
            std::vector<std::string> h, r;
            for (int i = 0; i < hn; ++i)
                h.push_back(vocab[rng.uniform_int(0, vocab.size() - 1)]);
            for (int i = 0; i < rn; ++i)
                r.push_back(vocab[rng.uniform_int(0, vocab.size() - 1)]);
            hyps.push_back(h);
            refs.push_back(r);
            hyp_text.push_back(join_ws(h));
            ref_text.push_back(join_ws(r));
        }
        double got = bleu(hyp_text, ref_text);
        double want = oracle_bleu(hyps, refs);
        CHECK(std::abs(got - want) < 1e-6);
    }
}

// ─── Report ──────────────────────────────────────────────────────────────────

TEST_CASE("sweep report prints the fixed column order") {
    SweepRow a{0, 41.25, 1850.5, 1900.25, 2100, 0.72};
    SweepRow b{-2, 39.5, 1500, 1550, 1700, 0.7};
    std::string csv = report_csv({a, b});
    CHECK(csv == "bias,bleu,laal_ms,stream_laal_ms,ca_ms,rtf\n"
                 "0,41.25,1850.5,1900.25,2100,0.72\n"
                 "-2,39.5,1500,1550,1700,0.7\n");
}
