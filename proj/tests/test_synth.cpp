#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "sst/synth.hpp"

using namespace sst;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string &tag) {
        path = std::filesystem::temp_directory_path() /
               ("sst_synth_" + tag + "_" + std::to_string(::getpid()));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string str() const { return path.string(); }
};

std::string slurp(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool frame_is_zero(const Features &f, int64_t t) {
    for (int c = 0; c < f.dim; ++c)
        if (f.frame(t)[c] != 0.0f) return false;
    return true;
}

bool frame_matches(const Features &f, int64_t t, const Mat<float> &patterns, int g) {
    for (int c = 0; c < f.dim; ++c)
        if (f.frame(t)[c] != patterns(c, g)) return false;
    return true;
}

} // namespace

// ─── Config and sampling ─────────────────────────────────────────────────────

TEST_CASE("synth: config validation") {
    SynthConfig cfg;
    CHECK_NOTHROW(validate_synth(cfg));
    SynthConfig bad = cfg;
    bad.n_glyphs = 0;
    CHECK_THROWS_AS(validate_synth(bad), Error);
    bad = cfg;
    bad.n_glyphs = 27;
    CHECK_THROWS_AS(validate_synth(bad), Error);
    bad = cfg;
    bad.dur_hi_ms = bad.dur_lo_ms - 1;
    CHECK_THROWS_AS(validate_synth(bad), Error);
    bad = cfg;
    bad.gap_lo_ms = -1;
    CHECK_THROWS_AS(validate_synth(bad), Error);
    CHECK_THROWS_AS(rate_config(cfg, 0), Error);
}

TEST_CASE("synth: stream sampling is deterministic and well-formed") {
    SynthConfig cfg;
    Rng a(11), b(11), c(12);
    SynthStream s1 = synth_stream(cfg, 60000, a);
    SynthStream s2 = synth_stream(cfg, 60000, b);
    SynthStream s3 = synth_stream(cfg, 60000, c);
    CHECK(s1 == s2);
    CHECK(s1.words != s3.words);
    CHECK(s1.words.size() > 40); // ~63 per minute

    int64_t prev_end = 0;
    for (const GlyphWord &w : s1.words) {
        CHECK(w.glyph >= 'a');
        CHECK(w.glyph < 'a' + cfg.n_glyphs);
        int64_t gap = w.start_ms - prev_end;
        CHECK(gap >= cfg.gap_lo_ms);
        CHECK(gap <= cfg.gap_hi_ms);
        int64_t dur = w.end_ms - w.start_ms;
        CHECK(dur >= cfg.dur_lo_ms);
        CHECK(dur <= cfg.dur_hi_ms);
        prev_end = w.end_ms;
    }
    CHECK(prev_end <= 60000 - cfg.tail_silence_ms);
    CHECK(validate_transcript(stream_transcript(s1)).words.size() == s1.words.size());
}

TEST_CASE("synth: rate_config hits the requested cadence") {
    SynthConfig base;
    for (int wpm : {150, 200}) {
        SynthConfig cfg = rate_config(base, wpm);
        CHECK(cfg.dur_lo_ms <= cfg.dur_hi_ms);
        CHECK(cfg.gap_lo_ms <= cfg.gap_hi_ms);
        Rng rng(3);
        SynthStream s = synth_stream(cfg, 600000, rng); // 10 minutes
        double realized = (double)s.words.size() / 10.0;
        CHECK(realized > 0.9 * wpm);
        CHECK(realized < 1.1 * wpm);
    }
}

// ─── Patterns and rendering ──────────────────────────────────────────────────

TEST_CASE("synth: glyph patterns are fixed by the pattern seed") {
    SynthConfig cfg;
    Mat<float> p1 = glyph_patterns(cfg);
    Mat<float> p2 = glyph_patterns(cfg);
    CHECK(p1.rows() == 80);
    CHECK(p1.cols() == 10);
    CHECK(p1 == p2);
    CHECK((p1.array().abs() <= 1.0f).all());
    for (int g = 1; g < p1.cols(); ++g) CHECK(p1.col(g) != p1.col(0));

    SynthConfig other = cfg;
    other.pattern_seed = cfg.pattern_seed + 1;
    CHECK(glyph_patterns(other) != p1);
}

TEST_CASE("synth: rendering places patterns only on fully covered frames") {
    SynthConfig cfg;
    Mat<float> patterns = glyph_patterns(cfg);
    // Word [105, 275]: covered frames are exactly 11..26.
    Features f = render_features(cfg, {{"c", 105, 275}}, 1000);
    REQUIRE(f.n_frames() == 100);
    for (int64_t t = 0; t < f.n_frames(); ++t) {
        if (t >= 11 && t <= 26)
            CHECK(frame_matches(f, t, patterns, 2));
        else
            CHECK(frame_is_zero(f, t));
    }
}

TEST_CASE("synth: every rendered frame is silence or its word's pattern") {
    SynthConfig cfg;
    Rng rng(21);
    SynthStream s = synth_stream(cfg, 30000, rng);
    REQUIRE(s.words.size() >= 20);
    Features f = synth_features(cfg, s);
    Mat<float> patterns = glyph_patterns(cfg);
    REQUIRE(f.n_frames() == 3000);

    for (int64_t t = 0; t < f.n_frames(); ++t) {
        int inside = -1;
        for (const GlyphWord &w : s.words)
            if (10 * t >= w.start_ms && 10 * t + 10 <= w.end_ms) inside = w.glyph - 'a';
        if (inside >= 0)
            CHECK(frame_matches(f, t, patterns, inside));
        else
            CHECK(frame_is_zero(f, t));
    }
}

TEST_CASE("synth: rendering rejects malformed words") {
    SynthConfig cfg;
    CHECK_THROWS_AS(render_features(cfg, {{"ab", 0, 100}}, 1000), Error);
    CHECK_THROWS_AS(render_features(cfg, {{"z", 0, 100}}, 1000), Error); // beyond n_glyphs
    CHECK_THROWS_AS(render_features(cfg, {{"a", 50, 40}}, 1000), Error);
    CHECK_THROWS_AS(render_features(cfg, {{"a", 0, 2000}}, 1000), Error);
    CHECK_THROWS_AS(render_features(cfg, {{"a", 0, 300}, {"b", 200, 500}}, 1000), Error);
}

// ─── Documents and alignment ─────────────────────────────────────────────────

TEST_CASE("synth: delayed-copy document aligns word i to word i") {
    Rng rng(5);
    SynthStream s = synth_stream(SynthConfig{}, 20000, rng);
    AlignedDocument doc = delayed_copy_document(s);
    REQUIRE(doc.target_words.size() == s.words.size());
    for (size_t i = 0; i < s.words.size(); ++i) {
        CHECK(doc.target_words[i] == std::string(" ") + s.words[i].glyph);
        CHECK(doc.alignment.links[i] == (int32_t)(i + 1));
    }
    CHECK(transcript_stream(doc.transcript) == s);
}

TEST_CASE("synth: fixed-delay alignment lands each word at its slot") {
    SynthConfig cfg;
    Rng rng(9);
    SynthStream s = synth_stream(cfg, 30000, rng);
    AlignedDocument doc = delayed_copy_document(s);
    DilationConfig dil = derive_dilation(4);
    Vocabulary vocab = Vocabulary::toy();
    ByteTokenizer tok;
    std::vector<int32_t> prompt = prompt_tokens("en", "transcribe", vocab);
    Rng arng(1);
    AlignResult res = causal_align(doc.transcript, doc.target_words, doc.alignment, dil,
                                   DelayModel::fixed(500), tok, prompt, vocab, arng);
    CHECK(res.report.dropped == 0);
    CHECK(res.report.placed == (int64_t)(2 * s.words.size()));
    // Words are >= 600 ms apart, so no collisions: exact slot arithmetic holds.
    for (const GlyphWord &w : s.words) {
        int64_t t = (w.end_ms + 500 + dil.dt_ms - 1) / dil.dt_ms;
        CHECK(res.labels.at((int)t) == 32);
        CHECK(res.labels.at((int)t + 1) == (int32_t)(uint8_t)w.glyph);
    }
}

TEST_CASE("synth: dense timeline keeps wait fraction high at no dilation") {
    SynthConfig cfg = rate_config(SynthConfig{}, 150);
    Rng rng(4);
    SynthStream s = synth_stream(cfg, 30000, rng);
    AlignedDocument doc = delayed_copy_document(s);
    Vocabulary vocab = Vocabulary::toy();
    ByteTokenizer tok;
    Rng arng(1);
    AlignResult res =
        causal_align(doc.transcript, doc.target_words, doc.alignment, derive_dilation(1),
                     DelayModel::fixed(500), tok, prompt_tokens("en", "transcribe", vocab),
                     vocab, arng);
    CHECK(wait_fraction(res.labels, vocab) > 0.85);
}

// ─── Corpus files ────────────────────────────────────────────────────────────

TEST_CASE("synth: corpus writes are deterministic byte for byte") {
    CorpusSpec spec;
    spec.total_minutes = 4;
    spec.file_minutes = 2;
    spec.seed = 5;
    TempDir a("corpus_a"), b("corpus_b"), c("corpus_c");
    write_corpus(a.str(), spec);
    write_corpus(b.str(), spec);
    CorpusSpec other = spec;
    other.seed = 6;
    write_corpus(c.str(), other);

    for (const char *name :
         {"manifest.json", "000.sstf", "000.transcript.jsonl", "001.sstf",
          "001.transcript.jsonl"}) {
        CHECK(slurp(a.str() + "/" + name) == slurp(b.str() + "/" + name));
    }
    CHECK(slurp(a.str() + "/000.sstf") != slurp(c.str() + "/000.sstf"));
    CHECK(slurp(a.str() + "/000.transcript.jsonl") !=
          slurp(c.str() + "/000.transcript.jsonl"));
}

TEST_CASE("synth: stored features match the stored transcript exactly") {
    CorpusSpec spec;
    spec.total_minutes = 2;
    spec.file_minutes = 2;
    spec.seed = 8;
    TempDir dir("corpus_rt");
    write_corpus(dir.str(), spec);
    Corpus corpus = read_corpus(dir.str());
    REQUIRE(corpus.transcripts.size() == 1);
    CHECK(corpus.seed == 8);
    CHECK(corpus.transcripts[0].audio_duration_ms == 120000);
    CHECK(corpus.transcripts[0].words.size() > 100);

    Features stored = read_features(corpus.feature_paths[0]);
    Features rebuilt = synth_features(corpus.synth, transcript_stream(corpus.transcripts[0]));
    CHECK(stored == rebuilt);
}

TEST_CASE("synth: corpus validation failures") {
    CorpusSpec bad;
    bad.total_minutes = 3;
    bad.file_minutes = 2;
    CHECK_THROWS_AS(validate_corpus_spec(bad), Error);
    TempDir dir("corpus_bad");
    CHECK_THROWS_AS(read_corpus(dir.str()), Error); // no manifest
    write_text_file(dir.str() + "/manifest.json", "{\"version\": 9}\n");
    CHECK_THROWS_AS(read_corpus(dir.str()), Error);
}

// ─── Training samples ────────────────────────────────────────────────────────

TEST_CASE("synth: corpus windows become well-formed training samples") {
    CorpusSpec spec;
    spec.total_minutes = 4;
    spec.file_minutes = 2;
    spec.seed = 13;
    TempDir dir("corpus_train");
    write_corpus(dir.str(), spec);
    Corpus corpus = read_corpus(dir.str());

    ModelConfig model;
    TaskDataConfig data;
    data.dilation = derive_dilation(model.dilation);
    Vocabulary vocab = Vocabulary::toy();
    ByteTokenizer tok;

    Rng r1(77), r2(77);
    TrainSample s = sample_from_corpus(corpus, data, model, tok, vocab, r1);
    TrainSample s2 = sample_from_corpus(corpus, data, model, tok, vocab, r2);
    CHECK(s.tokens == s2.tokens);
    CHECK(s.feats == s2.feats);

    REQUIRE((int)s.tokens.size() == model.n_text_ctx);
    REQUIRE((int)s.active.size() == model.n_text_ctx);
    std::vector<int32_t> prompt = prompt_tokens("en", "transcribe", vocab);
    for (int p = 0; p < 4; ++p) {
        CHECK(s.tokens[p] == prompt[p]);
        CHECK(s.active[p] == 0);
    }
    int content = 0;
    for (int p = 4; p < model.n_text_ctx; ++p) {
        bool ok = s.tokens[p] == vocab.wait || s.tokens[p] == 32 ||
                  (s.tokens[p] >= 'a' && s.tokens[p] < 'a' + corpus.synth.n_glyphs);
        CHECK(ok);
        CHECK(s.active[p] == 1);
        if (s.tokens[p] != vocab.wait) ++content;
    }
    CHECK(content > 0);
    CHECK(content % 2 == 0); // two tokens per word

    CHECK(s.feats.rows() == model.feat_dim);
    CHECK(s.feats.cols() == model.n_frames());
    CHECK(s.feats.cwiseAbs().maxCoeff() <= 1.0f);
    CHECK((s.feats.array() != 0.0f).any());
}

TEST_CASE("synth: catch-up mixing defers the loss") {
    CorpusSpec spec;
    spec.total_minutes = 2;
    spec.file_minutes = 2;
    spec.seed = 21;
    TempDir dir("corpus_sft");
    write_corpus(dir.str(), spec);
    Corpus corpus = read_corpus(dir.str());

    ModelConfig model;
    TaskDataConfig data;
    data.dilation = derive_dilation(model.dilation);
    data.sft_ratio = 1.0;
    Vocabulary vocab = Vocabulary::toy();
    ByteTokenizer tok;
    SampleSource source = corpus_source(corpus, data, model, tok, vocab);

    bool saw_deferred = false;
    for (uint64_t seed = 1; seed <= 4 && !saw_deferred; ++seed) {
        Rng rng(seed);
        TrainSample s = source(rng);
        // Catch-up masks silence a span beyond the prompt.
        for (int p = 4; p < 40; ++p)
            if (s.active[p] == 0) saw_deferred = true;
    }
    CHECK(saw_deferred);
}
