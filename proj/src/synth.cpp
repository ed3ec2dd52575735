#include "sst/synth.hpp"

#include <filesystem>

#include "sst/sft.hpp"

#include "json.hpp"

namespace sst {

using nlohmann::json;

// ─── Config ──────────────────────────────────────────────────────────────────

void validate_synth(const SynthConfig &cfg) {
    if (cfg.n_glyphs < 1 || cfg.n_glyphs > 26)
        fail_validation("n_glyphs must be in [1, 26]");
    if (cfg.feat_dim < 1) fail_validation("feat_dim must be positive");
    if (cfg.dur_lo_ms < 1 || cfg.dur_hi_ms < cfg.dur_lo_ms)
        fail_validation("word duration range is invalid");
    if (cfg.gap_lo_ms < 0 || cfg.gap_hi_ms < cfg.gap_lo_ms)
        fail_validation("gap range is invalid");
    if (cfg.tail_silence_ms < 0) fail_validation("tail_silence_ms must be >= 0");
}

SynthConfig rate_config(const SynthConfig &base, int wpm) {
    validate_synth(base);
    if (wpm < 1) fail_validation("wpm must be positive");
    double cycle = 0.5 * (double)(base.dur_lo_ms + base.dur_hi_ms) +
                   0.5 * (double)(base.gap_lo_ms + base.gap_hi_ms);
    double scale = (60000.0 / wpm) / cycle;
    auto scaled = [&](int64_t ms, int64_t floor_ms) {
        return std::max(floor_ms, (int64_t)std::llround(ms * scale));
    };
    SynthConfig out = base;
    out.dur_lo_ms = scaled(base.dur_lo_ms, 1);
    out.dur_hi_ms = std::max(out.dur_lo_ms, scaled(base.dur_hi_ms, 1));
    out.gap_lo_ms = scaled(base.gap_lo_ms, 0);
    out.gap_hi_ms = std::max(out.gap_lo_ms, scaled(base.gap_hi_ms, 0));
    return out;
}

// ─── Stream sampling ─────────────────────────────────────────────────────────

SynthStream synth_stream(const SynthConfig &cfg, int64_t duration_ms, Rng &rng) {
    validate_synth(cfg);
    if (duration_ms < 0) fail_validation("stream duration must be >= 0");
    SynthStream s;
    s.duration_ms = duration_ms;
    int64_t limit = duration_ms - cfg.tail_silence_ms;
    int64_t t = 0;
    for (;;) {
        int64_t gap = rng.uniform_int(cfg.gap_lo_ms, cfg.gap_hi_ms);
        int64_t dur = rng.uniform_int(cfg.dur_lo_ms, cfg.dur_hi_ms);
        int glyph = (int)rng.uniform_int(0, cfg.n_glyphs - 1);
        int64_t start = t + gap, end = start + dur;
        if (end > limit) break;
        s.words.push_back({(char)('a' + glyph), start, end});
        t = end;
    }
    return s;
}

// ─── Rendering ───────────────────────────────────────────────────────────────

Mat<float> glyph_patterns(const SynthConfig &cfg) {
    validate_synth(cfg);
    Rng rng(cfg.pattern_seed);
    Mat<float> p(cfg.feat_dim, cfg.n_glyphs);
    for (int g = 0; g < cfg.n_glyphs; ++g)
        for (int c = 0; c < cfg.feat_dim; ++c)
            p(c, g) = (float)rng.uniform(-1.0, 1.0);
    return p;
}

Features render_features(const SynthConfig &cfg, const std::vector<WordSpan> &words,
                         int64_t duration_ms) {
    validate_synth(cfg);
    if (duration_ms < 0) fail_validation("render duration must be >= 0");
    Features f;
    f.dim = cfg.feat_dim;
    f.frame_ms = 10;
    int64_t n_frames = duration_ms / f.frame_ms;
    f.data.assign((size_t)(n_frames * f.dim), 0.0f);
    Mat<float> patterns = glyph_patterns(cfg);

    int64_t prev_end = 0;
    for (size_t i = 0; i < words.size(); ++i) {
        const WordSpan &w = words[i];
        if (w.text.size() != 1 || w.text[0] < 'a' || w.text[0] >= 'a' + cfg.n_glyphs)
            fail_validation("word " + std::to_string(i + 1) + " is not a known glyph");
        if (w.start_ms < prev_end || w.end_ms <= w.start_ms || w.end_ms > duration_ms)
            fail_validation("word " + std::to_string(i + 1) + " has an invalid span");
        prev_end = w.end_ms;

        int g = w.text[0] - 'a';
        // Frames fully inside [start, end]: 10t >= start and 10t+10 <= end.
        if (w.end_ms < f.frame_ms) continue;
        int64_t t_first = (w.start_ms + f.frame_ms - 1) / f.frame_ms;
        int64_t t_last = std::min((w.end_ms - f.frame_ms) / f.frame_ms, n_frames - 1);
        for (int64_t t = t_first; t <= t_last; ++t)
            for (int c = 0; c < f.dim; ++c) f.frame(t)[c] = patterns(c, g);
    }
    return f;
}

Features synth_features(const SynthConfig &cfg, const SynthStream &stream) {
    return render_features(cfg, stream_transcript(stream).words, stream.duration_ms);
}

// ─── Documents ───────────────────────────────────────────────────────────────

Transcript stream_transcript(const SynthStream &stream) {
    Transcript t;
    t.audio_duration_ms = stream.duration_ms;
    for (const GlyphWord &w : stream.words)
        t.words.push_back({std::string(1, w.glyph), w.start_ms, w.end_ms});
    return t;
}

SynthStream transcript_stream(const Transcript &t) {
    SynthStream s;
    s.duration_ms = t.audio_duration_ms;
    for (size_t i = 0; i < t.words.size(); ++i) {
        const WordSpan &w = t.words[i];
        if (w.text.size() != 1 || w.text[0] < 'a' || w.text[0] > 'z')
            fail_validation("word " + std::to_string(i + 1) + " is not a single glyph");
        s.words.push_back({w.text[0], w.start_ms, w.end_ms});
    }
    return s;
}

AlignedDocument delayed_copy_document(const SynthStream &stream) {
    AlignedDocument doc;
    doc.transcript = validate_transcript(stream_transcript(stream));
    for (size_t i = 0; i < stream.words.size(); ++i) {
        doc.target_words.push_back(std::string(" ") + stream.words[i].glyph);
        doc.alignment.links.push_back((int32_t)(i + 1));
    }
    validate_alignment(doc.alignment, (int)stream.words.size());
    return doc;
}

// ─── Corpus files ────────────────────────────────────────────────────────────

void validate_corpus_spec(const CorpusSpec &spec) {
    validate_synth(spec.synth);
    if (spec.file_minutes < 1) fail_validation("file_minutes must be positive");
    if (spec.total_minutes < spec.file_minutes ||
        spec.total_minutes % spec.file_minutes != 0)
        fail_validation("total_minutes must be a positive multiple of file_minutes");
}

static uint64_t file_seed(uint64_t base, int index) {
    return base + 0x9E3779B97F4A7C15ull * (uint64_t)(index + 1);
}

static std::string file_stem(int index) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%03d", index);
    return buf;
}

static json synth_to_json(const SynthConfig &c) {
    return json{{"n_glyphs", c.n_glyphs},       {"pattern_seed", c.pattern_seed},
                {"feat_dim", c.feat_dim},       {"dur_lo_ms", c.dur_lo_ms},
                {"dur_hi_ms", c.dur_hi_ms},     {"gap_lo_ms", c.gap_lo_ms},
                {"gap_hi_ms", c.gap_hi_ms},     {"tail_silence_ms", c.tail_silence_ms}};
}

static SynthConfig synth_from_json(const json &j) {
    SynthConfig c;
    c.n_glyphs = j.at("n_glyphs").get<int>();
    c.pattern_seed = j.at("pattern_seed").get<uint64_t>();
    c.feat_dim = j.at("feat_dim").get<int>();
    c.dur_lo_ms = j.at("dur_lo_ms").get<int64_t>();
    c.dur_hi_ms = j.at("dur_hi_ms").get<int64_t>();
    c.gap_lo_ms = j.at("gap_lo_ms").get<int64_t>();
    c.gap_hi_ms = j.at("gap_hi_ms").get<int64_t>();
    c.tail_silence_ms = j.at("tail_silence_ms").get<int64_t>();
    return c;
}

void write_corpus(const std::string &dir, const CorpusSpec &spec) {
    validate_corpus_spec(spec);
    std::filesystem::create_directories(dir);
    int n_files = spec.total_minutes / spec.file_minutes;
    int64_t file_ms = (int64_t)spec.file_minutes * 60000;

    json files = json::array();
    for (int i = 0; i < n_files; ++i) {
        Rng rng(file_seed(spec.seed, i));
        SynthStream stream = synth_stream(spec.synth, file_ms, rng);
        std::string stem = file_stem(i);
        write_features(dir + "/" + stem + ".sstf", synth_features(spec.synth, stream));
        write_text_file(dir + "/" + stem + ".transcript.jsonl",
                        transcript_to_jsonl(stream_transcript(stream)));
        files.push_back(json{{"features", stem + ".sstf"},
                             {"transcript", stem + ".transcript.jsonl"},
                             {"duration_ms", file_ms}});
    }
    json manifest{{"version", 1},
                  {"task", "delayed-copy"},
                  {"seed", spec.seed},
                  {"file_minutes", spec.file_minutes},
                  {"total_minutes", spec.total_minutes},
                  {"synth", synth_to_json(spec.synth)},
                  {"files", files}};
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Corpus read_corpus(const std::string &dir) {
    json manifest;
    try {
        manifest = json::parse(read_text_file(dir + "/manifest.json"));
    } catch (const json::exception &e) {
        fail_validation(std::string("bad corpus manifest: ") + e.what());
    }
    Corpus corpus;
    try {
        if (manifest.at("version").get<int>() != 1)
            fail_validation("unsupported corpus manifest version");
        corpus.synth = synth_from_json(manifest.at("synth"));
        corpus.seed = manifest.at("seed").get<uint64_t>();
        for (const json &f : manifest.at("files")) {
            Transcript t = validate_transcript(
                transcript_from_jsonl(read_text_file(dir + "/" + f.at("transcript").get<std::string>())));
            if (t.audio_duration_ms != f.at("duration_ms").get<int64_t>())
                fail_validation("transcript duration disagrees with manifest");
            corpus.transcripts.push_back(std::move(t));
            corpus.feature_paths.push_back(dir + "/" + f.at("features").get<std::string>());
        }
    } catch (const json::exception &e) {
        fail_validation(std::string("bad corpus manifest: ") + e.what());
    }
    if (corpus.transcripts.empty()) fail_validation("corpus manifest lists no files");
    validate_synth(corpus.synth);
    return corpus;
}

// ─── Training samples ────────────────────────────────────────────────────────

TrainSample sample_from_corpus(const Corpus &corpus, const TaskDataConfig &data,
                               const ModelConfig &model, const Tokenizer &tok,
                               const Vocabulary &vocab, Rng &rng) {
    if (corpus.transcripts.empty()) fail_validation("corpus has no documents");
    const Transcript &doc_t =
        corpus.transcripts[rng.uniform_int(0, (int64_t)corpus.transcripts.size() - 1)];
    AlignedDocument doc = delayed_copy_document(transcript_stream(doc_t));
    std::vector<int32_t> prompt = prompt_tokens(data.lang, data.task, vocab);

    TrainingWindow window = pad_or_sample_window(doc, data.dilation, data.delay, tok,
                                                 prompt, vocab, rng);

    TrainSample sample;
    sample.tokens = window.labels.tokens;
    sample.active = default_loss_mask(window.labels.dilation.l, window.labels.prompt_len);
    if (data.sft_ratio > 0.0 && rng.bernoulli(data.sft_ratio)) {
        try {
            SftSample sft = build_sft_sample(window.labels, vocab, rng);
            sample.tokens = sft.labels.tokens;
            sample.active = sft.loss_mask;
        } catch (const Error &e) {
            if (e.status() != Status::not_applicable) throw;
            // No room for a catch-up displacement: keep the plain window.
        }
    }

    int64_t duration_ms = model.n_frames() * 10;
    Features feats = render_features(corpus.synth, window.transcript.words,
                                     std::max(duration_ms, (int64_t)0));
    sample.feats = Mat<float>::Zero(model.feat_dim, model.n_frames());
    int64_t n = std::min<int64_t>(feats.n_frames(), model.n_frames());
    for (int64_t t = 0; t < n; ++t)
        for (int c = 0; c < model.feat_dim && c < feats.dim; ++c)
            sample.feats(c, t) = feats.frame(t)[c];
    return sample;
}

SampleSource corpus_source(const Corpus &corpus, const TaskDataConfig &data,
                           const ModelConfig &model, const Tokenizer &tok,
                           const Vocabulary &vocab) {
    const Tokenizer *tk = &tok; // caller keeps the tokenizer alive
    return [corpus, data, model, tk, vocab](Rng &rng) {
        return sample_from_corpus(corpus, data, model, *tk, vocab, rng);
    };
}

} // namespace sst
