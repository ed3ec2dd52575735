//
// capi.cpp — the C ABI. Thin shell over the C++ core: opaque handles for
// models and streams, flat key/value option lists for the commands, and a
// thread-local error message keyed to the returned status.
//

#include "simulst.h"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sst/align.hpp"
#include "sst/engine.hpp"
#include "sst/mel.hpp"
#include "sst/metrics.hpp"
#include "sst/model.hpp"
#include "sst/sft.hpp"
#include "sst/synth.hpp"
#include "sst/train.hpp"

#include "json.hpp"

namespace {

using json = nlohmann::json;
using namespace sst;

// ─── Error plumbing ──────────────────────────────────────────────────────────

thread_local std::string g_error;

template <typename F> sst_status wrap(F &&fn) {
    try {
        fn();
        g_error.clear();
        return SST_OK;
    } catch (const Error &e) {
        g_error = e.what();
        return static_cast<sst_status>(static_cast<int>(e.status()));
    } catch (const std::exception &e) {
        g_error = e.what();
        return SST_RUNTIME;
    }
}

// ─── Option lists ────────────────────────────────────────────────────────────

// Commands receive options as parallel key/value arrays. Every key must be
// consumed by the command that receives it; leftovers are validation errors.
class Opts {
  public:
    Opts(const char *const *keys, const char *const *values, size_t n) {
        if (n > 0 && (keys == nullptr || values == nullptr))
            fail_validation("option arrays are null");
        for (size_t i = 0; i < n; ++i) {
            if (keys[i] == nullptr || values[i] == nullptr)
                fail_validation("option key/value is null");
            if (!kv_.emplace(keys[i], values[i]).second)
                fail_validation(std::string("duplicate option: ") + keys[i]);
        }
    }

    std::string take(const std::string &key, const std::string &fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end())
            return fallback;
        std::string v = it->second;
        kv_.erase(it);
        return v;
    }

    std::string require(const std::string &key) {
        auto it = kv_.find(key);
        if (it == kv_.end() || it->second.empty())
            fail_validation("missing required option: " + key);
        std::string v = it->second;
        kv_.erase(it);
        return v;
    }

    std::optional<std::string> maybe(const std::string &key) {
        auto it = kv_.find(key);
        if (it == kv_.end())
            return std::nullopt;
        std::string v = it->second;
        kv_.erase(it);
        return v;
    }

    int64_t take_int(const std::string &key, int64_t fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end())
            return fallback;
        int64_t v = parse_int(key, it->second);
        kv_.erase(it);
        return v;
    }

    double take_double(const std::string &key, double fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end())
            return fallback;
        double v = parse_double(key, it->second);
        kv_.erase(it);
        return v;
    }

    bool take_bool(const std::string &key, bool fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end())
            return fallback;
        const std::string &s = it->second;
        bool v;
        if (s == "0" || s == "false")
            v = false;
        else if (s == "1" || s == "true")
            v = true;
        else
            fail_validation("option " + key + ": expected 0/1, got \"" + s + "\"");
        kv_.erase(it);
        return v;
    }

    // Call after all takes: any unconsumed key is a mistake.
    void done() const {
        if (!kv_.empty())
            fail_validation("unknown option: " + kv_.begin()->first);
    }

    static int64_t parse_int(const std::string &key, const std::string &s) {
        try {
            size_t pos = 0;
            int64_t v = std::stoll(s, &pos);
            if (pos != s.size())
                throw std::invalid_argument(s);
            return v;
        } catch (const std::exception &) {
            fail_validation("option " + key + ": expected an integer, got \"" +
                            s + "\"");
        }
    }

    static double parse_double(const std::string &key, const std::string &s) {
        try {
            size_t pos = 0;
            double v = std::stod(s, &pos);
            if (pos != s.size())
                throw std::invalid_argument(s);
            return v;
        } catch (const std::exception &) {
            fail_validation("option " + key + ": expected a number, got \"" + s +
                            "\"");
        }
    }

  private:
    std::map<std::string, std::string> kv_;
};

// ─── Shared pieces ───────────────────────────────────────────────────────────

const ByteTokenizer g_byte_tok;

std::unique_ptr<Tokenizer> make_tokenizer(const std::string &name) {
    if (name == "byte")
        return std::make_unique<ByteTokenizer>();
    if (name == "hashword")
        return std::make_unique<HashWordTokenizer>();
    fail_validation("unknown tokenizer: " + name);
}

Vocabulary vocab_for(const ModelConfig &cfg) {
    for (const Vocabulary &v : {Vocabulary::toy(), Vocabulary::whisper_compat()})
        if (v.vocab_size == cfg.vocab)
            return v;
    fail_validation("checkpoint vocab size " + std::to_string(cfg.vocab) +
                    " matches no known vocabulary");
}

std::vector<std::pair<int64_t, int64_t>> parse_stalls(const std::string &spec) {
    std::vector<std::pair<int64_t, int64_t>> out;
    size_t pos = 0;
    while (pos < spec.size()) {
        size_t comma = spec.find(',', pos);
        std::string part = spec.substr(
            pos, comma == std::string::npos ? std::string::npos : comma - pos);
        size_t dash = part.find('-');
        if (dash == std::string::npos)
            fail_validation("stalls: expected lo-hi ranges, got \"" + part +
                            "\"");
        out.emplace_back(Opts::parse_int("stalls", part.substr(0, dash)),
                         Opts::parse_int("stalls", part.substr(dash + 1)));
        pos = comma == std::string::npos ? spec.size() : comma + 1;
    }
    return out;
}

std::vector<double> parse_biases(const std::string &spec) {
    std::vector<double> out;
    size_t pos = 0;
    while (pos < spec.size()) {
        size_t comma = spec.find(',', pos);
        out.push_back(Opts::parse_double(
            "biases", spec.substr(pos, comma == std::string::npos
                                           ? std::string::npos
                                           : comma - pos)));
        pos = comma == std::string::npos ? spec.size() : comma + 1;
    }
    if (out.empty())
        fail_validation("biases: empty list");
    return out;
}

json model_info_json(const ModelConfig &c, const Vocabulary &v) {
    return json{{"feat_dim", c.feat_dim},
                {"d_model", c.d_model},
                {"n_heads", c.n_heads},
                {"d_ff", c.d_ff},
                {"n_enc_layers", c.n_enc_layers},
                {"n_dec_layers", c.n_dec_layers},
                {"vocab", c.vocab},
                {"n_audio_keys", c.n_audio_keys},
                {"n_text_ctx", c.n_text_ctx},
                {"dilation", c.dilation},
                {"vocab_mode", v.mode_name()}};
}

} // namespace

// ─── Handles ─────────────────────────────────────────────────────────────────

struct sst_model {
    Weights<float> w;
    Vocabulary vocab;
    ByteTokenizer tok;
};

struct sst_stream {
    sst_model *model = nullptr; // borrowed; must outlive the stream
    std::unique_ptr<Stream> s;
};

extern "C" {

const char *sst_version(void) { return "simulst 0.1.0 (sstf 1, sstc 1)"; }

const char *sst_last_error(void) { return g_error.c_str(); }

// ─── Model handle ────────────────────────────────────────────────────────────

sst_status sst_model_open(const char *checkpoint_path, sst_model **out) {
    return wrap([&] {
        if (checkpoint_path == nullptr || out == nullptr)
            fail_validation("sst_model_open: null argument");
        *out = nullptr;
        auto m = std::make_unique<sst_model>();
        m->w = weights_from_checkpoint(load_checkpoint(checkpoint_path));
        m->vocab = vocab_for(m->w.cfg);
        *out = m.release();
    });
}

void sst_model_close(sst_model *model) { delete model; }

sst_status sst_model_info(const sst_model *model, char *buf, size_t cap) {
    return wrap([&] {
        if (model == nullptr || buf == nullptr)
            fail_validation("sst_model_info: null argument");
        std::string s = model_info_json(model->w.cfg, model->vocab).dump();
        if (s.size() + 1 > cap)
            fail_validation("sst_model_info: buffer too small (need " +
                            std::to_string(s.size() + 1) + " bytes)");
        std::memcpy(buf, s.c_str(), s.size() + 1);
    });
}

// ─── Streams ─────────────────────────────────────────────────────────────────

void sst_stream_params_init(sst_stream_params *params) {
    if (params == nullptr)
        return;
    *params = sst_stream_params{};
    StreamConfig d;
    params->wait_bias = d.wait_bias;
    params->cached = d.cached ? 1 : 0;
    params->window_stride_chunks = d.window_stride_chunks;
    params->virtual_clock = d.virtual_clock ? 1 : 0;
    params->step_overhead_ms = d.step_overhead_ms;
    params->lang = nullptr;
    params->task = nullptr;
}

sst_status sst_stream_open(sst_model *model, const sst_stream_params *params,
                           sst_stream **out) {
    return wrap([&] {
        if (model == nullptr || out == nullptr)
            fail_validation("sst_stream_open: null argument");
        *out = nullptr;
        StreamConfig cfg;
        if (params != nullptr) {
            cfg.wait_bias = static_cast<float>(params->wait_bias);
            cfg.cached = params->cached != 0;
            cfg.window_stride_chunks = params->window_stride_chunks;
            cfg.virtual_clock = params->virtual_clock != 0;
            cfg.step_overhead_ms = params->step_overhead_ms;
            if (params->lang != nullptr)
                cfg.lang = params->lang;
            if (params->task != nullptr)
                cfg.task = params->task;
        }
        auto h = std::make_unique<sst_stream>();
        h->model = model;
        h->s = std::make_unique<Stream>(model->w, model->vocab, model->tok, cfg);
        *out = h.release();
    });
}

void sst_stream_close(sst_stream *stream) { delete stream; }

int32_t sst_stream_feat_dim(const sst_stream *stream) {
    return stream == nullptr ? 0 : stream->model->w.cfg.feat_dim;
}

int32_t sst_stream_chunk_frames(const sst_stream *stream) {
    return stream == nullptr ? 0 : stream->s->chunk_frames();
}

int64_t sst_stream_chunk_ms(const sst_stream *stream) {
    return stream == nullptr ? 0 : stream->s->chunk_ms();
}

sst_status sst_stream_push(sst_stream *stream, const float *frames,
                           sst_emission *out) {
    return wrap([&] {
        if (stream == nullptr || frames == nullptr || out == nullptr)
            fail_validation("sst_stream_push: null argument");
        const int dim = stream->model->w.cfg.feat_dim;
        const int nt = stream->s->chunk_frames();
        Mat<float> chunk(dim, nt);
        for (int t = 0; t < nt; ++t)
            for (int c = 0; c < dim; ++c)
                chunk(c, t) = frames[static_cast<size_t>(t) * dim + c];
        EmissionRecord r = stream->s->push_chunk(chunk);
        out->tok = r.tok;
        out->src_ms = r.src_ms;
        out->wall_ms = r.wall_ms;
        out->action = r.action;
        std::snprintf(out->text, sizeof out->text, "%s", r.text.c_str());
    });
}

// ─── cmd: synth ──────────────────────────────────────────────────────────────

sst_status sst_cmd_synth(const char *const *keys, const char *const *values,
                         size_t n) {
    return wrap([&] {
        Opts o(keys, values, n);
        CorpusSpec spec;
        std::string out = o.require("out");
        std::string task = o.take("task", "delayed-copy");
        if (task != "delayed-copy")
            fail_validation("unknown synthesis task: " + task);
        spec.total_minutes = o.take_int("minutes", spec.total_minutes);
        spec.file_minutes = o.take_int("file_minutes", spec.file_minutes);
        spec.seed = static_cast<uint64_t>(o.take_int("seed", 1));
        int64_t wpm = o.take_int("wpm", 0);
        o.done();
        if (wpm > 0)
            spec.synth = rate_config(spec.synth, static_cast<int>(wpm));
        write_corpus(out, spec);
    });
}

// ─── cmd: align ──────────────────────────────────────────────────────────────

sst_status sst_cmd_align(const char *const *keys, const char *const *values,
                         size_t n) {
    return wrap([&] {
        Opts o(keys, values, n);
        std::string transcript_path = o.require("transcript");
        std::string targets_path = o.require("targets");
        std::string alignment_spec = o.take("alignment", "fallback");
        std::string out = o.require("out");
        std::string report_path = o.take("report", out + ".report.json");
        int D = static_cast<int>(o.take_int("D", 4));
        DelayModel delay = DelayModel::parse(o.take("delta", "uniform:0,200"));
        std::string lang = o.take("lang", "en");
        std::string task = o.take("task", "transcribe");
        Vocabulary vocab = Vocabulary::from_mode_name(o.take("vocab", "toy"));
        auto tok = make_tokenizer(o.take("tokenizer", "byte"));
        uint64_t seed = static_cast<uint64_t>(o.take_int("seed", 1));
        bool strict = o.take_bool("strict", false);
        o.done();
        DilationConfig dilation = derive_dilation(D);
        std::vector<int32_t> prompt = prompt_tokens(lang, task, vocab);

        Transcript transcript =
            validate_transcript(transcript_from_jsonl(read_text_file(transcript_path)));
        std::vector<std::string> targets =
            segment_words(read_text_file(targets_path), lang);
        AlignmentMap map =
            alignment_spec == "fallback"
                ? fallback_align(static_cast<int>(transcript.words.size()),
                                 static_cast<int>(targets.size()))
                : alignment_from_jsonl(read_text_file(alignment_spec));
        Rng rng(seed);
        AlignResult res = causal_align(transcript, targets, map, dilation, delay,
                                       *tok, prompt, vocab, rng);
        if (strict && res.report.dropped > 0)
            throw Error(Status::strict_drop,
                        "strict alignment dropped " +
                            std::to_string(res.report.dropped) +
                            " content tokens");

        ShardRecord rec;
        rec.labels = res.labels.tokens;
        rec.loss_mask = default_loss_mask(dilation.l,
                                          static_cast<int>(prompt.size()));
        rec.lang = lang;
        rec.task = task;
        rec.D = D;
        rec.report = res.report;
        write_text_file(out, shards_to_jsonl({rec}));
        write_text_file(report_path,
                        json{{"placed", res.report.placed},
                             {"dropped", res.report.dropped},
                             {"collisions", res.report.collisions},
                             {"wait_fraction", wait_fraction(res.labels, vocab)},
                             {"seed", seed}}
                                .dump(2) +
                            "\n");
    });
}

// ─── cmd: sft ────────────────────────────────────────────────────────────────

sst_status sst_cmd_sft(const char *const *keys, const char *const *values,
                       size_t n) {
    return wrap([&] {
        Opts o(keys, values, n);
        std::string in = o.require("in");
        std::string out = o.require("out");
        uint64_t seed = static_cast<uint64_t>(o.take_int("seed", 1));
        Vocabulary vocab = Vocabulary::from_mode_name(o.take("vocab", "toy"));
        bool strict_mask = o.take_bool("strict_mask", false);
        bool strict_drops = o.take_bool("strict_drops", false);
        o.done();

        std::vector<ShardRecord> recs = shards_from_jsonl(read_text_file(in));
        Rng rng(seed);
        for (ShardRecord &rec : recs) {
            try {
                rec = build_sft_record(rec, vocab, rng, strict_mask,
                                       strict_drops);
            } catch (const Error &e) {
                if (e.status() != Status::not_applicable)
                    throw; // keep the original record otherwise
            }
        }
        write_text_file(out, shards_to_jsonl(recs));
    });
}

// ─── cmd: train ──────────────────────────────────────────────────────────────

sst_status sst_cmd_train(const char *const *keys, const char *const *values,
                         size_t n) {
    return wrap([&] {
        Opts o(keys, values, n);
        std::string corpus_dir = o.require("corpus");
        std::string run_dir = o.require("run");
        int64_t steps = o.take_int("steps", 200);
        int batch = static_cast<int>(o.take_int("batch", 4));
        uint64_t seed = static_cast<uint64_t>(o.take_int("seed", 1));
        OptimConfig oc;
        oc.peak_lr = o.take_double("peak_lr", oc.peak_lr);
        oc.warmup_steps = o.take_int("warmup", oc.warmup_steps);
        std::string schedule = o.take("schedule", "linear_decay");
        oc.clip_norm = o.take_double("clip", oc.clip_norm);
        oc.weight_decay = o.take_double("weight_decay", oc.weight_decay);
        int D = static_cast<int>(o.take_int("D", 4));
        std::string delta_spec = o.take("delta", "uniform:400,600");
        DelayModel delay = DelayModel::parse(delta_spec);
        double sft_ratio = o.take_double("sft_ratio", 0.0);
        int64_t log_every = o.take_int("log_every", 10);
        int64_t stop_after = o.take_int("stop_after", 0);
        bool resume = o.take_bool("resume", false);
        std::string init = o.take("init", "");
        o.done();

        if (schedule == "linear_decay")
            oc.schedule = Schedule::linear_decay;
        else if (schedule == "constant")
            oc.schedule = Schedule::constant;
        else
            fail_validation("unknown schedule: " + schedule);
        if (steps <= 0)
            fail_validation("steps must be positive");
        oc.total_steps = steps;
        validate_optim(oc);

        DilationConfig dilation = derive_dilation(D);
        const std::string ckpt_path = run_dir + "/checkpoint.sstc";

        Weights<float> w;
        AdamW opt;
        if (resume) {
            // The stored optimizer config governs the rest of the run.
            train_state_from_checkpoint(load_checkpoint(ckpt_path), w, opt);
            if (opt.step > steps)
                fail_validation("checkpoint is at step " +
                                std::to_string(opt.step) + ", past steps=" +
                                std::to_string(steps));
        } else if (!init.empty()) {
            w = weights_from_checkpoint(load_checkpoint(init));
            opt.init(oc, w);
        } else {
            ModelConfig mc;
            mc.dilation = D;
            mc.n_text_ctx = dilation.l;
            Rng wr(seed);
            w.init(mc, wr);
            opt.init(oc, w);
        }
        if (w.cfg.dilation != D)
            fail_validation("model dilation " + std::to_string(w.cfg.dilation) +
                            " does not match D=" + std::to_string(D));

        Corpus corpus = read_corpus(corpus_dir);
        TaskDataConfig data;
        data.dilation = dilation;
        data.delay = delay;
        data.sft_ratio = sft_ratio;
        Vocabulary vocab = vocab_for(w.cfg);
        SampleSource source =
            corpus_source(corpus, data, w.cfg, g_byte_tok, vocab);

        std::filesystem::create_directories(run_dir);
        {
            // Flat snapshot of every resolved option: re-running with these
            // reproduces the run bit for bit under the virtual sample stream.
            std::map<std::string, std::string> snap{
                {"batch", std::to_string(batch)},
                {"clip", std::to_string(oc.clip_norm)},
                {"corpus", corpus_dir},
                {"D", std::to_string(D)},
                {"delta", delta_spec},
                {"init", init},
                {"log_every", std::to_string(log_every)},
                {"peak_lr", std::to_string(oc.peak_lr)},
                {"schedule", schedule},
                {"seed", std::to_string(seed)},
                {"sft_ratio", std::to_string(sft_ratio)},
                {"steps", std::to_string(steps)},
                {"warmup", std::to_string(oc.warmup_steps)},
                {"weight_decay", std::to_string(oc.weight_decay)},
            };
            std::string text;
            for (const auto &[k, v] : snap)
                text += k + "=" + v + "\n";
            write_text_file(run_dir + "/config.txt", text);
        }

        int64_t remaining = steps - opt.step;
        if (stop_after > 0)
            remaining = std::min(remaining, stop_after);

        std::ofstream log_file(run_dir + "/train_log.jsonl",
                               resume ? std::ios::app : std::ios::trunc);
        if (!log_file)
            fail_runtime("cannot open " + run_dir + "/train_log.jsonl");

        TrainStats stats;
        if (remaining > 0) {
            TrainConfig tc;
            tc.steps = remaining;
            tc.batch_size = batch;
            tc.seed = seed;
            tc.log_every = log_every;
            stats = train_loop(w, opt, tc, source, [&](int64_t step, double loss) {
                log_file << json{{"step", step}, {"loss", loss}}.dump() << "\n";
                log_file.flush();
            });
        }
        save_checkpoint(ckpt_path, train_state_to_checkpoint(w, opt));
        write_text_file(run_dir + "/summary.json",
                        json{{"steps_done", opt.step},
                             {"steps_total", steps},
                             {"final_loss", stats.final_loss}}
                                .dump(2) +
                            "\n");
    });
}

// ─── cmd: stream ─────────────────────────────────────────────────────────────

sst_status sst_cmd_stream(const char *const *keys, const char *const *values,
                          size_t n) {
    return wrap([&] {
        Opts o(keys, values, n);
        std::string model_path = o.require("model");
        std::optional<std::string> feat_path = o.maybe("features");
        std::optional<std::string> wav_path = o.maybe("wav");
        std::string out = o.require("out");
        std::string summary_path = o.take("summary", out + ".summary.json");
        StreamConfig cfg;
        cfg.wait_bias = static_cast<float>(o.take_double("bias", 0.0));
        cfg.cached = o.take_bool("cached", true);
        cfg.window_stride_chunks =
            static_cast<int>(o.take_int("stride", cfg.window_stride_chunks));
        std::string clock = o.take("clock", "virtual");
        cfg.step_overhead_ms = o.take_int("overhead_ms", 0);
        cfg.lang = o.take("lang", "en");
        cfg.task = o.take("task", "transcribe");
        cfg.stalls = parse_stalls(o.take("stalls", ""));
        o.done();

        if (clock == "virtual")
            cfg.virtual_clock = true;
        else if (clock == "real")
            cfg.virtual_clock = false;
        else
            fail_validation("clock must be virtual or real, got \"" + clock +
                            "\"");
        if (feat_path.has_value() == wav_path.has_value())
            fail_validation("exactly one of features= and wav= is required");

        Features feats = feat_path ? read_features(*feat_path)
                                   : log_mel(read_wav(*wav_path));

        Weights<float> w = weights_from_checkpoint(load_checkpoint(model_path));
        Vocabulary vocab = vocab_for(w.cfg);
        double processing_ms = 0;
        EmissionLog log =
            run_stream(w, vocab, g_byte_tok, feats, cfg, &processing_ms);

        write_text_file(out, emission_log_to_jsonl(log));
        int64_t chunks =
            feats.n_frames() / (2 * w.cfg.dilation); // whole chunks fed
        double audio_ms = static_cast<double>(chunks) * w.cfg.dilation *
                          DilationConfig::encoder_key_ms;
        size_t writes = log.writes().size();
        write_text_file(
            summary_path,
            json{{"chunks", chunks},
                 {"writes", writes},
                 {"reads", log.records.size() - writes},
                 {"audio_ms", audio_ms},
                 {"processing_ms", processing_ms},
                 {"rtf", audio_ms > 0 ? rtf(processing_ms, audio_ms) : 0.0}}
                    .dump(2) +
                "\n");
    });
}

// ─── cmd: eval ───────────────────────────────────────────────────────────────

sst_status sst_cmd_eval(const char *const *keys, const char *const *values,
                        size_t n) {
    return wrap([&] {
        Opts o(keys, values, n);
        std::string log_path = o.require("log");
        std::string refs_path = o.require("refs");
        std::string out = o.require("out");
        double bias = o.take_double("bias", 0.0);
        o.done();

        EmissionLog log = emission_log_from_jsonl(read_text_file(log_path));
        validate_log(log);
        std::vector<RefSegment> refs =
            ref_segments_from_jsonl(read_text_file(refs_path));
        if (refs.empty())
            fail_validation("refs: no segments");

        int64_t duration = 0;
        std::string ref_text;
        for (const RefSegment &r : refs) {
            duration = std::max(duration, r.end_ms);
            ref_text += r.text;
        }
        std::string hyp_text;
        std::vector<int64_t> walls;
        for (const EmissionRecord &r : log.writes()) {
            hyp_text += r.text;
            walls.push_back(r.wall_ms);
        }
        int64_t ref_tokens =
            static_cast<int64_t>(g_byte_tok.encode(ref_text).size());
        SegmentEval seg = segment_from_log(log, duration, ref_tokens);

        SweepRow row;
        row.bias = bias;
        row.bleu = bleu({hyp_text}, {ref_text});
        row.laal_ms = laal(seg);
        row.stream_laal_ms = stream_laal_lite(log, refs, g_byte_tok);
        row.ca_ms = ca_laal(seg, walls, 0);
        row.rtf = 0.0; // not recoverable from a stored log
        write_text_file(out, report_csv({row}));
    });
}

// ─── cmd: sweep ──────────────────────────────────────────────────────────────

sst_status sst_cmd_sweep(const char *const *keys, const char *const *values,
                         size_t n) {
    return wrap([&] {
        Opts o(keys, values, n);
        std::string model_path = o.require("model");
        std::string corpus_dir = o.require("corpus");
        std::string out = o.require("out");
        std::vector<double> biases = parse_biases(o.take("biases", "0,-1,-2,-4"));
        int jobs = static_cast<int>(o.take_int("jobs", 1));
        StreamConfig base;
        base.cached = o.take_bool("cached", true);
        base.window_stride_chunks =
            static_cast<int>(o.take_int("stride", base.window_stride_chunks));
        o.done();
        if (jobs < 1)
            fail_validation("jobs must be >= 1");

        Weights<float> w = weights_from_checkpoint(load_checkpoint(model_path));
        Vocabulary vocab = vocab_for(w.cfg);
        Corpus corpus = read_corpus(corpus_dir);
        std::vector<EvalStream> streams;
        for (size_t i = 0; i < corpus.feature_paths.size(); ++i)
            streams.push_back(EvalStream{read_features(corpus.feature_paths[i]),
                                         corpus.transcripts[i]});

        std::vector<SweepRow> rows(biases.size());
        if (jobs == 1) {
            rows = latency_quality_sweep(w, vocab, g_byte_tok, streams, biases,
                                         base);
        } else {
            // One bias per worker; each worker only reads the shared state.
            std::atomic<size_t> next{0};
            std::vector<std::thread> pool;
            std::atomic<bool> failed{false};
            std::string first_error;
            std::mutex err_mu;
            for (int t = 0; t < std::min(jobs, static_cast<int>(biases.size()));
                 ++t)
                pool.emplace_back([&] {
                    for (size_t i = next.fetch_add(1); i < biases.size();
                         i = next.fetch_add(1)) {
                        try {
                            rows[i] = latency_quality_sweep(
                                w, vocab, g_byte_tok, streams, {biases[i]},
                                base)[0];
                        } catch (const std::exception &e) {
                            std::lock_guard<std::mutex> lock(err_mu);
                            if (!failed.exchange(true))
                                first_error = e.what();
                        }
                    }
                });
            for (std::thread &t : pool)
                t.join();
            if (failed)
                fail_runtime("sweep worker failed: " + first_error);
        }
        write_text_file(out, report_csv(rows));
    });
}

} // extern "C"
