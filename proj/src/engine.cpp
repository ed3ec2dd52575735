#include "sst/engine.hpp"

#include <cmath>

#include "sst/align.hpp"

namespace sst {

// ─── Construction ────────────────────────────────────────────────────────────

Stream::Stream(const Weights<float> &w, const Vocabulary &vocab, const Tokenizer &tok,
               const StreamConfig &cfg)
    : w_(w), vocab_(vocab), tok_(tok), cfg_(cfg) {
    const ModelConfig &m = w.cfg;
    D_ = m.dilation;
    n_keys_ = m.n_audio_keys;
    n_frames_ = (int)m.n_frames();
    if (n_keys_ % D_ != 0)
        fail_validation("dilation must divide the encoder window");
    chunk_frames_ = 2 * D_;
    chunk_ms_ = 10 * chunk_frames_;
    window_chunks_ = n_keys_ / D_;
    if (cfg.window_stride_chunks < 1 || cfg.window_stride_chunks > window_chunks_)
        fail_validation("window_stride_chunks out of range");
    if (!std::isfinite(cfg.wait_bias)) fail_validation("wait_bias must be finite");
    if (cfg.step_overhead_ms < 0) fail_validation("step_overhead_ms must be >= 0");
    for (const auto &[lo, hi] : cfg.stalls)
        if (lo < 0 || hi <= lo) fail_validation("stall range is invalid");
    if (vocab.vocab_size != m.vocab)
        fail_validation("vocabulary size does not match the model");

    ctx_ = prompt_tokens(cfg.lang, cfg.task, vocab);
    prompt_len_ = (int)ctx_.size();
    if (prompt_len_ >= m.n_text_ctx)
        fail_validation("prompt does not fit the decoder context");
    for (int32_t t : ctx_)
        if (t < 0 || t >= m.vocab) fail_validation("prompt token outside the vocabulary");

    feats_win_ = Mat<float>::Zero(m.feat_dim, n_frames_);
    conv1_post_ = Mat<float>::Zero(m.d_model, n_frames_);
    enc_kv_.resize(m.n_enc_layers);
    for (EncKV &kv : enc_kv_) {
        kv.k = Mat<float>::Zero(m.d_model, n_keys_);
        kv.v = Mat<float>::Zero(m.d_model, n_keys_);
    }
    enc_out_ = Mat<float>::Zero(m.d_model, n_keys_);
    epoch_ = std::chrono::steady_clock::now();
}

bool Stream::stalled(int64_t chunk) const {
    for (const auto &[lo, hi] : cfg_.stalls)
        if (chunk >= lo && chunk < hi) return true;
    return false;
}

// ─── Cached encoder maintenance ──────────────────────────────────────────────

// Runs one key column through the conv2 tap and every encoder layer, reading
// and writing the per-layer K/V caches at column n. Settled keys only ever
// attend settled keys (self visibility is causal), so a column computed from
// settled frames is final; lookahead columns are recomputed every step.
void Stream::encode_key(int n) {
    const ModelConfig &m = w_.cfg;
    const int d = m.d_model;
    const int ff = (int)w_.enc[0].mlp.fc.w.rows();
    Vec<float> pre(d), col(d), ln_y(d), q(d), mixed(d), o(d), xhat(d);
    Vec<float> fc_pre(ff), fc_post(ff);
    float rstd;

    conv3_col(w_.conv2, conv1_post_, 2 * n, pre.data());
    gelu_col(pre.data(), col.data(), d);
    col += w_.enc_pos.col(n);
    for (int li = 0; li < m.n_enc_layers; ++li) {
        const AttnW<float> &aw = w_.enc[li].attn;
        ln_col(aw.ln, col.data(), ln_y.data(), xhat.data(), &rstd);
        linear_col(aw.q, ln_y.data(), q.data());
        linear_col(aw.k, ln_y.data(), enc_kv_[li].k.col(n).data());
        linear_col(aw.v, ln_y.data(), enc_kv_[li].v.col(n).data());
        attn_row(enc_kv_[li].k, enc_kv_[li].v, q.data(), n + 1, m.n_heads,
                 mixed.data());
        linear_col(aw.o, mixed.data(), o.data());
        col += o;
        const MlpW<float> &mw = w_.enc[li].mlp;
        ln_col(mw.ln, col.data(), ln_y.data(), xhat.data(), &rstd);
        linear_col(mw.fc, ln_y.data(), fc_pre.data());
        gelu_col(fc_pre.data(), fc_post.data(), ff);
        linear_col(mw.proj, fc_post.data(), o.data());
        col += o;
    }
    ln_col(w_.enc_ln_post, col.data(), enc_out_.col(n).data(), xhat.data(), &rstd);
}

void Stream::append_settled() {
    const int new_frames = (int)(chunk_frames_ * (chunks_ - origin_));
    for (int t = settled_frames_; t < new_frames; ++t) {
        conv3_col(w_.conv1, feats_win_, t, conv1_post_.col(t).data());
        gelu_col(conv1_post_.col(t).data(), conv1_post_.col(t).data(),
                 (int)conv1_post_.rows());
    }
    const int new_keys = (int)(D_ * (chunks_ - origin_));
    for (int n = settled_keys_; n < new_keys; ++n) encode_key(n);
    settled_frames_ = new_frames;
    settled_keys_ = new_keys;
}

void Stream::refresh_tail(int horizon) {
    if (horizon <= settled_keys_) return;
    const int t_end = std::min(2 * horizon, n_frames_);
    for (int t = settled_frames_; t < t_end; ++t) {
        conv3_col(w_.conv1, feats_win_, t, conv1_post_.col(t).data());
        gelu_col(conv1_post_.col(t).data(), conv1_post_.col(t).data(),
                 (int)conv1_post_.rows());
    }
    for (int n = settled_keys_; n < horizon; ++n) encode_key(n);
}

void Stream::rebase() {
    origin_ += cfg_.window_stride_chunks;
    while ((int64_t)raw_.size() > chunks_ - origin_) raw_.pop_front();
    feats_win_.setZero();
    for (size_t i = 0; i < raw_.size(); ++i)
        feats_win_.middleCols((int64_t)i * chunk_frames_, chunk_frames_) = raw_[i];
    settled_frames_ = 0;
    settled_keys_ = 0;
    if (cfg_.cached) append_settled();
}

// ─── Decode step ─────────────────────────────────────────────────────────────

EmissionRecord Stream::push_chunk(const Mat<float> &frames) {
    const ModelConfig &m = w_.cfg;
    if ((int)frames.rows() != m.feat_dim || (int)frames.cols() != chunk_frames_)
        fail_validation("chunk must be feat_dim x chunk_frames");
    auto t0 = std::chrono::steady_clock::now();

    if (chunks_ - origin_ == window_chunks_) rebase();
    raw_.push_back(frames);
    feats_win_.middleCols((chunks_ - origin_) * chunk_frames_, chunk_frames_) = frames;
    ++chunks_;
    if (cfg_.cached) append_settled();

    int32_t token;
    if (stalled(chunks_ - 1)) {
        last_logits_.resize(0, 0);
        token = vocab_.wait;
    } else {
        const int M = (int)ctx_.size();
        Mat<float> logits;
        if (cfg_.cached) {
            refresh_tail(std::min(D_ * (M - 1), n_keys_));
            logits = decoder_forward(w_, enc_out_, ctx_, (DecActs<float> *)nullptr);
        } else {
            Mat<float> enc = encoder_forward(w_, feats_win_, (EncActs<float> *)nullptr);
            logits = decoder_forward(w_, enc, ctx_, (DecActs<float> *)nullptr);
        }
        last_logits_ = logits.col(M - 1);
        // The decision set mirrors the label space at non-prompt positions:
        // content tokens and WAIT. Other specials never compete.
        token = -1;
        float best = 0.0f;
        for (int v = 0; v < m.vocab; ++v) {
            if (vocab_.is_special(v) && v != vocab_.wait) continue;
            float s = last_logits_(v) + (v == vocab_.wait ? cfg_.wait_bias : 0.0f);
            if (token < 0 || s > best) {
                best = s;
                token = v;
            }
        }
    }

    if ((int)ctx_.size() == m.n_text_ctx) ctx_.erase(ctx_.begin() + prompt_len_);
    ctx_.push_back(token);

    processing_ms_ +=
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();

    EmissionRecord rec;
    rec.tok = token;
    rec.action = token == vocab_.wait ? 'R' : 'W';
    if (rec.action == 'W') rec.text = tok_.decode({token});
    rec.src_ms = chunk_ms_ * chunks_;
    if (cfg_.virtual_clock) {
        rec.wall_ms = rec.src_ms + cfg_.step_overhead_ms;
    } else {
        rec.wall_ms = (int64_t)std::llround(
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                      epoch_)
                .count());
    }
    rec.wall_ms = std::max(rec.wall_ms, last_wall_ + 1);
    last_wall_ = rec.wall_ms;
    log_.records.push_back(rec);
    return rec;
}

// ─── Drivers ─────────────────────────────────────────────────────────────────

void feed_stream(Stream &stream, const Features &feats) {
    const int cf = stream.chunk_frames();
    if (feats.frame_ms != 10) fail_validation("features must use 10 ms frames");
    const int64_t n_chunks = feats.n_frames() / cf;
    Mat<float> block((int)feats.dim, cf);
    for (int64_t c = 0; c < n_chunks; ++c) {
        for (int t = 0; t < cf; ++t)
            for (int ch = 0; ch < feats.dim; ++ch)
                block(ch, t) = feats.frame(c * cf + t)[ch];
        stream.push_chunk(block);
    }
}

EmissionLog run_stream(const Weights<float> &w, const Vocabulary &vocab,
                       const Tokenizer &tok, const Features &feats,
                       const StreamConfig &cfg, double *processing_ms) {
    Stream stream(w, vocab, tok, cfg);
    feed_stream(stream, feats);
    if (processing_ms) *processing_ms = stream.processing_ms();
    return stream.log();
}

// ─── Latency/quality sweep ───────────────────────────────────────────────────

std::string transcript_text(const Transcript &t) {
    std::string text;
    for (const WordSpan &w : t.words) text += " " + w.text;
    return text;
}

std::vector<RefSegment> transcript_segments(const Transcript &t, int64_t segment_ms,
                                            int64_t total_ms) {
    if (segment_ms < 1) fail_validation("segment_ms must be positive");
    if (total_ms <= 0) total_ms = t.audio_duration_ms;
    if (total_ms <= 0) fail_validation("transcript has no duration");
    std::vector<RefSegment> segs;
    for (int64_t start = 0; start < total_ms; start += segment_ms) {
        RefSegment s;
        s.start_ms = start;
        s.end_ms = std::min(start + segment_ms, total_ms);
        segs.push_back(s);
    }
    for (const WordSpan &w : t.words) {
        int64_t idx = std::min((std::max(w.end_ms, (int64_t)1) - 1) / segment_ms,
                               (int64_t)segs.size() - 1);
        segs[idx].text += " " + w.text;
    }
    return segs;
}

std::vector<SweepRow> latency_quality_sweep(const Weights<float> &w,
                                            const Vocabulary &vocab,
                                            const Tokenizer &tok,
                                            const std::vector<EvalStream> &streams,
                                            const std::vector<double> &biases,
                                            const StreamConfig &base) {
    if (streams.empty()) fail_validation("sweep needs at least one stream");
    if (biases.empty()) fail_validation("sweep needs at least one bias");
    std::vector<SweepRow> rows;
    for (double bias : biases) {
        StreamConfig cfg = base;
        cfg.wait_bias = (float)bias;
        SweepRow row;
        row.bias = bias;
        std::vector<std::string> hyps, refs;
        double laal_sum = 0, sl_sum = 0, ca_sum = 0, proc = 0, audio = 0;
        for (const EvalStream &es : streams) {
            Stream st(w, vocab, tok, cfg);
            feed_stream(st, es.feats);
            const EmissionLog &lg = st.log();
            const int64_t T = st.audio_ms();

            std::string ref = transcript_text(es.transcript);
            std::string hyp;
            std::vector<int64_t> walls;
            for (const EmissionRecord &r : lg.writes()) {
                hyp += r.text;
                walls.push_back(r.wall_ms);
            }
            hyps.push_back(hyp);
            refs.push_back(ref);

            SegmentEval seg =
                segment_from_log(lg, T, (int64_t)tok.encode(ref).size());
            laal_sum += laal(seg);
            ca_sum += ca_laal(seg, walls, 0);
            sl_sum += stream_laal_lite(lg, transcript_segments(es.transcript, 10000, T),
                                       tok);
            proc += st.processing_ms();
            audio += (double)T;
        }
        const double n = (double)streams.size();
        row.laal_ms = laal_sum / n;
        row.stream_laal_ms = sl_sum / n;
        row.ca_ms = ca_sum / n;
        row.rtf = rtf(proc, audio);
        row.bleu = bleu(hyps, refs);
        rows.push_back(row);
    }
    return rows;
}

} // namespace sst
