#include "sst/model.hpp"

#include <cmath>
#include <cstring>

#include <json.hpp>

#include "sst/timeline.hpp"

#if defined(__GNUC__)
#define SST_NOINLINE __attribute__((noinline))
#else
#define SST_NOINLINE
#endif

namespace sst {

using nlohmann::json;

// ─── Configuration ───────────────────────────────────────────────────────────

void validate_config(const ModelConfig &cfg) {
    if (cfg.feat_dim <= 0 || cfg.d_model <= 0 || cfg.n_heads <= 0 ||
        cfg.d_ff <= 0 || cfg.n_enc_layers <= 0 || cfg.n_dec_layers <= 0)
        fail_validation("model dimensions must be positive");
    if (cfg.d_model % cfg.n_heads != 0)
        fail_validation("head count must divide the model width");
    if (cfg.vocab < 2)
        fail_validation("vocabulary too small");
    if (cfg.n_audio_keys <= 0 || cfg.n_text_ctx <= 0 || cfg.dilation <= 0)
        fail_validation("context sizes must be positive");
}

// ─── Initialization ──────────────────────────────────────────────────────────

namespace {

template <typename S>
void init_linear(LinearW<S> &lin, int out, int in, bool bias, Rng &rng) {
    lin.w.resize(out, in);
    double scale = 1.0 / std::sqrt((double)in);
    for (int j = 0; j < in; ++j)
        for (int i = 0; i < out; ++i)
            lin.w(i, j) = (S)(rng.normal() * scale);
    lin.has_bias = bias;
    if (bias)
        lin.b = Mat<S>::Zero(out, 1);
    else
        lin.b.resize(0, 0);
}

template <typename S> void init_ln(LayerNormW<S> &ln, int d) {
    ln.g = Mat<S>::Ones(d, 1);
    ln.b = Mat<S>::Zero(d, 1);
}

template <typename S>
void init_attn(AttnW<S> &a, int d, bool o_bias, Rng &rng) {
    init_ln(a.ln, d);
    init_linear(a.q, d, d, true, rng);
    init_linear(a.k, d, d, true, rng);
    init_linear(a.v, d, d, true, rng);
    init_linear(a.o, d, d, o_bias, rng);
}

template <typename S> void init_mlp(MlpW<S> &m, int d, int ff, Rng &rng) {
    init_ln(m.ln, d);
    init_linear(m.fc, ff, d, true, rng);
    init_linear(m.proj, d, ff, true, rng);
}

} // namespace

template <typename S>
void Weights<S>::init(const ModelConfig &config, Rng &rng) {
    validate_config(config);
    cfg = config;
    const int d = cfg.d_model;
    init_linear(conv1, d, 3 * cfg.feat_dim, true, rng);
    init_linear(conv2, d, 3 * d, true, rng);
    enc.resize(cfg.n_enc_layers);
    for (auto &layer : enc) {
        init_attn(layer.attn, d, true, rng);
        init_mlp(layer.mlp, d, cfg.d_ff, rng);
    }
    init_ln(enc_ln_post, d);
    tok_emb.resize(d, cfg.vocab);
    for (int j = 0; j < cfg.vocab; ++j)
        for (int i = 0; i < d; ++i)
            tok_emb(i, j) = (S)(rng.normal() * 0.05);
    pos_emb.resize(d, cfg.n_text_ctx);
    for (int j = 0; j < cfg.n_text_ctx; ++j)
        for (int i = 0; i < d; ++i)
            pos_emb(i, j) = (S)(rng.normal() * 0.05);
    dec.resize(cfg.n_dec_layers);
    for (auto &layer : dec) {
        init_attn(layer.self, d, true, rng);
        init_attn(layer.cross, d, false, rng); // bias-free out-projection
        init_mlp(layer.mlp, d, cfg.d_ff, rng);
    }
    init_ln(dec_ln_post, d);
    enc_pos.resize(d, cfg.n_audio_keys);
    for (int n = 0; n < cfg.n_audio_keys; ++n)
        sin_pos_col(n + 1, d, enc_pos.col(n).data());
}

template <typename S> void Weights<S>::zero_like(const Weights<S> &shape) {
    *this = shape;
    for (auto &[name, m] : tensors())
        m->setZero();
}

namespace {

template <typename W, typename M>
std::vector<std::pair<std::string, M *>> enumerate_tensors(W &w) {
    std::vector<std::pair<std::string, M *>> out;
    auto add_ln = [&](const std::string &base, auto &ln) {
        out.emplace_back(base + ".g", &ln.g);
        out.emplace_back(base + ".b", &ln.b);
    };
    auto add_lin = [&](const std::string &base, auto &lin) {
        out.emplace_back(base + ".w", &lin.w);
        if (lin.has_bias)
            out.emplace_back(base + ".b", &lin.b);
    };
    auto add_attn = [&](const std::string &base, auto &a) {
        add_ln(base + ".ln", a.ln);
        add_lin(base + ".q", a.q);
        add_lin(base + ".k", a.k);
        add_lin(base + ".v", a.v);
        add_lin(base + ".o", a.o);
    };
    auto add_mlp = [&](const std::string &base, auto &m) {
        add_ln(base + ".ln", m.ln);
        add_lin(base + ".fc", m.fc);
        add_lin(base + ".proj", m.proj);
    };
    add_lin("conv1", w.conv1);
    add_lin("conv2", w.conv2);
    for (size_t i = 0; i < w.enc.size(); ++i) {
        std::string base = "enc." + std::to_string(i);
        add_attn(base + ".attn", w.enc[i].attn);
        add_mlp(base + ".mlp", w.enc[i].mlp);
    }
    add_ln("enc.ln_post", w.enc_ln_post);
    out.emplace_back("dec.tok_emb", &w.tok_emb);
    out.emplace_back("dec.pos_emb", &w.pos_emb);
    for (size_t i = 0; i < w.dec.size(); ++i) {
        std::string base = "dec." + std::to_string(i);
        add_attn(base + ".self", w.dec[i].self);
        add_attn(base + ".cross", w.dec[i].cross);
        add_mlp(base + ".mlp", w.dec[i].mlp);
    }
    add_ln("dec.ln_post", w.dec_ln_post);
    return out;
}

} // namespace

template <typename S>
std::vector<std::pair<std::string, Mat<S> *>> Weights<S>::tensors() {
    return enumerate_tensors<Weights<S>, Mat<S>>(*this);
}

template <typename S>
std::vector<std::pair<std::string, const Mat<S> *>>
Weights<S>::tensors() const {
    return enumerate_tensors<const Weights<S>, const Mat<S>>(*this);
}

template <typename S>
template <typename T>
Weights<T> Weights<S>::cast() const {
    Weights<T> out;
    Rng rng(0);
    out.init(cfg, rng);
    auto src = tensors();
    auto dst = out.tensors();
    for (size_t i = 0; i < src.size(); ++i)
        *dst[i].second = src[i].second->template cast<T>();
    return out;
}

// ─── Per-position primitives ─────────────────────────────────────────────────

template <typename S> S gelu_scalar(S x) {
    return (S)0.5 * x * ((S)1 + std::erf(x * (S)M_SQRT1_2));
}

template <typename S> S gelu_grad_scalar(S x) {
    S phi = std::exp((S)-0.5 * x * x) *
            (S)0.3989422804014326779; // 1/sqrt(2π)
    S Phi = (S)0.5 * ((S)1 + std::erf(x * (S)M_SQRT1_2));
    return Phi + x * phi;
}

template <typename S>
SST_NOINLINE void gelu_col(const S *x, S *y, int d) {
    for (int i = 0; i < d; ++i)
        y[i] = gelu_scalar(x[i]);
}

template <typename S>
SST_NOINLINE void ln_col(const LayerNormW<S> &ln, const S *x, S *y, S *xhat,
                         S *rstd) {
    const int d = (int)ln.g.rows();
    Eigen::Map<const Vec<S>> xv(x, d);
    S mu = xv.mean();
    S var = (xv.array() - mu).square().sum() / (S)d;
    S r = (S)1 / std::sqrt(var + (S)1e-5);
    for (int i = 0; i < d; ++i) {
        S h = (x[i] - mu) * r;
        xhat[i] = h;
        y[i] = ln.g(i, 0) * h + ln.b(i, 0);
    }
    *rstd = r;
}

template <typename S>
SST_NOINLINE void linear_col(const LinearW<S> &lin, const S *x, S *y) {
    Eigen::Map<const Vec<S>> xv(x, lin.w.cols());
    Eigen::Map<Vec<S>> yv(y, lin.w.rows());
    yv.noalias() = lin.w * xv;
    if (lin.has_bias)
        yv += lin.b.col(0);
}

template <typename S>
SST_NOINLINE void attn_row(const Mat<S> &K, const Mat<S> &V, const S *q,
                           int n_vis, int n_heads, S *out) {
    const int d = (int)K.rows();
    const int dh = d / n_heads;
    if (n_vis == 0) {
        std::fill(out, out + d, (S)0);
        return;
    }
    const S scale = (S)1 / std::sqrt((S)dh);
    Vec<S> w(n_vis);
    for (int h = 0; h < n_heads; ++h) {
        Eigen::Map<const Vec<S>> qh(q + h * dh, dh);
        auto Kh = K.block(h * dh, 0, dh, n_vis);
        auto Vh = V.block(h * dh, 0, dh, n_vis);
        w.noalias() = Kh.transpose() * qh;
        w *= scale;
        S m = w.maxCoeff();
        w = (w.array() - m).exp();
        w /= w.sum();
        Eigen::Map<Vec<S>> oh(out + h * dh, dh);
        oh.noalias() = Vh * w;
    }
}

template <typename S> void sin_pos_col(int p, int d, S *out) {
    for (int i = 0; i < d / 2; ++i) {
        double freq = std::pow(10000.0, -2.0 * i / d);
        out[2 * i] = (S)std::sin(p * freq);
        out[2 * i + 1] = (S)std::cos(p * freq);
    }
    if (d % 2)
        out[d - 1] = (S)std::sin(p * std::pow(10000.0, -(double)(d - 1) / d));
}

// Convolution tap: stack src columns last−2, last−1, last (negative columns
// read as zero) and apply the linear map. Shared by batch and streaming.
template <typename S>
SST_NOINLINE void conv3_col(const LinearW<S> &lin, const Mat<S> &src,
                            int last, S *pre) {
    const int in = (int)src.rows();
    Vec<S> cat = Vec<S>::Zero(3 * in);
    for (int k = 0; k < 3; ++k) {
        int c = last - 2 + k;
        if (c >= 0)
            cat.segment(k * in, in) = src.col(c);
    }
    linear_col(lin, cat.data(), pre);
}

// ─── Forward ─────────────────────────────────────────────────────────────────

namespace {

template <typename S> struct ColBuf {
    Vec<S> ln_y, pre, mid;
};

// One pre-LN attention sublayer over columns [first, count) of stream x.
// Query rows use visibility vis(n). K/V caches may hold earlier columns.
template <typename S, typename VisFn>
void attn_sublayer(const AttnW<S> &aw, Mat<S> &x, AttnActs<S> &A, int count,
                   int n_heads, VisFn vis, const Mat<S> *kv_src) {
    const int d = (int)x.rows();
    Vec<S> ln_y(d);
    const Mat<S> &src = kv_src ? *kv_src : x;
    const int n_kv = kv_src ? (int)src.cols() : count;
    A.q.resize(d, count);
    A.k.resize(d, n_kv);
    A.v.resize(d, n_kv);
    A.mixed.resize(d, count);
    A.ln.xhat.resize(d, count);
    A.ln.rstd.resize(count);
    if (kv_src) {
        // Cross attention: keys/values come straight from the source stream.
        for (int n = 0; n < n_kv; ++n) {
            linear_col(aw.k, src.col(n).data(), A.k.col(n).data());
            linear_col(aw.v, src.col(n).data(), A.v.col(n).data());
        }
        for (int n = 0; n < count; ++n) {
            ln_col(aw.ln, x.col(n).data(), ln_y.data(),
                   A.ln.xhat.col(n).data(), &A.ln.rstd(n));
            linear_col(aw.q, ln_y.data(), A.q.col(n).data());
        }
    } else {
        // Self attention: normalized stream feeds q, k and v alike.
        for (int n = 0; n < count; ++n) {
            ln_col(aw.ln, x.col(n).data(), ln_y.data(),
                   A.ln.xhat.col(n).data(), &A.ln.rstd(n));
            linear_col(aw.q, ln_y.data(), A.q.col(n).data());
            linear_col(aw.k, ln_y.data(), A.k.col(n).data());
            linear_col(aw.v, ln_y.data(), A.v.col(n).data());
        }
    }
    Vec<S> o(d);
    for (int n = 0; n < count; ++n) {
        attn_row(A.k, A.v, A.q.col(n).data(), vis(n), n_heads,
                 A.mixed.col(n).data());
        linear_col(aw.o, A.mixed.col(n).data(), o.data());
        x.col(n) += o;
    }
    A.out = x.leftCols(count);
}

template <typename S>
void mlp_sublayer(const MlpW<S> &mw, Mat<S> &x, MlpActs<S> &M, int count) {
    const int d = (int)x.rows();
    const int ff = (int)mw.fc.w.rows();
    Vec<S> ln_y(d), o(d);
    M.ln.xhat.resize(d, count);
    M.ln.rstd.resize(count);
    M.fc_pre.resize(ff, count);
    M.fc_post.resize(ff, count);
    for (int n = 0; n < count; ++n) {
        ln_col(mw.ln, x.col(n).data(), ln_y.data(), M.ln.xhat.col(n).data(),
               &M.ln.rstd(n));
        linear_col(mw.fc, ln_y.data(), M.fc_pre.col(n).data());
        gelu_col(M.fc_pre.col(n).data(), M.fc_post.col(n).data(), ff);
        linear_col(mw.proj, M.fc_post.col(n).data(), o.data());
        x.col(n) += o;
    }
    M.out = x.leftCols(count);
}

} // namespace

template <typename S>
Mat<S> encoder_forward(const Weights<S> &w, const Mat<S> &feats,
                       EncActs<S> *acts) {
    const ModelConfig &cfg = w.cfg;
    if ((int)feats.rows() != cfg.feat_dim)
        fail_validation("feature dimension does not match the model");
    const int T = (int)feats.cols();
    if (T == 0 || T % 2 != 0)
        fail_validation("frame count must be positive and even");
    const int K = T / 2;
    if (K > cfg.n_audio_keys)
        fail_validation("audio longer than the encoder window");
    const int d = cfg.d_model;

    EncActs<S> scratch;
    EncActs<S> &A = acts ? *acts : scratch;
    A.conv1_pre.resize(d, T);
    A.conv1_post.resize(d, T);
    A.conv2_pre.resize(d, K);
    A.x0.resize(d, K);
    for (int t = 0; t < T; ++t) {
        conv3_col(w.conv1, feats, t, A.conv1_pre.col(t).data());
        gelu_col(A.conv1_pre.col(t).data(), A.conv1_post.col(t).data(), d);
    }
    for (int n = 0; n < K; ++n) {
        conv3_col(w.conv2, A.conv1_post, 2 * n, A.conv2_pre.col(n).data());
        gelu_col(A.conv2_pre.col(n).data(), A.x0.col(n).data(), d);
        A.x0.col(n) += w.enc_pos.col(n);
    }

    Mat<S> x = A.x0;
    A.attn.resize(cfg.n_enc_layers);
    A.mlp.resize(cfg.n_enc_layers);
    for (int li = 0; li < cfg.n_enc_layers; ++li) {
        attn_sublayer(w.enc[li].attn, x, A.attn[li], K, cfg.n_heads,
                      [](int n) { return n + 1; }, (const Mat<S> *)nullptr);
        mlp_sublayer(w.enc[li].mlp, x, A.mlp[li], K);
    }
    A.ln_post.xhat.resize(d, K);
    A.ln_post.rstd.resize(K);
    Mat<S> out(d, K);
    for (int n = 0; n < K; ++n)
        ln_col(w.enc_ln_post, x.col(n).data(), out.col(n).data(),
               A.ln_post.xhat.col(n).data(), &A.ln_post.rstd(n));
    return out;
}

template <typename S>
Mat<S> decoder_forward(const Weights<S> &w, const Mat<S> &enc_out,
                       const std::vector<int32_t> &tokens, DecActs<S> *acts) {
    const ModelConfig &cfg = w.cfg;
    const int M = (int)tokens.size();
    if (M == 0)
        fail_validation("empty token context");
    if (M > cfg.n_text_ctx)
        fail_validation("token context longer than the decoder window");
    const int K = (int)enc_out.cols();
    const int d = cfg.d_model;
    for (int32_t t : tokens)
        if (t < 0 || t >= cfg.vocab)
            fail_validation("token id out of range");

    DecActs<S> scratch;
    DecActs<S> &A = acts ? *acts : scratch;
    A.x0.resize(d, M);
    for (int j = 0; j < M; ++j)
        A.x0.col(j) = w.tok_emb.col(tokens[j]) + w.pos_emb.col(j);

    Mat<S> x = A.x0;
    A.self.resize(cfg.n_dec_layers);
    A.cross.resize(cfg.n_dec_layers);
    A.mlp.resize(cfg.n_dec_layers);
    const int D = cfg.dilation;
    for (int li = 0; li < cfg.n_dec_layers; ++li) {
        attn_sublayer(w.dec[li].self, x, A.self[li], M, cfg.n_heads,
                      [](int j) { return j + 1; }, (const Mat<S> *)nullptr);
        attn_sublayer(w.dec[li].cross, x, A.cross[li], M, cfg.n_heads,
                      [&](int j) { return std::min(D * j, K); }, &enc_out);
        mlp_sublayer(w.dec[li].mlp, x, A.mlp[li], M);
    }
    A.ln_post.xhat.resize(d, M);
    A.ln_post.rstd.resize(M);
    A.hidden.resize(d, M);
    for (int j = 0; j < M; ++j)
        ln_col(w.dec_ln_post, x.col(j).data(), A.hidden.col(j).data(),
               A.ln_post.xhat.col(j).data(), &A.ln_post.rstd(j));
    Mat<S> logits(cfg.vocab, M);
    for (int j = 0; j < M; ++j)
        logits.col(j).noalias() = w.tok_emb.transpose() * A.hidden.col(j);
    return logits;
}

// ─── Loss ────────────────────────────────────────────────────────────────────

template <typename S>
S masked_loss(const Mat<S> &logits, const std::vector<int32_t> &tokens,
              const std::vector<uint8_t> &active, Mat<S> *d_logits) {
    const int M = (int)tokens.size();
    if ((int)logits.cols() != M)
        fail_validation("logit/token length mismatch");
    if ((int)active.size() < M)
        fail_validation("loss mask shorter than the context");
    if (d_logits)
        *d_logits = Mat<S>::Zero(logits.rows(), logits.cols());
    S loss = 0;
    int counted = 0;
    for (int j = 0; j + 1 < M; ++j) {
        if (!active[j + 1]) // predicting 1-based position j+2
            continue;
        const int32_t target = tokens[j + 1];
        Vec<S> col = logits.col(j);
        S m = col.maxCoeff();
        Vec<S> e = (col.array() - m).exp();
        S z = e.sum();
        loss += std::log(z) + m - col(target);
        if (d_logits) {
            d_logits->col(j) = e / z;
            (*d_logits)(target, j) -= (S)1;
        }
        ++counted;
    }
    if (counted == 0)
        fail_validation("no active positions to score");
    if (d_logits)
        *d_logits /= (S)counted;
    return loss / (S)counted;
}

// ─── Backward ────────────────────────────────────────────────────────────────

namespace {

template <typename S>
void ln_backward_col(const LayerNormW<S> &ln, const S *xhat, S rstd,
                     const S *dy, S *dx_add, LayerNormW<S> &g) {
    const int d = (int)ln.g.rows();
    S mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (int i = 0; i < d; ++i) {
        S dxh = dy[i] * ln.g(i, 0);
        mean_dxhat += dxh;
        mean_dxhat_xhat += dxh * xhat[i];
        g.g(i, 0) += dy[i] * xhat[i];
        g.b(i, 0) += dy[i];
    }
    mean_dxhat /= (S)d;
    mean_dxhat_xhat /= (S)d;
    for (int i = 0; i < d; ++i) {
        S dxh = dy[i] * ln.g(i, 0);
        dx_add[i] += rstd * (dxh - mean_dxhat - xhat[i] * mean_dxhat_xhat);
    }
}

// d_in += Wᵀ·d_out; dW += d_out·inᵀ; db += d_out. The layer-norm output
// feeding a linear is rebuilt from xhat on demand.
template <typename S>
void linear_backward(const LinearW<S> &lin, const Mat<S> &input,
                     const Mat<S> &d_out, Mat<S> *d_in, LinearW<S> &g) {
    g.w.noalias() += d_out * input.transpose();
    if (lin.has_bias)
        g.b.col(0).noalias() += d_out.rowwise().sum();
    if (d_in)
        d_in->noalias() += lin.w.transpose() * d_out;
}

template <typename S>
Mat<S> ln_output(const LayerNormW<S> &ln, const LnActs<S> &acts, int count) {
    Mat<S> y = acts.xhat.leftCols(count);
    y.array().colwise() *= ln.g.col(0).array();
    y.colwise() += ln.b.col(0);
    return y;
}

// Recomputes each row's softmax from saved q/k, then pushes gradients to
// dQ/dK/dV. Visibility must match the forward pass.
template <typename S, typename VisFn>
void attn_rows_backward(const AttnActs<S> &A, const Mat<S> &d_mixed,
                        int count, int n_heads, VisFn vis, Mat<S> &dQ,
                        Mat<S> &dK, Mat<S> &dV) {
    const int d = (int)A.k.rows();
    const int dh = d / n_heads;
    const S scale = (S)1 / std::sqrt((S)dh);
    for (int n = 0; n < count; ++n) {
        const int n_vis = vis(n);
        if (n_vis == 0)
            continue;
        for (int h = 0; h < n_heads; ++h) {
            auto Kh = A.k.block(h * dh, 0, dh, n_vis);
            auto Vh = A.v.block(h * dh, 0, dh, n_vis);
            Eigen::Map<const Vec<S>> qh(A.q.col(n).data() + h * dh, dh);
            Vec<S> w = Kh.transpose() * qh * scale;
            S m = w.maxCoeff();
            w = (w.array() - m).exp();
            w /= w.sum();
            Eigen::Map<const Vec<S>> doh(d_mixed.col(n).data() + h * dh, dh);
            Vec<S> dw = Vh.transpose() * doh;
            dV.block(h * dh, 0, dh, n_vis).noalias() += doh * w.transpose();
            S dot = w.dot(dw);
            Vec<S> ds = w.array() * (dw.array() - dot);
            dQ.col(n).segment(h * dh, dh).noalias() += Kh * ds * scale;
            dK.block(h * dh, 0, dh, n_vis).noalias() +=
                qh * ds.transpose() * scale;
        }
    }
}

template <typename S>
void ln_cols_backward(const LayerNormW<S> &ln, const LnActs<S> &acts,
                      const Mat<S> &dy, Mat<S> &dx_add, LayerNormW<S> &g) {
    for (int n = 0; n < (int)dy.cols(); ++n)
        ln_backward_col(ln, acts.xhat.col(n).data(), acts.rstd(n),
                        dy.col(n).data(), dx_add.col(n).data(), g);
}

// Pre-LN attention sublayer backward. d_x arrives as the gradient at the
// sublayer output and leaves as the gradient at its input. For cross
// attention d_kv_src collects the key/value source gradient.
template <typename S, typename VisFn>
void attn_sublayer_backward(const AttnW<S> &aw, const AttnActs<S> &A,
                            Mat<S> &d_x, int n_heads, VisFn vis, AttnW<S> &g,
                            const Mat<S> *kv_src, Mat<S> *d_kv_src) {
    const int count = (int)d_x.cols();
    Mat<S> d_mixed = Mat<S>::Zero(A.mixed.rows(), count);
    linear_backward(aw.o, A.mixed, d_x, &d_mixed, g.o);
    Mat<S> dQ = Mat<S>::Zero(A.q.rows(), count);
    Mat<S> dK = Mat<S>::Zero(A.k.rows(), A.k.cols());
    Mat<S> dV = Mat<S>::Zero(A.v.rows(), A.v.cols());
    attn_rows_backward(A, d_mixed, count, n_heads, vis, dQ, dK, dV);
    Mat<S> ln_y = ln_output(aw.ln, A.ln, count);
    Mat<S> d_ln_y = Mat<S>::Zero(ln_y.rows(), count);
    if (kv_src) {
        linear_backward(aw.q, ln_y, dQ, &d_ln_y, g.q);
        linear_backward(aw.k, *kv_src, dK, d_kv_src, g.k);
        linear_backward(aw.v, *kv_src, dV, d_kv_src, g.v);
    } else {
        linear_backward(aw.q, ln_y, dQ, &d_ln_y, g.q);
        linear_backward(aw.k, ln_y, dK, &d_ln_y, g.k);
        linear_backward(aw.v, ln_y, dV, &d_ln_y, g.v);
    }
    // Residual: gradient flows through unchanged, plus the LN branch.
    ln_cols_backward(aw.ln, A.ln, d_ln_y, d_x, g.ln);
}

template <typename S>
void mlp_sublayer_backward(const MlpW<S> &mw, const MlpActs<S> &M,
                           Mat<S> &d_x, MlpW<S> &g) {
    const int count = (int)d_x.cols();
    const int ff = (int)mw.fc.w.rows();
    Mat<S> d_post = Mat<S>::Zero(ff, count);
    linear_backward(mw.proj, M.fc_post, d_x, &d_post, g.proj);
    Mat<S> d_pre =
        d_post.array() * M.fc_pre.leftCols(count).unaryExpr([](S v) {
            return gelu_grad_scalar(v);
        }).array();
    Mat<S> ln_y = ln_output(mw.ln, M.ln, count);
    Mat<S> d_ln_y = Mat<S>::Zero(ln_y.rows(), count);
    linear_backward(mw.fc, ln_y, d_pre, &d_ln_y, g.fc);
    ln_cols_backward(mw.ln, M.ln, d_ln_y, d_x, g.ln);
}

} // namespace

template <typename S>
void model_backward(const Weights<S> &w, const Mat<S> &feats,
                    const std::vector<int32_t> &tokens,
                    const EncActs<S> &enc_acts, const Mat<S> &enc_out,
                    const DecActs<S> &dec_acts, const Mat<S> &d_logits,
                    Weights<S> &grads) {
    const ModelConfig &cfg = w.cfg;
    const int M = (int)tokens.size();
    const int K = (int)enc_out.cols();
    const int d = cfg.d_model;
    const int D = cfg.dilation;

    // Output head (tied embedding): logits_j = Eᵀ·hidden_j.
    Mat<S> d_hidden(d, M);
    d_hidden.noalias() = w.tok_emb * d_logits;
    grads.tok_emb.noalias() += dec_acts.hidden * d_logits.transpose();

    Mat<S> d_x = Mat<S>::Zero(d, M);
    ln_cols_backward(w.dec_ln_post, dec_acts.ln_post, d_hidden, d_x,
                     grads.dec_ln_post);

    Mat<S> d_enc = Mat<S>::Zero(d, K);
    for (int li = cfg.n_dec_layers - 1; li >= 0; --li) {
        mlp_sublayer_backward(w.dec[li].mlp, dec_acts.mlp[li], d_x,
                              grads.dec[li].mlp);
        attn_sublayer_backward(
            w.dec[li].cross, dec_acts.cross[li], d_x, cfg.n_heads,
            [&](int j) { return std::min(D * j, K); }, grads.dec[li].cross,
            &enc_out, &d_enc);
        attn_sublayer_backward(w.dec[li].self, dec_acts.self[li], d_x,
                               cfg.n_heads, [](int j) { return j + 1; },
                               grads.dec[li].self, (const Mat<S> *)nullptr,
                               (Mat<S> *)nullptr);
    }
    for (int j = 0; j < M; ++j) {
        grads.tok_emb.col(tokens[j]) += d_x.col(j);
        grads.pos_emb.col(j) += d_x.col(j);
    }

    // Encoder, fed by the cross-attention key/value gradients.
    Mat<S> d_ex = Mat<S>::Zero(d, K);
    ln_cols_backward(w.enc_ln_post, enc_acts.ln_post, d_enc, d_ex,
                     grads.enc_ln_post);
    for (int li = cfg.n_enc_layers - 1; li >= 0; --li) {
        mlp_sublayer_backward(w.enc[li].mlp, enc_acts.mlp[li], d_ex,
                              grads.enc[li].mlp);
        attn_sublayer_backward(w.enc[li].attn, enc_acts.attn[li], d_ex,
                               cfg.n_heads, [](int n) { return n + 1; },
                               grads.enc[li].attn, (const Mat<S> *)nullptr,
                               (Mat<S> *)nullptr);
    }

    // conv2 (stride 2) backward: d_ex is the gradient at gelu(conv2_pre)+pos.
    const int T = (int)feats.cols();
    Mat<S> d_conv1_post = Mat<S>::Zero(d, T);
    for (int n = 0; n < K; ++n) {
        Vec<S> d_pre = d_ex.col(n).array() *
                       enc_acts.conv2_pre.col(n).unaryExpr([](S v) {
                           return gelu_grad_scalar(v);
                       }).array();
        Vec<S> cat = Vec<S>::Zero(3 * d);
        for (int k = 0; k < 3; ++k) {
            int c = 2 * n - 2 + k;
            if (c >= 0)
                cat.segment(k * d, d) = enc_acts.conv1_post.col(c);
        }
        grads.conv2.w.noalias() += d_pre * cat.transpose();
        grads.conv2.b.col(0) += d_pre;
        Vec<S> d_cat = w.conv2.w.transpose() * d_pre;
        for (int k = 0; k < 3; ++k) {
            int c = 2 * n - 2 + k;
            if (c >= 0)
                d_conv1_post.col(c) += d_cat.segment(k * d, d);
        }
    }
    // conv1 backward; the feature input needs no gradient.
    const int fd = cfg.feat_dim;
    for (int t = 0; t < T; ++t) {
        Vec<S> d_pre = d_conv1_post.col(t).array() *
                       enc_acts.conv1_pre.col(t).unaryExpr([](S v) {
                           return gelu_grad_scalar(v);
                       }).array();
        Vec<S> cat = Vec<S>::Zero(3 * fd);
        for (int k = 0; k < 3; ++k) {
            int c = t - 2 + k;
            if (c >= 0)
                cat.segment(k * fd, fd) = feats.col(c);
        }
        grads.conv1.w.noalias() += d_pre * cat.transpose();
        grads.conv1.b.col(0) += d_pre;
    }
}

// ─── Gradient verification ───────────────────────────────────────────────────

double grad_check(const ModelConfig &cfg, uint64_t seed,
                  int samples_per_tensor, double epsilon) {
    Rng rng(seed);
    Weights<double> w;
    w.init(cfg, rng);
    Mat<double> feats(cfg.feat_dim, cfg.n_frames());
    for (int j = 0; j < feats.cols(); ++j)
        for (int i = 0; i < feats.rows(); ++i)
            feats(i, j) = rng.normal() * 0.5;
    const int M = cfg.n_text_ctx;
    std::vector<int32_t> tokens(M);
    for (auto &t : tokens)
        t = (int32_t)rng.uniform_int(0, cfg.vocab - 1);
    std::vector<uint8_t> active(M, 0);
    for (int p = 1; p < M; ++p)
        active[p] = rng.bernoulli(0.7) ? 1 : 0;
    active[M - 1] = 1;

    auto loss_at = [&]() {
        Mat<double> enc_out = encoder_forward(w, feats, (EncActs<double> *)nullptr);
        Mat<double> logits =
            decoder_forward(w, enc_out, tokens, (DecActs<double> *)nullptr);
        return masked_loss(logits, tokens, active, (Mat<double> *)nullptr);
    };

    EncActs<double> ea;
    DecActs<double> da;
    Mat<double> enc_out = encoder_forward(w, feats, &ea);
    Mat<double> logits = decoder_forward(w, enc_out, tokens, &da);
    Mat<double> d_logits;
    masked_loss(logits, tokens, active, &d_logits);
    Weights<double> grads;
    grads.zero_like(w);
    model_backward(w, feats, tokens, ea, enc_out, da, d_logits, grads);

    double worst = 0;
    auto wt = w.tensors();
    auto gt = grads.tensors();
    Rng pick(seed ^ 0x9e3779b97f4a7c15ull);
    for (size_t ti = 0; ti < wt.size(); ++ti) {
        Mat<double> &theta = *wt[ti].second;
        const Mat<double> &ana = *gt[ti].second;
        for (int s = 0; s < samples_per_tensor; ++s) {
            int i = (int)pick.uniform_int(0, theta.rows() - 1);
            int j = (int)pick.uniform_int(0, theta.cols() - 1);
            double keep = theta(i, j);
            theta(i, j) = keep + epsilon;
            double up = loss_at();
            theta(i, j) = keep - epsilon;
            double down = loss_at();
            theta(i, j) = keep;
            double num = (up - down) / (2 * epsilon);
            double a = ana(i, j);
            double rel = std::abs(a - num) /
                         std::max(1e-8, std::abs(a) + std::abs(num));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// ─── Checkpoints ─────────────────────────────────────────────────────────────

namespace {

json config_to_json(const ModelConfig &c) {
    return json{{"feat_dim", c.feat_dim},       {"d_model", c.d_model},
                {"n_heads", c.n_heads},         {"d_ff", c.d_ff},
                {"n_enc_layers", c.n_enc_layers},
                {"n_dec_layers", c.n_dec_layers},
                {"vocab", c.vocab},             {"n_audio_keys", c.n_audio_keys},
                {"n_text_ctx", c.n_text_ctx},   {"dilation", c.dilation}};
}

ModelConfig config_from_json(const json &j) {
    ModelConfig c;
    c.feat_dim = j.at("feat_dim").get<int32_t>();
    c.d_model = j.at("d_model").get<int32_t>();
    c.n_heads = j.at("n_heads").get<int32_t>();
    c.d_ff = j.at("d_ff").get<int32_t>();
    c.n_enc_layers = j.at("n_enc_layers").get<int32_t>();
    c.n_dec_layers = j.at("n_dec_layers").get<int32_t>();
    c.vocab = j.at("vocab").get<int32_t>();
    c.n_audio_keys = j.at("n_audio_keys").get<int32_t>();
    c.n_text_ctx = j.at("n_text_ctx").get<int32_t>();
    c.dilation = j.at("dilation").get<int32_t>();
    return c;
}

void append_bytes(std::string &out, const void *p, size_t n) {
    out.append((const char *)p, n);
}

void take_bytes(const std::string &in, size_t &off, void *p, size_t n) {
    if (off + n > in.size())
        fail_validation("truncated checkpoint");
    std::memcpy(p, in.data() + off, n);
    off += n;
}

} // namespace

std::string checkpoint_to_bytes(const Checkpoint &ckpt) {
    std::string out;
    out.append("SSTC", 4);
    uint32_t version = 1;
    append_bytes(out, &version, 4);
    json header{{"config", config_to_json(ckpt.cfg)},
                {"meta", ckpt.meta}};
    std::string hs = header.dump();
    uint32_t hlen = (uint32_t)hs.size();
    append_bytes(out, &hlen, 4);
    out += hs;
    uint32_t n_tensors = (uint32_t)ckpt.tensors.size();
    append_bytes(out, &n_tensors, 4);
    for (const auto &[name, m] : ckpt.tensors) {
        uint16_t nlen = (uint16_t)name.size();
        append_bytes(out, &nlen, 2);
        out += name;
        uint32_t rows = (uint32_t)m.rows(), cols = (uint32_t)m.cols();
        append_bytes(out, &rows, 4);
        append_bytes(out, &cols, 4);
        append_bytes(out, m.data(), sizeof(float) * m.size());
    }
    return out;
}

Checkpoint checkpoint_from_bytes(const std::string &bytes) {
    if (bytes.size() < 8 || bytes.compare(0, 4, "SSTC") != 0)
        fail_validation("not a checkpoint file");
    size_t off = 4;
    uint32_t version = 0;
    take_bytes(bytes, off, &version, 4);
    if (version != 1)
        fail_validation("unsupported checkpoint version " +
                        std::to_string(version));
    uint32_t hlen = 0;
    take_bytes(bytes, off, &hlen, 4);
    if (off + hlen > bytes.size())
        fail_validation("truncated checkpoint");
    json header;
    try {
        header = json::parse(bytes.substr(off, hlen));
    } catch (const json::exception &e) {
        fail_validation(std::string("checkpoint header: ") + e.what());
    }
    off += hlen;
    Checkpoint ckpt;
    ckpt.cfg = config_from_json(header.at("config"));
    ckpt.meta = header.value("meta", "");
    uint32_t n_tensors = 0;
    take_bytes(bytes, off, &n_tensors, 4);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        uint16_t nlen = 0;
        take_bytes(bytes, off, &nlen, 2);
        if (off + nlen > bytes.size())
            fail_validation("truncated checkpoint");
        std::string name = bytes.substr(off, nlen);
        off += nlen;
        uint32_t rows = 0, cols = 0;
        take_bytes(bytes, off, &rows, 4);
        take_bytes(bytes, off, &cols, 4);
        if ((uint64_t)rows * cols > (1ull << 31))
            fail_validation("implausible tensor size for " + name);
        Mat<float> m(rows, cols);
        take_bytes(bytes, off, m.data(), sizeof(float) * m.size());
        if (!ckpt.tensors.emplace(name, std::move(m)).second)
            fail_validation("duplicate tensor " + name);
    }
    if (off != bytes.size())
        fail_validation("trailing bytes after checkpoint payload");
    return ckpt;
}

void save_checkpoint(const std::string &path, const Checkpoint &ckpt) {
    write_text_file(path, checkpoint_to_bytes(ckpt));
}

Checkpoint load_checkpoint(const std::string &path) {
    return checkpoint_from_bytes(read_text_file(path));
}

Checkpoint weights_to_checkpoint(const Weights<float> &w,
                                 const std::string &meta) {
    Checkpoint ckpt;
    ckpt.cfg = w.cfg;
    ckpt.meta = meta;
    for (const auto &[name, m] : w.tensors())
        ckpt.tensors.emplace(name, *m);
    return ckpt;
}

Weights<float> weights_from_checkpoint(const Checkpoint &ckpt) {
    Rng rng(0);
    Weights<float> w;
    w.init(ckpt.cfg, rng);
    for (auto &[name, m] : w.tensors()) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            fail_validation("checkpoint is missing tensor " + name);
        if (it->second.rows() != m->rows() || it->second.cols() != m->cols())
            fail_validation("checkpoint tensor " + name +
                            " has the wrong shape");
        *m = it->second;
    }
    return w;
}

// ─── Explicit instantiation ──────────────────────────────────────────────────

#define SST_INSTANTIATE(S)                                                     \
    template struct Weights<S>;                                                \
    template Weights<float> Weights<S>::cast<float>() const;                   \
    template Weights<double> Weights<S>::cast<double>() const;                 \
    template S gelu_scalar(S);                                                 \
    template S gelu_grad_scalar(S);                                            \
    template void gelu_col(const S *, S *, int);                               \
    template void ln_col(const LayerNormW<S> &, const S *, S *, S *, S *);     \
    template void linear_col(const LinearW<S> &, const S *, S *);              \
    template void attn_row(const Mat<S> &, const Mat<S> &, const S *, int,     \
                           int, S *);                                          \
    template void sin_pos_col(int, int, S *);                                  \
    template void conv3_col(const LinearW<S> &, const Mat<S> &, int, S *);     \
    template Mat<S> encoder_forward(const Weights<S> &, const Mat<S> &,        \
                                    EncActs<S> *);                             \
    template Mat<S> decoder_forward(const Weights<S> &, const Mat<S> &,        \
                                    const std::vector<int32_t> &,              \
                                    DecActs<S> *);                             \
    template S masked_loss(const Mat<S> &, const std::vector<int32_t> &,       \
                           const std::vector<uint8_t> &, Mat<S> *);            \
    template void model_backward(const Weights<S> &, const Mat<S> &,           \
                                 const std::vector<int32_t> &,                 \
                                 const EncActs<S> &, const Mat<S> &,           \
                                 const DecActs<S> &, const Mat<S> &,           \
                                 Weights<S> &);

SST_INSTANTIATE(float)
SST_INSTANTIATE(double)

} // namespace sst
