#pragma once

//
// model.hpp — a small encoder–decoder transformer over log-mel features,
// sized for one CPU core. The encoder is fully causal: two convolutions that
// only look left (the second with stride 2, so one encoder key per 20 ms of
// audio), sinusoidal positions, and causal self-attention. The decoder adds
// learned positions and, between self-attention and the MLP, a dilated causal
// cross-attention: context row m may read encoder keys n ≤ D·(m−1), which
// makes one decoder position cover D keys' worth of fresh audio. Row 1 sees
// no keys at all, and because the cross out-projection carries no bias, the
// whole sublayer contributes exactly zero to that row's residual.
//
// Everything is templated on the scalar so the same code trains in float and
// grad-checks in double. Forward passes walk positions one at a time through
// shared per-position primitives; the streaming engine calls the very same
// out-of-line functions, which is what makes cached and from-scratch
// inference bit-identical.
//

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sst/common.hpp"
#include "sst/masks.hpp"

namespace sst {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S> using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

// ─── Configuration ───────────────────────────────────────────────────────────

struct ModelConfig {
    int32_t feat_dim = 80;
    int32_t d_model = 64;
    int32_t n_heads = 4;
    int32_t d_ff = 256;
    int32_t n_enc_layers = 2;
    int32_t n_dec_layers = 2;
    int32_t vocab = 265;
    int32_t n_audio_keys = 1500; // encoder positions per window
    int32_t n_text_ctx = 375;   // decoder positions per window (l)
    int32_t dilation = 4;       // D: keys readable per decoder step

    int32_t head_dim() const { return d_model / n_heads; }
    int32_t n_frames() const { return 2 * n_audio_keys; }

    bool operator==(const ModelConfig &) const = default;
};

void validate_config(const ModelConfig &cfg);

// ─── Weights ─────────────────────────────────────────────────────────────────

// All tensors are matrices (vectors as n×1) so one enumeration drives
// initialization, the optimizer, and checkpoints.
template <typename S> struct LayerNormW {
    Mat<S> g, b;
};

template <typename S> struct LinearW {
    Mat<S> w, b;
    bool has_bias = true;
};

template <typename S> struct AttnW {
    LayerNormW<S> ln;
    LinearW<S> q, k, v, o;
};

template <typename S> struct MlpW {
    LayerNormW<S> ln;
    LinearW<S> fc, proj;
};

template <typename S> struct EncLayerW {
    AttnW<S> attn;
    MlpW<S> mlp;
};

template <typename S> struct DecLayerW {
    AttnW<S> self;
    AttnW<S> cross; // cross.o.has_bias == false
    MlpW<S> mlp;
};

template <typename S> struct Weights {
    ModelConfig cfg;
    LinearW<S> conv1, conv2; // w is d × 3·in, applied to stacked frames
    std::vector<EncLayerW<S>> enc;
    LayerNormW<S> enc_ln_post;
    Mat<S> tok_emb; // d × vocab (tied with the output head)
    Mat<S> pos_emb; // d × n_text_ctx, learned
    std::vector<DecLayerW<S>> dec;
    LayerNormW<S> dec_ln_post;
    Mat<S> enc_pos; // d × n_audio_keys, sinusoidal, not a parameter

    void init(const ModelConfig &config, Rng &rng);
    void zero_like(const Weights<S> &shape); // gradient accumulator

    // Stable (name, tensor) enumeration; excludes enc_pos.
    std::vector<std::pair<std::string, Mat<S> *>> tensors();
    std::vector<std::pair<std::string, const Mat<S> *>> tensors() const;

    template <typename T> Weights<T> cast() const;
};

// ─── Per-position primitives ─────────────────────────────────────────────────

// Shared by batch forwards and the streaming engine. Defined out of line and
// instantiated once so every caller runs the same machine code — with
// contraction disabled this pins the floating-point result bit for bit.

template <typename S> S gelu_scalar(S x);
template <typename S> S gelu_grad_scalar(S x);

// y = gelu(x) element-wise over d entries.
template <typename S> void gelu_col(const S *x, S *y, int d);

// One layer-norm column: xhat = (x−μ)·rstd, y = g∘xhat + b. eps = 1e-5.
template <typename S>
void ln_col(const LayerNormW<S> &ln, const S *x, S *y, S *xhat, S *rstd);

// y = W·x (+ b). Plain GEMV.
template <typename S>
void linear_col(const LinearW<S> &lin, const S *x, S *y);

// Multi-head attention for one query position over the first n_vis key
// columns of K/V (d × N, heads stacked along rows). n_vis == 0 writes zeros.
template <typename S>
void attn_row(const Mat<S> &K, const Mat<S> &V, const S *q, int n_vis,
              int n_heads, S *out);

// Sinusoidal position code for 1-based position p.
template <typename S> void sin_pos_col(int p, int d, S *out);

// Convolution tap: stacks src columns last−2..last (negative columns read as
// zero) and applies the linear map, without the activation.
template <typename S>
void conv3_col(const LinearW<S> &lin, const Mat<S> &src, int last, S *pre);

// ─── Batch forward / backward ────────────────────────────────────────────────

template <typename S> struct LnActs {
    Mat<S> xhat;
    Vec<S> rstd;
};

template <typename S> struct AttnActs {
    LnActs<S> ln;
    Mat<S> q, k, v;   // d × N
    Mat<S> mixed;     // pre-o-projection, d × N
    Mat<S> out;       // post-residual stream, d × N
};

template <typename S> struct MlpActs {
    LnActs<S> ln;
    Mat<S> fc_pre;  // d_ff × N, pre-gelu
    Mat<S> fc_post; // d_ff × N
    Mat<S> out;     // post-residual stream, d × N
};

template <typename S> struct EncActs {
    Mat<S> conv1_pre, conv1_post; // d × T
    Mat<S> conv2_pre;             // d × K
    Mat<S> x0;                    // d × K, conv output + positions
    std::vector<AttnActs<S>> attn;
    std::vector<MlpActs<S>> mlp;
    LnActs<S> ln_post;
};

template <typename S> struct DecActs {
    Mat<S> x0; // d × M, embeddings + positions
    std::vector<AttnActs<S>> self;
    std::vector<AttnActs<S>> cross; // q from tokens; k/v caches per layer
    std::vector<MlpActs<S>> mlp;
    LnActs<S> ln_post;
    Mat<S> hidden; // d × M, after ln_post
};

// Features (feat_dim × T frames, zero-padded to the window by the caller)
// → encoder keys (d × n_keys) where n_keys = T/2. acts may be null.
template <typename S>
Mat<S> encoder_forward(const Weights<S> &w, const Mat<S> &feats,
                       EncActs<S> *acts);

// Token context (1-based positions 1..M) over encoder keys → logits
// (vocab × M). Row m's cross-attention sees min(D·(m−1), n_keys) keys.
template <typename S>
Mat<S> decoder_forward(const Weights<S> &w, const Mat<S> &enc_out,
                       const std::vector<int32_t> &tokens, DecActs<S> *acts);

// Mean cross-entropy over positions p with active[p−1] set; the logits
// column m scores the token at position m+1. Returns the loss and fills
// d_logits (same shape as logits, zero at inactive columns).
template <typename S>
S masked_loss(const Mat<S> &logits, const std::vector<int32_t> &tokens,
              const std::vector<uint8_t> &active, Mat<S> *d_logits);

// Full backward: given d_logits, accumulate into grads (pre-zeroed
// elsewhere or reused across a batch).
template <typename S>
void model_backward(const Weights<S> &w, const Mat<S> &feats,
                    const std::vector<int32_t> &tokens,
                    const EncActs<S> &enc_acts, const Mat<S> &enc_out,
                    const DecActs<S> &dec_acts, const Mat<S> &d_logits,
                    Weights<S> &grads);

// ─── Gradient verification ───────────────────────────────────────────────────

// Analytic vs central-difference gradients in double on a small model;
// returns the worst relative error over sampled coordinates in every tensor.
double grad_check(const ModelConfig &cfg, uint64_t seed,
                  int samples_per_tensor = 4, double epsilon = 1e-5);

// ─── Checkpoints ─────────────────────────────────────────────────────────────

struct Checkpoint {
    ModelConfig cfg;
    std::string meta; // JSON: training step, schedule state, notes
    std::map<std::string, Mat<float>> tensors;
};

std::string checkpoint_to_bytes(const Checkpoint &ckpt);
Checkpoint checkpoint_from_bytes(const std::string &bytes);
void save_checkpoint(const std::string &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::string &path);

// Weight/tensor-map bridges (validation errors on missing/mismatched names).
Checkpoint weights_to_checkpoint(const Weights<float> &w,
                                 const std::string &meta);
Weights<float> weights_from_checkpoint(const Checkpoint &ckpt);

} // namespace sst
