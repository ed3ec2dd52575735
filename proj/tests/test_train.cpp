#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "sst/train.hpp"

using namespace sst;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.feat_dim = 5;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.d_ff = 12;
    cfg.n_enc_layers = 2;
    cfg.n_dec_layers = 2;
    cfg.vocab = 13;
    cfg.n_audio_keys = 12;
    cfg.n_text_ctx = 7;
    cfg.dilation = 2;
    return cfg;
}

TrainSample random_sample(const ModelConfig &cfg, Rng &rng) {
    TrainSample s;
    s.feats.resize(cfg.feat_dim, cfg.n_frames());
    for (int j = 0; j < s.feats.cols(); ++j)
        for (int i = 0; i < s.feats.rows(); ++i)
            s.feats(i, j) = (float)(rng.normal() * 0.5);
    s.tokens.resize(cfg.n_text_ctx);
    for (auto &t : s.tokens)
        t = (int32_t)rng.uniform_int(0, cfg.vocab - 1);
    s.active.assign(cfg.n_text_ctx, 1);
    s.active[0] = 0;
    return s;
}

bool same_bits(const Mat<float> &a, const Mat<float> &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        return false;
    return std::memcmp(a.data(), b.data(),
                       sizeof(float) * (size_t)a.size()) == 0;
}

// Closed-form first AdamW update for one coordinate (t = 1, so the
// bias-corrected moments collapse to g and g²).
double first_update(double theta, double g, double lr, double eps, double wd) {
    return theta - lr * (g / (std::abs(g) + eps) + wd * theta);
}

} // namespace

// ─── Schedule ────────────────────────────────────────────────────────────────

TEST_CASE("warmup then linear decay hits the piecewise-linear values") {
    OptimConfig cfg;
    cfg.peak_lr = 1.0;
    cfg.warmup_steps = 10;
    cfg.total_steps = 100;
    cfg.schedule = Schedule::linear_decay;
    CHECK(lr_at(cfg, 0) == doctest::Approx(0.1));
    CHECK(lr_at(cfg, 4) == doctest::Approx(0.5));
    CHECK(lr_at(cfg, 9) == doctest::Approx(1.0));
    CHECK(lr_at(cfg, 10) == doctest::Approx(1.0));
    CHECK(lr_at(cfg, 55) == doctest::Approx(0.5));
    CHECK(lr_at(cfg, 99) == doctest::Approx(1.0 / 90.0));
    CHECK(lr_at(cfg, 100) == 0.0);
    CHECK(lr_at(cfg, 100000) == 0.0);
}

TEST_CASE("constant schedule holds the peak after warmup") {
    OptimConfig cfg;
    cfg.peak_lr = 0.25;
    cfg.warmup_steps = 4;
    cfg.schedule = Schedule::constant;
    CHECK(lr_at(cfg, 0) == doctest::Approx(0.0625));
    CHECK(lr_at(cfg, 3) == doctest::Approx(0.25));
    CHECK(lr_at(cfg, 4) == doctest::Approx(0.25));
    CHECK(lr_at(cfg, 1000000) == doctest::Approx(0.25));

    cfg.warmup_steps = 0; // no warmup: the first update runs at the peak
    CHECK(lr_at(cfg, 0) == doctest::Approx(0.25));
}

TEST_CASE("optimizer configs are validated") {
    OptimConfig cfg;
    cfg.peak_lr = 0.0;
    CHECK_THROWS_AS(validate_optim(cfg), Error);
    cfg = OptimConfig{};
    cfg.warmup_steps = -1;
    CHECK_THROWS_AS(validate_optim(cfg), Error);
    cfg = OptimConfig{};
    cfg.total_steps = cfg.warmup_steps; // decay span collapses
    CHECK_THROWS_AS(validate_optim(cfg), Error);
    cfg = OptimConfig{};
    cfg.beta2 = 1.0;
    CHECK_THROWS_AS(validate_optim(cfg), Error);
    cfg = OptimConfig{};
    cfg.weight_decay = -0.1;
    CHECK_THROWS_AS(validate_optim(cfg), Error);
}

// ─── AdamW update rule ───────────────────────────────────────────────────────

TEST_CASE("first update matches the closed-form AdamW step") {
    ModelConfig mc = tiny_config();
    Rng rng(71);
    Weights<float> w;
    w.init(mc, rng);

    OptimConfig oc;
    oc.peak_lr = 1e-3;
    oc.warmup_steps = 0;
    oc.schedule = Schedule::constant;
    AdamW opt;
    opt.init(oc, w);

    Weights<float> grads;
    grads.zero_like(w);
    double g_w = 0.5, g_ln = 0.3;
    grads.conv1.w(0, 0) = (float)g_w;       // decayed (".w")
    grads.enc[0].attn.ln.g(1, 0) = (float)g_ln; // not decayed

    double theta_w = w.conv1.w(0, 0);
    double theta_ln = w.enc[0].attn.ln.g(1, 0);
    double untouched_w = w.conv1.w(1, 1);   // zero grad, decayed tensor
    double untouched_ln = w.enc[0].attn.ln.g(2, 0); // zero grad, no decay

    double norm = opt.apply(w, grads);
    CHECK(norm ==
          doctest::Approx(std::sqrt(g_w * g_w + g_ln * g_ln)).epsilon(1e-6));
    CHECK(opt.step == 1);

    CHECK(w.conv1.w(0, 0) ==
          doctest::Approx(first_update(theta_w, g_w, 1e-3, 1e-8, 0.01))
              .epsilon(1e-5));
    CHECK(w.enc[0].attn.ln.g(1, 0) ==
          doctest::Approx(first_update(theta_ln, g_ln, 1e-3, 1e-8, 0.0))
              .epsilon(1e-5));
    // Zero-gradient coordinates: decay still shrinks weight matrices, and
    // leaves norm gains exactly alone.
    CHECK(w.conv1.w(1, 1) ==
          doctest::Approx(untouched_w * (1.0 - 1e-3 * 0.01)).epsilon(1e-6));
    CHECK(w.enc[0].attn.ln.g(2, 0) == (float)untouched_ln);
}

TEST_CASE("gradients above the ceiling are clipped by global norm") {
    ModelConfig mc = tiny_config();
    Rng rng(72);
    Weights<float> w;
    w.init(mc, rng);

    OptimConfig oc;
    oc.peak_lr = 1e-3;
    oc.warmup_steps = 0;
    oc.schedule = Schedule::constant;
    oc.clip_norm = 1.0;
    AdamW opt;
    opt.init(oc, w);

    Weights<float> grads;
    grads.zero_like(w);
    grads.conv1.w(0, 0) = 3.0f;
    grads.conv2.w(2, 1) = 4.0f; // global norm 5 → scale 0.2
    double theta = w.conv1.w(0, 0);

    double norm = opt.apply(w, grads);
    CHECK(norm == doctest::Approx(5.0).epsilon(1e-6));
    CHECK(w.conv1.w(0, 0) ==
          doctest::Approx(first_update(theta, 0.6, 1e-3, 1e-8, 0.01))
              .epsilon(1e-5));

    // At or below the ceiling nothing is rescaled.
    Weights<float> small;
    small.zero_like(w);
    small.conv1.w(0, 0) = 0.25f;
    double theta2 = w.conv1.w(0, 0);
    opt.apply(w, small);
    double m2 = 0.9 * 0.1 * 0.6 + 0.1 * 0.25; // second-step moment, by hand
    double v2 = 0.98 * 0.02 * 0.36 + 0.02 * 0.0625;
    double mh = m2 / (1.0 - 0.9 * 0.9);
    double vh = v2 / (1.0 - 0.98 * 0.98);
    double want =
        theta2 - 1e-3 * (mh / (std::sqrt(vh) + 1e-8) + 0.01 * theta2);
    CHECK(w.conv1.w(0, 0) == doctest::Approx(want).epsilon(1e-4));
}

// ─── Update loop ─────────────────────────────────────────────────────────────

TEST_CASE("a fixed sample is memorized") {
    ModelConfig mc = tiny_config();
    Rng rng(73);
    Weights<float> w;
    w.init(mc, rng);

    Rng sample_rng(74);
    TrainSample fixed = random_sample(mc, sample_rng);

    OptimConfig oc;
    oc.peak_lr = 5e-3;
    oc.warmup_steps = 5;
    oc.schedule = Schedule::constant;
    AdamW opt;
    opt.init(oc, w);

    TrainConfig tc;
    tc.steps = 160;
    tc.batch_size = 2;
    tc.seed = 75;
    TrainStats stats =
        train_loop(w, opt, tc, [&](Rng &) { return fixed; });

    REQUIRE(stats.losses.size() == 160);
    // Untrained logits are near uniform over the 13-way vocabulary.
    CHECK(stats.losses.front() == doctest::Approx(std::log(13.0)).epsilon(0.2));
    CHECK(stats.final_loss < 0.5);
    CHECK(stats.final_loss < stats.losses.front() / 3.0);
    CHECK(opt.step == 160);
}

TEST_CASE("non-improving loss above the abort line stops training") {
    ModelConfig mc = tiny_config();
    Rng rng(76);
    Weights<float> w;
    w.init(mc, rng);
    AdamW opt;
    OptimConfig oc;
    oc.warmup_steps = 1;
    oc.schedule = Schedule::constant;
    opt.init(oc, w);

    TrainConfig tc;
    tc.steps = 5;
    tc.batch_size = 1;
    tc.abort_loss = 0.01; // initial loss ≈ ln 13 ≫ this
    try {
        train_loop(w, opt, tc,
                   [&](Rng &r) { return random_sample(mc, r); });
        FAIL("expected divergence abort");
    } catch (const Error &e) {
        CHECK(e.status() == Status::runtime);
        CHECK(std::string(e.what()).find("diverged at step 0") !=
              std::string::npos);
    }
}

TEST_CASE("empty sources and bad loop configs are rejected") {
    ModelConfig mc = tiny_config();
    Rng rng(77);
    Weights<float> w;
    w.init(mc, rng);
    AdamW opt;
    opt.init(OptimConfig{}, w);
    TrainConfig tc;
    CHECK_THROWS_AS(train_loop(w, opt, tc, SampleSource{}), Error);
    tc.batch_size = 0;
    CHECK_THROWS_AS(
        train_loop(w, opt, tc, [&](Rng &r) { return random_sample(mc, r); }),
        Error);
}

// ─── Resume ──────────────────────────────────────────────────────────────────

TEST_CASE("interrupting and resuming reproduces the uninterrupted run") {
    ModelConfig mc = tiny_config();

    OptimConfig oc;
    oc.peak_lr = 3e-3;
    oc.warmup_steps = 3;
    oc.total_steps = 40;
    oc.schedule = Schedule::linear_decay; // lr depends on the step index
    SampleSource source = [&](Rng &r) {
        ModelConfig cfg = tiny_config();
        Rng local(r.next_u64());
        return random_sample(cfg, local);
    };
    TrainConfig tc;
    tc.batch_size = 2;
    tc.seed = 78;

    // Uninterrupted: 14 updates.
    Rng rng_a(79);
    Weights<float> wa;
    wa.init(mc, rng_a);
    AdamW oa;
    oa.init(oc, wa);
    tc.steps = 14;
    train_loop(wa, oa, tc, source);

    // Interrupted: 6 updates, save, restore through bytes, 8 more.
    Rng rng_b(79);
    Weights<float> wb;
    wb.init(mc, rng_b);
    AdamW ob;
    ob.init(oc, wb);
    tc.steps = 6;
    train_loop(wb, ob, tc, source);

    std::string bytes =
        checkpoint_to_bytes(train_state_to_checkpoint(wb, ob, "mid-run"));
    Weights<float> wc;
    AdamW oc2;
    train_state_from_checkpoint(checkpoint_from_bytes(bytes), wc, oc2);
    CHECK(oc2.step == 6);
    CHECK(oc2.cfg.schedule == Schedule::linear_decay);
    CHECK(oc2.cfg.peak_lr == doctest::Approx(3e-3));

    tc.steps = 8;
    train_loop(wc, oc2, tc, source);

    CHECK(oa.step == oc2.step);
    auto ta = wa.tensors();
    auto tcv = wc.tensors();
    REQUIRE(ta.size() == tcv.size());
    for (size_t i = 0; i < ta.size(); ++i) {
        CAPTURE(ta[i].first);
        CHECK(same_bits(*ta[i].second, *tcv[i].second));
    }
    for (const auto &[name, mat] : oa.m) {
        CAPTURE(name);
        CHECK(same_bits(mat, oc2.m.at(name)));
    }
    for (const auto &[name, mat] : oa.v) {
        CAPTURE(name);
        CHECK(same_bits(mat, oc2.v.at(name)));
    }
}

TEST_CASE("train-state checkpoints also load as plain weights") {
    ModelConfig mc = tiny_config();
    Rng rng(80);
    Weights<float> w;
    w.init(mc, rng);
    AdamW opt;
    opt.init(OptimConfig{}, w);

    Checkpoint ckpt = train_state_to_checkpoint(w, opt, "notes here");
    Weights<float> plain = weights_from_checkpoint(ckpt);
    CHECK(same_bits(plain.conv1.w, w.conv1.w));
    CHECK(same_bits(plain.dec[1].cross.q.w, w.dec[1].cross.q.w));
}

TEST_CASE("weights-only checkpoints refuse to restore optimizer state") {
    ModelConfig mc = tiny_config();
    Rng rng(81);
    Weights<float> w;
    w.init(mc, rng);

    Checkpoint plain = weights_to_checkpoint(w, "{}");
    Weights<float> out;
    AdamW opt;
    CHECK_THROWS_AS(train_state_from_checkpoint(plain, out, opt), Error);

    // A stray moment with the wrong shape is rejected, not silently taken.
    AdamW good;
    good.init(OptimConfig{}, w);
    Checkpoint full = train_state_to_checkpoint(w, good);
    full.tensors["adam_m.conv1.w"] = Mat<float>::Zero(2, 2);
    CHECK_THROWS_AS(train_state_from_checkpoint(full, out, opt), Error);
}
