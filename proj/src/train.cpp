//
// train.cpp — AdamW, schedules, the update loop, and resumable checkpoints.
//

#include "sst/train.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>

namespace sst {

using nlohmann::json;

// ─── Schedule ────────────────────────────────────────────────────────────────

void validate_optim(const OptimConfig &cfg) {
    if (!(cfg.peak_lr > 0.0))
        fail_validation("peak learning rate must be positive");
    if (cfg.warmup_steps < 0)
        fail_validation("warmup steps must be non-negative");
    if (cfg.schedule == Schedule::linear_decay &&
        cfg.total_steps <= cfg.warmup_steps)
        fail_validation("total steps must exceed warmup for linear decay");
    if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) ||
        !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
        fail_validation("betas must lie in [0, 1)");
    if (!(cfg.eps > 0.0))
        fail_validation("optimizer epsilon must be positive");
    if (cfg.weight_decay < 0.0)
        fail_validation("weight decay must be non-negative");
}

double lr_at(const OptimConfig &cfg, int64_t step) {
    if (step < cfg.warmup_steps)
        return cfg.peak_lr * static_cast<double>(step + 1) /
               static_cast<double>(cfg.warmup_steps);
    if (cfg.schedule == Schedule::constant)
        return cfg.peak_lr;
    if (step >= cfg.total_steps)
        return 0.0;
    return cfg.peak_lr * static_cast<double>(cfg.total_steps - step) /
           static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

// ─── AdamW ───────────────────────────────────────────────────────────────────

namespace {

// Decoupled decay applies to weight matrices only. Tensor names make the
// split mechanical: every decayable matrix ends in ".w"; norms, biases, and
// the embedding tables do not.
bool decays(const std::string &name) { return name.ends_with(".w"); }

} // namespace

void AdamW::init(const OptimConfig &config, const Weights<float> &w) {
    validate_optim(config);
    cfg = config;
    step = 0;
    m.clear();
    v.clear();
    for (const auto &[name, t] : w.tensors()) {
        m[name] = Mat<float>::Zero(t->rows(), t->cols());
        v[name] = Mat<float>::Zero(t->rows(), t->cols());
    }
}

double AdamW::apply(Weights<float> &w, const Weights<float> &grads) {
    auto wt = w.tensors();
    auto gt = grads.tensors();
    if (wt.size() != gt.size())
        fail_validation("optimizer: weight/gradient tensor mismatch");

    double sq = 0.0;
    for (const auto &[name, g] : gt)
        sq += g->template cast<double>().squaredNorm();
    double norm = std::sqrt(sq);

    float scale = 1.0f;
    if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm)
        scale = static_cast<float>(cfg.clip_norm / norm);

    float lr = static_cast<float>(lr_at(cfg, step));
    float b1 = static_cast<float>(cfg.beta1);
    float b2 = static_cast<float>(cfg.beta2);
    float eps = static_cast<float>(cfg.eps);
    float wd = static_cast<float>(cfg.weight_decay);
    int64_t t = step + 1;
    float bc1 = static_cast<float>(1.0 - std::pow(cfg.beta1, t));
    float bc2 = static_cast<float>(1.0 - std::pow(cfg.beta2, t));

    for (size_t i = 0; i < wt.size(); ++i) {
        const auto &name = wt[i].first;
        if (name != gt[i].first)
            fail_validation("optimizer: weight/gradient tensor mismatch");
        Mat<float> &theta = *wt[i].second;
        const Mat<float> &grad = *gt[i].second;
        Mat<float> &mi = m.at(name);
        Mat<float> &vi = v.at(name);

        auto g = grad.array() * scale;
        mi.array() = b1 * mi.array() + (1.0f - b1) * g;
        vi.array() = b2 * vi.array() + (1.0f - b2) * g.square();
        auto update = (mi.array() / bc1) / ((vi.array() / bc2).sqrt() + eps);
        if (decays(name))
            theta.array() -= lr * (update + wd * theta.array());
        else
            theta.array() -= lr * update;
    }
    ++step;
    return norm;
}

// ─── Update loop ─────────────────────────────────────────────────────────────

namespace {

// Per-step stream key: an update's samples depend only on (seed, step), so a
// restored run draws the same data the uninterrupted run would have.
uint64_t step_seed(uint64_t seed, int64_t step) {
    return seed + 0x9E3779B97F4A7C15ull * static_cast<uint64_t>(step + 1);
}

} // namespace

TrainStats train_loop(Weights<float> &w, AdamW &opt, const TrainConfig &cfg,
                      const SampleSource &source,
                      const std::function<void(int64_t, double)> &on_log) {
    if (cfg.steps < 0)
        fail_validation("step count must be non-negative");
    if (cfg.batch_size < 1)
        fail_validation("batch size must be at least 1");
    if (!source)
        fail_validation("sample source is empty");

    Weights<float> grads;
    grads.zero_like(w);

    TrainStats stats;
    for (int64_t k = 0; k < cfg.steps; ++k) {
        int64_t step = opt.step;
        Rng rng(step_seed(cfg.seed, step));
        for (auto &[name, t] : grads.tensors())
            t->setZero();

        double loss_sum = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            TrainSample s = source(rng);
            EncActs<float> enc_acts;
            DecActs<float> dec_acts;
            Mat<float> enc_out = encoder_forward(w, s.feats, &enc_acts);
            Mat<float> logits = decoder_forward(w, enc_out, s.tokens, &dec_acts);
            Mat<float> d_logits;
            loss_sum += masked_loss(logits, s.tokens, s.active, &d_logits);
            d_logits *= 1.0f / static_cast<float>(cfg.batch_size);
            model_backward(w, s.feats, s.tokens, enc_acts, enc_out, dec_acts,
                           d_logits, grads);
        }
        double loss = loss_sum / cfg.batch_size;
        if (!std::isfinite(loss) || loss > cfg.abort_loss) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.6g", loss);
            fail_runtime("training diverged at step " + std::to_string(step) +
                         " (loss " + buf + ")");
        }

        opt.apply(w, grads);
        stats.losses.push_back(loss);
        if (on_log && cfg.log_every > 0 && step % cfg.log_every == 0)
            on_log(step, loss);
    }

    size_t n = stats.losses.size();
    size_t tail = std::min<size_t>(n, 10);
    for (size_t i = n - tail; i < n; ++i)
        stats.final_loss += stats.losses[i];
    if (tail > 0)
        stats.final_loss /= static_cast<double>(tail);
    return stats;
}

// ─── Resumable checkpoints ───────────────────────────────────────────────────

namespace {

const char *schedule_name(Schedule s) {
    return s == Schedule::linear_decay ? "linear_decay" : "constant";
}

Schedule schedule_from_name(const std::string &s) {
    if (s == "linear_decay")
        return Schedule::linear_decay;
    if (s == "constant")
        return Schedule::constant;
    fail_validation("unknown schedule '" + s + "'");
}

} // namespace

Checkpoint train_state_to_checkpoint(const Weights<float> &w, const AdamW &opt,
                                     const std::string &notes) {
    json meta = {
        {"step", opt.step},
        {"optim",
         {{"peak_lr", opt.cfg.peak_lr},
          {"warmup_steps", opt.cfg.warmup_steps},
          {"total_steps", opt.cfg.total_steps},
          {"schedule", schedule_name(opt.cfg.schedule)},
          {"beta1", opt.cfg.beta1},
          {"beta2", opt.cfg.beta2},
          {"eps", opt.cfg.eps},
          {"weight_decay", opt.cfg.weight_decay},
          {"clip_norm", opt.cfg.clip_norm}}},
        {"notes", notes},
    };
    Checkpoint ckpt = weights_to_checkpoint(w, meta.dump());
    for (const auto &[name, t] : opt.m)
        ckpt.tensors["adam_m." + name] = t;
    for (const auto &[name, t] : opt.v)
        ckpt.tensors["adam_v." + name] = t;
    return ckpt;
}

void train_state_from_checkpoint(const Checkpoint &ckpt, Weights<float> &w,
                                 AdamW &opt) {
    w = weights_from_checkpoint(ckpt);

    json meta = json::parse(ckpt.meta, nullptr, false);
    if (meta.is_discarded() || !meta.contains("step") ||
        !meta.contains("optim"))
        fail_validation("checkpoint has no optimizer state");
    const json &o = meta["optim"];
    OptimConfig cfg;
    cfg.peak_lr = o.at("peak_lr").get<double>();
    cfg.warmup_steps = o.at("warmup_steps").get<int64_t>();
    cfg.total_steps = o.at("total_steps").get<int64_t>();
    cfg.schedule = schedule_from_name(o.at("schedule").get<std::string>());
    cfg.beta1 = o.at("beta1").get<double>();
    cfg.beta2 = o.at("beta2").get<double>();
    cfg.eps = o.at("eps").get<double>();
    cfg.weight_decay = o.at("weight_decay").get<double>();
    cfg.clip_norm = o.at("clip_norm").get<double>();
    validate_optim(cfg);

    opt.cfg = cfg;
    opt.step = meta["step"].get<int64_t>();
    opt.m.clear();
    opt.v.clear();
    for (const auto &[name, t] : w.tensors()) {
        for (const char *prefix : {"adam_m.", "adam_v."}) {
            auto it = ckpt.tensors.find(prefix + name);
            if (it == ckpt.tensors.end())
                fail_validation("checkpoint has no optimizer state for '" +
                                name + "'");
            if (it->second.rows() != t->rows() ||
                it->second.cols() != t->cols())
                fail_validation("optimizer moment shape mismatch for '" +
                                name + "'");
            (prefix[5] == 'm' ? opt.m : opt.v)[name] = it->second;
        }
    }
}

} // namespace sst
