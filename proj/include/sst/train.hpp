#pragma once

//
// train.hpp — AdamW optimizer, learning-rate schedules, and the update loop.
//
// The loop is policy-free about data: it pulls samples from a callback that
// receives a per-step RNG, so restoring a checkpoint replays the identical
// sample stream and training N steps equals training k, saving, and training
// the remaining N−k bit for bit.
//

#include "sst/model.hpp"

#include <functional>

namespace sst {

// ─── Learning-rate schedule ──────────────────────────────────────────────────

// Both shapes warm up linearly from 0 to the peak. `linear_decay` then decays
// linearly to 0 at total_steps (pretraining); `constant` holds the peak
// (fine-tuning).
enum class Schedule { linear_decay, constant };

struct OptimConfig {
    double peak_lr = 4e-5;
    int64_t warmup_steps = 100;
    int64_t total_steps = 1000; // linear_decay reaches 0 here; unused for constant
    Schedule schedule = Schedule::linear_decay;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.01; // decoupled; ".w" matrices only, never norms,
                                // biases, or embeddings
    double clip_norm = 1.0;     // global gradient-norm ceiling; <= 0 disables
};

void validate_optim(const OptimConfig &cfg);

// Learning rate for the update with 0-based index `step`.
double lr_at(const OptimConfig &cfg, int64_t step);

// ─── AdamW ───────────────────────────────────────────────────────────────────

struct AdamW {
    OptimConfig cfg;
    int64_t step = 0; // completed updates; drives the schedule
    std::map<std::string, Mat<float>> m, v;

    void init(const OptimConfig &config, const Weights<float> &w);

    // One update in place. Clips by global norm (without mutating grads),
    // applies the bias-corrected moment update plus decoupled weight decay,
    // and advances `step`. Returns the pre-clip gradient norm.
    double apply(Weights<float> &w, const Weights<float> &grads);
};

// ─── Update loop ─────────────────────────────────────────────────────────────

struct TrainSample {
    Mat<float> feats;            // feat_dim × n_frames, full window
    std::vector<int32_t> tokens; // n_text_ctx entries, positions 1..l
    std::vector<uint8_t> active; // loss mask, active[p−1] for position p
};

// Draws one sample. Must be a pure function of the RNG it is handed; the loop
// derives that RNG from (seed, step) so the stream is resumable.
using SampleSource = std::function<TrainSample(Rng &)>;

struct TrainConfig {
    int64_t steps = 100;      // updates to run in this call
    int batch_size = 4;       // samples averaged per update
    uint64_t seed = 1;        // sample-stream seed
    double abort_loss = 30.0; // batch loss above this (or non-finite) aborts
    int64_t log_every = 10;   // 0 silences the callback
};

struct TrainStats {
    std::vector<double> losses; // batch-mean loss per update
    double final_loss = 0.0;    // mean over the last up-to-10 updates
};

// Runs cfg.steps updates, continuing from opt.step (a restored optimizer
// picks up both its schedule position and its sample stream). Throws
// Status::runtime on divergence. on_log(step, batch_loss) fires every
// log_every updates when provided.
TrainStats train_loop(Weights<float> &w, AdamW &opt, const TrainConfig &cfg,
                      const SampleSource &source,
                      const std::function<void(int64_t, double)> &on_log = {});

// ─── Resumable checkpoints ───────────────────────────────────────────────────

// Weights plus optimizer state in one container: moments ride as
// "adam_m.<tensor>" / "adam_v.<tensor>" entries (the plain weight loader
// ignores them) and the step + optimizer config live in the meta JSON.
Checkpoint train_state_to_checkpoint(const Weights<float> &w, const AdamW &opt,
                                     const std::string &notes = "");

// Restores both halves. Fails validation if the checkpoint carries no
// optimizer state (use weights_from_checkpoint + AdamW::init to fine-tune
// from a weights-only checkpoint instead).
void train_state_from_checkpoint(const Checkpoint &ckpt, Weights<float> &w,
                                 AdamW &opt);

} // namespace sst
