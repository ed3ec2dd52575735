//
// sst_main.cpp — the `sst` command-line binary. A thin shell over the C API:
// every subcommand collects its flags into the flat key/value option list the
// library consumes, so the CLI and any other binding see identical behavior.
// Exit codes are the library's status values (0 ok, 1 runtime, 2 validation,
// 3 strict-mode drop).
//

#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "simulst.h"

namespace {

using OptMap = std::map<std::string, std::string>;
using CmdFn = sst_status (*)(const char *const *, const char *const *, size_t);

// Flat key=value defaults file; '#' starts a comment. Explicit flags win.
OptMap load_config(const std::string &path) {
    std::ifstream in(path);
    if (!in) {
        std::fprintf(stderr, "sst: cannot open config %s\n", path.c_str());
        std::exit(2);
    }
    OptMap out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos)
            line.erase(hash);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos)
            continue;
        size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            std::fprintf(stderr, "sst: %s:%zu: expected key=value\n",
                         path.c_str(), lineno);
            std::exit(2);
        }
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

int dispatch(CmdFn fn, const OptMap &opts) {
    std::vector<const char *> keys, values;
    for (const auto &[k, v] : opts) {
        keys.push_back(k.c_str());
        values.push_back(v.c_str());
    }
    sst_status st = fn(keys.data(), values.data(), keys.size());
    if (st != SST_OK)
        std::fprintf(stderr, "sst: %s\n", sst_last_error());
    return static_cast<int>(st);
}

// One subcommand: named string options plus boolean flags, all forwarded
// untyped (the library validates types and ranges).
class Sub {
  public:
    Sub(CLI::App &app, CmdFn fn, const std::string &name,
        const std::string &desc)
        : fn_(fn) {
        sub_ = app.add_subcommand(name, desc);
        sub_->add_option("--config", config_path_,
                         "flat key=value defaults file; flags override");
    }

    Sub &opt(const std::string &key, const std::string &desc) {
        auto slot = std::make_unique<Slot>();
        slot->key = key;
        sub_->add_option("--" + key, slot->value, desc);
        slots_.push_back(std::move(slot));
        return *this;
    }

    Sub &flag(const std::string &key, const std::string &desc) {
        auto slot = std::make_unique<Slot>();
        slot->key = key;
        slot->is_flag = true;
        sub_->add_flag("--" + key, slot->hit, desc);
        slots_.push_back(std::move(slot));
        return *this;
    }

    void wire() {
        sub_->callback([this] {
            OptMap opts;
            if (!config_path_.empty())
                opts = load_config(config_path_);
            for (const auto &slot : slots_) {
                if (slot->is_flag) {
                    if (slot->hit)
                        opts[slot->key] = "1";
                } else if (sub_->count("--" + slot->key) > 0) {
                    opts[slot->key] = slot->value;
                }
            }
            rc_ = dispatch(fn_, opts);
        });
    }

    int rc() const { return rc_; }

  private:
    struct Slot {
        std::string key;
        std::string value;
        bool hit = false;
        bool is_flag = false;
    };

    CmdFn fn_;
    CLI::App *sub_ = nullptr;
    std::string config_path_;
    std::vector<std::unique_ptr<Slot>> slots_;
    int rc_ = 0;
};

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"simultaneous speech translation toolkit"};
    app.set_version_flag("--version", sst_version());
    app.require_subcommand(1);

    std::vector<std::unique_ptr<Sub>> subs;
    auto add = [&](CmdFn fn, const std::string &name,
                   const std::string &desc) -> Sub & {
        subs.push_back(std::make_unique<Sub>(app, fn, name, desc));
        return *subs.back();
    };

    add(sst_cmd_synth, "synth", "generate a synthetic glyph-speech corpus")
        .opt("out", "output corpus directory")
        .opt("task", "synthesis task (delayed-copy)")
        .opt("minutes", "total corpus minutes")
        .opt("file_minutes", "minutes per file")
        .opt("seed", "corpus seed")
        .opt("wpm", "target speech rate (0 = stock)");

    add(sst_cmd_align, "align", "build causal labels from a timed transcript")
        .opt("transcript", "word-timestamped transcript JSONL")
        .opt("targets", "target text file")
        .opt("alignment", "word alignment JSONL, or 'fallback'")
        .opt("out", "output shard JSONL")
        .opt("report", "report JSON path")
        .opt("D", "decoder time dilation")
        .opt("delta", "delay model, e.g. uniform:0,200 or fixed:100")
        .opt("lang", "language code")
        .opt("task", "transcribe or translate")
        .opt("vocab", "toy or whisper_compat")
        .opt("tokenizer", "byte or hashword")
        .opt("seed", "delay sampling seed")
        .flag("strict", "fail instead of dropping overflow tokens");

    add(sst_cmd_sft, "sft", "rewrite shards into catch-up fine-tuning form")
        .opt("in", "input shard JSONL")
        .opt("out", "output shard JSONL")
        .opt("seed", "pivot sampling seed")
        .opt("vocab", "toy or whisper_compat")
        .flag("strict_mask", "activate loss only on the catch-up span")
        .flag("strict_drops", "fail when the shifted tail overflows");

    add(sst_cmd_train, "train", "train the toy model on a synthetic corpus")
        .opt("corpus", "corpus directory from synth")
        .opt("run", "run directory (created)")
        .opt("steps", "total updates; also fixes the LR schedule")
        .opt("batch", "samples per update")
        .opt("seed", "weight/sample seed")
        .opt("peak_lr", "peak learning rate")
        .opt("warmup", "warmup updates")
        .opt("schedule", "linear_decay or constant")
        .opt("clip", "gradient-norm ceiling")
        .opt("weight_decay", "decoupled weight decay")
        .opt("D", "decoder time dilation")
        .opt("delta", "delay model for label building")
        .opt("sft_ratio", "fraction of catch-up samples")
        .opt("log_every", "log cadence in updates")
        .opt("stop_after", "pause after N updates this call")
        .opt("init", "starting weights checkpoint")
        .flag("resume", "continue from run/checkpoint.sstc");

    add(sst_cmd_stream, "stream", "run streaming inference over audio")
        .opt("model", "model checkpoint")
        .opt("features", "feature file input")
        .opt("wav", "16 kHz mono WAV input")
        .opt("out", "emission log JSONL")
        .opt("summary", "summary JSON path")
        .opt("bias", "WAIT-logit bias")
        .opt("cached", "1 = incremental engine, 0 = reference")
        .opt("stride", "audio-window origin advance in chunks")
        .opt("clock", "virtual or real")
        .opt("overhead_ms", "virtual clock: per-step overhead")
        .opt("lang", "language code")
        .opt("task", "transcribe or translate")
        .opt("stalls", "forced-WAIT chunk ranges, e.g. 10-20,40-45");

    add(sst_cmd_eval, "eval", "score an emission log against references")
        .opt("log", "emission log JSONL")
        .opt("refs", "reference segments JSONL")
        .opt("out", "report CSV path")
        .opt("bias", "bias column value for the report row");

    add(sst_cmd_sweep, "sweep", "latency/quality curve over WAIT biases")
        .opt("model", "model checkpoint")
        .opt("corpus", "corpus directory to stream")
        .opt("out", "report CSV path")
        .opt("biases", "comma list, e.g. 0,-1,-2,-4")
        .opt("jobs", "parallel workers")
        .opt("cached", "1 = incremental engine, 0 = reference")
        .opt("stride", "audio-window origin advance in chunks");

    for (auto &sub : subs)
        sub->wire();

    CLI11_PARSE(app, argc, argv);

    for (auto &sub : subs)
        if (sub->rc() != 0)
            return sub->rc();
    return 0;
}
