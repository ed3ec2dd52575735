#pragma once

//
// sft.hpp — catch-up fine-tuning samples. A pivot s_start is drawn uniformly
// over the decoder context (advanced to the next content token — deferring a
// WAIT is a no-op), the whole suffix from the pivot shifts right by
// Δs ~ U(1, W_right−1) where W_right counts WAITs in [pivot, l], the vacated
// positions fill with WAIT, and tokens shifted past l are dropped and
// counted. The loss mask is inactive on the inserted WAITs and on everything
// before the first deferred token, so training pressure lands exactly on the
// catch-up region.
//

#include <vector>

#include "sst/align.hpp"
#include "sst/common.hpp"
#include "sst/timeline.hpp"

namespace sst {

struct SftSample {
    LabelSequence labels;           // deferred
    std::vector<uint8_t> loss_mask; // 1 = loss active at that position
    int pivot = 0;                  // s_start, 1-based
    int displacement = 0;           // Δs ≥ 1
    int64_t dropped = 0;            // content tokens shifted past l
};

// Throws Status::not_applicable when no pivot admits Δs ≥ 1 (W_right < 2
// everywhere); the caller should resample a different base example.
//
// strict_fig3_mask = false (default): loss inactive on positions
//   1 .. pivot+Δs−1, active on pivot+Δs .. l.
// strict_fig3_mask = true: only the inserted-WAIT span pivot .. pivot+Δs−1
//   is masked out; positions before the pivot keep their loss (prompt always
//   stays inactive). The two readings differ in how much "preceding history"
//   is silenced; the default silences all of it.
//
// strict_drops = true errors (Status::strict_drop) if any content drops.
SftSample build_sft_sample(const LabelSequence &base, const Vocabulary &vocab,
                           Rng &rng, bool strict_fig3_mask = false,
                           bool strict_drops = false);

// Shard-level wrapper: re-derives labels/mask/report and stamps the SFT
// audit fields. The base record's mask is ignored (the SFT rules define the
// whole mask); report.placed shrinks by what dropped.
ShardRecord build_sft_record(const ShardRecord &base, const Vocabulary &vocab,
                             Rng &rng, bool strict_fig3_mask = false,
                             bool strict_drops = false);

// Infinite sample stream mixing originals and SFT samples: each draw comes
// from the SFT stream with probability ratio_sft, and each stream is cycled
// in order. Drawing from an empty stream errors.
class MixStream {
  public:
    MixStream(std::vector<ShardRecord> original, std::vector<ShardRecord> sft,
              double ratio_sft);

    const ShardRecord &next(Rng &rng);

  private:
    std::vector<ShardRecord> original_, sft_;
    double ratio_sft_;
    size_t next_original_ = 0, next_sft_ = 0;
};

} // namespace sst
