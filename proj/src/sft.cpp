#include "sst/sft.hpp"

namespace sst {

namespace {

bool is_content(const LabelSequence &labels, const Vocabulary &vocab, int p) {
    return p > labels.prompt_len && labels.at(p) != vocab.wait;
}

// #WAIT in [from, l].
int wait_count_from(const LabelSequence &labels, const Vocabulary &vocab,
                    int from) {
    int count = 0;
    for (int p = std::max(from, labels.prompt_len + 1); p <= labels.dilation.l;
         ++p)
        if (labels.at(p) == vocab.wait)
            ++count;
    return count;
}

} // namespace

SftSample build_sft_sample(const LabelSequence &base, const Vocabulary &vocab,
                           Rng &rng, bool strict_fig3_mask,
                           bool strict_drops) {
    validate_labels(base, vocab);
    const int l = base.dilation.l;

    // Admissibility: W_right is non-increasing in the pivot, so the earliest
    // content position carries the maximum. If even that one cannot spare an
    // insertion (W_right < 2 everywhere), the sample cannot be built.
    int first_content = 0;
    for (int p = base.prompt_len + 1; p <= l; ++p)
        if (is_content(base, vocab, p)) {
            first_content = p;
            break;
        }
    if (first_content == 0 ||
        wait_count_from(base, vocab, first_content) < 2)
        throw Error(Status::not_applicable,
                    "not applicable: no pivot with W_right >= 2");

    // Draw the pivot; WAIT landings advance to the next content token, and
    // inadmissible draws (past the last usable pivot) redraw.
    int pivot = 0;
    for (int attempt = 0; attempt < 10000 && pivot == 0; ++attempt) {
        int s = (int)rng.uniform_int(base.prompt_len, l);
        while (s <= l && !is_content(base, vocab, s))
            ++s;
        if (s <= l && wait_count_from(base, vocab, s) >= 2)
            pivot = s;
    }
    if (pivot == 0)
        pivot = first_content; // admissible by the precheck above

    int w_right = wait_count_from(base, vocab, pivot);
    int delta_s = (int)rng.uniform_int(1, w_right - 1);

    SftSample out;
    out.pivot = pivot;
    out.displacement = delta_s;
    out.labels.prompt_len = base.prompt_len;
    out.labels.dilation = base.dilation;
    out.labels.tokens.assign(l, (int32_t)vocab.wait);

    // result[p] = base[p]           for p <  pivot
    //           = WAIT              for pivot <= p < pivot+Δs
    //           = base[p-Δs]        for pivot+Δs <= p <= l
    for (int p = 1; p < pivot; ++p)
        out.labels.tokens[p - 1] = base.at(p);
    for (int p = pivot + delta_s; p <= l; ++p)
        out.labels.tokens[p - 1] = base.at(p - delta_s);
    for (int p = l - delta_s + 1; p <= l; ++p)
        if (is_content(base, vocab, p))
            out.dropped++;
    if (strict_drops && out.dropped > 0)
        throw Error(Status::strict_drop,
                    "strict mode: deferral dropped " +
                        std::to_string(out.dropped) + " content tokens");

    out.loss_mask.assign(l, 0);
    for (int p = pivot + delta_s; p <= l; ++p)
        out.loss_mask[p - 1] = 1;
    if (strict_fig3_mask)
        for (int p = base.prompt_len + 1; p < pivot; ++p)
            out.loss_mask[p - 1] = 1;
    return out;
}

ShardRecord build_sft_record(const ShardRecord &base, const Vocabulary &vocab,
                             Rng &rng, bool strict_fig3_mask,
                             bool strict_drops) {
    LabelSequence labels;
    labels.tokens = base.labels;
    labels.prompt_len = 4;
    labels.dilation = derive_dilation(base.D);
    SftSample s =
        build_sft_sample(labels, vocab, rng, strict_fig3_mask, strict_drops);

    ShardRecord out = base;
    out.labels = s.labels.tokens;
    out.loss_mask = s.loss_mask;
    out.sft = true;
    out.pivot = s.pivot;
    out.delta_s = s.displacement;
    out.report.placed -= s.dropped;
    out.report.dropped += s.dropped;
    return out;
}

MixStream::MixStream(std::vector<ShardRecord> original,
                     std::vector<ShardRecord> sft, double ratio_sft)
    : original_(std::move(original)), sft_(std::move(sft)),
      ratio_sft_(ratio_sft) {
    if (ratio_sft < 0.0 || ratio_sft > 1.0)
        fail_validation("ratio_sft must lie in [0, 1]");
}

const ShardRecord &MixStream::next(Rng &rng) {
    bool pick_sft = rng.bernoulli(ratio_sft_);
    if (pick_sft) {
        if (sft_.empty())
            fail_runtime("SFT stream is empty");
        const ShardRecord &r = sft_[next_sft_];
        next_sft_ = (next_sft_ + 1) % sft_.size();
        return r;
    }
    if (original_.empty())
        fail_runtime("original stream is empty");
    const ShardRecord &r = original_[next_original_];
    next_original_ = (next_original_ + 1) % original_.size();
    return r;
}

} // namespace sst
