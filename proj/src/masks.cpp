#include "sst/masks.hpp"

#include <fstream>

namespace sst {

int AttentionMask::visible_count(int m) const {
    int count = 0;
    size_t base = (size_t)(m - 1) * stride();
    for (size_t w = 0; w < stride(); ++w)
        count += __builtin_popcountll(bits[base + w]);
    return count;
}

void AttentionMask::write_pbm(const std::string &path) const {
    std::ofstream out(path);
    if (!out)
        fail_runtime("cannot create " + path);
    out << "P1\n" << n_max << " " << m_max << "\n";
    for (int m = 1; m <= m_max; ++m) {
        for (int n = 1; n <= n_max; ++n)
            out << (visible(m, n) ? '1' : '0') << (n == n_max ? '\n' : ' ');
    }
    if (!out)
        fail_runtime("write failed: " + path);
}

static AttentionMask make_empty(int m_max, int n_max) {
    AttentionMask mask;
    mask.m_max = m_max;
    mask.n_max = n_max;
    mask.bits.assign((size_t)m_max * mask.stride(), 0);
    return mask;
}

static void set_row_prefix(AttentionMask &mask, int m, int visible) {
    // Sets bits 1..visible of row m.
    size_t base = (size_t)(m - 1) * mask.stride();
    int full = visible / 64;
    for (int w = 0; w < full; ++w)
        mask.bits[base + w] = ~0ull;
    int rem = visible % 64;
    if (rem)
        mask.bits[base + full] = (1ull << rem) - 1;
}

AttentionMask encoder_causal_mask(int n_frames) {
    if (n_frames < 1)
        fail_validation("encoder mask needs at least one frame");
    AttentionMask mask = make_empty(n_frames, n_frames);
    for (int i = 1; i <= n_frames; ++i)
        set_row_prefix(mask, i, i);
    return mask;
}

AttentionMask dilated_cross_mask(int m_max, int n_max, int D) {
    if (D < 1)
        fail_validation("dilation factor must be >= 1");
    if (m_max < 1 || n_max < 1)
        fail_validation("mask shape must be positive");
    if ((long long)m_max * D > (long long)n_max + D)
        fail_validation("query horizon exceeds key budget: m_max*D > n_max+D");
    AttentionMask mask = make_empty(m_max, n_max);
    for (int m = 1; m <= m_max; ++m)
        set_row_prefix(mask, m, dilated_visible_count(m, n_max, D));
    return mask;
}

} // namespace sst
