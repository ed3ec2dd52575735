#pragma once

//
// masks.hpp — encoder causal self-attention mask and the dilated causal
// cross-attention mask. Masks are bitsets (visible = bit set) with an
// additive view for compute code: 0 where visible, the most-negative finite
// value of the compute precision where not (a literal -inf would turn an
// all-masked row's softmax into NaN).
//

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sst/common.hpp"

namespace sst {

struct AttentionMask {
    int m_max = 0; // queries
    int n_max = 0; // keys
    std::vector<uint64_t> bits; // row-major, 64 keys per word

    // 1-based query/key indices throughout.
    bool visible(int m, int n) const {
        size_t idx = (size_t)(m - 1) * stride() + (size_t)(n - 1) / 64;
        return (bits[idx] >> ((n - 1) % 64)) & 1u;
    }

    int visible_count(int m) const;

    template <typename T> T additive(int m, int n) const {
        return visible(m, n) ? T(0) : std::numeric_limits<T>::lowest();
    }

    size_t stride() const { return ((size_t)n_max + 63) / 64; }

    // Plain PBM (P1): one pixel per entry, visible = 1 (black).
    void write_pbm(const std::string &path) const;
};

// Lower-triangular: entry (i,j) visible iff j ≤ i.
AttentionMask encoder_causal_mask(int n_frames);

// Entry (m,n) visible iff n ≤ D·(m−1). Query 1 sees no keys at all — the
// attention output for such a row is defined as the zero vector.
// pre: D ≥ 1 and m_max·D ≤ n_max + D (query horizon cannot exceed the key
// budget by more than one step).
AttentionMask dilated_cross_mask(int m_max, int n_max, int D);

// Closed-form visible-key count for query m of the dilated cross mask; the
// model's hot path uses this instead of a materialized mask.
inline int dilated_visible_count(int m, int n_max, int D) {
    long long v = (long long)D * (m - 1);
    return (int)(v < n_max ? v : n_max);
}

} // namespace sst
