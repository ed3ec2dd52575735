#include <doctest.h>

#include <cstdio>

#include "sst/masks.hpp"
#include "sst/timeline.hpp"

using namespace sst;

TEST_CASE("encoder causal mask basics") {
    AttentionMask m1 = encoder_causal_mask(1);
    CHECK(m1.visible(1, 1));
    CHECK(m1.visible_count(1) == 1);
    CHECK(m1.additive<float>(1, 1) == 0.0f);

    AttentionMask m3 = encoder_causal_mask(3);
    CHECK(m3.visible_count(1) == 1);
    CHECK(m3.visible_count(2) == 2);
    CHECK(m3.visible_count(3) == 3);
    CHECK(!m3.visible(1, 2));
    CHECK(m3.additive<float>(1, 3) == std::numeric_limits<float>::lowest());

    CHECK_THROWS_AS(encoder_causal_mask(0), Error);
}

TEST_CASE("encoder causal mask zero count at full size") {
    AttentionMask m = encoder_causal_mask(1500);
    long long zeros = 0; // additive zeros == visible entries
    for (int i = 1; i <= 1500; ++i)
        zeros += m.visible_count(i);
    CHECK(zeros == 1500LL * 1501 / 2); // 1,125,750
}

TEST_CASE("dilated cross mask pinned visibility counts") {
    AttentionMask m = dilated_cross_mask(375, 1500, 4);
    CHECK(m.visible_count(4) == 12);
    CHECK(m.visible_count(1) == 0);
    CHECK(m.visible_count(375) == 1496);
    CHECK(m.visible(4, 12));
    CHECK(!m.visible(4, 13));
}

TEST_CASE("dilated cross mask precondition") {
    CHECK_THROWS_AS(dilated_cross_mask(375, 1500, 10), Error); // horizon too far
    CHECK_THROWS_AS(dilated_cross_mask(10, 10, 0), Error);
    CHECK_NOTHROW(dilated_cross_mask(150, 1500, 10));
    // Exactly one step past the key budget is allowed.
    CHECK_NOTHROW(dilated_cross_mask(376, 1500, 4));
    CHECK_THROWS_AS(dilated_cross_mask(377, 1500, 4), Error);
}

TEST_CASE("no future leak across dilation factors") {
    for (int D : {1, 2, 4, 6, 10}) {
        int m_max = std::min(375, 1500 / D);
        AttentionMask m = dilated_cross_mask(m_max, 1500, D);
        for (int q = 1; q <= m_max; ++q) {
            int vis = dilated_visible_count(q, 1500, D);
            CHECK(m.visible_count(q) == vis);
            // Exhaustive row scan: visible iff n <= D(q-1).
            for (int n = 1; n <= 1500; ++n) {
                if (m.visible(q, n) != (n <= (long long)D * (q - 1))) {
                    FAIL("leak at D=" << D << " m=" << q << " n=" << n);
                }
            }
        }
    }
}

TEST_CASE("visibility is nested and monotone in m") {
    AttentionMask m = dilated_cross_mask(250, 1500, 6);
    for (int q = 2; q <= 250; ++q) {
        CHECK(m.visible_count(q) >= m.visible_count(q - 1));
        for (int n = 1; n <= 1500; ++n)
            if (m.visible(q - 1, n))
                CHECK(m.visible(q, n));
    }
}

TEST_CASE("D=1 cross mask is a shifted lower triangle") {
    AttentionMask cross = dilated_cross_mask(64, 64, 1);
    for (int q = 1; q <= 64; ++q)
        for (int n = 1; n <= 64; ++n)
            CHECK(cross.visible(q, n) == (n <= q - 1));
}

TEST_CASE("PBM dump is well-formed") {
    AttentionMask m = dilated_cross_mask(8, 32, 4);
    std::string path = "mask_dump_test.pbm";
    m.write_pbm(path);
    std::string text = read_text_file(path);
    CHECK(text.rfind("P1\n32 8\n", 0) == 0);
    // Row 3 should contain exactly 8 visible entries: skip the two header
    // lines, then two data rows.
    size_t ones = 0;
    size_t row_start = 0;
    for (int line = 0; line < 4; ++line)
        row_start = text.find('\n', row_start) + 1;
    for (size_t i = row_start; text[i] != '\n'; ++i)
        if (text[i] == '1')
            ++ones;
    CHECK(ones == 8);
    std::remove(path.c_str());
}
