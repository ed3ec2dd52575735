#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "sst/mel.hpp"

using namespace sst;

namespace {

// Frame-level oracle: naive per-bin DFT loops and explicit triangle sums,
// everything in double. The implementation must agree channel by channel.
std::vector<double> oracle_frame(const std::vector<float> &samples,
                                 int64_t t) {
    const int n_fft = 400, n_bins = 201, n_mels = 80;
    std::vector<double> windowed(n_fft);
    for (int i = 0; i < n_fft; ++i) {
        int64_t s = t * 160 - 200 + i;
        double x = (s >= 0 && s < (int64_t)samples.size()) ? samples[s] : 0.0;
        double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / n_fft);
        windowed[i] = x * w;
    }
    std::vector<double> power(n_bins);
    for (int k = 0; k < n_bins; ++k) {
        double re = 0, im = 0;
        for (int i = 0; i < n_fft; ++i) {
            double ang = 2.0 * M_PI * k * i / n_fft;
            re += windowed[i] * std::cos(ang);
            im -= windowed[i] * std::sin(ang);
        }
        power[k] = re * re + im * im;
    }
    auto mel_of = [](double hz) {
        return 2595.0 * std::log10(1.0 + hz / 700.0);
    };
    auto hz_of = [](double mel) {
        return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
    };
    double top = mel_of(8000.0);
    std::vector<double> out(n_mels);
    for (int m = 0; m < n_mels; ++m) {
        double lo = hz_of(top * m / 81.0);
        double mid = hz_of(top * (m + 1) / 81.0);
        double hi = hz_of(top * (m + 2) / 81.0);
        double acc = 0;
        for (int k = 0; k < n_bins; ++k) {
            double f = k * 40.0;
            double v = 0;
            if (f > lo && f < mid)
                v = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                v = (hi - f) / (hi - mid);
            acc += v * power[k];
        }
        out[m] = (std::log10(std::max(acc, 1e-10)) + 10.0) / 10.0;
    }
    return out;
}

std::vector<float> tone(double hz, int64_t n_samples, double amp = 0.8) {
    std::vector<float> s(n_samples);
    for (int64_t i = 0; i < n_samples; ++i)
        s[i] = (float)(amp * std::sin(2.0 * M_PI * hz * i / 16000.0));
    return s;
}

std::vector<float> noise(Rng &rng, int64_t n) {
    std::vector<float> s(n);
    for (auto &v : s)
        v = (float)rng.uniform(-0.5, 0.5);
    return s;
}

} // namespace

// ─── Shapes and scaling ──────────────────────────────────────────────────────

TEST_CASE("frame count is one per full hop") {
    CHECK(log_mel(std::vector<float>(16000, 0.1f)).n_frames() == 100);
    CHECK(log_mel(std::vector<float>(15999, 0.1f)).n_frames() == 99);
    CHECK(log_mel(std::vector<float>(160, 0.1f)).n_frames() == 1);
    CHECK_THROWS_AS(log_mel({}), Error);
    CHECK_THROWS_AS(log_mel(std::vector<float>(159, 0.1f)), Error);
}

TEST_CASE("digital silence maps to exactly zero in every channel") {
    Features f = log_mel(std::vector<float>(3200, 0.0f));
    for (float v : f.data)
        CHECK(v == 0.0f);
}

TEST_CASE("a loud tone lands well above the silence floor") {
    Features f = log_mel(tone(1000.0, 16000));
    float peak = 0;
    for (float v : f.data)
        peak = std::max(peak, v);
    CHECK(peak > 0.5f);
}

// ─── Spectral correctness ────────────────────────────────────────────────────

TEST_CASE("extraction matches a naive double-precision pipeline") {
    Rng rng(6181422);
    std::vector<float> s = noise(rng, 4800);
    for (int64_t i = 800; i < 2400; ++i)
        s[i] += (float)(0.6 * std::sin(2.0 * M_PI * 740.0 * i / 16000.0));
    Features f = log_mel(s);
    for (int64_t t : {0L, 1L, 7L, 15L, 29L}) {
        std::vector<double> want = oracle_frame(s, t);
        for (int m = 0; m < 80; ++m)
            CHECK(std::abs(f.frame(t)[m] - want[m]) < 2e-3);
    }
}

TEST_CASE("a pure tone concentrates energy at the covering filter") {
    const double hz = 1000.0;
    Features f = log_mel(tone(hz, 16000));
    std::vector<double> centers = mel_center_frequencies();
    int want = 0;
    for (int m = 1; m < 80; ++m)
        if (std::abs(centers[m] - hz) < std::abs(centers[want] - hz))
            want = m;
    // Pick a frame from the steady middle of the tone.
    const float *fr = f.frame(50);
    int got = 0;
    for (int m = 1; m < 80; ++m)
        if (fr[m] > fr[got])
            got = m;
    CHECK(std::abs(got - want) <= 1);
}

TEST_CASE("filters cover increasing frequencies") {
    std::vector<double> centers = mel_center_frequencies();
    REQUIRE(centers.size() == 80);
    for (size_t i = 1; i < centers.size(); ++i)
        CHECK(centers[i] > centers[i - 1]);
    CHECK(centers.back() < 8000.0);
    CHECK(centers.front() > 0.0);
}

// ─── Streaming stability ─────────────────────────────────────────────────────

TEST_CASE("settled frames are bit-identical between prefix and full audio") {
    Rng rng(29118804);
    std::vector<float> full = noise(rng, 16000);
    for (int64_t chunks : {1L, 3L, 7L}) {
        // An 80 ms chunk is 1280 samples = 8 frames; with 200 samples of
        // forward reach, frames up to 8c−2 are settled once chunk c arrived.
        int64_t n_pre = chunks * 1280;
        std::vector<float> prefix(full.begin(), full.begin() + n_pre);
        Features a = log_mel(prefix);
        Features b = log_mel(full);
        int64_t settled = 8 * chunks - 1; // frames 0 .. 8c−2
        REQUIRE(a.n_frames() >= settled);
        for (int64_t t = 0; t < settled; ++t)
            for (int m = 0; m < 80; ++m)
                CHECK(a.frame(t)[m] == b.frame(t)[m]);
    }
}

// ─── Containers ──────────────────────────────────────────────────────────────

TEST_CASE("feature files round-trip") {
    Rng rng(5150);
    Features f;
    f.data.resize(80 * 17);
    for (auto &v : f.data)
        v = (float)rng.uniform(-1, 2);
    Features back = features_from_bytes(features_to_bytes(f));
    CHECK(back == f);
}

TEST_CASE("feature parsing rejects damaged containers") {
    Features f;
    f.data.assign(160, 0.5f);
    std::string bytes = features_to_bytes(f);
    CHECK_THROWS_AS(features_from_bytes(bytes.substr(0, bytes.size() - 3)),
                    Error);
    CHECK_THROWS_AS(features_from_bytes(bytes + "x"), Error);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(features_from_bytes(bad), Error);
    std::string vers = bytes;
    vers[4] = 9;
    CHECK_THROWS_AS(features_from_bytes(vers), Error);
}

TEST_CASE("wav bytes round-trip PCM16 exactly") {
    Rng rng(40044);
    std::vector<float> s(2000);
    for (auto &v : s)
        v = (float)(rng.uniform_int(-32768, 32767)) / 32768.0f;
    std::vector<float> back = wav_to_samples(samples_to_wav(s));
    REQUIRE(back.size() == s.size());
    for (size_t i = 0; i < s.size(); ++i)
        CHECK(back[i] == s[i]); // int16-grid values survive exactly
}

TEST_CASE("wav parsing rejects what it cannot honor") {
    std::vector<float> s(400, 0.25f);
    std::string wav = samples_to_wav(s);
    CHECK_THROWS_AS(wav_to_samples("not audio at all"), Error);
    CHECK_THROWS_AS(wav_to_samples(wav.substr(0, 50)), Error);

    std::string stereo = wav;
    stereo[22] = 2; // channel count
    CHECK_THROWS_AS(wav_to_samples(stereo), Error);

    std::string slow = wav;
    uint32_t rate = 8000;
    std::memcpy(&slow[24], &rate, 4);
    CHECK_THROWS_AS(wav_to_samples(slow), Error);
}

TEST_CASE("wav parsing skips unknown chunks") {
    std::vector<float> s(320, -0.5f);
    std::string wav = samples_to_wav(s);
    // Splice a LIST chunk between fmt and data.
    std::string extra = "LIST";
    uint32_t sz = 6;
    extra.append((const char *)&sz, 4);
    extra.append("info01", 6);
    std::string spliced = wav.substr(0, 36) + extra + wav.substr(36);
    uint32_t riff_size = (uint32_t)(spliced.size() - 8);
    std::memcpy(&spliced[4], &riff_size, 4);
    std::vector<float> back = wav_to_samples(spliced);
    CHECK(back.size() == s.size());
}
