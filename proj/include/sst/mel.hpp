#pragma once

//
// mel.hpp — audio front end. 16 kHz mono PCM in, 80-channel log-mel frames
// out, one frame per 10 ms. Framing is centered with virtual silence beyond
// both ends of the signal, so frame t never needs samples later than
// t·160 + 200: once 160·t + 200 samples have arrived, frame t is final and
// will never be recomputed. The log is rescaled so digital silence sits at
// exactly 0 — the same value used for padding and for synthetic gaps — which
// keeps "no audio yet" and "quiet audio" on the same footing everywhere
// downstream.
//

#include <cstdint>
#include <string>
#include <vector>

#include "sst/common.hpp"

namespace sst {

// ─── Feature matrix ──────────────────────────────────────────────────────────

struct Features {
    int32_t dim = 80;
    int32_t frame_ms = 10;
    std::vector<float> data; // frame-major, data[t*dim + c]

    int64_t n_frames() const {
        return dim == 0 ? 0 : (int64_t)data.size() / dim;
    }
    const float *frame(int64_t t) const { return data.data() + t * dim; }
    float *frame(int64_t t) { return data.data() + t * dim; }

    bool operator==(const Features &) const = default;
};

// Binary container: "SSTF", u32 version, u32 dim, u32 frame_ms,
// u64 n_frames, then dim·n_frames little-endian f32, frame-major.
std::string features_to_bytes(const Features &f);
Features features_from_bytes(const std::string &bytes);
void write_features(const std::string &path, const Features &f);
Features read_features(const std::string &path);

// ─── Log-mel extraction ──────────────────────────────────────────────────────

// 400-sample periodic Hann window, hop 160, 80 triangular mel filters over
// 0–8000 Hz, power floored at 1e-10. Output channel value is
// (log10(power) + 10) / 10, so silence = 0 and full-scale tones land near 1.
// Yields floor(n_samples / 160) frames; frame t is centered at sample 160·t.
Features log_mel(const std::vector<float> &samples);

// Mel filter center frequencies in Hz (diagnostics and tests).
std::vector<double> mel_center_frequencies();

// ─── WAV I/O ─────────────────────────────────────────────────────────────────

// PCM16 mono 16 kHz only; anything else is a validation error.
std::vector<float> wav_to_samples(const std::string &bytes);
std::string samples_to_wav(const std::vector<float> &samples);
std::vector<float> read_wav(const std::string &path);
void write_wav(const std::string &path, const std::vector<float> &samples);

} // namespace sst
