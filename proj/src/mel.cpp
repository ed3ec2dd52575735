#include "sst/mel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include <Eigen/Dense>

#include "sst/timeline.hpp"

namespace sst {

namespace {

constexpr int kSampleRate = 16000;
constexpr int kNFft = 400;
constexpr int kHop = 160;
constexpr int kNMels = 80;
constexpr int kNBins = kNFft / 2 + 1;
constexpr double kFMax = 8000.0;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Breakpoints for 80 triangles: 82 mel-spaced frequencies from 0 to 8 kHz.
std::vector<double> mel_breakpoints() {
    std::vector<double> hz(kNMels + 2);
    double hi = hz_to_mel(kFMax);
    for (int i = 0; i < kNMels + 2; ++i)
        hz[i] = mel_to_hz(hi * i / (kNMels + 1));
    return hz;
}

struct Basis {
    // DFT bases with the analysis window folded in: (n_bins × n_fft).
    Eigen::MatrixXf cos_w, sin_w;
    Eigen::MatrixXf filters; // (n_mels × n_bins)
};

const Basis &basis() {
    static const Basis b = [] {
        Basis out;
        out.cos_w.resize(kNBins, kNFft);
        out.sin_w.resize(kNBins, kNFft);
        for (int k = 0; k < kNBins; ++k)
            for (int i = 0; i < kNFft; ++i) {
                double w = 0.5 - 0.5 * std::cos(2.0 * M_PI * i / kNFft);
                double ang = 2.0 * M_PI * k * i / kNFft;
                out.cos_w(k, i) = (float)(w * std::cos(ang));
                out.sin_w(k, i) = (float)(-w * std::sin(ang));
            }
        out.filters = Eigen::MatrixXf::Zero(kNMels, kNBins);
        std::vector<double> pts = mel_breakpoints();
        for (int m = 0; m < kNMels; ++m) {
            double lo = pts[m], mid = pts[m + 1], hi = pts[m + 2];
            for (int k = 0; k < kNBins; ++k) {
                double f = (double)k * kSampleRate / kNFft;
                double v = 0;
                if (f > lo && f < mid)
                    v = (f - lo) / (mid - lo);
                else if (f >= mid && f < hi)
                    v = (hi - f) / (hi - mid);
                out.filters(m, k) = (float)v;
            }
        }
        return out;
    }();
    return b;
}

void read_exact(const std::string &bytes, size_t off, void *dst, size_t n,
                const char *what) {
    if (off + n > bytes.size())
        fail_validation(std::string("truncated ") + what);
    std::memcpy(dst, bytes.data() + off, n);
}

} // namespace

// ─── Feature container ───────────────────────────────────────────────────────

std::string features_to_bytes(const Features &f) {
    std::string out;
    out.reserve(24 + f.data.size() * 4);
    out.append("SSTF", 4);
    uint32_t version = 1, dim = (uint32_t)f.dim, frame_ms = (uint32_t)f.frame_ms;
    uint64_t frames = (uint64_t)f.n_frames();
    out.append((const char *)&version, 4);
    out.append((const char *)&dim, 4);
    out.append((const char *)&frame_ms, 4);
    out.append((const char *)&frames, 8);
    out.append((const char *)f.data.data(), f.data.size() * 4);
    return out;
}

Features features_from_bytes(const std::string &bytes) {
    if (bytes.size() < 24 || bytes.compare(0, 4, "SSTF") != 0)
        fail_validation("not a feature file");
    uint32_t version = 0, dim = 0, frame_ms = 0;
    uint64_t frames = 0;
    read_exact(bytes, 4, &version, 4, "feature file");
    read_exact(bytes, 8, &dim, 4, "feature file");
    read_exact(bytes, 12, &frame_ms, 4, "feature file");
    read_exact(bytes, 16, &frames, 8, "feature file");
    if (version != 1)
        fail_validation("unsupported feature file version " +
                        std::to_string(version));
    if (dim == 0 || dim > 1 << 16)
        fail_validation("implausible feature dimension");
    if (frames > (1ull << 32))
        fail_validation("implausible frame count");
    if (bytes.size() != 24 + frames * dim * 4)
        fail_validation("truncated feature file");
    Features f;
    f.dim = (int32_t)dim;
    f.frame_ms = (int32_t)frame_ms;
    f.data.resize((size_t)frames * dim);
    read_exact(bytes, 24, f.data.data(), f.data.size() * 4, "feature file");
    return f;
}

void write_features(const std::string &path, const Features &f) {
    write_text_file(path, features_to_bytes(f));
}

Features read_features(const std::string &path) {
    return features_from_bytes(read_text_file(path));
}

// ─── Log-mel ─────────────────────────────────────────────────────────────────

Features log_mel(const std::vector<float> &samples) {
    if (samples.empty())
        fail_validation("empty audio");
    const int64_t n = (int64_t)samples.size();
    const int64_t T = n / kHop;
    if (T == 0)
        fail_validation("audio shorter than one frame");
    const Basis &b = basis();
    Features out;
    out.data.resize((size_t)T * kNMels);
    Eigen::VectorXf frame(kNFft), power(kNBins), mel(kNMels);
    for (int64_t t = 0; t < T; ++t) {
        // Centered framing: virtual silence outside [0, n).
        const int64_t start = t * kHop - kNFft / 2;
        for (int i = 0; i < kNFft; ++i) {
            int64_t s = start + i;
            frame(i) = (s >= 0 && s < n) ? samples[s] : 0.0f;
        }
        // One GEMV per frame keeps the summation order independent of how
        // much audio follows — prefixes reproduce bit-identical frames.
        Eigen::VectorXf re = b.cos_w * frame;
        Eigen::VectorXf im = b.sin_w * frame;
        power = re.array().square() + im.array().square();
        mel = b.filters * power;
        for (int m = 0; m < kNMels; ++m) {
            float p = std::max(mel(m), 1e-10f);
            out.data[(size_t)t * kNMels + m] =
                (std::log10(p) + 10.0f) / 10.0f;
        }
    }
    return out;
}

std::vector<double> mel_center_frequencies() {
    std::vector<double> pts = mel_breakpoints();
    return {pts.begin() + 1, pts.end() - 1};
}

// ─── WAV ─────────────────────────────────────────────────────────────────────

std::vector<float> wav_to_samples(const std::string &bytes) {
    if (bytes.size() < 12 || bytes.compare(0, 4, "RIFF") != 0 ||
        bytes.compare(8, 4, "WAVE") != 0)
        fail_validation("not a RIFF/WAVE file");
    bool have_fmt = false;
    size_t off = 12;
    while (off + 8 <= bytes.size()) {
        std::string id = bytes.substr(off, 4);
        uint32_t size = 0;
        read_exact(bytes, off + 4, &size, 4, "wav chunk");
        size_t body = off + 8;
        if (id == "fmt ") {
            uint16_t codec = 0, channels = 0, bits = 0;
            uint32_t rate = 0;
            read_exact(bytes, body, &codec, 2, "fmt chunk");
            read_exact(bytes, body + 2, &channels, 2, "fmt chunk");
            read_exact(bytes, body + 4, &rate, 4, "fmt chunk");
            read_exact(bytes, body + 14, &bits, 2, "fmt chunk");
            if (codec != 1 || bits != 16)
                fail_validation("unsupported codec (PCM16 required)");
            if (channels != 1)
                fail_validation("mono audio required");
            if (rate != kSampleRate)
                fail_validation("sample rate must be 16000");
            have_fmt = true;
        } else if (id == "data") {
            if (!have_fmt)
                fail_validation("data chunk before fmt chunk");
            if (body + size > bytes.size())
                fail_validation("truncated data chunk");
            std::vector<float> samples(size / 2);
            for (size_t i = 0; i < samples.size(); ++i) {
                int16_t v = 0;
                std::memcpy(&v, bytes.data() + body + 2 * i, 2);
                samples[i] = (float)v / 32768.0f;
            }
            return samples;
        }
        off = body + size + (size % 2); // chunks are word-aligned
    }
    fail_validation(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

std::string samples_to_wav(const std::vector<float> &samples) {
    const uint32_t data_size = (uint32_t)(samples.size() * 2);
    std::string out;
    out.reserve(44 + data_size);
    auto u32 = [&](uint32_t v) { out.append((const char *)&v, 4); };
    auto u16 = [&](uint16_t v) { out.append((const char *)&v, 2); };
    out.append("RIFF", 4);
    u32(36 + data_size);
    out.append("WAVE", 4);
    out.append("fmt ", 4);
    u32(16);
    u16(1); // PCM
    u16(1); // mono
    u32(kSampleRate);
    u32(kSampleRate * 2); // byte rate
    u16(2);               // block align
    u16(16);              // bits
    out.append("data", 4);
    u32(data_size);
    for (float s : samples) {
        long q = std::lrintf(std::clamp(s, -1.0f, 1.0f) * 32768.0f);
        int16_t v = (int16_t)std::clamp(q, -32768L, 32767L);
        out.append((const char *)&v, 2);
    }
    return out;
}

std::vector<float> read_wav(const std::string &path) {
    return wav_to_samples(read_text_file(path));
}

void write_wav(const std::string &path, const std::vector<float> &samples) {
    write_text_file(path, samples_to_wav(samples));
}

} // namespace sst
