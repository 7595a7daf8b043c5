#include "vlogdesk/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "vlogdesk/errors.hpp"

namespace vlogdesk {

namespace {

constexpr double kPi = 3.14159265358979323846;

uint32_t le32(const unsigned char* p) {
    return p[0] | (p[1] << 8) | (p[2] << 16) | (uint32_t(p[3]) << 24);
}
uint16_t le16(const unsigned char* p) { return static_cast<uint16_t>(p[0] | (p[1] << 8)); }

// In-place iterative radix-2 FFT; n must be a power of two.
void fft(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t k = 0; k < len / 2; ++k) {
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

}  // namespace

AudioClip resample_linear(const AudioClip& clip, int target_rate) {
    if (clip.sample_rate == target_rate) return clip;
    const int64_t n_in = static_cast<int64_t>(clip.samples.size());
    const int64_t n_out = static_cast<int64_t>(
        std::llround(static_cast<double>(n_in) * target_rate / clip.sample_rate));
    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);
    const double ratio = static_cast<double>(clip.sample_rate) / target_rate;
    for (int64_t i = 0; i < n_out; ++i) {
        const double pos = i * ratio;
        const int64_t i0 = static_cast<int64_t>(pos);
        const double frac = pos - i0;
        const double a = i0 < n_in ? clip.samples[i0] : 0.0;
        const double b = i0 + 1 < n_in ? clip.samples[i0 + 1] : a;
        out.samples[i] = a + (b - a) * frac;
    }
    return out;
}

AudioClip load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("load_wav: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0)
        fail_data("load_wav: '" + path + "' missing RIFF tag at byte 0");
    if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        fail_data("load_wav: '" + path + "' missing WAVE tag at byte 8");

    int channels = 0, bits = 0, rate = 0, format = 0;
    const unsigned char* data = nullptr;
    size_t data_len = 0;
    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* tag = reinterpret_cast<const char*>(bytes.data() + pos);
        const uint32_t len = le32(bytes.data() + pos + 4);
        if (pos + 8 + len > bytes.size())
            fail_data("load_wav: truncated chunk at byte " + std::to_string(pos) + " in " + path);
        const unsigned char* body = bytes.data() + pos + 8;
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (len < 16) fail_data("load_wav: short fmt chunk at byte " + std::to_string(pos));
            format = le16(body);
            channels = le16(body + 2);
            rate = static_cast<int>(le32(body + 4));
            bits = le16(body + 14);
        } else if (std::memcmp(tag, "data", 4) == 0) {
            data = body;
            data_len = len;
        }
        pos += 8 + len + (len & 1);  // chunks are word-aligned
    }
    if (!data) fail_data("load_wav: no data chunk in " + path);
    if (channels < 1 || channels > 2)
        fail_data("load_wav: unsupported channel count " + std::to_string(channels) + " in " + path);

    AudioClip clip;
    clip.sample_rate = rate;
    if (format == 1 && bits == 16) {
        const size_t n = data_len / (2 * channels);
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int ch = 0; ch < channels; ++ch) {
                const int16_t s = static_cast<int16_t>(le16(data + (i * channels + ch) * 2));
                acc += s / 32768.0;
            }
            clip.samples[i] = acc / channels;
        }
    } else if (format == 3 && bits == 32) {
        const size_t n = data_len / (4 * channels);
        clip.samples.resize(n);
        for (size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int ch = 0; ch < channels; ++ch) {
                uint32_t u = le32(data + (i * channels + ch) * 4);
                float v;
                std::memcpy(&v, &u, 4);
                acc += v;
            }
            clip.samples[i] = acc / channels;
        }
    } else {
        fail_data("load_wav: unsupported encoding (format " + std::to_string(format) + ", " +
                  std::to_string(bits) + "-bit) in " + path);
    }

    clip = resample_linear(clip, kAudioRate);
    double peak = 0.0;
    for (double s : clip.samples) peak = std::max(peak, std::abs(s));
    if (peak > 1.0)
        for (auto& s : clip.samples) s /= peak;
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail_data("save_wav: cannot open " + path);
    const uint32_t n = static_cast<uint32_t>(clip.samples.size());
    const uint32_t data_len = n * 2;
    auto w32 = [&](uint32_t v) {
        unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
        f.write(reinterpret_cast<char*>(b), 4);
    };
    auto w16 = [&](uint16_t v) {
        unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        f.write(reinterpret_cast<char*>(b), 2);
    };
    f.write("RIFF", 4);
    w32(36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    w32(16);
    w16(1);  // PCM
    w16(1);  // mono
    w32(static_cast<uint32_t>(clip.sample_rate));
    w32(static_cast<uint32_t>(clip.sample_rate) * 2);
    w16(2);
    w16(16);
    f.write("data", 4);
    w32(data_len);
    for (uint32_t i = 0; i < n; ++i) {
        const double v = std::clamp(clip.samples[i], -1.0, 1.0);
        const int16_t s = static_cast<int16_t>(std::lround(v * 32767.0));
        w16(static_cast<uint16_t>(s));
    }
    if (!f) fail_data("save_wav: write failed for " + path);
}

std::vector<double> mel_band_centers(const MelOptions& opts) {
    const double mel_min = hz_to_mel(opts.fmin);
    const double mel_max = hz_to_mel(opts.fmax);
    std::vector<double> centers(opts.mel_bins);
    for (int m = 0; m < opts.mel_bins; ++m) {
        const double mel = mel_min + (mel_max - mel_min) * (m + 1) / (opts.mel_bins + 1);
        centers[m] = mel_to_hz(mel);
    }
    return centers;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, double fps, const MelOptions& opts) {
    if (clip.sample_rate != kAudioRate)
        fail_data("mel_spectrogram: expected 16 kHz input, got " +
                  std::to_string(clip.sample_rate));
    if (fps <= 0) fail_data("mel_spectrogram: fps must be positive");
    const int n = static_cast<int>(clip.samples.size());
    if (n < opts.window)
        fail_data("mel_spectrogram: clip shorter than one window (" + std::to_string(n) + " < " +
                  std::to_string(opts.window) + " samples)");

    const int n_stft = (n - opts.window) / opts.hop + 1;
    const int n_bins = opts.window / 2 + 1;

    std::vector<double> window(opts.window);
    for (int i = 0; i < opts.window; ++i)
        window[i] = 0.5 * (1.0 - std::cos(2.0 * kPi * i / opts.window));

    // Triangular HTK filterbank over the power spectrum.
    const double mel_min = hz_to_mel(opts.fmin);
    const double mel_max = hz_to_mel(opts.fmax);
    std::vector<double> hz_pts(opts.mel_bins + 2);
    for (int m = 0; m < opts.mel_bins + 2; ++m)
        hz_pts[m] = mel_to_hz(mel_min + (mel_max - mel_min) * m / (opts.mel_bins + 1));
    std::vector<double> bin_hz(n_bins);
    for (int k = 0; k < n_bins; ++k)
        bin_hz[k] = static_cast<double>(k) * kAudioRate / opts.window;

    std::vector<double> mel_frames(static_cast<size_t>(n_stft) * opts.mel_bins);
    std::vector<std::complex<double>> buf(opts.window);
    std::vector<double> power(n_bins);
    for (int s = 0; s < n_stft; ++s) {
        for (int i = 0; i < opts.window; ++i)
            buf[i] = {clip.samples[static_cast<size_t>(s) * opts.hop + i] * window[i], 0.0};
        fft(buf);
        for (int k = 0; k < n_bins; ++k) power[k] = std::norm(buf[k]);
        for (int m = 0; m < opts.mel_bins; ++m) {
            const double lo = hz_pts[m], mid = hz_pts[m + 1], hi = hz_pts[m + 2];
            double acc = 0.0;
            for (int k = 0; k < n_bins; ++k) {
                const double f = bin_hz[k];
                if (f <= lo || f >= hi) continue;
                const double wgt = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
                acc += wgt * power[k];
            }
            mel_frames[static_cast<size_t>(s) * opts.mel_bins + m] =
                std::max(std::log(std::max(acc, 1e-300)), opts.log_floor);
        }
    }

    // Pool STFT frames into video frames by center time.
    const double duration = static_cast<double>(n) / kAudioRate;
    const int rows = static_cast<int>(std::lround(duration * fps));
    MelSpectrogram mel;
    mel.rows = std::max(rows, 1);
    mel.cols = opts.mel_bins;
    mel.fps = fps;
    mel.data.assign(static_cast<size_t>(mel.rows) * mel.cols, opts.log_floor);
    std::vector<double> centers(n_stft);
    for (int s = 0; s < n_stft; ++s)
        centers[s] = (static_cast<double>(s) * opts.hop + opts.window * 0.5) / kAudioRate;
    for (int r = 0; r < mel.rows; ++r) {
        const double t0 = r / fps, t1 = (r + 1) / fps;
        int count = 0;
        std::vector<double> acc(opts.mel_bins, 0.0);
        for (int s = 0; s < n_stft; ++s) {
            if (centers[s] >= t0 && centers[s] < t1) {
                for (int m = 0; m < opts.mel_bins; ++m)
                    acc[m] += mel_frames[static_cast<size_t>(s) * opts.mel_bins + m];
                ++count;
            }
        }
        if (count == 0) {
            // No STFT center in this span (very high fps or clip tail): nearest frame.
            const double tc = 0.5 * (t0 + t1);
            int best = 0;
            for (int s = 1; s < n_stft; ++s)
                if (std::abs(centers[s] - tc) < std::abs(centers[best] - tc)) best = s;
            for (int m = 0; m < opts.mel_bins; ++m)
                acc[m] = mel_frames[static_cast<size_t>(best) * opts.mel_bins + m];
            count = 1;
        }
        for (int m = 0; m < opts.mel_bins; ++m)
            mel.data[static_cast<size_t>(r) * opts.mel_bins + m] = acc[m] / count;
    }
    return mel;
}

std::vector<double> energy_envelope(const AudioClip& clip, double fps) {
    const double duration = clip.duration();
    const int rows = std::max(1, static_cast<int>(std::lround(duration * fps)));
    std::vector<double> env(rows, 0.0);
    const int n = static_cast<int>(clip.samples.size());
    for (int r = 0; r < rows; ++r) {
        const int i0 = static_cast<int>(std::floor(r / fps * clip.sample_rate));
        const int i1 = std::min(n, static_cast<int>(std::floor((r + 1) / fps * clip.sample_rate)));
        double acc = 0.0;
        int cnt = 0;
        for (int i = i0; i < i1; ++i, ++cnt) acc += clip.samples[i] * clip.samples[i];
        env[r] = cnt > 0 ? std::sqrt(acc / cnt) : 0.0;
    }
    return env;
}

void save_mel(const std::string& path, const MelSpectrogram& mel) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail_data("save_mel: cannot open " + path);
    nlohmann::json header = {{"rows", mel.rows}, {"cols", mel.cols}, {"fps", mel.fps}};
    f << header.dump() << "\n";
    f.write(reinterpret_cast<const char*>(mel.data.data()),
            static_cast<std::streamsize>(mel.data.size() * sizeof(double)));
    if (!f) fail_data("save_mel: write failed for " + path);
}

MelSpectrogram load_mel(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail_data("load_mel: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) fail_data("load_mel: missing header in " + path);
    auto header = nlohmann::json::parse(line, nullptr, false);
    if (header.is_discarded()) fail_data("load_mel: invalid header JSON in " + path);
    MelSpectrogram mel;
    mel.rows = header.at("rows").get<int>();
    mel.cols = header.at("cols").get<int>();
    mel.fps = header.at("fps").get<double>();
    mel.data.resize(static_cast<size_t>(mel.rows) * mel.cols);
    if (!f.read(reinterpret_cast<char*>(mel.data.data()),
                static_cast<std::streamsize>(mel.data.size() * sizeof(double))))
        fail_data("load_mel: truncated data in " + path);
    return mel;
}

}  // namespace vlogdesk
