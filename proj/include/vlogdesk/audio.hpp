#ifndef VLOGDESK_AUDIO_HPP
#define VLOGDESK_AUDIO_HPP

#include <string>
#include <vector>

namespace vlogdesk {

inline constexpr int kAudioRate = 16000;

struct AudioClip {
    std::vector<double> samples;  // mono, [-1,1]
    int sample_rate = kAudioRate;

    double duration() const {
        return static_cast<double>(samples.size()) / sample_rate;
    }
};

// RIFF/WAVE reader: PCM 16-bit or 32-bit float, 1-2 channels. Stereo is
// averaged to mono; anything not at 16 kHz is linearly resampled; peaks
// above 1 are normalized away.
AudioClip load_wav(const std::string& path);

// PCM 16-bit mono writer.
void save_wav(const std::string& path, const AudioClip& clip);

AudioClip resample_linear(const AudioClip& clip, int target_rate);

struct MelSpectrogram {
    int rows = 0;   // video frames
    int cols = 0;   // mel bins
    double fps = 0;
    std::vector<double> data;  // rows x cols, log energies

    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

struct MelOptions {
    int window = 1024;
    int hop = 160;  // 10 ms at 16 kHz
    int mel_bins = 80;
    double log_floor = -10.0;
    double fmin = 0.0;
    double fmax = 8000.0;
};

// STFT -> HTK mel filterbank -> log with floor -> per-video-frame averaging.
// Video frame i pools the STFT frames whose centers fall in [i/fps,(i+1)/fps);
// an empty span falls back to the nearest STFT frame. Output rows are exactly
// round(duration * fps).
MelSpectrogram mel_spectrogram(const AudioClip& clip, double fps, const MelOptions& opts = {});

// Center frequencies (Hz) of the filterbank bands, for tests and diagnostics.
std::vector<double> mel_band_centers(const MelOptions& opts);

// Per-video-frame RMS of the waveform; the same alignment rule as above.
std::vector<double> energy_envelope(const AudioClip& clip, double fps);

// One-line JSON header (rows, cols, fps) followed by raw little-endian f64.
void save_mel(const std::string& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::string& path);

}  // namespace vlogdesk

#endif
