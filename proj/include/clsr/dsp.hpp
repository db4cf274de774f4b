#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clsr/tensor.hpp"

// Audio analysis chain: PCM16 WAV -> mono float clip -> windowed power
// spectra -> triangular mel bank -> log power -> temporal mean pooling.
// Everything is computed in 64-bit and stored in 32-bit; identical bytes in
// give identical features out, with no threading and no external FFT.

namespace clsr::dsp {

struct audio_clip {
    uint32_t sample_rate = 0;
    std::vector<float> samples; // mono, normalized to [-1, 1]
};

// PCM16 RIFF/WAVE only. Mono kept as-is, stereo averaged per frame.
// Distinct failures: malformed container (errc::format), non-PCM16 payload or
// more than two channels (errc::unsupported), zero-length data (errc::empty).
audio_clip load_wav(const std::string& path);

struct dsp_params {
    uint32_t sample_rate = 32000;
    size_t win = 1024; // also the FFT size; must be a power of two
    size_t hop = 320;
    size_t n_mels = 64;
    double fmin = 50.0;
    double fmax = 14000.0;
    double power_floor = 1e-10; // log(max(power, power_floor))
};

// Frames that fit entirely inside the clip: floor((n - win)/hop) + 1, zero
// when the clip is shorter than one window.
size_t frame_count(size_t n_samples, size_t win, size_t hop);

double mel_from_hz(double hz);
double hz_from_mel(double mel);

// Triangular filters with unit peak, linearly spaced in mel between fmin and
// fmax, evaluated at FFT bin centers. weights is n_mels x n_bins row-major
// with n_bins = n_fft/2 + 1.
struct mel_bank {
    size_t n_mels = 0;
    size_t n_bins = 0;
    std::vector<float> weights;
    std::vector<double> center_hz; // per-filter peak frequency
    float weight(size_t m, size_t bin) const { return weights[m * n_bins + bin]; }
};

mel_bank make_mel_bank(size_t n_mels, size_t n_fft, uint32_t sample_rate, double fmin,
                       double fmax);

struct mel_spectrogram {
    tensor2 values; // frames x mel_bins, log-power
    size_t frames() const { return values.rows; }
    size_t mel_bins() const { return values.cols; }
};

// Periodic Hanning window, |FFT|^2 power spectrum, mel projection, log with
// floor. The clip's sample rate must equal params.sample_rate (no resampling
// here); clips shorter than one window are rejected.
mel_spectrogram log_mel(const audio_clip& clip, const dsp_params& params);

// Temporal mean over frames; the clip-level feature vector (length n_mels).
std::vector<float> clip_feature(const mel_spectrogram& mel);

} // namespace clsr::dsp
