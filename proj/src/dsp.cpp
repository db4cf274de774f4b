#include "clsr/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "clsr/common.hpp"

namespace clsr::dsp {

namespace {

uint32_t read_u32le(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t read_u16le(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

bool tag_is(const uint8_t* p, const char* tag) { return std::memcmp(p, tag, 4) == 0; }

// In-place radix-2 complex FFT; n must be a power of two. Double precision so
// that downstream log-power values are limited by f32 storage, not the
// transform.
void fft(std::vector<double>& re, std::vector<double>& im) {
    const size_t n = re.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                size_t a = i + k, b = i + k + len / 2;
                double tr = re[b] * cr - im[b] * ci;
                double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

} // namespace

audio_clip load_wav(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(errc::format, "cannot open wav file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());

    if (bytes.size() < 12 || !tag_is(bytes.data(), "RIFF") || !tag_is(bytes.data() + 8, "WAVE"))
        fail(errc::format, path + ": not a RIFF/WAVE file");

    bool have_fmt = false;
    uint16_t audio_format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    size_t data_off = 0, data_len = 0;
    bool have_data = false;

    size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const uint8_t* hdr = bytes.data() + off;
        uint32_t chunk_len = read_u32le(hdr + 4);
        size_t body = off + 8;
        if (body + chunk_len > bytes.size())
            fail(errc::format, path + ": chunk extends past end of file (truncated)");
        if (tag_is(hdr, "fmt ")) {
            if (chunk_len < 16) fail(errc::format, path + ": fmt chunk too small");
            audio_format = read_u16le(bytes.data() + body);
            channels = read_u16le(bytes.data() + body + 2);
            rate = read_u32le(bytes.data() + body + 4);
            bits = read_u16le(bytes.data() + body + 14);
            have_fmt = true;
        } else if (tag_is(hdr, "data")) {
            data_off = body;
            data_len = chunk_len;
            have_data = true;
        }
        off = body + chunk_len + (chunk_len & 1); // chunks are padded to even size
    }

    if (!have_fmt) fail(errc::format, path + ": missing fmt chunk");
    if (!have_data) fail(errc::format, path + ": missing data chunk");
    if (audio_format != 1)
        fail(errc::unsupported,
             path + ": unsupported codec (format tag " + std::to_string(audio_format) +
                 "), only PCM is handled");
    if (bits != 16)
        fail(errc::unsupported, path + ": only 16-bit PCM is handled, got " +
                                    std::to_string(bits) + "-bit");
    if (channels != 1 && channels != 2)
        fail(errc::unsupported,
             path + ": only mono or stereo handled, got " + std::to_string(channels) +
                 " channels");
    if (data_len == 0) fail(errc::empty, path + ": data chunk is empty");
    size_t frame_bytes = 2u * channels;
    if (data_len % frame_bytes != 0)
        fail(errc::format, path + ": data chunk is not a whole number of sample frames");

    size_t n_frames = data_len / frame_bytes;
    audio_clip clip;
    clip.sample_rate = rate;
    clip.samples.resize(n_frames);
    const uint8_t* d = bytes.data() + data_off;
    for (size_t i = 0; i < n_frames; ++i) {
        if (channels == 1) {
            int16_t s = static_cast<int16_t>(read_u16le(d + 2 * i));
            clip.samples[i] = static_cast<float>(s / 32768.0);
        } else {
            int16_t l = static_cast<int16_t>(read_u16le(d + 4 * i));
            int16_t r = static_cast<int16_t>(read_u16le(d + 4 * i + 2));
            clip.samples[i] =
                static_cast<float>((static_cast<double>(l) + static_cast<double>(r)) / 2.0 /
                                   32768.0);
        }
    }
    return clip;
}

size_t frame_count(size_t n_samples, size_t win, size_t hop) {
    if (n_samples < win) return 0;
    return (n_samples - win) / hop + 1;
}

double mel_from_hz(double hz) { return 1127.0 * std::log(1.0 + hz / 700.0); }

double hz_from_mel(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

mel_bank make_mel_bank(size_t n_mels, size_t n_fft, uint32_t sample_rate, double fmin,
                       double fmax) {
    if (n_mels == 0) fail(errc::config, "mel bank needs at least one filter");
    if (!(fmin >= 0.0) || !(fmax > fmin))
        fail(errc::config, "mel bank requires 0 <= fmin < fmax");
    if (fmax > sample_rate / 2.0)
        fail(errc::config, "mel fmax " + std::to_string(fmax) + " exceeds Nyquist " +
                               std::to_string(sample_rate / 2.0));

    mel_bank bank;
    bank.n_mels = n_mels;
    bank.n_bins = n_fft / 2 + 1;
    bank.weights.assign(n_mels * bank.n_bins, 0.f);
    bank.center_hz.resize(n_mels);

    double mel_lo = mel_from_hz(fmin);
    double mel_hi = mel_from_hz(fmax);
    std::vector<double> edges(n_mels + 2);
    for (size_t i = 0; i < edges.size(); ++i)
        edges[i] = hz_from_mel(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                            static_cast<double>(n_mels + 1));
    for (size_t m = 0; m < n_mels; ++m) bank.center_hz[m] = edges[m + 1];

    double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(n_fft);
    for (size_t m = 0; m < n_mels; ++m) {
        double lo = edges[m], c = edges[m + 1], hi = edges[m + 2];
        for (size_t k = 0; k < bank.n_bins; ++k) {
            double f = k * bin_hz;
            double w = 0.0;
            if (f > lo && f <= c)
                w = (f - lo) / (c - lo);
            else if (f > c && f < hi)
                w = (hi - f) / (hi - c);
            bank.weights[m * bank.n_bins + k] = static_cast<float>(w);
        }
    }
    return bank;
}

mel_spectrogram log_mel(const audio_clip& clip, const dsp_params& params) {
    if (clip.sample_rate != params.sample_rate)
        fail(errc::config, "clip sample rate " + std::to_string(clip.sample_rate) +
                               " does not match configured rate " +
                               std::to_string(params.sample_rate) + " (no resampling)");
    if (params.win == 0 || (params.win & (params.win - 1)) != 0)
        fail(errc::config, "window size must be a power of two, got " +
                               std::to_string(params.win));
    if (params.hop == 0) fail(errc::config, "hop must be positive");
    size_t frames = frame_count(clip.samples.size(), params.win, params.hop);
    if (frames == 0)
        fail(errc::empty, "clip of " + std::to_string(clip.samples.size()) +
                              " samples is shorter than one analysis window (" +
                              std::to_string(params.win) + ")");

    mel_bank bank =
        make_mel_bank(params.n_mels, params.win, params.sample_rate, params.fmin, params.fmax);

    // Periodic Hanning window (STFT convention: denominator is the window
    // length, not length-1).
    std::vector<double> window(params.win);
    for (size_t i = 0; i < params.win; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                         static_cast<double>(params.win));

    mel_spectrogram out;
    out.values = tensor2(frames, params.n_mels);

    std::vector<double> re(params.win), im(params.win), power(bank.n_bins);
    for (size_t t = 0; t < frames; ++t) {
        size_t start = t * params.hop;
        for (size_t i = 0; i < params.win; ++i) {
            re[i] = static_cast<double>(clip.samples[start + i]) * window[i];
            im[i] = 0.0;
        }
        fft(re, im);
        for (size_t k = 0; k < bank.n_bins; ++k) power[k] = re[k] * re[k] + im[k] * im[k];
        for (size_t m = 0; m < params.n_mels; ++m) {
            double acc = 0.0;
            for (size_t k = 0; k < bank.n_bins; ++k)
                acc += static_cast<double>(bank.weight(m, k)) * power[k];
            out.values.at(t, m) =
                static_cast<float>(std::log(std::max(acc, params.power_floor)));
        }
    }
    return out;
}

std::vector<float> clip_feature(const mel_spectrogram& mel) {
    if (mel.frames() == 0) fail(errc::contract, "clip_feature on empty spectrogram");
    std::vector<float> out(mel.mel_bins());
    for (size_t m = 0; m < mel.mel_bins(); ++m) {
        double acc = 0.0;
        for (size_t t = 0; t < mel.frames(); ++t) acc += static_cast<double>(mel.values.at(t, m));
        out[m] = static_cast<float>(acc / static_cast<double>(mel.frames()));
    }
    return out;
}

} // namespace clsr::dsp
