#pragma once

#include <cstddef>
#include <vector>

#include "modfuse/audio_io.hpp"
#include "modfuse/matrix.hpp"

namespace modfuse {

enum class WindowKind { hann, hamming, rect };

WindowKind parse_window(const std::string& name);
const char* window_name(WindowKind kind);

// Periodic window of the given length.
std::vector<double> make_window(WindowKind kind, std::size_t length);

struct StftGeometry {
    std::size_t frame_len = 400;  // 25 ms at 16 kHz
    std::size_t hop = 160;        // 10 ms
    std::size_t n_fft = 400;

    std::size_t bins() const { return n_fft / 2 + 1; }
    std::size_t frames(std::size_t n_samples) const {
        return n_samples < frame_len ? 0 : (n_samples - frame_len) / hop + 1;
    }
};

inline constexpr std::size_t kFreqBins = 201;
inline constexpr std::size_t kStftFrames = 402;
inline constexpr std::size_t kModBins = kStftFrames / 2 + 1;  // 202

// Magnitude STFT, bins x frames. The first frame starts at sample 0 and no
// centering pad is applied.
struct Stft {
    Matrix magnitudes;
    StftGeometry geometry;
    WindowKind window = WindowKind::hann;
};

struct ModSpectrogram {
    Matrix values;  // acoustic-frequency rows x modulation-frequency columns
    std::size_t n_mod_fft = kStftFrames;
    std::vector<double> freq_axis_hz;
    std::vector<double> modfreq_axis_hz;
};

Stft stft(const AudioClip& clip, WindowKind window = WindowKind::hann, StftGeometry geometry = {});
Stft stft(std::span<const double> samples, WindowKind window = WindowKind::hann, StftGeometry geometry = {});

// Per acoustic-frequency row: |DFT| of the magnitude trajectory over all
// frames (no window, no zero padding), keeping bins 0..frames/2.
// expected_frames, when nonzero, enforces the frame count.
ModSpectrogram modulation_spectrogram(const Stft& s, std::size_t expected_frames = kStftFrames);

// Full chain for a normalized clip, with the canonical-geometry check.
ModSpectrogram extract_modspec(const AudioClip& clip, WindowKind window = WindowKind::hann);

// log(1 + x) view of a modulation spectrogram.
Matrix log1p_view(const Matrix& values);

struct ModPeak {
    std::size_t row = 0;
    std::size_t col = 0;
    double value = 0.0;
};

// Largest entry. With skip_dc, column 0 (the mean envelope level) is excluded.
ModPeak modulation_peak(const ModSpectrogram& ms, bool skip_dc = true);

}  // namespace modfuse
