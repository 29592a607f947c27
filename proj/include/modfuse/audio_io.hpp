#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace modfuse {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kClipSamples = 64600;

// Variable-length mono waveform as decoded from disk, before fix_length.
struct Waveform {
    std::vector<double> samples;
    int sample_rate = 0;
    int source_channels = 1;
};

// Fixed-geometry clip: exactly kClipSamples samples at kSampleRate.
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = kSampleRate;
    std::string source_id;
};

enum class WavEncoding { pcm16, float32 };

// Decodes RIFF/WAVE bytes. Multichannel input is averaged to mono. Any rate
// other than 16 kHz is rejected (there is no resampler).
Waveform decode_wav(std::span<const std::uint8_t> bytes);
Waveform load_wav(const std::filesystem::path& path);

// Canonical 44-byte-header mono file. PCM16 quantizes with round(x * 32768)
// clamped to [-32768, 32767].
std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate,
                                     WavEncoding encoding = WavEncoding::pcm16);
void write_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate,
               WavEncoding encoding = WavEncoding::pcm16);

// Right zero-pad or head-truncate to kClipSamples.
AudioClip fix_length(std::span<const double> waveform, std::string source_id = {});

enum class SynthKind { am_tone, noise };

struct SynthParams {
    SynthKind kind = SynthKind::am_tone;
    double carrier_hz = 2000.0;
    double mod_hz = 8.0;
    double mod_depth = 1.0;
    double snr_db = std::numeric_limits<double>::infinity();
    std::uint64_t seed = 0;
    double amplitude = 1.0;
};

// am_tone: amplitude * (1 + depth*cos(2*pi*mod*t)) * sin(2*pi*carrier*t), plus
// white Gaussian noise at snr_db relative to the tone power (none when the
// SNR is infinite). noise: unit-RMS white Gaussian noise scaled by amplitude.
AudioClip synth_clip(const SynthParams& params, std::string source_id = {});

// Adds white Gaussian noise at the given SNR relative to the clip's own power.
void add_noise(std::vector<double>& samples, double snr_db, std::uint64_t seed);

}  // namespace modfuse
