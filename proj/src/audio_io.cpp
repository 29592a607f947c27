#include "modfuse/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>

#include "modfuse/error.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const std::uint8_t> b, std::size_t at, const char* tag) {
    return std::memcmp(b.data() + at, tag, 4) == 0;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

void check_nyquist(double hz, const char* what) {
    if (!(hz > 0.0 && hz < kSampleRate / 2.0)) {
        throw Error(ErrorCode::parameter, std::string(what) + " must lie in (0, 8000) Hz, got " + std::to_string(hz));
    }
}

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 12 || !tag_is(bytes, 0, "RIFF") || !tag_is(bytes, 8, "WAVE")) {
        throw Error(ErrorCode::format, "missing RIFF/WAVE header");
    }

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
    std::uint32_t rate = 0;
    std::span<const std::uint8_t> data;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t chunk_size = read_u32(bytes, pos + 4);
        const std::size_t body = pos + 8;
        if (chunk_size > bytes.size() - body) {
            // Truncated final data chunks are common in the wild; accept what is there.
            if (!tag_is(bytes, pos, "data")) throw Error(ErrorCode::format, "chunk extends past end of file");
        }
        const std::size_t avail = std::min<std::size_t>(chunk_size, bytes.size() - body);
        if (tag_is(bytes, pos, "fmt ")) {
            if (avail < 16) throw Error(ErrorCode::format, "fmt chunk too short");
            format = read_u16(bytes, body);
            channels = read_u16(bytes, body + 2);
            rate = read_u32(bytes, body + 4);
            block_align = read_u16(bytes, body + 12);
            bits = read_u16(bytes, body + 14);
            if (format == kFormatExtensible) {
                if (avail < 26) throw Error(ErrorCode::format, "extensible fmt chunk too short");
                format = read_u16(bytes, body + 24);
            }
            have_fmt = true;
        } else if (tag_is(bytes, pos, "data")) {
            data = bytes.subspan(body, avail);
            have_data = true;
        }
        pos = body + avail + (avail & 1);
    }
    if (!have_fmt) throw Error(ErrorCode::format, "missing fmt chunk");
    if (!have_data) throw Error(ErrorCode::format, "missing data chunk");
    if (channels == 0) throw Error(ErrorCode::format, "zero channels");

    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32) {
        throw Error(ErrorCode::unsupported_encoding,
                    "unsupported WAV encoding (format " + std::to_string(format) + ", " + std::to_string(bits) + " bits)");
    }
    if (block_align != channels * (bits / 8)) throw Error(ErrorCode::format, "inconsistent block alignment");
    if (rate != static_cast<std::uint32_t>(kSampleRate)) {
        throw Error(ErrorCode::rate_mismatch, "sample rate " + std::to_string(rate) + " Hz, expected 16000 Hz");
    }

    const std::size_t frames = data.size() / block_align;
    Waveform wav;
    wav.sample_rate = static_cast<int>(rate);
    wav.source_channels = channels;
    wav.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const std::size_t at = f * block_align + c * (bits / 8);
            if (pcm16) {
                acc += static_cast<std::int16_t>(read_u16(data, at)) / 32768.0;
            } else {
                const std::uint32_t raw = read_u32(data, at);
                float v;
                std::memcpy(&v, &raw, sizeof v);
                acc += v;
            }
        }
        wav.samples[f] = channels == 1 ? acc : acc / channels;
        if (!std::isfinite(wav.samples[f])) throw Error(ErrorCode::data, "non-finite sample in WAV data");
    }
    return wav;
}

Waveform load_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_wav(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, int sample_rate, WavEncoding encoding) {
    const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
    const std::uint16_t block = bits / 8;
    const auto data_bytes = static_cast<std::uint32_t>(samples.size() * block);

    std::vector<std::uint8_t> out;
    out.reserve(44 + data_bytes);
    put_tag(out, "RIFF");
    put_u32(out, 36 + data_bytes);
    put_tag(out, "WAVE");
    put_tag(out, "fmt ");
    put_u32(out, 16);
    put_u16(out, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
    put_u16(out, 1);
    put_u32(out, static_cast<std::uint32_t>(sample_rate));
    put_u32(out, static_cast<std::uint32_t>(sample_rate) * block);
    put_u16(out, block);
    put_u16(out, bits);
    put_tag(out, "data");
    put_u32(out, data_bytes);
    for (double s : samples) {
        if (encoding == WavEncoding::pcm16) {
            const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
            put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
        } else {
            const float f = static_cast<float>(s);
            std::uint32_t raw;
            std::memcpy(&raw, &f, sizeof raw);
            put_u32(out, raw);
        }
    }
    return out;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples, int sample_rate,
               WavEncoding encoding) {
    const auto bytes = encode_wav(samples, sample_rate, encoding);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

AudioClip fix_length(std::span<const double> waveform, std::string source_id) {
    if (waveform.empty()) throw Error(ErrorCode::empty_input, "cannot normalize an empty waveform");
    AudioClip clip;
    clip.source_id = std::move(source_id);
    clip.samples.assign(kClipSamples, 0.0);
    const std::size_t keep = std::min(waveform.size(), kClipSamples);
    std::copy_n(waveform.begin(), keep, clip.samples.begin());
    for (double s : clip.samples) {
        if (!std::isfinite(s)) throw Error(ErrorCode::data, "non-finite sample");
    }
    return clip;
}

void add_noise(std::vector<double>& samples, double snr_db, std::uint64_t seed) {
    if (std::isinf(snr_db) && snr_db > 0) return;
    if (samples.empty()) return;
    double power = 0.0;
    for (double s : samples) power += s * s;
    power /= static_cast<double>(samples.size());
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    SeededRng rng(seed);
    for (double& s : samples) s += sigma * rng.normal();
}

AudioClip synth_clip(const SynthParams& p, std::string source_id) {
    check_nyquist(p.carrier_hz, "carrier frequency");
    if (!(p.mod_hz >= 0.0 && p.mod_hz < 100.0)) {
        throw Error(ErrorCode::parameter, "modulation frequency must lie in [0, 100) Hz");
    }
    if (!(p.mod_depth >= 0.0 && p.mod_depth <= 1.0)) {
        throw Error(ErrorCode::parameter, "modulation depth must lie in [0, 1]");
    }

    AudioClip clip;
    clip.source_id = std::move(source_id);
    clip.samples.resize(kClipSamples);
    if (p.kind == SynthKind::am_tone) {
        const double two_pi = 2.0 * std::numbers::pi;
        for (std::size_t n = 0; n < kClipSamples; ++n) {
            const double t = static_cast<double>(n) / kSampleRate;
            const double envelope = 1.0 + p.mod_depth * std::cos(two_pi * p.mod_hz * t);
            clip.samples[n] = p.amplitude * envelope * std::sin(two_pi * p.carrier_hz * t);
        }
        add_noise(clip.samples, p.snr_db, stream_key(p.seed, 0x6e6f697365ULL));
    } else {
        SeededRng rng(stream_key(p.seed, 0x776869746eULL));
        for (double& s : clip.samples) s = p.amplitude * rng.normal();
    }
    return clip;
}

}  // namespace modfuse
