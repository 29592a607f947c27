#include "modfuse/modspec.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "modfuse/dft.hpp"
#include "modfuse/error.hpp"

namespace modfuse {

WindowKind parse_window(const std::string& name) {
    if (name == "hann") return WindowKind::hann;
    if (name == "hamming") return WindowKind::hamming;
    if (name == "rect") return WindowKind::rect;
    throw Error(ErrorCode::parameter, "unknown window '" + name + "' (hann, hamming, rect)");
}

const char* window_name(WindowKind kind) {
    switch (kind) {
        case WindowKind::hann: return "hann";
        case WindowKind::hamming: return "hamming";
        case WindowKind::rect: return "rect";
    }
    return "hann";
}

std::vector<double> make_window(WindowKind kind, std::size_t length) {
    std::vector<double> w(length, 1.0);
    const double step = 2.0 * std::numbers::pi / static_cast<double>(length);
    for (std::size_t n = 0; n < length; ++n) {
        const double c = std::cos(step * static_cast<double>(n));
        switch (kind) {
            case WindowKind::hann: w[n] = 0.5 - 0.5 * c; break;
            case WindowKind::hamming: w[n] = 0.54 - 0.46 * c; break;
            case WindowKind::rect: break;
        }
    }
    return w;
}

Stft stft(std::span<const double> samples, WindowKind window, StftGeometry geometry) {
    if (geometry.frame_len > geometry.n_fft) {
        throw Error(ErrorCode::geometry, "frame length exceeds FFT size");
    }
    const std::size_t frames = geometry.frames(samples.size());
    if (frames == 0) throw Error(ErrorCode::geometry, "signal shorter than one frame");
    const std::size_t bins = geometry.bins();
    const auto win = make_window(window, geometry.frame_len);
    const DftPlan plan(geometry.n_fft);

    Stft out;
    out.geometry = geometry;
    out.window = window;
    out.magnitudes.resize(static_cast<Eigen::Index>(bins), static_cast<Eigen::Index>(frames));

    std::vector<cplx> frame(geometry.n_fft);
    std::vector<cplx> spec(geometry.n_fft);
    for (std::size_t t = 0; t < frames; ++t) {
        const std::size_t start = t * geometry.hop;
        std::fill(frame.begin(), frame.end(), cplx{});
        for (std::size_t n = 0; n < geometry.frame_len; ++n) frame[n] = samples[start + n] * win[n];
        plan.forward(frame, spec);
        for (std::size_t k = 0; k < bins; ++k) {
            out.magnitudes(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = std::abs(spec[k]);
        }
    }
    return out;
}

Stft stft(const AudioClip& clip, WindowKind window, StftGeometry geometry) {
    return stft(std::span<const double>(clip.samples), window, geometry);
}

ModSpectrogram modulation_spectrogram(const Stft& s, std::size_t expected_frames) {
    const auto frames = static_cast<std::size_t>(s.magnitudes.cols());
    if (expected_frames != 0 && frames != expected_frames) {
        throw Error(ErrorCode::geometry, "STFT has " + std::to_string(frames) + " frames, modulation transform expects " +
                                             std::to_string(expected_frames));
    }
    if (frames == 0) throw Error(ErrorCode::geometry, "STFT has no frames");
    const std::size_t bins = static_cast<std::size_t>(s.magnitudes.rows());
    const std::size_t keep = frames / 2 + 1;
    const DftPlan plan(frames);

    ModSpectrogram ms;
    ms.n_mod_fft = frames;
    ms.values.resize(static_cast<Eigen::Index>(bins), static_cast<Eigen::Index>(keep));
    std::vector<cplx> traj(frames);
    std::vector<cplx> spec(frames);
    for (std::size_t i = 0; i < bins; ++i) {
        for (std::size_t t = 0; t < frames; ++t) {
            traj[t] = s.magnitudes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t));
        }
        plan.forward(traj, spec);
        for (std::size_t k = 0; k < keep; ++k) {
            ms.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = std::abs(spec[k]);
        }
    }

    const double sr = kSampleRate;
    const double frame_rate = sr / static_cast<double>(s.geometry.hop);
    ms.freq_axis_hz.resize(bins);
    for (std::size_t i = 0; i < bins; ++i) ms.freq_axis_hz[i] = static_cast<double>(i) * sr / s.geometry.n_fft;
    ms.modfreq_axis_hz.resize(keep);
    for (std::size_t k = 0; k < keep; ++k) {
        ms.modfreq_axis_hz[k] = static_cast<double>(k) * frame_rate / static_cast<double>(frames);
    }
    return ms;
}

ModSpectrogram extract_modspec(const AudioClip& clip, WindowKind window) {
    if (clip.samples.size() != kClipSamples) {
        throw Error(ErrorCode::geometry, "clip has " + std::to_string(clip.samples.size()) + " samples, expected 64600");
    }
    return modulation_spectrogram(stft(clip, window), kStftFrames);
}

Matrix log1p_view(const Matrix& values) { return values.unaryExpr([](double v) { return std::log1p(v); }); }

ModPeak modulation_peak(const ModSpectrogram& ms, bool skip_dc) {
    ModPeak best;
    best.value = -1.0;
    const Eigen::Index first = skip_dc ? 1 : 0;
    for (Eigen::Index i = 0; i < ms.values.rows(); ++i) {
        for (Eigen::Index k = first; k < ms.values.cols(); ++k) {
            if (ms.values(i, k) > best.value) {
                best = {static_cast<std::size_t>(i), static_cast<std::size_t>(k), ms.values(i, k)};
            }
        }
    }
    return best;
}

}  // namespace modfuse
