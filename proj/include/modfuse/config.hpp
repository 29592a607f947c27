#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include "modfuse/classifier.hpp"
#include "modfuse/fusion.hpp"
#include "modfuse/modspec.hpp"

namespace modfuse {

enum class FeatureTransform { none, log1p };

struct RunConfig {
    std::string preset = "full";
    std::uint64_t seed = 7;
    double learning_rate = 1e-6;
    int batch_size = 14;
    int epochs = 100;
    // Unset means derive from the training manifest.
    std::optional<std::pair<double, double>> class_weights;
    WindowKind window = WindowKind::hann;
    FeatureTransform feature_transform = FeatureTransform::none;
    int heads = 4;
    int model_dim = 256;
    int proj_dim = 128;
    int hidden_dim = 128;
    std::optional<double> augment_noise_snr_db;
    std::optional<std::filesystem::path> cache_dir;

    // lr 1e-6, 100 epochs, batch 14, raw features.
    static RunConfig full();
    // lr 1e-3, 12 epochs, log1p query features; short synthetic runs.
    static RunConfig desk();

    void validate() const;
    FusionConfig fusion_config() const;
    HeadConfig head_config() const;

    // key = value lines, fixed key order; parse_config(to_text()) round-trips.
    std::string to_text() const;
};

// TOML-style subset: "key = value" per line, '#' comments, optional double
// quotes around strings. A "preset" key is applied before all other keys.
RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// MODFUSE_CACHE_DIR wins over the configured cache directory.
std::optional<std::filesystem::path> effective_cache_dir(const RunConfig& config);

}  // namespace modfuse
