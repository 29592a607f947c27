#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "modfuse/classifier.hpp"
#include "modfuse/config.hpp"
#include "modfuse/nn.hpp"

namespace modfuse {

struct CheckpointBundle {
    RunConfig config;
    Detector detector;
    nn::AdamState adam;
    int epoch = 0;
    double best_dev_loss = 0.0;
};

// Deep copy: the result shares no tensor storage with the source.
Detector clone_detector(const Detector& d);
CheckpointBundle clone_bundle(const CheckpointBundle& b);

// "MFCK" | version u16 | config text (u32 length + bytes) | epoch u32 |
// best_dev_loss f64 | adam step i64 | adam lr f64 | section count u32 |
// sections: float64 MFX1 containers whose utt_id field is the parameter name,
// kind "PARM" for parameters, "ADMM"/"ADMV" for Adam moments.
std::vector<std::uint8_t> encode_checkpoint(const CheckpointBundle& bundle);
CheckpointBundle decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const CheckpointBundle& bundle);
CheckpointBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace modfuse
