#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "modfuse/matrix.hpp"
#include "modfuse/nn.hpp"

namespace modfuse {

inline constexpr const char* kKindSsl = "SSLE";
inline constexpr const char* kKindModspec = "MODS";
inline constexpr std::size_t kSslFrames = 201;
inline constexpr std::size_t kSslDim = 1024;

// A named real matrix as stored in an MFX1 container.
struct EmbeddingMatrix {
    std::string utt_id;
    std::string kind = kKindSsl;  // exactly four ASCII characters
    Matrix values;
};

// On-disk element type. Externally produced files use float32; float64 is
// used for checkpoint sections so saved parameters reload bit-exactly.
enum class MatrixDType : std::uint8_t { f32 = 0, f64 = 1 };

// MFX1 layout, little-endian:
//   "MFX1" | kind[4] | version u16 = 1 | dtype u8 | reserved u8 = 0 |
//   rows u32 | cols u32 | utt_id length u16 | utt_id bytes | rows*cols values, row-major
std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& m, MatrixDType dtype = MatrixDType::f32);

// Decodes one container starting at bytes[0]. When consumed is null the
// container must span the whole buffer exactly; otherwise trailing bytes are
// left for the caller and their offset is reported.
EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

void write_matrix(const std::filesystem::path& path, const EmbeddingMatrix& m, MatrixDType dtype = MatrixDType::f32);
EmbeddingMatrix read_matrix(const std::filesystem::path& path);

// Throws a geometry error unless m is rows x cols with the given kind.
void require_geometry(const EmbeddingMatrix& m, const char* kind, std::size_t rows, std::size_t cols);

// Row-wise affine map of the embedding sequence; differentiable in the layer.
nn::Tensor project_embeddings(const EmbeddingMatrix& m, const nn::AffineLayer& layer);

// Class-conditioned Gaussian stand-in for SSL features: N(0, 1) entries plus
// `offset` on every entry when bonafide. Same geometry and container as real
// exports.
EmbeddingMatrix synth_embedding(const std::string& utt_id, bool bonafide, double offset, std::uint64_t seed,
                                std::size_t rows = kSslFrames, std::size_t cols = kSslDim);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace modfuse
