#include "modfuse/embeddings.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "modfuse/error.hpp"
#include "modfuse/rng.hpp"

namespace modfuse {

namespace {

constexpr char kMagic[4] = {'M', 'F', 'X', '1'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kFixedHeader = 4 + 4 + 2 + 1 + 1 + 4 + 4 + 2;

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(std::span<const std::uint8_t> b, std::size_t at) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[at + i]) << (8 * i));
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_matrix(const EmbeddingMatrix& m, MatrixDType dtype) {
    if (m.kind.size() != 4) throw Error(ErrorCode::format, "matrix kind tag must be 4 characters: '" + m.kind + "'");
    if (m.values.rows() < 1 || m.values.cols() < 1) throw Error(ErrorCode::shape, "matrix must be at least 1x1");
    if (m.utt_id.size() > 0xffff) throw Error(ErrorCode::format, "utterance id too long");
    if (!m.values.allFinite()) throw Error(ErrorCode::data, "matrix '" + m.utt_id + "' has non-finite entries");

    const auto count = static_cast<std::size_t>(m.values.rows() * m.values.cols());
    const std::size_t width = dtype == MatrixDType::f32 ? 4 : 8;
    std::vector<std::uint8_t> out;
    out.reserve(kFixedHeader + m.utt_id.size() + count * width);
    out.insert(out.end(), kMagic, kMagic + 4);
    out.insert(out.end(), m.kind.begin(), m.kind.end());
    put_le<std::uint16_t>(out, kVersion);
    out.push_back(static_cast<std::uint8_t>(dtype));
    out.push_back(0);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.values.rows()));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.values.cols()));
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(m.utt_id.size()));
    out.insert(out.end(), m.utt_id.begin(), m.utt_id.end());
    const double* data = m.values.data();
    for (std::size_t i = 0; i < count; ++i) {
        if (dtype == MatrixDType::f32) {
            put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(data[i])));
        } else {
            put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(data[i]));
        }
    }
    return out;
}

EmbeddingMatrix decode_matrix(std::span<const std::uint8_t> bytes, std::size_t* consumed) {
    if (bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw Error(ErrorCode::format, "bad magic (expected MFX1)");
    }
    if (bytes.size() < kFixedHeader) throw Error(ErrorCode::truncation, "truncated MFX1 header");

    EmbeddingMatrix m;
    m.kind.assign(reinterpret_cast<const char*>(bytes.data()) + 4, 4);
    const auto version = get_le<std::uint16_t>(bytes, 8);
    if (version != kVersion) throw Error(ErrorCode::format, "unsupported MFX1 version " + std::to_string(version));
    const std::uint8_t dtype = bytes[10];
    if (dtype > 1) throw Error(ErrorCode::unsupported_encoding, "unknown MFX1 dtype code " + std::to_string(dtype));
    if (bytes[11] != 0) throw Error(ErrorCode::format, "reserved MFX1 byte is nonzero");
    const auto rows = get_le<std::uint32_t>(bytes, 12);
    const auto cols = get_le<std::uint32_t>(bytes, 16);
    const auto id_len = get_le<std::uint16_t>(bytes, 20);
    if (rows == 0 || cols == 0) throw Error(ErrorCode::format, "MFX1 matrix has a zero dimension");
    if (bytes.size() < kFixedHeader + id_len) throw Error(ErrorCode::truncation, "truncated MFX1 utterance id");
    m.utt_id.assign(reinterpret_cast<const char*>(bytes.data()) + kFixedHeader, id_len);

    const std::size_t width = dtype == 0 ? 4 : 8;
    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    const std::size_t payload_at = kFixedHeader + id_len;
    const std::uint64_t available = bytes.size() - payload_at;
    if (count > available / width) {
        throw Error(ErrorCode::truncation, "MFX1 payload truncated: need " + std::to_string(count) + " values, have " +
                                               std::to_string(available / width));
    }
    const std::size_t end = payload_at + static_cast<std::size_t>(count) * width;
    if (consumed == nullptr && end != bytes.size()) {
        throw Error(ErrorCode::format, "MFX1 payload length does not match declared " + std::to_string(rows) + "x" +
                                           std::to_string(cols) + " geometry");
    }

    m.values.resize(rows, cols);
    double* data = m.values.data();
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t at = payload_at + i * width;
        data[i] = width == 4 ? static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(bytes, at)))
                             : std::bit_cast<double>(get_le<std::uint64_t>(bytes, at));
        if (!std::isfinite(data[i])) {
            throw Error(ErrorCode::data, "non-finite value at flat index " + std::to_string(i) + " in '" + m.utt_id + "'");
        }
    }
    if (consumed) *consumed = end;
    return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::io, "write failed for " + path.string());
}

void write_matrix(const std::filesystem::path& path, const EmbeddingMatrix& m, MatrixDType dtype) {
    write_file_bytes(path, encode_matrix(m, dtype));
}

EmbeddingMatrix read_matrix(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_matrix(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

void require_geometry(const EmbeddingMatrix& m, const char* kind, std::size_t rows, std::size_t cols) {
    if (m.kind != kind) {
        throw Error(ErrorCode::geometry, "'" + m.utt_id + "' has kind " + m.kind + ", expected " + kind);
    }
    if (static_cast<std::size_t>(m.values.rows()) != rows || static_cast<std::size_t>(m.values.cols()) != cols) {
        throw Error(ErrorCode::geometry, "'" + m.utt_id + "' is " + std::to_string(m.values.rows()) + "x" +
                                             std::to_string(m.values.cols()) + ", expected " + std::to_string(rows) +
                                             "x" + std::to_string(cols));
    }
}

nn::Tensor project_embeddings(const EmbeddingMatrix& m, const nn::AffineLayer& layer) {
    if (m.values.cols() != layer.in_dim()) {
        throw Error(ErrorCode::shape, "embedding width " + std::to_string(m.values.cols()) +
                                          " does not match projection input " + std::to_string(layer.in_dim()));
    }
    return nn::affine(nn::Tensor::constant(m.values), layer);
}

EmbeddingMatrix synth_embedding(const std::string& utt_id, bool bonafide, double offset, std::uint64_t seed,
                                std::size_t rows, std::size_t cols) {
    EmbeddingMatrix m;
    m.utt_id = utt_id;
    m.kind = kKindSsl;
    m.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    SeededRng rng(seed);
    const double mean = bonafide ? offset : 0.0;
    double* data = m.values.data();
    for (std::size_t i = 0; i < rows * cols; ++i) {
        // Stored as float32 on disk; round here so in-memory and reloaded agree.
        data[i] = static_cast<double>(static_cast<float>(mean + rng.normal()));
    }
    return m;
}

}  // namespace modfuse
