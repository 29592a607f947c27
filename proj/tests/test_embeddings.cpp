#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <limits>
#include <random>

#include "modfuse/embeddings.hpp"
#include "modfuse/error.hpp"
#include "oracles.hpp"

using namespace modfuse;

namespace {

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected modfuse::Error");
    return ErrorCode::usage;
}

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = static_cast<float>(n(g));
    return m;
}

}  // namespace

TEST_CASE("1x1 zero matrix is a 27-byte file") {
    const auto bytes = encode_matrix({"a", kKindSsl, Matrix::Zero(1, 1)});
    REQUIRE(bytes.size() == 4 + 4 + 2 + 1 + 1 + 4 + 4 + 2 + 1 + 4);
    CHECK(std::memcmp(bytes.data(), "MFX1SSLE", 8) == 0);
    CHECK(bytes[8] == 1);
    CHECK(bytes[9] == 0);
    CHECK(bytes[10] == 0);
    CHECK(bytes[12] == 1);
    CHECK(bytes[16] == 1);
    CHECK(bytes[20] == 1);
    CHECK(bytes[22] == 'a');
    for (std::size_t i = 23; i < 27; ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("golden little-endian file") {
    const auto m = read_matrix(std::filesystem::path(MODFUSE_TEST_DATA) / "golden_ssle.mfx");
    CHECK(m.utt_id == "golden");
    CHECK(m.kind == "SSLE");
    REQUIRE(m.values.rows() == 2);
    REQUIRE(m.values.cols() == 3);
    CHECK(m.values(0, 0) == 1.0);
    CHECK(m.values(0, 1) == -2.5);
    CHECK(m.values(0, 2) == 0.125);
    CHECK(m.values(1, 0) == 1024.0);
    CHECK(m.values(1, 1) == -0.0625);
    CHECK(m.values(1, 2) == 7.75);
    // Re-encoding reproduces the committed bytes exactly.
    CHECK(encode_matrix(m) == read_file_bytes(std::filesystem::path(MODFUSE_TEST_DATA) / "golden_ssle.mfx"));
}

TEST_CASE("round trips are bit exact") {
    const EmbeddingMatrix m{"LA_T_1138215", kKindSsl, random_matrix(201, 1024, 1)};
    const auto bytes = encode_matrix(m);
    const auto back = decode_matrix(bytes);
    CHECK(back.utt_id == m.utt_id);
    CHECK(back.values == m.values);
    CHECK(encode_matrix(back) == bytes);

    Matrix d(2, 2);
    d << 0.1, 1.0 / 3.0, -1e-300, 12345.678901234;
    const auto back64 = decode_matrix(encode_matrix({"x", kKindModspec, d}, MatrixDType::f64));
    CHECK(back64.values == d);
    CHECK(back64.kind == "MODS");
}

TEST_CASE("disk round trip") {
    const auto path = std::filesystem::temp_directory_path() / "modfuse_test_emb.mfx";
    const EmbeddingMatrix m{"u1", kKindSsl, random_matrix(3, 5, 2)};
    write_matrix(path, m);
    const auto back = read_matrix(path);
    CHECK(back.values == m.values);
    std::filesystem::remove(path);
    CHECK(code_of([&] { read_matrix(path); }) == ErrorCode::io);
}

TEST_CASE("reader errors") {
    auto good = encode_matrix({"abc", kKindSsl, random_matrix(2, 3, 3)});

    auto bad_magic = good;
    std::memcpy(bad_magic.data(), "XXXX", 4);
    CHECK(code_of([&] { decode_matrix(bad_magic); }) == ErrorCode::format);

    auto one_short = good;
    one_short.resize(one_short.size() - 4);
    CHECK(code_of([&] { decode_matrix(one_short); }) == ErrorCode::truncation);

    auto header_only = good;
    header_only.resize(10);
    CHECK(code_of([&] { decode_matrix(header_only); }) == ErrorCode::truncation);

    auto oversized = good;
    oversized[12] = 0xff;  // rows now far beyond the payload
    CHECK(code_of([&] { decode_matrix(oversized); }) == ErrorCode::truncation);

    auto trailing = good;
    trailing.push_back(0);
    CHECK(code_of([&] { decode_matrix(trailing); }) == ErrorCode::format);

    auto nan = good;
    const float q = std::numeric_limits<float>::quiet_NaN();
    std::memcpy(nan.data() + nan.size() - 4, &q, 4);
    CHECK(code_of([&] { decode_matrix(nan); }) == ErrorCode::data);

    auto dtype = good;
    dtype[10] = 7;
    CHECK(code_of([&] { decode_matrix(dtype); }) == ErrorCode::unsupported_encoding);

    Matrix inf = Matrix::Zero(1, 1);
    inf(0, 0) = std::numeric_limits<double>::infinity();
    CHECK(code_of([&] { encode_matrix({"i", kKindSsl, inf}); }) == ErrorCode::data);
    CHECK(code_of([&] { encode_matrix({"i", "TOOLONG", Matrix::Zero(1, 1)}); }) == ErrorCode::format);
}

TEST_CASE("geometry check") {
    const EmbeddingMatrix m{"u", kKindSsl, Matrix::Zero(201, 1024)};
    CHECK_NOTHROW(require_geometry(m, kKindSsl, 201, 1024));
    CHECK(code_of([&] { require_geometry(m, kKindModspec, 201, 1024); }) == ErrorCode::geometry);
    CHECK(code_of([&] { require_geometry(m, kKindSsl, 200, 1024); }) == ErrorCode::geometry);
}

TEST_CASE("projection") {
    const EmbeddingMatrix m{"u", kKindSsl, random_matrix(201, 1024, 4)};
    const auto zero = nn::AffineLayer::from_values(Matrix::Zero(1024, 128), Matrix::Zero(1, 128));
    CHECK(project_embeddings(m, zero).value().isZero(0.0));

    const auto select = nn::AffineLayer::from_values(Matrix::Identity(1024, 128), Matrix::Zero(1, 128));
    CHECK(project_embeddings(m, select).value() == m.values.leftCols(128));

    SeededRng rng(5);
    const auto layer = nn::AffineLayer::xavier(1024, 128, rng);
    Matrix ref = oracle::matmul(m.values, layer.weight.value());
    CHECK((project_embeddings(m, layer).value() - ref).cwiseAbs().maxCoeff() < 1e-12);

    const auto wrong = nn::AffineLayer::from_values(Matrix::Zero(512, 128), Matrix::Zero(1, 128));
    CHECK(code_of([&] { project_embeddings(m, wrong); }) == ErrorCode::shape);
}

TEST_CASE("synthetic embeddings") {
    const auto a = synth_embedding("u", true, 0.05, 11);
    const auto b = synth_embedding("u", true, 0.05, 11);
    CHECK(encode_matrix(a) == encode_matrix(b));
    CHECK(a.values.rows() == 201);
    CHECK(a.values.cols() == 1024);
    CHECK(decode_matrix(encode_matrix(a)).values == a.values);

    // Sample-mean oracle: 201*1024 draws per matrix, so the mean difference
    // has standard error sqrt(2 / 205824) ~ 0.0031.
    const auto fake = synth_embedding("f", false, 0.5, 12);
    const auto bona = synth_embedding("b", true, 0.5, 13);
    const double diff = bona.values.mean() - fake.values.mean();
    CHECK(std::abs(diff - 0.5) < 0.02);
    const Eigen::RowVectorXd col_diff = bona.values.colwise().mean() - fake.values.colwise().mean();
    CHECK(std::abs(col_diff.mean() - 0.5) < 0.02);
}
