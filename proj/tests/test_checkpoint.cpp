#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <random>

#include "modfuse/checkpoint.hpp"
#include "modfuse/embeddings.hpp"
#include "modfuse/error.hpp"

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
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = n(g);
    return m;
}

// A bundle after one real Adam step, so moments and step count are populated.
CheckpointBundle trained_bundle() {
    CheckpointBundle b;
    b.config = RunConfig::desk();
    b.config.seed = 21;
    b.detector = Detector::init(b.config.fusion_config(), b.config.head_config(), b.config.seed);
    b.adam.learning_rate = b.config.learning_rate;
    auto params = b.detector.named_params();
    const int labels[] = {1};
    const double w[] = {1.0, 1.0};
    auto loss = nn::weighted_cross_entropy(b.detector.logits(random_matrix(201, 202, 1), random_matrix(201, 1024, 2)),
                                           labels, w);
    nn::zero_grads(params);
    loss.backward();
    nn::adam_step(params, b.adam);
    b.epoch = 1;
    b.best_dev_loss = 0.693147180559945;
    return b;
}

std::size_t section_count_offset(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t config_len = 0;
    std::memcpy(&config_len, bytes.data() + 6, 4);
    return 4 + 2 + 4 + config_len + 4 + 8 + 8 + 8;
}

}  // namespace

TEST_CASE("encode/decode is bit exact") {
    const auto b = trained_bundle();
    const auto bytes = encode_checkpoint(b);
    const auto back = decode_checkpoint(bytes);
    CHECK(encode_checkpoint(back) == bytes);
    CHECK(back.epoch == 1);
    CHECK(std::bit_cast<std::uint64_t>(back.best_dev_loss) == std::bit_cast<std::uint64_t>(b.best_dev_loss));
    CHECK(back.adam.step == 1);
    CHECK(back.config.to_text() == b.config.to_text());
    const auto p0 = b.detector.named_params(), p1 = back.detector.named_params();
    REQUIRE(p0.size() == p1.size());
    for (std::size_t i = 0; i < p0.size(); ++i) {
        CHECK(p0[i].name == p1[i].name);
        CHECK(p0[i].tensor.value() == p1[i].tensor.value());
        CHECK(b.adam.m[i] == back.adam.m[i]);
        CHECK(b.adam.v[i] == back.adam.v[i]);
    }
}

TEST_CASE("score after save and load is identical") {
    const auto b = trained_bundle();
    const auto path = std::filesystem::temp_directory_path() / "modfuse_test.ckpt";
    save_checkpoint(path, b);
    const auto back = load_checkpoint(path);
    std::filesystem::remove(path);
    for (std::uint64_t s = 0; s < 3; ++s) {
        const Matrix q = random_matrix(201, 202, 10 + s), ssl = random_matrix(201, 1024, 20 + s);
        const double a = score_tensor(b.detector.logits(q, ssl)).item();
        const double c = score_tensor(back.detector.logits(q, ssl)).item();
        CHECK(std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(c));
    }
}

TEST_CASE("clones share no storage") {
    const auto b = trained_bundle();
    auto c = clone_bundle(b);
    c.detector.named_params()[0].tensor.mutable_value()(0, 0) += 1.0;
    CHECK(c.detector.named_params()[0].tensor.value()(0, 0) != b.detector.named_params()[0].tensor.value()(0, 0));
    c.adam.m[0](0, 0) += 1.0;
    CHECK(c.adam.m[0](0, 0) != b.adam.m[0](0, 0));
}

TEST_CASE("corrupt checkpoints") {
    const auto b = trained_bundle();
    const auto good = encode_checkpoint(b);

    auto magic = good;
    magic[0] = 'X';
    CHECK(code_of([&] { decode_checkpoint(magic); }) == ErrorCode::format);

    auto cut = good;
    cut.resize(cut.size() - 100);
    CHECK(code_of([&] { decode_checkpoint(cut); }) == ErrorCode::truncation);

    auto trailing = good;
    trailing.push_back(0);
    CHECK(code_of([&] { decode_checkpoint(trailing); }) == ErrorCode::format);

    // Same-length edit of the stored config: the layer no longer matches the stored weights.
    auto shape = good;
    const std::string from = "hidden_dim = 128", to = "hidden_dim = 127";
    auto it = std::search(shape.begin(), shape.end(), from.begin(), from.end());
    REQUIRE(it != shape.end());
    std::copy(to.begin(), to.end(), it);
    CHECK(code_of([&] { decode_checkpoint(shape); }) == ErrorCode::shape);

    // Drop the final ADMV section and decrement the count: moments are incomplete.
    const auto params = b.detector.named_params();
    const auto last = encode_matrix({params.back().name, "ADMV", b.adam.v.back()}, MatrixDType::f64);
    auto missing = good;
    missing.resize(missing.size() - last.size());
    const auto off = section_count_offset(missing);
    std::uint32_t count = 0;
    std::memcpy(&count, missing.data() + off, 4);
    REQUIRE(count == 3 * params.size());
    --count;
    std::memcpy(missing.data() + off, &count, 4);
    CHECK(code_of([&] { decode_checkpoint(missing); }) == ErrorCode::format);

    // Parameters only, with the last one dropped.
    CheckpointBundle bare = clone_bundle(b);
    bare.adam.m.clear();
    bare.adam.v.clear();
    auto no_param = encode_checkpoint(bare);
    const auto last_param = encode_matrix({params.back().name, "PARM", params.back().tensor.value()}, MatrixDType::f64);
    no_param.resize(no_param.size() - last_param.size());
    count = static_cast<std::uint32_t>(params.size() - 1);
    std::memcpy(no_param.data() + section_count_offset(no_param), &count, 4);
    try {
        decode_checkpoint(no_param);
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::format);
        CHECK(std::string(e.what()).find(params.back().name) != std::string::npos);
    }

    CHECK(code_of([] { load_checkpoint("/nonexistent/x.ckpt"); }) == ErrorCode::io);
}
