#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "modfuse/classifier.hpp"
#include "modfuse/error.hpp"
#include "oracles.hpp"

using namespace modfuse;
using nn::Tensor;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = u(g);
    return m;
}

HeadParams small_head(std::uint64_t seed, Eigen::Index width = 3) {
    SeededRng rng(seed);
    auto h = HeadParams::init({2 * width, 5}, rng);
    h.hidden.bias.mutable_value() = random_matrix(1, 5, seed + 1);
    h.out.bias.mutable_value() = random_matrix(1, 2, seed + 2);
    return h;
}

double oracle_score(const Matrix& fused, const HeadParams& h) {
    const Eigen::Index c = fused.cols();
    Matrix pooled(1, 2 * c);
    for (Eigen::Index j = 0; j < c; ++j) {
        double mx = fused(0, j), sum = 0.0;
        for (Eigen::Index i = 0; i < fused.rows(); ++i) {
            mx = std::max(mx, fused(i, j));
            sum += fused(i, j);
        }
        pooled(0, j) = mx;
        pooled(0, c + j) = sum / static_cast<double>(fused.rows());
    }
    Matrix hidden = oracle::matmul(pooled, h.hidden.weight.value()) + h.hidden.bias.value();
    hidden = hidden.cwiseMax(0.0);
    const Matrix logits = oracle::matmul(hidden, h.out.weight.value()) + h.out.bias.value();
    return logits(0, 1) - logits(0, 0);
}

}  // namespace

TEST_CASE("pooling: constant, single row, hand-computed") {
    const auto c = pool_features(Tensor::constant(Matrix::Constant(4, 3, 2.5))).value();
    CHECK(c == Matrix::Constant(1, 6, 2.5));
    const Matrix row = random_matrix(1, 3, 1);
    const auto single = pool_features(Tensor::constant(row)).value();
    CHECK(single.leftCols(3) == row);
    CHECK((single.rightCols(3) - row).cwiseAbs().maxCoeff() == 0.0);
    Matrix x(3, 2);
    x << 1, 6, -2, 0, 4, 3;
    const auto p = pool_features(Tensor::constant(x)).value();
    CHECK(p(0, 0) == 4);
    CHECK(p(0, 1) == 6);
    CHECK(p(0, 2) == doctest::Approx(1.0));
    CHECK(p(0, 3) == doctest::Approx(3.0));
    CHECK_THROWS_AS(pool_features(Tensor::constant(Matrix(0, 2))), Error);
}

TEST_CASE("score against a direct forward pass") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto h = small_head(seed);
        const Matrix fused = random_matrix(7, 3, seed + 10);
        CHECK(std::abs(score(Tensor::constant(fused), h) - oracle_score(fused, h)) < 1e-12);
    }
}

TEST_CASE("symmetric head gives twice the bonafide logit") {
    auto h = small_head(3);
    Matrix w = h.out.weight.value();
    w.col(0) = -w.col(1);
    h.out.weight.mutable_value() = w;
    h.out.bias.mutable_value().setZero();
    const auto fused = Tensor::constant(random_matrix(4, 3, 9));
    const Matrix logits = head_logits(fused, h).value();
    CHECK(score(fused, h) == doctest::Approx(2.0 * logits(0, kLabelBonafide)));
}

TEST_CASE("score is a logit difference") {
    Matrix equal(1, 2);
    equal << 0.7, 0.7;
    CHECK(score_tensor(Tensor::constant(equal)).item() == 0.0);
    const Matrix l = random_matrix(1, 2, 4);
    const Matrix shifted = l.array() + 12.5;
    CHECK(std::abs(score_tensor(Tensor::constant(l)).item() - score_tensor(Tensor::constant(shifted)).item()) < 1e-12);
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Matrix z = random_matrix(1, 2, 100 + s);
        const double sc = score_tensor(Tensor::constant(z)).item();
        Eigen::Index arg = 0;
        z.row(0).maxCoeff(&arg);
        CHECK((sc > 0) == (arg == kLabelBonafide));
    }
    CHECK_THROWS_AS(score_tensor(Tensor::constant(Matrix::Zero(1, 3))), Error);
}

TEST_CASE("score ignores the order of fused rows") {
    const auto h = small_head(5);
    Matrix fused = random_matrix(6, 3, 11);
    const double base = score(Tensor::constant(fused), h);
    fused.row(0).swap(fused.row(5));
    fused.row(2).swap(fused.row(3));
    CHECK(std::abs(score(Tensor::constant(fused), h) - base) < 1e-12);
}

TEST_CASE("non-finite logits are a numeric error") {
    const auto h = small_head(6);
    Matrix fused = random_matrix(2, 3, 12);
    fused(0, 0) = std::numeric_limits<double>::infinity();
    try {
        score(Tensor::constant(fused), h);
        FAIL("expected numeric error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::numeric);
    }
}

TEST_CASE("detector parameter names and shapes") {
    const auto d = Detector::init(FusionConfig{}, HeadConfig{}, 7);
    const auto p = d.named_params();
    REQUIRE(p.size() == 14);
    CHECK(p[0].name == "fusion.proj_ssl.weight");
    CHECK(p[0].tensor.rows() == 1024);
    CHECK(p[0].tensor.cols() == 128);
    CHECK(p[2].name == "fusion.q.weight");
    CHECK(p[2].tensor.rows() == 202);
    CHECK(p[10].name == "head.hidden.weight");
    CHECK(p[10].tensor.rows() == 512);
    CHECK(p[13].name == "head.out.bias");
    CHECK(p[13].tensor.cols() == 2);
    const auto again = Detector::init(FusionConfig{}, HeadConfig{}, 7);
    CHECK(again.named_params()[4].tensor.value() == p[4].tensor.value());
    CHECK_THROWS_AS(Detector::init(FusionConfig{}, HeadConfig{100, 128}, 7), Error);
}

TEST_CASE("full detector loss gradient check on small dimensions") {
    FusionConfig fc;
    fc.ssl_dim = 6;
    fc.proj_dim = 4;
    fc.query_dim = 5;
    fc.model_dim = 8;
    fc.heads = 2;
    const auto d = Detector::init(fc, {16, 6}, 3);
    auto params = d.named_params();
    const Matrix q1 = random_matrix(4, 5, 1), q2 = random_matrix(4, 5, 2);
    const Matrix s1 = random_matrix(4, 6, 3), s2 = random_matrix(4, 6, 4);
    const int labels[] = {0, 1};
    const double w[] = {0.4, 1.6};
    const auto loss = [&] {
        const Tensor rows[] = {d.logits(q1, s1), d.logits(q2, s2)};
        return nn::weighted_cross_entropy(nn::concat_rows(rows), labels, w);
    };
    CHECK(nn::grad_check(loss, params).max_rel_error < 1e-7);
}
