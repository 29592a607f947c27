#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "modfuse/dft.hpp"
#include "modfuse/error.hpp"
#include "oracles.hpp"

using namespace modfuse;

namespace {

std::vector<cplx> random_vector(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<cplx> x(n);
    for (auto& v : x) v = {u(g), u(g)};
    return x;
}

double max_rel_error(const std::vector<cplx>& a, const std::vector<cplx>& ref) {
    double scale = 0.0;
    for (const auto& v : ref) scale = std::max(scale, std::abs(v));
    double err = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(a[i] - ref[i]));
    return err / std::max(scale, 1e-300);
}

}  // namespace

TEST_CASE("impulse gives a flat spectrum") {
    const std::vector<cplx> x = {1, 0, 0, 0};
    const auto y = dft_any_length(x, 4);
    for (const auto& v : y) {
        CHECK(v.real() == doctest::Approx(1.0));
        CHECK(std::abs(v.imag()) < 1e-15);
    }
}

TEST_CASE("constant input concentrates in bin 0") {
    for (std::size_t n : {1u, 2u, 3u, 7u, 16u, 400u, 402u}) {
        const std::vector<cplx> x(n, cplx{1.0, 0.0});
        const auto y = dft_any_length(x, n);
        CHECK(std::abs(y[0] - cplx(static_cast<double>(n), 0.0)) < 1e-9 * static_cast<double>(n));
        for (std::size_t k = 1; k < n; ++k) CHECK(std::abs(y[k]) < 1e-9 * static_cast<double>(n));
    }
}

TEST_CASE("matches the direct sum for power-of-two and arbitrary lengths") {
    for (std::size_t n : {2u, 5u, 8u, 13u, 64u, 100u, 201u, 256u, 400u, 402u, 1031u}) {
        const auto x = random_vector(n, n);
        CHECK(max_rel_error(DftPlan(n).forward(x), oracle::direct_dft(x)) < 1e-9);
    }
}

TEST_CASE("in-place transform matches out-of-place") {
    auto x = random_vector(402, 3);
    const DftPlan plan(402);
    const auto ref = plan.forward(x);
    plan.forward(x, x);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == ref[i]);
}

TEST_CASE("Parseval on random real input") {
    for (std::size_t n : {402u, 512u}) {
        auto x = random_vector(n, 11);
        for (auto& v : x) v = {v.real(), 0.0};
        const auto y = DftPlan(n).forward(x);
        double ex = 0.0, ey = 0.0;
        for (const auto& v : x) ex += std::norm(v);
        for (const auto& v : y) ey += std::norm(v);
        CHECK(std::abs(ey - static_cast<double>(n) * ex) / (static_cast<double>(n) * ex) < 1e-6);
    }
}

TEST_CASE("length errors") {
    CHECK_THROWS_AS(DftPlan(0), Error);
    try {
        DftPlan(0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::empty_input);
    }
    const std::vector<cplx> x(5);
    try {
        DftPlan(4).forward(x);
        FAIL("expected a shape error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::shape);
    }
}
