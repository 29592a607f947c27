#include "modfuse/dft.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <string>

#include "modfuse/error.hpp"

namespace modfuse {

namespace {

// exp(-2*pi*i*num/den) with the angle reduced exactly in integers first.
cplx unit_root(std::size_t num, std::size_t den) {
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(num % den) / static_cast<double>(den);
    return {std::cos(angle), std::sin(angle)};
}

// Plain complex products. std::complex's operator* carries the C99 NaN
// recovery path, which dominates the butterfly cost.
inline cplx mul(cplx a, cplx b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline cplx mul_conj(cplx a, cplx b) {
    return {a.real() * b.real() + a.imag() * b.imag(), a.imag() * b.real() - a.real() * b.imag()};
}

}  // namespace

DftPlan::Radix2::Radix2(std::size_t size) : n(size), bitrev(size), twiddle(size / 2) {
    const int bits = std::countr_zero(size);
    for (std::size_t i = 0; i < size; ++i) {
        std::size_t r = 0;
        for (int b = 0; b < bits; ++b) {
            if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
        }
        bitrev[i] = r;
    }
    for (std::size_t k = 0; k < size / 2; ++k) twiddle[k] = unit_root(k, size);
}

void DftPlan::Radix2::run(std::span<cplx> data, bool inverse) const {
    for (std::size_t i = 0; i < n; ++i) {
        if (i < bitrev[i]) std::swap(data[i], data[bitrev[i]]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        const std::size_t stride = n / len;
        for (std::size_t start = 0; start < n; start += len) {
            for (std::size_t j = 0; j < half; ++j) {
                const cplx w = twiddle[j * stride];
                const cplx a = data[start + j];
                const cplx b = inverse ? mul_conj(data[start + j + half], w) : mul(data[start + j + half], w);
                data[start + j] = a + b;
                data[start + j + half] = a - b;
            }
        }
    }
}

DftPlan::DftPlan(std::size_t n) : n_(n) {
    if (n == 0) throw Error(ErrorCode::empty_input, "DFT length must be positive");
    if (std::has_single_bit(n)) {
        direct_ = std::make_unique<Radix2>(n);
        return;
    }
    const std::size_t m = std::bit_ceil(2 * n - 1);
    conv_ = std::make_unique<Radix2>(m);
    chirp_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // exp(-i*pi*k^2/n) == exp(-2*pi*i*(k^2 mod 2n)/(2n))
        const std::size_t k2 = (k * k) % (2 * n);
        chirp_[k] = unit_root(k2, 2 * n);
    }
    kernel_spec_.assign(m, cplx{});
    kernel_spec_[0] = std::conj(chirp_[0]);
    for (std::size_t k = 1; k < n; ++k) {
        kernel_spec_[k] = std::conj(chirp_[k]);
        kernel_spec_[m - k] = std::conj(chirp_[k]);
    }
    conv_->run(kernel_spec_, false);
}

void DftPlan::forward(std::span<const cplx> in, std::span<cplx> out) const {
    if (in.size() != n_ || out.size() != n_) {
        throw Error(ErrorCode::shape, "DFT input length " + std::to_string(in.size()) +
                                          " does not match plan length " + std::to_string(n_));
    }
    if (direct_) {
        if (out.data() != in.data()) std::copy(in.begin(), in.end(), out.begin());
        direct_->run(out, false);
        return;
    }
    const std::size_t m = conv_->n;
    thread_local std::vector<cplx> work;
    work.assign(m, cplx{});
    for (std::size_t k = 0; k < n_; ++k) work[k] = mul(in[k], chirp_[k]);
    conv_->run(work, false);
    for (std::size_t k = 0; k < m; ++k) work[k] = mul(work[k], kernel_spec_[k]);
    conv_->run(work, true);
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t k = 0; k < n_; ++k) out[k] = mul(work[k] * inv_m, chirp_[k]);
}

std::vector<cplx> DftPlan::forward(std::span<const cplx> in) const {
    std::vector<cplx> out(n_);
    forward(in, out);
    return out;
}

std::vector<cplx> dft_any_length(std::span<const cplx> x, std::size_t n) {
    if (n == 0) throw Error(ErrorCode::empty_input, "DFT length must be positive");
    if (x.size() != n) {
        throw Error(ErrorCode::shape, "DFT requires n == length(x)");
    }
    return DftPlan(n).forward(x);
}

}  // namespace modfuse
