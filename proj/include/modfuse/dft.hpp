#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace modfuse {

using cplx = std::complex<double>;

// Forward DFT of arbitrary length n: X[k] = sum_t x[t] exp(-2*pi*i*t*k/n).
// Powers of two use an iterative radix-2 transform; every other length goes
// through Bluestein's chirp-z identity on a power-of-two convolution.
class DftPlan {
public:
    explicit DftPlan(std::size_t n);

    std::size_t size() const noexcept { return n_; }

    // in.size() and out.size() must both equal size(). in and out may alias.
    void forward(std::span<const cplx> in, std::span<cplx> out) const;

    std::vector<cplx> forward(std::span<const cplx> in) const;

private:
    struct Radix2 {
        std::size_t n = 0;
        std::vector<std::size_t> bitrev;
        std::vector<cplx> twiddle;  // exp(-2*pi*i*k/n), k < n/2

        explicit Radix2(std::size_t size);
        void run(std::span<cplx> data, bool inverse) const;
    };

    std::size_t n_;
    std::unique_ptr<Radix2> direct_;
    // Bluestein
    std::unique_ptr<Radix2> conv_;
    std::vector<cplx> chirp_;         // exp(-i*pi*k^2/n)
    std::vector<cplx> kernel_spec_;   // FFT of the conjugate chirp, length conv_->n
};

// Convenience wrapper; builds a temporary plan.
std::vector<cplx> dft_any_length(std::span<const cplx> x, std::size_t n);

}  // namespace modfuse
