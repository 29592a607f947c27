#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "modfuse/rng.hpp"
#include "modfuse/tensor.hpp"

namespace modfuse::nn {

struct NamedParam {
    std::string name;
    Tensor tensor;
};

// y = x * weight + bias, weight in_dim x out_dim, bias 1 x out_dim.
struct AffineLayer {
    Tensor weight;
    Tensor bias;

    Eigen::Index in_dim() const { return weight.rows(); }
    Eigen::Index out_dim() const { return weight.cols(); }

    // Xavier-uniform weight, zero bias.
    static AffineLayer xavier(Eigen::Index in_dim, Eigen::Index out_dim, SeededRng& rng);
    static AffineLayer from_values(Matrix weight, Matrix bias);

    void append_params(const std::string& prefix, std::vector<NamedParam>& out) const;
};

Tensor affine(const Tensor& x, const AffineLayer& layer);

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::int64_t step = 0;
    std::vector<Matrix> m;  // first moments, parallel to the parameter list
    std::vector<Matrix> v;  // second moments
};

// One bias-corrected Adam update using each parameter's accumulated grad.
// All gradients are screened first; a NaN or infinity aborts the whole step
// (no parameter or moment is touched) with a poisoned-gradient error naming
// the parameter.
void adam_step(std::span<NamedParam> params, AdamState& state);

void zero_grads(std::span<NamedParam> params);

struct GradCheckOptions {
    double step = 1e-5;
    // 0 probes every coordinate; otherwise a seeded random subset per parameter.
    std::size_t max_coords_per_param = 0;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    Eigen::Index worst_row = 0;
    Eigen::Index worst_col = 0;
    std::size_t coords_checked = 0;
};

// Central differences vs reverse mode. Error per coordinate is
// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<NamedParam> params,
                           const GradCheckOptions& options = {});

}  // namespace modfuse::nn
