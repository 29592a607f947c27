#include "modfuse/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "modfuse/error.hpp"

namespace modfuse::nn {

AffineLayer AffineLayer::xavier(Eigen::Index in_dim, Eigen::Index out_dim, SeededRng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    Matrix w(in_dim, out_dim);
    for (Eigen::Index i = 0; i < in_dim; ++i) {
        for (Eigen::Index j = 0; j < out_dim; ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    return from_values(std::move(w), Matrix::Zero(1, out_dim));
}

AffineLayer AffineLayer::from_values(Matrix weight, Matrix bias) {
    if (bias.rows() != 1 || bias.cols() != weight.cols()) {
        throw Error(ErrorCode::shape, "affine bias must be 1 x out_dim");
    }
    return {Tensor::parameter(std::move(weight)), Tensor::parameter(std::move(bias))};
}

void AffineLayer::append_params(const std::string& prefix, std::vector<NamedParam>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
}

Tensor affine(const Tensor& x, const AffineLayer& layer) { return add_row(matmul(x, layer.weight), layer.bias); }

void zero_grads(std::span<NamedParam> params) {
    for (auto& p : params) p.tensor.zero_grad();
}

void adam_step(std::span<NamedParam> params, AdamState& state) {
    if (!(state.learning_rate > 0.0)) throw Error(ErrorCode::parameter, "learning rate must be positive");
    for (const auto& p : params) {
        if (!p.tensor.grad().allFinite()) {
            throw Error(ErrorCode::poisoned_gradient, "non-finite gradient in parameter '" + p.name + "'");
        }
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
            state.v.push_back(Matrix::Zero(p.tensor.rows(), p.tensor.cols()));
        }
    }
    if (state.m.size() != params.size()) throw Error(ErrorCode::shape, "Adam state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].rows() != params[i].tensor.rows() || state.m[i].cols() != params[i].tensor.cols()) {
            throw Error(ErrorCode::shape, "Adam moment shape mismatch for '" + params[i].name + "'");
        }
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = params[i].tensor.grad();
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        Matrix& theta = params[i].tensor.mutable_value();
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        theta.array() -= state.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
    }
}

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn, std::span<NamedParam> params,
                           const GradCheckOptions& options) {
    zero_grads(params);
    const Tensor loss = loss_fn();
    if (!std::isfinite(loss.item())) throw Error(ErrorCode::probe, "loss is not finite at the base point");
    loss.backward();
    std::vector<Matrix> analytic;
    for (const auto& p : params) analytic.push_back(p.tensor.grad());

    GradCheckResult result;
    SeededRng rng(options.seed);
    const double h = options.step;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor t = params[pi].tensor;
        const auto size = static_cast<std::size_t>(t.rows() * t.cols());
        std::vector<std::size_t> coords(size);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_param != 0 && options.max_coords_per_param < size) {
            // Partial Fisher-Yates picks a seeded subset without replacement.
            for (std::size_t k = 0; k < options.max_coords_per_param; ++k) {
                const auto j = k + static_cast<std::size_t>(rng.uniform() * static_cast<double>(size - k));
                std::swap(coords[k], coords[std::min(j, size - 1)]);
            }
            coords.resize(options.max_coords_per_param);
        }
        for (std::size_t flat : coords) {
            const auto r = static_cast<Eigen::Index>(flat) / t.cols();
            const auto c = static_cast<Eigen::Index>(flat) % t.cols();
            double& x = t.mutable_value()(r, c);
            const double saved = x;
            x = saved + h;
            const double f_plus = loss_fn().item();
            x = saved - h;
            const double f_minus = loss_fn().item();
            x = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
                throw Error(ErrorCode::probe, "non-finite loss probing '" + params[pi].name + "'");
            }
            const double g_fd = (f_plus - f_minus) / (2.0 * h);
            const double g_ad = analytic[pi](r, c);
            const double err = std::abs(g_ad - g_fd) / std::max({1.0, std::abs(g_ad), std::abs(g_fd)});
            ++result.coords_checked;
            if (result.worst_param.empty() || err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_param = params[pi].name;
                result.worst_row = r;
                result.worst_col = c;
            }
        }
    }
    zero_grads(params);
    return result;
}

}  // namespace modfuse::nn
