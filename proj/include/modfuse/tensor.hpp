#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "modfuse/matrix.hpp"

namespace modfuse::nn {

namespace detail {
struct Node;
}

// Handle to a node of a dynamically built reverse-mode graph. Copies share
// the node. Leaves created with parameter() keep their accumulated gradient
// across graphs until zero_grad().
class Tensor {
public:
    Tensor() = default;

    static Tensor constant(Matrix value);
    static Tensor parameter(Matrix value);

    bool defined() const noexcept { return node_ != nullptr; }
    Eigen::Index rows() const;
    Eigen::Index cols() const;
    const Matrix& value() const;
    // Direct write access for optimizers and finite-difference probes.
    Matrix& mutable_value();
    bool requires_grad() const;

    // Gradient of the last backward() pass; zeros if none accumulated.
    const Matrix& grad() const;
    void zero_grad();

    // Seeds d(this)/d(this) = 1 and propagates. Requires a 1x1 tensor.
    void backward() const;
    double item() const;

    // Internal: used by the op implementations.
    static Tensor from_node(std::shared_ptr<detail::Node> node);
    const std::shared_ptr<detail::Node>& node() const { return node_; }

private:
    std::shared_ptr<detail::Node> node_;
};

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// a (R x C) plus a 1 x C row broadcast over every row.
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor scale(const Tensor& a, double s);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count);
Tensor softmax_rows(const Tensor& a);
Tensor relu(const Tensor& a);
// Column-wise reductions over rows, each 1 x C.
Tensor max_rows(const Tensor& a);
Tensor mean_rows(const Tensor& a);
Tensor sum(const Tensor& a);

// mean_i w[y_i] * (-log softmax(logits_i)[y_i]) as a 1x1 tensor.
Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const double> class_weights);

// Plain softmax on a matrix, same numerics as softmax_rows.
Matrix softmax_rows_value(const Matrix& x);

}  // namespace modfuse::nn
