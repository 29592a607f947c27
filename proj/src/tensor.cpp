#include "modfuse/tensor.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "modfuse/error.hpp"

namespace modfuse::nn {

namespace detail {

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads self.grad, accumulates into parents that require gradients.
    std::function<void(Node& self)> backward_fn;

    Matrix& grad_buffer() {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) grad = Matrix::Zero(value.rows(), value.cols());
        return grad;
    }
};

}  // namespace detail

using detail::Node;

namespace {

std::string shape_str(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
    throw Error(ErrorCode::shape, std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

const Matrix& val(const Tensor& t) {
    if (!t.defined()) throw Error(ErrorCode::shape, "use of undefined tensor");
    return t.value();
}

// Builds a result node. Gradient plumbing is only attached when some parent
// needs it.
Tensor make_result(Matrix value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> fn) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->is_leaf = false;
    for (const auto& p : parents) node->requires_grad = node->requires_grad || p->requires_grad;
    if (node->requires_grad) {
        node->parents = std::move(parents);
        node->backward_fn = std::move(fn);
    }
    return Tensor::from_node(std::move(node));
}

}  // namespace

Tensor Tensor::constant(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return from_node(std::move(node));
}

Tensor Tensor::parameter(Matrix value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    return from_node(std::move(node));
}

Tensor Tensor::from_node(std::shared_ptr<Node> node) {
    Tensor t;
    t.node_ = std::move(node);
    return t;
}

Eigen::Index Tensor::rows() const { return node_->value.rows(); }
Eigen::Index Tensor::cols() const { return node_->value.cols(); }
const Matrix& Tensor::value() const { return node_->value; }
Matrix& Tensor::mutable_value() { return node_->value; }
bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

const Matrix& Tensor::grad() const {
    return node_->grad_buffer();
}

void Tensor::zero_grad() {
    if (node_) node_->grad = Matrix::Zero(node_->value.rows(), node_->value.cols());
}

double Tensor::item() const {
    if (rows() != 1 || cols() != 1) throw Error(ErrorCode::shape, "item() on a " + shape_str(value()) + " tensor");
    return node_->value(0, 0);
}

void Tensor::backward() const {
    if (rows() != 1 || cols() != 1) throw Error(ErrorCode::shape, "backward() needs a scalar, got " + shape_str(value()));
    if (!node_->requires_grad) return;

    // Iterative post-order DFS gives a topological order (parents first).
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        if (!n->is_leaf) n->grad = Matrix::Zero(n->value.rows(), n->value.cols());
    }
    node_->grad_buffer()(0, 0) += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (A.cols() != B.rows()) shape_error("matmul", A, B);
    auto pa = a.node(), pb = b.node();
    return make_result(A * B, {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) pa->grad_buffer().noalias() += self.grad * pb->value.transpose();
        if (pb->requires_grad) pb->grad_buffer().noalias() += pa->value.transpose() * self.grad;
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) shape_error("add", A, B);
    auto pa = a.node(), pb = b.node();
    return make_result(A + B, {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) pa->grad_buffer() += self.grad;
        if (pb->requires_grad) pb->grad_buffer() += self.grad;
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) shape_error("sub", A, B);
    auto pa = a.node(), pb = b.node();
    return make_result(A - B, {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) pa->grad_buffer() += self.grad;
        if (pb->requires_grad) pb->grad_buffer() -= self.grad;
    });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    const Matrix& A = val(a);
    const Matrix& R = val(row);
    if (R.rows() != 1 || R.cols() != A.cols()) shape_error("add_row", A, R);
    auto pa = a.node(), pr = row.node();
    Matrix out = A.rowwise() + R.row(0);
    return make_result(std::move(out), {pa, pr}, [pa, pr](Node& self) {
        if (pa->requires_grad) pa->grad_buffer() += self.grad;
        if (pr->requires_grad) pr->grad_buffer() += self.grad.colwise().sum();
    });
}

Tensor scale(const Tensor& a, double s) {
    auto pa = a.node();
    return make_result(val(a) * s, {pa}, [pa, s](Node& self) { pa->grad_buffer() += self.grad * s; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const Matrix& A = val(a);
    const Matrix& B = val(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) shape_error("mul", A, B);
    auto pa = a.node(), pb = b.node();
    return make_result(A.cwiseProduct(B), {pa, pb}, [pa, pb](Node& self) {
        if (pa->requires_grad) pa->grad_buffer() += self.grad.cwiseProduct(pb->value);
        if (pb->requires_grad) pb->grad_buffer() += self.grad.cwiseProduct(pa->value);
    });
}

Tensor transpose(const Tensor& a) {
    auto pa = a.node();
    Matrix out = val(a).transpose();
    return make_result(std::move(out), {pa}, [pa](Node& self) { pa->grad_buffer() += self.grad.transpose(); });
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw Error(ErrorCode::shape, "concat_cols of nothing");
    const Eigen::Index rows = val(parts[0]).rows();
    Eigen::Index cols = 0;
    std::vector<std::shared_ptr<Node>> nodes;
    for (const auto& p : parts) {
        if (val(p).rows() != rows) shape_error("concat_cols", val(parts[0]), val(p));
        cols += p.cols();
        nodes.push_back(p.node());
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p.cols()) = p.value();
        at += p.cols();
    }
    auto parents = nodes;
    return make_result(std::move(out), std::move(nodes), [parents](Node& self) {
        Eigen::Index offset = 0;
        for (const auto& p : parents) {
            const Eigen::Index c = p->value.cols();
            if (p->requires_grad) p->grad_buffer() += self.grad.middleCols(offset, c);
            offset += c;
        }
    });
}

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw Error(ErrorCode::shape, "concat_rows of nothing");
    const Eigen::Index cols = val(parts[0]).cols();
    Eigen::Index rows = 0;
    std::vector<std::shared_ptr<Node>> nodes;
    for (const auto& p : parts) {
        if (val(p).cols() != cols) shape_error("concat_rows", val(parts[0]), val(p));
        rows += p.rows();
        nodes.push_back(p.node());
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleRows(at, p.rows()) = p.value();
        at += p.rows();
    }
    auto parents = nodes;
    return make_result(std::move(out), std::move(nodes), [parents](Node& self) {
        Eigen::Index offset = 0;
        for (const auto& p : parents) {
            const Eigen::Index r = p->value.rows();
            if (p->requires_grad) p->grad_buffer() += self.grad.middleRows(offset, r);
            offset += r;
        }
    });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    const Matrix& A = val(a);
    if (start < 0 || count <= 0 || start + count > A.cols()) {
        throw Error(ErrorCode::shape, "slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) +
                                          ") out of range for " + shape_str(A));
    }
    auto pa = a.node();
    Matrix out = A.middleCols(start, count);
    return make_result(std::move(out), {pa}, [pa, start, count](Node& self) {
        pa->grad_buffer().middleCols(start, count) += self.grad;
    });
}

Matrix softmax_rows_value(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            y(i, j) = std::exp(x(i, j) - m);
            z += y(i, j);
        }
        y.row(i) /= z;
    }
    return y;
}

Tensor softmax_rows(const Tensor& a) {
    auto pa = a.node();
    Matrix y = softmax_rows_value(val(a));
    return make_result(std::move(y), {pa}, [pa](Node& self) {
        const Matrix& Y = self.value;
        const Eigen::VectorXd dots = self.grad.cwiseProduct(Y).rowwise().sum();
        pa->grad_buffer() += Y.cwiseProduct(self.grad.colwise() - dots);
    });
}

Tensor relu(const Tensor& a) {
    auto pa = a.node();
    Matrix out = val(a).cwiseMax(0.0);
    return make_result(std::move(out), {pa}, [pa](Node& self) {
        pa->grad_buffer() += (pa->value.array() > 0.0).cast<double>().matrix().cwiseProduct(self.grad);
    });
}

Tensor max_rows(const Tensor& a) {
    const Matrix& A = val(a);
    if (A.rows() == 0) throw Error(ErrorCode::empty_input, "max over an empty sequence");
    Matrix out(1, A.cols());
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(A.cols()));
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < A.rows(); ++i) {
            if (A(i, j) > A(best, j)) best = i;
        }
        argmax[static_cast<std::size_t>(j)] = best;
        out(0, j) = A(best, j);
    }
    auto pa = a.node();
    return make_result(std::move(out), {pa}, [pa, argmax = std::move(argmax)](Node& self) {
        Matrix& g = pa->grad_buffer();
        for (Eigen::Index j = 0; j < self.grad.cols(); ++j) g(argmax[static_cast<std::size_t>(j)], j) += self.grad(0, j);
    });
}

Tensor mean_rows(const Tensor& a) {
    const Matrix& A = val(a);
    if (A.rows() == 0) throw Error(ErrorCode::empty_input, "mean over an empty sequence");
    auto pa = a.node();
    const double inv = 1.0 / static_cast<double>(A.rows());
    Matrix out = A.colwise().sum() * inv;
    return make_result(std::move(out), {pa}, [pa, inv](Node& self) {
        pa->grad_buffer().rowwise() += self.grad.row(0) * inv;
    });
}

Tensor sum(const Tensor& a) {
    auto pa = a.node();
    Matrix out(1, 1);
    out(0, 0) = val(a).sum();
    return make_result(std::move(out), {pa}, [pa](Node& self) { pa->grad_buffer().array() += self.grad(0, 0); });
}

Tensor weighted_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const double> class_weights) {
    const Matrix& Z = val(logits);
    const auto batch = static_cast<Eigen::Index>(labels.size());
    if (batch == 0) throw Error(ErrorCode::empty_input, "cross-entropy over an empty batch");
    if (Z.rows() != batch) {
        throw Error(ErrorCode::shape, "cross-entropy: " + std::to_string(Z.rows()) + " logit rows for " +
                                          std::to_string(batch) + " labels");
    }
    if (static_cast<Eigen::Index>(class_weights.size()) != Z.cols()) {
        throw Error(ErrorCode::shape, "cross-entropy: class weight count does not match logit width");
    }
    for (double w : class_weights) {
        if (!(w > 0.0)) throw Error(ErrorCode::parameter, "class weights must be positive");
    }
    std::vector<int> y(labels.begin(), labels.end());
    std::vector<double> w(class_weights.begin(), class_weights.end());
    for (int label : y) {
        if (label < 0 || label >= Z.cols()) throw Error(ErrorCode::label, "label index out of range");
    }

    const Matrix P = softmax_rows_value(Z);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
        const int c = y[static_cast<std::size_t>(i)];
        const double m = Z.row(i).maxCoeff();
        const double lse = m + std::log((Z.row(i).array() - m).exp().sum());
        loss += w[static_cast<std::size_t>(c)] * (lse - Z(i, c));
    }
    Matrix out(1, 1);
    out(0, 0) = loss / static_cast<double>(batch);
    auto pz = logits.node();
    return make_result(std::move(out), {pz}, [pz, P, y = std::move(y), w = std::move(w)](Node& self) {
        Matrix& g = pz->grad_buffer();
        const double upstream = self.grad(0, 0) / static_cast<double>(P.rows());
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            const int c = y[static_cast<std::size_t>(i)];
            const double wi = w[static_cast<std::size_t>(c)] * upstream;
            for (Eigen::Index j = 0; j < P.cols(); ++j) g(i, j) += wi * (P(i, j) - (j == c ? 1.0 : 0.0));
        }
    });
}

}  // namespace modfuse::nn
