#include "sketret/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sketret {
namespace ad {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

void accumulate(Node& parent, const Tensor& g) {
    for (std::size_t i = 0; i < g.size(); ++i) parent.grad[i] += g[i];
}

}  // namespace

Var Graph::record(Tensor value, bool requires_grad, std::function<void(Node&)> backward) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    node->backward = std::move(backward);
    nodes_.push_back(node);
    return node;
}

Var Graph::leaf(Tensor value, bool requires_grad) {
    return record(std::move(value), requires_grad, nullptr);
}

void Graph::backward(const Var& root) {
    if (root->value.size() != 1)
        throw std::invalid_argument("Graph::backward: root must be scalar");
    for (auto& n : nodes_) {
        n->grad = Tensor(n->value.shape());
    }
    root->grad[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (n.backward) n.backward(n);
    }
}

Var add(Graph& g, const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return g.record(std::move(out), a->requires_grad || b->requires_grad,
                    [a, b](Node& n) {
                        accumulate(*a, n.grad);
                        accumulate(*b, n.grad);
                    });
}

Var sub(Graph& g, const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return g.record(std::move(out), a->requires_grad || b->requires_grad,
                    [a, b](Node& n) {
                        for (std::size_t i = 0; i < n.grad.size(); ++i) {
                            a->grad[i] += n.grad[i];
                            b->grad[i] -= n.grad[i];
                        }
                    });
}

Var mul(Graph& g, const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return g.record(std::move(out), a->requires_grad || b->requires_grad,
                    [a, b](Node& n) {
                        for (std::size_t i = 0; i < n.grad.size(); ++i) {
                            a->grad[i] += n.grad[i] * b->value[i];
                            b->grad[i] += n.grad[i] * a->value[i];
                        }
                    });
}

Var div(Graph& g, const Var& a, const Var& b) {
    check_same_shape(a, b, "div");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= b->value[i];
    return g.record(std::move(out), a->requires_grad || b->requires_grad,
                    [a, b](Node& n) {
                        for (std::size_t i = 0; i < n.grad.size(); ++i) {
                            const double inv = 1.0 / b->value[i];
                            a->grad[i] += n.grad[i] * inv;
                            b->grad[i] -= n.grad[i] * a->value[i] * inv * inv;
                        }
                    });
}

Var neg(Graph& g, const Var& a) { return mul_scalar(g, a, -1.0); }

Var add_scalar(Graph& g, const Var& a, double c) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += c;
    return g.record(std::move(out), a->requires_grad,
                    [a](Node& n) { accumulate(*a, n.grad); });
}

Var mul_scalar(Graph& g, const Var& a, double c) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return g.record(std::move(out), a->requires_grad, [a, c](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * c;
    });
}

Var add_rowvec(Graph& g, const Var& a, const Var& row) {
    const std::size_t rows = a->value.rows(), cols = a->value.cols();
    if (row->value.size() != cols)
        throw std::invalid_argument("add_rowvec: vector length != column count");
    Tensor out = a->value;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out(r, c) += row->value[c];
    return g.record(std::move(out), a->requires_grad || row->requires_grad,
                    [a, row, rows, cols](Node& n) {
                        accumulate(*a, n.grad);
                        for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t c = 0; c < cols; ++c)
                                row->grad[c] += n.grad(r, c);
                    });
}

Var matmul(Graph& g, const Var& a, const Var& b) {
    Tensor out = sketret::matmul(a->value, b->value);
    return g.record(std::move(out), a->requires_grad || b->requires_grad,
                    [a, b](Node& n) {
                        // dA = dC * B^T ; dB = A^T * dC
                        const std::size_t rows = a->value.rows();
                        const std::size_t inner = a->value.cols();
                        const std::size_t cols = b->value.cols();
                        for (std::size_t i = 0; i < rows; ++i) {
                            for (std::size_t p = 0; p < inner; ++p) {
                                double s = 0.0;
                                const double* grow = n.grad.data() + i * cols;
                                const double* brow = b->value.data() + p * cols;
                                for (std::size_t j = 0; j < cols; ++j) s += grow[j] * brow[j];
                                a->grad(i, p) += s;
                            }
                        }
                        for (std::size_t p = 0; p < inner; ++p) {
                            double* brow = b->grad.data() + p * cols;
                            for (std::size_t i = 0; i < rows; ++i) {
                                const double av = a->value(i, p);
                                if (av == 0.0) continue;
                                const double* grow = n.grad.data() + i * cols;
                                for (std::size_t j = 0; j < cols; ++j) brow[j] += av * grow[j];
                            }
                        }
                    });
}

Var reshape(Graph& g, const Var& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a->value.size())
        throw std::invalid_argument("reshape: element count mismatch");
    Tensor out = a->value.reshaped({rows, cols});
    return g.record(std::move(out), a->requires_grad,
                    [a](Node& n) { accumulate(*a, n.grad); });
}

Var concat_cols(Graph& g, const Var& a, const Var& b) {
    const std::size_t rows = a->value.rows();
    if (b->value.rows() != rows)
        throw std::invalid_argument("concat_cols: row count mismatch");
    const std::size_t ca = a->value.cols(), cb = b->value.cols();
    Tensor out = Tensor::matrix(rows, ca + cb);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) out(r, c) = a->value(r, c);
        for (std::size_t c = 0; c < cb; ++c) out(r, ca + c) = b->value(r, c);
    }
    return g.record(std::move(out), a->requires_grad || b->requires_grad,
                    [a, b, rows, ca, cb](Node& n) {
                        for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < ca; ++c) a->grad(r, c) += n.grad(r, c);
                            for (std::size_t c = 0; c < cb; ++c) b->grad(r, c) += n.grad(r, ca + c);
                        }
                    });
}

Var gather_rows(Graph& g, const Var& a, std::vector<std::size_t> indices) {
    const std::size_t cols = a->value.cols();
    for (std::size_t idx : indices)
        if (idx >= a->value.rows())
            throw std::invalid_argument("gather_rows: index out of range");
    Tensor out = Tensor::matrix(indices.size(), cols);
    for (std::size_t r = 0; r < indices.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = a->value(indices[r], c);
    return g.record(std::move(out), a->requires_grad,
                    [a, indices = std::move(indices), cols](Node& n) {
                        for (std::size_t r = 0; r < indices.size(); ++r)
                            for (std::size_t c = 0; c < cols; ++c)
                                a->grad(indices[r], c) += n.grad(r, c);
                    });
}

namespace {

template <typename F, typename DF>
Var unary(Graph& g, const Var& a, F f, DF df) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(out[i]);
    return g.record(std::move(out), a->requires_grad, [a, df](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            a->grad[i] += n.grad[i] * df(a->value[i], n.value[i]);
    });
}

}  // namespace

Var exp(Graph& g, const Var& a) {
    return unary(g, a, [](double x) { return std::exp(x); },
                 [](double, double y) { return y; });
}

Var log(Graph& g, const Var& a) {
    return unary(g, a, [](double x) { return std::log(x); },
                 [](double x, double) { return 1.0 / x; });
}

Var sqrt(Graph& g, const Var& a) {
    return unary(g, a, [](double x) { return std::sqrt(x); },
                 [](double, double y) { return 0.5 / y; });
}

Var square(Graph& g, const Var& a) {
    return unary(g, a, [](double x) { return x * x; },
                 [](double x, double) { return 2.0 * x; });
}

Var tanh(Graph& g, const Var& a) {
    return unary(g, a, [](double x) { return std::tanh(x); },
                 [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Graph& g, const Var& a) {
    return unary(g, a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                 [](double, double y) { return y * (1.0 - y); });
}

Var relu(Graph& g, const Var& a) {
    return unary(g, a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var leaky_relu(Graph& g, const Var& a, double slope) {
    return unary(g, a, [slope](double x) { return x > 0.0 ? x : slope * x; },
                 [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var clamp(Graph& g, const Var& a, double lo, double hi) {
    return unary(g, a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
                 [lo, hi](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Var sum(Graph& g, const Var& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) s += a->value[i];
    return g.record(Tensor::scalar(s), a->requires_grad, [a](Node& n) {
        const double gv = n.grad[0];
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += gv;
    });
}

Var mean(Graph& g, const Var& a) {
    return mul_scalar(g, sum(g, a), 1.0 / static_cast<double>(a->value.size()));
}

Var row_sum(Graph& g, const Var& a) {
    const std::size_t rows = a->value.rows(), cols = a->value.cols();
    Tensor out = Tensor::matrix(rows, 1);
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += a->value(r, c);
        out[r] = s;
    }
    return g.record(std::move(out), a->requires_grad, [a, rows, cols](Node& n) {
        for (std::size_t r = 0; r < rows; ++r) {
            const double gv = n.grad[r];
            for (std::size_t c = 0; c < cols; ++c) a->grad(r, c) += gv;
        }
    });
}

Var row_mean(Graph& g, const Var& a) {
    return mul_scalar(g, row_sum(g, a), 1.0 / static_cast<double>(a->value.cols()));
}

Var softmax_cross_entropy(Graph& g, const Var& logits,
                          const std::vector<std::size_t>& labels) {
    const std::size_t rows = logits->value.rows(), cols = logits->value.cols();
    if (labels.size() != rows)
        throw std::invalid_argument("softmax_cross_entropy: one label per row required");
    for (std::size_t label : labels)
        if (label >= cols)
            throw std::invalid_argument("softmax_cross_entropy: label out of range");

    Tensor out = Tensor::matrix(rows, 1);
    Tensor probs = Tensor::matrix(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double mx = logits->value(r, 0);
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, logits->value(r, c));
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) z += std::exp(logits->value(r, c) - mx);
        const double lse = mx + std::log(z);
        out[r] = lse - logits->value(r, labels[r]);
        for (std::size_t c = 0; c < cols; ++c)
            probs(r, c) = std::exp(logits->value(r, c) - lse);
    }
    return g.record(std::move(out), logits->requires_grad,
                    [logits, labels, probs = std::move(probs), rows, cols](Node& n) {
                        for (std::size_t r = 0; r < rows; ++r) {
                            const double gv = n.grad[r];
                            for (std::size_t c = 0; c < cols; ++c)
                                logits->grad(r, c) += gv * probs(r, c);
                            logits->grad(r, labels[r]) -= gv;
                        }
                    });
}

}  // namespace ad
}  // namespace sketret
