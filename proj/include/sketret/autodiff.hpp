#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sketret/tensor.hpp"

namespace sketret {
namespace ad {

class Graph;

// One node of the Wengert list. Values are rank-2 tensors; scalars are 1x1.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Node&)> backward;  // pulls this node's grad into parents
};

using Var = std::shared_ptr<Node>;

// Records nodes in creation order; backward() walks the list in reverse.
// All inputs of an op must live on the same graph. Not thread-safe; build
// one Graph per evaluation.
class Graph {
public:
    Var leaf(Tensor value, bool requires_grad = false);
    Var scalar(double value) { return leaf(Tensor::scalar(value)); }

    // Seeds d(root)/d(root) = 1 and accumulates gradients into every node
    // with requires_grad. root must be a 1x1 scalar node of this graph.
    void backward(const Var& root);

    std::size_t node_count() const { return nodes_.size(); }

    Var record(Tensor value, bool requires_grad, std::function<void(Node&)> backward);

private:
    std::vector<Var> nodes_;
};

// Elementwise and structural primitives. Shapes are validated; mismatches
// throw std::invalid_argument.
Var add(Graph& g, const Var& a, const Var& b);
Var sub(Graph& g, const Var& a, const Var& b);
Var mul(Graph& g, const Var& a, const Var& b);
Var div(Graph& g, const Var& a, const Var& b);
Var neg(Graph& g, const Var& a);
Var add_scalar(Graph& g, const Var& a, double c);
Var mul_scalar(Graph& g, const Var& a, double c);
Var add_rowvec(Graph& g, const Var& a, const Var& row);  // row broadcast over rows
Var matmul(Graph& g, const Var& a, const Var& b);
Var reshape(Graph& g, const Var& a, std::size_t rows, std::size_t cols);
Var concat_cols(Graph& g, const Var& a, const Var& b);
Var gather_rows(Graph& g, const Var& a, std::vector<std::size_t> indices);

Var exp(Graph& g, const Var& a);
Var log(Graph& g, const Var& a);
Var sqrt(Graph& g, const Var& a);
Var square(Graph& g, const Var& a);
Var tanh(Graph& g, const Var& a);
Var sigmoid(Graph& g, const Var& a);
Var relu(Graph& g, const Var& a);
Var leaky_relu(Graph& g, const Var& a, double slope);
Var clamp(Graph& g, const Var& a, double lo, double hi);

Var sum(Graph& g, const Var& a);       // 1x1
Var mean(Graph& g, const Var& a);      // 1x1
Var row_sum(Graph& g, const Var& a);   // n x 1
Var row_mean(Graph& g, const Var& a);  // n x 1

// Numerically stable softmax cross-entropy per row; returns n x 1 losses.
Var softmax_cross_entropy(Graph& g, const Var& logits,
                          const std::vector<std::size_t>& labels);

inline double value_of(const Var& v) { return v->value[0]; }

}  // namespace ad
}  // namespace sketret
