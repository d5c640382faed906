#include <doctest.h>

#include <cmath>

#include "sketret/autodiff.hpp"
#include "sketret/rng.hpp"
#include "sketret/tensor.hpp"

using namespace sketret;

TEST_CASE("tensor shapes and matmul") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul(a, b);
    CHECK(c.rows() == 2);
    CHECK(c.cols() == 2);
    CHECK(c(0, 0) == doctest::Approx(58));
    CHECK(c(0, 1) == doctest::Approx(64));
    CHECK(c(1, 0) == doctest::Approx(139));
    CHECK(c(1, 1) == doctest::Approx(154));

    CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
    CHECK(a.reshaped({6}).rank() == 1);
    CHECK_THROWS_AS(a.reshaped({4}), std::invalid_argument);
}

namespace {

// Central-difference check of d(output scalar)/d(leaf entries) for a graph
// builder f; the probe scalar is sum of elementwise-squared output.
template <typename Builder>
double max_rel_gradient_error(const Tensor& input, Builder f) {
    auto probe = [&](ad::Graph& g, const ad::Var& x) {
        return ad::sum(g, ad::square(g, f(g, x)));
    };

    ad::Graph g;
    ad::Var x = g.leaf(input, true);
    ad::Var y = probe(g, x);
    g.backward(y);
    Tensor analytic = x->grad;

    const double h = 1e-6;
    double worst = 0.0;
    Tensor point = input;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        auto eval = [&](double v) {
            point[i] = v;
            ad::Graph g2;
            ad::Var x2 = g2.leaf(point);
            return probe(g2, x2)->value[0];
        };
        const double fd = (eval(saved + h) - eval(saved - h)) / (2 * h);
        point[i] = saved;
        const double rel =
            std::fabs(analytic[i] - fd) / std::max({std::fabs(analytic[i]), std::fabs(fd), 1e-6});
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace

TEST_CASE("autodiff primitives match finite differences") {
    Rng rng(99);
    Tensor x = rng.uniform_tensor({3, 4}, -1.5, 1.5);
    Tensor other = rng.uniform_tensor({3, 4}, 0.2, 1.7);
    Tensor weights = rng.uniform_tensor({4, 2}, -1.0, 1.0);

    auto check = [&](auto builder) {
        CHECK(max_rel_gradient_error(x, builder) < 1e-4);
    };

    check([&](ad::Graph& g, const ad::Var& v) { return ad::tanh(g, v); });
    check([&](ad::Graph& g, const ad::Var& v) { return ad::sigmoid(g, v); });
    check([&](ad::Graph& g, const ad::Var& v) { return ad::exp(g, v); });
    check([&](ad::Graph& g, const ad::Var& v) {
        return ad::log(g, ad::add_scalar(g, ad::square(g, v), 0.5));
    });
    check([&](ad::Graph& g, const ad::Var& v) { return ad::leaky_relu(g, v, 0.1); });
    check([&](ad::Graph& g, const ad::Var& v) {
        return ad::div(g, v, g.leaf(other));
    });
    check([&](ad::Graph& g, const ad::Var& v) {
        return ad::matmul(g, v, g.leaf(weights));
    });
    check([&](ad::Graph& g, const ad::Var& v) { return ad::row_sum(g, v); });
    check([&](ad::Graph& g, const ad::Var& v) { return ad::row_mean(g, v); });
    check([&](ad::Graph& g, const ad::Var& v) {
        return ad::concat_cols(g, v, ad::square(g, v));
    });
    check([&](ad::Graph& g, const ad::Var& v) {
        return ad::gather_rows(g, v, {2, 0, 2});
    });
    check([&](ad::Graph& g, const ad::Var& v) {
        return ad::sqrt(g, ad::add_scalar(g, ad::square(g, v), 1.0));
    });
    check([&](ad::Graph& g, const ad::Var& v) {
        return ad::softmax_cross_entropy(g, v, {1, 3, 0});
    });
    check([&](ad::Graph& g, const ad::Var& v) {
        return ad::add_rowvec(g, v, g.leaf(Tensor({std::size_t{1}, std::size_t{4}},
                                                  {0.3, -0.2, 0.9, 0.1}),
                                           false));
    });
}

TEST_CASE("matmul gradient reaches both operands") {
    Rng rng(5);
    Tensor a = rng.uniform_tensor({2, 3}, -1, 1);
    Tensor b = rng.uniform_tensor({3, 2}, -1, 1);

    ad::Graph g;
    ad::Var va = g.leaf(a, true);
    ad::Var vb = g.leaf(b, true);
    ad::Var y = ad::sum(g, ad::matmul(g, va, vb));
    g.backward(y);

    // d(sum AB)/dA = ones * B^T
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t p = 0; p < 3; ++p) {
            double expect = 0.0;
            for (std::size_t j = 0; j < 2; ++j) expect += b(p, j);
            CHECK(va->grad(i, p) == doctest::Approx(expect));
        }
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t j = 0; j < 2; ++j) {
            double expect = 0.0;
            for (std::size_t i = 0; i < 2; ++i) expect += a(i, p);
            CHECK(vb->grad(p, j) == doctest::Approx(expect));
        }
}

TEST_CASE("softmax cross entropy values") {
    ad::Graph g;
    ad::Var logits = g.leaf(Tensor({2, 3}, {0, 0, 0, 10, 0, 0}));
    ad::Var ce = ad::softmax_cross_entropy(g, logits, {0, 0});
    CHECK(ce->value[0] == doctest::Approx(std::log(3.0)));
    CHECK(ce->value[1] < 1e-3);

    CHECK_THROWS_AS(ad::softmax_cross_entropy(g, logits, {0, 7}), std::invalid_argument);
}

TEST_CASE("clamp passes gradient only inside the interval") {
    ad::Graph g;
    ad::Var x = g.leaf(Tensor({1, 3}, {-9.0, 0.5, 9.0}), true);
    ad::Var y = ad::sum(g, ad::clamp(g, x, -8.0, 8.0));
    g.backward(y);
    CHECK(x->grad[0] == 0.0);
    CHECK(x->grad[1] == 1.0);
    CHECK(x->grad[2] == 0.0);
}
