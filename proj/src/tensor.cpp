#include "sketret/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sketret {

namespace {
std::size_t shape_size(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
        throw std::invalid_argument("Tensor: data size does not match shape");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
Tensor Tensor::vector(std::size_t n) { return Tensor({n}); }

Tensor Tensor::scalar(double value) {
    Tensor t({std::size_t{1}, std::size_t{1}});
    t[0] = value;
    return t;
}

std::size_t Tensor::rows() const { return shape_.size() >= 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const {
    if (shape_.empty()) return 0;
    return shape_.size() >= 2 ? shape_[1] : shape_[0];
}

double& Tensor::operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::fill(double value) {
    for (double& v : data_) v = value;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (shape_size(shape) != data_.size())
        throw std::invalid_argument("Tensor::reshaped: element count mismatch");
    return Tensor(std::move(shape), data_);
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && a.values() == b.values();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions differ");
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor c = Tensor::matrix(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * k;
        double* crow = c.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

double squared_distance(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("squared_distance: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double cosine_similarity(const Tensor& a, const Tensor& b) {
    const double na = norm(a), nb = norm(b);
    if (na == 0.0 || nb == 0.0)
        throw std::invalid_argument("cosine_similarity: zero-norm input");
    return dot(a, b) / (na * nb);
}

}  // namespace sketret
