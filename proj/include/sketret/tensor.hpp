#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace sketret {

// Dense row-major tensor of doubles. Rank is arbitrary for storage and
// checkpointing; the autodiff layer only ever builds rank-2 views.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, double value);
    static Tensor matrix(std::size_t rows, std::size_t cols);
    static Tensor vector(std::size_t n);
    static Tensor scalar(double value);

    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }

    // 2-d accessors; rank-1 tensors behave as single-row matrices.
    std::size_t rows() const;
    std::size_t cols() const;
    double& operator()(std::size_t r, std::size_t c);
    double operator()(std::size_t r, std::size_t c) const;
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    void fill(double value);

    Tensor reshaped(std::vector<std::size_t> shape) const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

bool operator==(const Tensor& a, const Tensor& b);

// C = A * B for rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);

double squared_distance(const Tensor& a, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);
double norm(const Tensor& a);
double cosine_similarity(const Tensor& a, const Tensor& b);

}  // namespace sketret
