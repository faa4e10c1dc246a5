#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace reviewguard::nnet {

// Dense row-major array of doubles. Most uses are 1-D or 2-D; for 2-D the
// shape is {rows, cols}.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(count(shape_), fill) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor vector(std::size_t n, double fill = 0.0) { return Tensor({n}, fill); }
    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : data_.size() / std::max<std::size_t>(shape_[0], 1); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const;
    // Throws NumericError naming `what` if any entry is NaN or infinite.
    void check_finite(std::string_view what) const;

    bool operator==(const Tensor&) const = default;

private:
    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// A trainable tensor and its gradient accumulator (same shape).
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

} // namespace reviewguard::nnet
