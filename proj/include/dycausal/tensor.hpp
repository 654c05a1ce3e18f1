#pragma once

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace dycausal {

/// Error thrown when a documented precondition is violated.
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dense row-major tensor of 64-bit floats. Value semantics: copies are
/// independent, and the library never mutates a tensor it handed out.
/// Rank is small (0-3 in practice); all numerics in the library run on
/// doubles, never floats.
class TensorF {
public:
    TensorF() = default;

    explicit TensorF(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    TensorF(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw ContractError("TensorF: data size does not match shape");
    }

    static TensorF zeros(std::vector<std::size_t> shape) { return TensorF(std::move(shape)); }

    static TensorF full(std::vector<std::size_t> shape, double v) {
        TensorF t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    /// d x d identity.
    static TensorF identity(std::size_t d) {
        TensorF t({d, d});
        for (std::size_t i = 0; i < d; ++i) t.data_[i * d + i] = 1.0;
        return t;
    }

    static TensorF scalar(double v) { return TensorF({1}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    /// Rows/cols of a rank-2 tensor.
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& operator()(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double operator()(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    bool same_shape(const TensorF& o) const { return shape_ == o.shape_; }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        return n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace dycausal
