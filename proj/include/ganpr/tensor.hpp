#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "ganpr/common.hpp"
#include "ganpr/rng.hpp"

namespace ganpr {

// Dense row-major N-d array of doubles with an optional gradient buffer.
// The single value type of the numeric core.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, double fill_value = 0.0)
        : shape_(std::move(shape)) {
        for (int d : shape_) check(d > 0, "tensor dimension must be positive, got ", d);
        data_.assign(numel_of(shape_), fill_value);
    }

    Tensor(std::initializer_list<int> shape, double fill_value = 0.0)
        : Tensor(std::vector<int>(shape), fill_value) {}

    static Tensor from_values(std::vector<int> shape, std::vector<double> values) {
        Tensor t;
        t.shape_ = std::move(shape);
        check(numel_of(t.shape_) == values.size(), "value count ", values.size(),
              " does not match shape product ", numel_of(t.shape_));
        t.data_ = std::move(values);
        return t;
    }

    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& v : t.data_) v = rng.normal(0.0, stddev);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    size_t numel() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    // NCHW indexing for the common 4-d case
    double& at(int n, int c, int h, int w) {
        return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    double at(int n, int c, int h, int w) const {
        return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    double& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // Optional gradient buffer; when present it always mirrors the shape.
    bool has_grad() const { return !grad_.empty(); }
    std::vector<double>& grad() {
        if (grad_.empty()) grad_.assign(data_.size(), 0.0);
        return grad_;
    }
    const std::vector<double>& grad() const { return grad_; }
    void zero_grad() {
        if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), 0.0);
    }
    void drop_grad() { grad_.clear(); }

    static size_t numel_of(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return shape.empty() ? 0 : n;
    }

    static std::string shape_str(const std::vector<int>& shape) {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
    std::string shape_str() const { return shape_str(shape_); }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    check(a.same_shape(b), what, ": shape mismatch ", a.shape_str(), " vs ", b.shape_str());
}

}  // namespace ganpr
