#pragma once

// Dense row-major tensor of doubles. Images are stored H x W x C with the
// channel index fastest; parameter arrays reuse the same storage with
// whatever logical shape they declare.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace recongen {

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), 0.0);
    }

    Tensor(int h, int w, int c) : Tensor(std::vector<int>{h, w, c}) {}

    static Tensor full(std::vector<int> shape, double value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    bool empty() const { return data_.empty(); }
    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    size_t size() const { return data_.size(); }

    // Image accessors (3-d tensors only).
    int height() const { return dim(0); }
    int width() const { return dim(1); }
    int channels() const { return dim(2); }

    double& at(int y, int x, int c) {
        return data_[(static_cast<size_t>(y) * dim(1) + x) * dim(2) + c];
    }
    double at(int y, int x, int c) const {
        return data_[(static_cast<size_t>(y) * dim(1) + x) * dim(2) + c];
    }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& o) {
        require_same_shape(o, "operator+=");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor& operator-=(const Tensor& o) {
        require_same_shape(o, "operator-=");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor& operator*=(double s) {
        for (double& v : data_) v *= s;
        return *this;
    }

    friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
    friend Tensor operator*(Tensor a, double s) { return a *= s; }
    friend Tensor operator*(double s, Tensor a) { return a *= s; }

    double min() const { return data_.empty() ? 0.0 : *std::min_element(data_.begin(), data_.end()); }
    double max() const { return data_.empty() ? 0.0 : *std::max_element(data_.begin(), data_.end()); }

    double mean() const {
        if (data_.empty()) return 0.0;
        double s = 0.0;
        for (double v : data_) s += v;
        return s / static_cast<double>(data_.size());
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    Tensor clamped(double lo, double hi) const {
        Tensor out = *this;
        for (double& v : out.data_) v = std::clamp(v, lo, hi);
        return out;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

    void require_same_shape(const Tensor& o, const char* where) const {
        if (!same_shape(o)) {
            throw std::invalid_argument(std::string(where) + ": shape mismatch " +
                                        shape_str() + " vs " + o.shape_str());
        }
    }

private:
    static size_t count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
            n *= static_cast<size_t>(d);
        }
        return shape.empty() ? 0 : n;
    }

    std::vector<int> shape_;
    std::vector<double> data_;
};

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    a.require_same_shape(b, "max_abs_diff");
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return false;
    }
    return true;
}

}  // namespace recongen
