#include "meatlab/tensor.hpp"

#include "meatlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>
#include <sstream>

namespace meat {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
        throw DimensionError("tensor shape " + shape_string(shape_) + " holds " +
                             std::to_string(shape_size(shape_)) + " elements but " +
                             std::to_string(data_.size()) + " were supplied");
    }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<float>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<float> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged rows in Tensor::matrix");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<float> values) {
    return Tensor({values.size()}, std::vector<float>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::rows(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin > end || end > shape_[0]) {
        throw DimensionError("row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                             ") invalid for shape " + shape_string(shape_));
    }
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    Shape out_shape = shape_;
    out_shape[0] = end - begin;
    return Tensor(std::move(out_shape),
                  std::vector<float>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                     data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() &&
           (a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* arow = a.data() + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const float* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
        float* orow = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] = static_cast<float>(acc[j]);
    }
    return out;
}

Tensor transpose(const Tensor& t) {
    if (t.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_string(t.shape()));
    const std::size_t r = t.dim(0), c = t.dim(1);
    Tensor out({c, r});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out.at(j, i) = t.at(i, j);
    return out;
}

namespace {

template <typename F>
Tensor map(const Tensor& t, F f) {
    Tensor out(t.shape());
    std::transform(t.values().begin(), t.values().end(), out.values().begin(), f);
    return out;
}

template <typename F>
Tensor zip(const char* what, const Tensor& a, const Tensor& b, F f) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    Tensor out(a.shape());
    std::transform(a.values().begin(), a.values().end(), b.values().begin(), out.values().begin(), f);
    return out;
}

} // namespace

Tensor clamp(const Tensor& t, float lo, float hi) {
    if (!(lo <= hi)) throw ArgumentError("clamp: lo (" + std::to_string(lo) + ") > hi (" + std::to_string(hi) + ")");
    return map(t, [lo, hi](float v) { return std::min(std::max(v, lo), hi); });
}

Tensor sign(const Tensor& t) {
    return map(t, [](float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return zip("add", a, b, [](float x, float y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return zip("sub", a, b, [](float x, float y) { return x - y; });
}

Tensor scale(const Tensor& t, float factor) {
    return map(t, [factor](float v) { return v * factor; });
}

Tensor axpy(const Tensor& a, float factor, const Tensor& b) {
    return zip("axpy", a, b, [factor](float x, float y) { return x + factor * y; });
}

double sum(const Tensor& t) {
    double s = 0.0;
    for (float v : t.values()) s += v;
    return s;
}

double squared_norm(const Tensor& t) {
    double s = 0.0;
    for (float v : t.values()) s += static_cast<double>(v) * v;
    return s;
}

double frobenius_norm(std::span<const Tensor> tensors) {
    double s = 0.0;
    for (const auto& t : tensors) s += squared_norm(t);
    return std::sqrt(s);
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](float v) { return std::isfinite(v); });
}

} // namespace meat
