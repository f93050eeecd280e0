#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace meat {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major float32 array. Reductions accumulate in double.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    /// Builds a rank-2 tensor from nested rows; all rows must have equal length.
    static Tensor matrix(std::initializer_list<std::initializer_list<float>> rows);
    static Tensor vector(std::initializer_list<float> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }
    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    // rank-2 accessors
    float& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
    float at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    /// Rows [begin, end) of a rank>=1 tensor along axis 0.
    Tensor rows(std::size_t begin, std::size_t end) const;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<float> data_;
};

/// Bit-level equality: same shape and identical float bit patterns.
bool bit_equal(const Tensor& a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& t);

Tensor clamp(const Tensor& t, float lo, float hi);
Tensor sign(const Tensor& t);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& t, float factor);
/// a + factor * b
Tensor axpy(const Tensor& a, float factor, const Tensor& b);

double sum(const Tensor& t);
double squared_norm(const Tensor& t);
/// Frobenius norm of the concatenation of all tensors.
double frobenius_norm(std::span<const Tensor> tensors);

bool all_finite(const Tensor& t);

} // namespace meat
