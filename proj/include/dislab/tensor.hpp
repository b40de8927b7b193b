#ifndef DISLAB_TENSOR_HPP
#define DISLAB_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dislab/common.hpp"

namespace dislab {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

/// Dense row-major float64 array. A plain value type: copying copies the
/// buffer, there is no aliasing. `requires_grad` is advisory; it is consumed
/// when the tensor becomes a tape leaf.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);
    static Tensor from(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // rank-2 convenience accessors
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;

    double item() const;  // value of a single-element tensor

    bool requires_grad = false;

  private:
    Shape shape_;
    std::vector<double> data_;
};

std::size_t shape_numel(const Shape& s);

} // namespace dislab

#endif
