#include "dislab/tensor.hpp"

namespace dislab {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

Tensor Tensor::zeros(Shape shape) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.assign(shape_numel(t.shape_), 0.0);
    return t;
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_.assign(shape_numel(t.shape_), value);
    return t;
}

Tensor Tensor::scalar(double value) {
    Tensor t;
    t.shape_ = {1};
    t.data_.assign(1, value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != data.size())
        fail(ErrorCode::shape_mismatch,
             "Tensor::from: shape " + shape_str(shape) + " needs " +
                 std::to_string(shape_numel(shape)) + " values, got " +
                 std::to_string(data.size()));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

double Tensor::item() const {
    if (data_.size() != 1)
        fail(ErrorCode::shape_mismatch,
             "item(): tensor has shape " + shape_str(shape_) + ", expected a single value");
    return data_[0];
}

} // namespace dislab
