#include "fedprune/tensor.hpp"

#include <cmath>
#include <sstream>

namespace fedprune {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

TensorBuffer::TensorBuffer(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
}

TensorBuffer TensorBuffer::zeros(const Shape& shape) {
    TensorBuffer t;
    t.shape = shape;
    t.data.assign(shape_numel(shape), 0.0);
    return t;
}

TensorBuffer TensorBuffer::full(const Shape& shape, double value) {
    TensorBuffer t;
    t.shape = shape;
    t.data.assign(shape_numel(shape), value);
    return t;
}

std::size_t TensorBuffer::dim(std::size_t i) const {
    if (i >= shape.size()) {
        throw ShapeError("dim index " + std::to_string(i) + " out of range for shape " + shape_str(shape));
    }
    return shape[i];
}

bool all_finite(const TensorBuffer& t) {
    for (double v : t.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void ensure_finite(const TensorBuffer& t, const char* what) {
    if (!all_finite(t)) {
        throw NumericError(std::string(what) + ": non-finite value in tensor of shape " + shape_str(t.shape));
    }
}

bool same_shape(const TensorBuffer& a, const TensorBuffer& b) { return a.shape == b.shape; }

void require_same_shape(const TensorBuffer& a, const TensorBuffer& b, const char* what) {
    if (!same_shape(a, b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
}

}  // namespace fedprune
