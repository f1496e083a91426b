#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedprune/errors.hpp"

namespace fedprune {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense n-dimensional array, row-major. The single value carrier for
/// weights, activations and gradients. Arithmetic is done in double;
/// dtype_width is the element width used for byte accounting and for
/// checkpoint serialization (4-byte little-endian reals).
struct TensorBuffer {
    Shape shape;
    std::vector<double> data;
    int dtype_width = 4;

    TensorBuffer() = default;
    TensorBuffer(Shape s, std::vector<double> d);

    static TensorBuffer zeros(const Shape& shape);
    static TensorBuffer full(const Shape& shape, double value);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const;

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }
};

bool all_finite(const TensorBuffer& t);

/// Throws NumericError if any element is NaN or infinite.
void ensure_finite(const TensorBuffer& t, const char* what);

bool same_shape(const TensorBuffer& a, const TensorBuffer& b);

/// Throws ShapeError naming both shapes if they differ.
void require_same_shape(const TensorBuffer& a, const TensorBuffer& b, const char* what);

}  // namespace fedprune
