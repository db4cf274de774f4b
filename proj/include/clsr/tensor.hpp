#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "clsr/common.hpp"

namespace clsr {

// Dense row-major 2-D matrix. Storage type is a template parameter because the
// gradient-check harness replays graphs in 64-bit; everything user-facing is
// mat<float> (tensor2).
template <typename T>
struct mat {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<T> data; // rows * cols, row-major

    mat() = default;

    mat(size_t r, size_t c) : rows(r), cols(c), data(r * c, T(0)) {}

    mat(size_t r, size_t c, std::vector<T> values) : rows(r), cols(c), data(std::move(values)) {
        if (data.size() != rows * cols)
            fail(errc::dimension, "matrix payload size " + std::to_string(data.size()) +
                                      " does not equal rows*cols = " + std::to_string(rows * cols));
    }

    mat(std::initializer_list<std::initializer_list<T>> init) {
        rows = init.size();
        cols = rows == 0 ? 0 : init.begin()->size();
        data.reserve(rows * cols);
        for (const auto& row : init) {
            if (row.size() != cols)
                fail(errc::dimension, "ragged initializer: expected " + std::to_string(cols) +
                                          " columns, got " + std::to_string(row.size()));
            data.insert(data.end(), row.begin(), row.end());
        }
    }

    T& at(size_t r, size_t c) { return data[r * cols + c]; }
    const T& at(size_t r, size_t c) const { return data[r * cols + c]; }

    T& operator()(size_t r, size_t c) { return at(r, c); }
    const T& operator()(size_t r, size_t c) const { return at(r, c); }

    size_t size() const { return data.size(); }

    bool same_shape(const mat& other) const { return rows == other.rows && cols == other.cols; }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using tensor2 = mat<float>;
using tensor2d = mat<double>;

inline std::string shape_str(size_t r, size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <typename T>
std::string shape_str(const mat<T>& m) {
    return shape_str(m.rows, m.cols);
}

template <typename U, typename T>
mat<U> cast_mat(const mat<T>& m) {
    mat<U> out(m.rows, m.cols);
    for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = static_cast<U>(m.data[i]);
    return out;
}

} // namespace clsr
