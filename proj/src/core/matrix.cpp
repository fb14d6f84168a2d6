#include "cage/core/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "cage/error.hpp"

namespace cage {

Matrix::Matrix(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string());
    }
}

Matrix Matrix::row_vector(std::span<const float> values) {
    return Matrix(1, values.size(), std::vector<float>(values.begin(), values.end()));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<float>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<float> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged initializer for Matrix");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
    return m;
}

void Matrix::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
    return "(" + std::to_string(rows_) + "x" + std::to_string(cols_) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul " + a.shape_string() + " * " + b.shape_string());
    }
    Matrix out(a.rows(), b.cols());
    std::vector<double> acc(b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double s = a(i, k);
            if (s == 0.0) continue;
            const auto src = b.row(k);
            for (std::size_t j = 0; j < src.size(); ++j) acc[j] += s * double(src[j]);
        }
        auto dst = out.row(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = static_cast<float>(acc[j]);
    }
    return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw DimensionError("matmul_transposed " + a.shape_string() + " * " + b.shape_string() +
                             "^T");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
    }
    return out;
}

float dot(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot of lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += double(a[i]) * double(b[i]);
    return static_cast<float>(acc);
}

double squared_distance(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw DimensionError("distance between lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = double(a[i]) - double(b[i]);
        acc += diff * diff;
    }
    return acc;
}

void axpy(float s, std::span<const float> x, std::span<float> y) {
    if (x.size() != y.size()) {
        throw DimensionError("axpy of lengths " + std::to_string(x.size()) + " and " +
                             std::to_string(y.size()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

}  // namespace cage
