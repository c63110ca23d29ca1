#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssvae/tensor.hpp"

namespace ssvae {

// Row-major dense matrix of feature rows. Plain data, no autodiff.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> v)
        : rows(r), cols(c), values(std::move(v)) {}

    std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
    std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
    double& operator()(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
    bool empty() const { return rows == 0; }

    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto src = row(idx[i]);
            std::copy(src.begin(), src.end(), out.row(i).begin());
        }
        return out;
    }

    void append_row(std::span<const double> r) {
        if (rows == 0 && cols == 0) cols = r.size();
        values.insert(values.end(), r.begin(), r.end());
        ++rows;
    }

    Tensor to_tensor() const { return Tensor::leaf({rows, cols}, values); }
};

}  // namespace ssvae
