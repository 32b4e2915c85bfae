#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace tse {

// Dense (batch, channels, time) tensor, row-major, 64-bit.
struct Tensor3 {
    std::size_t batch = 0, channels = 0, time = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(std::size_t b, std::size_t c, std::size_t t)
        : batch(b), channels(c), time(t), data(b * c * t, 0.0) {}

    double& at(std::size_t b, std::size_t c, std::size_t t) {
        return data[(b * channels + c) * time + t];
    }
    double at(std::size_t b, std::size_t c, std::size_t t) const {
        return data[(b * channels + c) * time + t];
    }
    double* row(std::size_t b, std::size_t c) { return data.data() + (b * channels + c) * time; }
    const double* row(std::size_t b, std::size_t c) const {
        return data.data() + (b * channels + c) * time;
    }
    std::size_t size() const { return data.size(); }
};

// Dense row-major matrix; rows are batch items or series.
struct Matrix {
    std::size_t rows = 0, cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
};

// Trainable tensor: value plus an additive gradient accumulator of the
// same shape. Backward passes add into grad; callers zero it.
struct ParamTensor {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;

    ParamTensor() = default;
    explicit ParamTensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        value.assign(n, 0.0);
        grad.assign(n, 0.0);
    }

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

struct ConvSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_size = 1;
    std::size_t dilation = 1;

    void validate() const {
        if (kernel_size < 1) throw std::invalid_argument("ConvSpec: kernel_size must be >= 1");
        if (dilation < 1) throw std::invalid_argument("ConvSpec: dilation must be >= 1");
        if (in_channels < 1 || out_channels < 1)
            throw std::invalid_argument("ConvSpec: channel counts must be >= 1");
    }
};

}  // namespace tse
