// Copyright (c) 2026 The matforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace matforge {

/// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape_, double fill = 0.0)
        : shape(std::move(shape_)), data(numel_of(shape), fill) {}

    Tensor(std::initializer_list<int64_t> shape_, double fill = 0.0)
        : shape(shape_), data(numel_of(shape), fill) {}

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) n *= d;
        return n;
    }

    int64_t numel() const { return int64_t(data.size()); }
    int rank() const { return int(shape.size()); }

    double* begin() { return data.data(); }
    double* end() { return data.data() + data.size(); }
    const double* begin() const { return data.data(); }
    const double* end() const { return data.data() + data.size(); }

    double& operator[](int64_t i) { return data[size_t(i)]; }
    double operator[](int64_t i) const { return data[size_t(i)]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline std::string shape_string(const std::vector<int64_t>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

inline void check_same_shape(const Tensor& a, const Tensor& b,
                             const char* what = "tensor op") {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                    shape_string(a.shape) + " vs " + shape_string(b.shape));
    }
}

}  // namespace matforge
