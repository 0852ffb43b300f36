#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace safeocc {

using Vec = std::vector<double>;

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Dense row-major matrix.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

    double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

// Dense tensor stored as contiguous row-major planes, one plane per channel.
// Index (x1, x2, c) maps to c*dim1*dim2 + x1*dim2 + x2.
struct Tensor3 {
    int dim1 = 0;
    int dim2 = 0;
    int channels = 0;
    std::vector<double> data;

    Tensor3() = default;
    Tensor3(int d1, int d2, int ch, double fill = 0.0)
        : dim1(d1), dim2(d2), channels(ch), data(static_cast<size_t>(d1) * d2 * ch, fill) {}

    double& operator()(int x1, int x2, int c) {
        return data[(static_cast<size_t>(c) * dim1 + x1) * dim2 + x2];
    }
    double operator()(int x1, int x2, int c) const {
        return data[(static_cast<size_t>(c) * dim1 + x1) * dim2 + x2];
    }

    double* plane(int c) { return data.data() + static_cast<size_t>(c) * dim1 * dim2; }
    const double* plane(int c) const { return data.data() + static_cast<size_t>(c) * dim1 * dim2; }

    // Copies channel c out as a dim1 x dim2 matrix.
    Mat channel(int c) const {
        Mat m(dim1, dim2);
        const double* p = plane(c);
        std::copy(p, p + static_cast<size_t>(dim1) * dim2, m.data.begin());
        return m;
    }
};

inline Mat matmul(const Mat& a, const Mat& b) {
    require(a.cols == b.rows, "matmul: dimension mismatch");
    Mat out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = &b.data[static_cast<size_t>(k) * b.cols];
            double* orow = &out.data[static_cast<size_t>(i) * out.cols];
            for (int j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline Mat transpose(const Mat& a) {
    Mat out(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

inline double dot(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sq_dist(const Vec& a, const Vec& b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace safeocc
