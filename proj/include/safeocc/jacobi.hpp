#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>

#include "core.hpp"

namespace safeocc {

struct EigenResult {
    Vec values;    // descending
    Mat vectors;   // columns are the eigenvectors, same order as values
};

// Cyclic Jacobi sweeps for symmetric matrices. Stops when the off-diagonal
// Frobenius norm drops below max(1e-10, 1e-14 * ||m||_F) or after 100 sweeps.
// Eigenvalues come back sorted descending; each eigenvector is sign-fixed so
// its largest-magnitude entry is non-negative.
inline EigenResult eigh_symmetric(const Mat& m) {
    require(m.rows == m.cols, "eigh: matrix must be square");
    const int n = m.rows;
    double frob = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            require(std::abs(m(i, j) - m(j, i)) <= 1e-9 * std::max(1.0, std::abs(m(i, j))),
                    "eigh: matrix not symmetric");
            frob += m(i, j) * m(i, j);
        }
    frob = std::sqrt(frob);

    Mat a = m;
    Mat v(n, n);
    for (int i = 0; i < n; ++i) v(i, i) = 1.0;

    const double tol = std::max(1e-10, 1e-14 * frob);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += 2.0 * a(p, q) * a(p, q);
        if (std::sqrt(off) < tol) break;

        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = 0.5 * (a(q, q) - a(p, p)) / apq;
                double t = 1.0 / (std::abs(theta) + std::sqrt(1.0 + theta * theta));
                if (theta < 0.0) t = -t;
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return a(i, i) > a(j, j); });

    EigenResult res;
    res.values.resize(n);
    res.vectors = Mat(n, n);
    for (int c = 0; c < n; ++c) {
        const int src = order[c];
        res.values[c] = a(src, src);
        int arg = 0;
        double best = 0.0;
        for (int r = 0; r < n; ++r) {
            if (std::abs(v(r, src)) > best) {
                best = std::abs(v(r, src));
                arg = r;
            }
        }
        const double sign = v(arg, src) < 0.0 ? -1.0 : 1.0;
        for (int r = 0; r < n; ++r) res.vectors(r, c) = sign * v(r, src);
    }
    return res;
}

}  // namespace safeocc
