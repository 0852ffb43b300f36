#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "core.hpp"

namespace safeocc {

inline double gaussian_kernel(const Vec& a, const Vec& b, double gamma) {
    require(a.size() == b.size(), "gaussian_kernel: length mismatch");
    require(gamma > 0.0, "gaussian_kernel: gamma must be positive");
    return std::exp(-gamma * sq_dist(a, b));
}

struct OcSvmModel {
    std::vector<Vec> support_vectors;
    Vec alphas;
    double rho = 0.0;
    double gamma = 1.0;
    double nu = 0.1;
};

// Solves the one-class dual
//   min 1/2 a^T K a  s.t.  0 <= a_i <= 1/(nu n),  sum a_i = 1
// with pairwise SMO. Working pair is the max-violating pair (lowest index on
// ties); stops when the KKT violation drops below 1e-6.
inline OcSvmModel fit_ocsvm(const std::vector<Vec>& samples, double nu, double gamma) {
    require(samples.size() >= 2, "fit_ocsvm: need at least 2 samples");
    require(nu > 0.0 && nu <= 1.0, "fit_ocsvm: nu must lie in (0, 1]");
    require(gamma > 0.0, "fit_ocsvm: gamma must be positive");
    const int n = static_cast<int>(samples.size());
    const double c_bound = 1.0 / (nu * n);
    const double kkt_tol = 1e-6;

    // Full Gram matrix for desk-scale sets; row recomputation beyond 4096.
    const bool cache = n <= 4096;
    std::vector<double> gram;
    if (cache) {
        gram.resize(static_cast<size_t>(n) * n);
        for (int i = 0; i < n; ++i) {
            gram[static_cast<size_t>(i) * n + i] = 1.0;
            for (int j = i + 1; j < n; ++j) {
                const double k = gaussian_kernel(samples[i], samples[j], gamma);
                gram[static_cast<size_t>(i) * n + j] = k;
                gram[static_cast<size_t>(j) * n + i] = k;
            }
        }
    }
    std::vector<double> row_i(cache ? 0 : n), row_j(cache ? 0 : n);
    auto kernel_row = [&](int i, std::vector<double>& buf) -> const double* {
        if (cache) return &gram[static_cast<size_t>(i) * n];
        for (int j = 0; j < n; ++j) buf[j] = gaussian_kernel(samples[i], samples[j], gamma);
        return buf.data();
    };

    // Feasible start: fill the box from the lowest index until the unit mass
    // is placed.
    Vec alpha(n, 0.0);
    {
        double remaining = 1.0;
        for (int i = 0; i < n && remaining > 0.0; ++i) {
            alpha[i] = std::min(c_bound, remaining);
            remaining -= alpha[i];
        }
    }

    // grad_i = (K alpha)_i
    Vec grad(n, 0.0);
    for (int i = 0; i < n; ++i) {
        if (alpha[i] == 0.0) continue;
        const double* row = kernel_row(i, row_i);
        for (int j = 0; j < n; ++j) grad[j] += alpha[i] * row[j];
    }

    const long max_updates = 1000000;
    long updates = 0;
    for (;; ++updates) {
        if (updates >= max_updates)
            throw std::runtime_error("fit_ocsvm: SMO failed to converge within update budget");
        // i: steepest descent among raisable, j: steepest ascent among lowerable.
        int i_up = -1, j_low = -1;
        double g_min = std::numeric_limits<double>::infinity();
        double g_max = -std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k) {
            if (alpha[k] < c_bound - 1e-12 && grad[k] < g_min) {
                g_min = grad[k];
                i_up = k;
            }
            if (alpha[k] > 1e-12 && grad[k] > g_max) {
                g_max = grad[k];
                j_low = k;
            }
        }
        if (i_up < 0 || j_low < 0 || g_max - g_min < kkt_tol) break;

        const double* ri = kernel_row(i_up, row_i);
        const double* rj = kernel_row(j_low, row_j);
        const double quad = ri[i_up] + rj[j_low] - 2.0 * ri[j_low];
        double delta = quad > 1e-12 ? (g_max - g_min) / quad
                                    : std::min(c_bound - alpha[i_up], alpha[j_low]);
        delta = std::min(delta, std::min(c_bound - alpha[i_up], alpha[j_low]));
        if (delta <= 0.0) break;
        alpha[i_up] += delta;
        alpha[j_low] -= delta;
        for (int k = 0; k < n; ++k) grad[k] += delta * (ri[k] - rj[k]);
    }

    OcSvmModel model;
    model.gamma = gamma;
    model.nu = nu;

    // rho: median decision value over margin vectors, falling back to the max
    // decision value when every support vector sits at the bound.
    std::vector<double> margin_vals;
    double max_val = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        if (alpha[i] > 1e-10) {
            max_val = std::max(max_val, grad[i]);
            if (alpha[i] < c_bound - kkt_tol) margin_vals.push_back(grad[i]);
        }
    }
    if (!margin_vals.empty()) {
        std::sort(margin_vals.begin(), margin_vals.end());
        const size_t mid = margin_vals.size() / 2;
        model.rho = margin_vals.size() % 2 == 1
                        ? margin_vals[mid]
                        : 0.5 * (margin_vals[mid - 1] + margin_vals[mid]);
    } else {
        model.rho = max_val;
    }

    for (int i = 0; i < n; ++i) {
        if (alpha[i] > 1e-10) {
            model.support_vectors.push_back(samples[i]);
            model.alphas.push_back(alpha[i]);
        }
    }
    return model;
}

inline double decision(const OcSvmModel& model, const Vec& v) {
    double h = 0.0;
    for (size_t k = 0; k < model.support_vectors.size(); ++k)
        h += model.alphas[k] * gaussian_kernel(v, model.support_vectors[k], model.gamma);
    return h;
}

enum class Verdict { normal, novel };

struct Classification {
    Verdict verdict;
    double score;  // (rho - eps) - h_hat: positive exactly when novel
    double h_hat;
};

// Novel iff h < rho - eps; a tie classifies as normal.
inline Classification classify(const OcSvmModel& model, const Vec& v, double eps = 0.0) {
    Classification c;
    c.h_hat = decision(model, v);
    c.score = (model.rho - eps) - c.h_hat;
    c.verdict = c.h_hat < model.rho - eps ? Verdict::novel : Verdict::normal;
    return c;
}

}  // namespace safeocc
