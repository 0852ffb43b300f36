#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "core.hpp"
#include "jacobi.hpp"

namespace safeocc {

// ---------------------------------------------------------------------------
// PCA

struct PcaModel {
    Vec mean;
    Mat projection;  // n x d, columns are top eigenvectors of the covariance
    Vec eigenvalues;
};

// Covariance uses the 1/|K| normalization. Either pass d directly or a
// variance retention threshold in (0, 1]; the threshold picks the smallest d
// whose cumulative eigenvalue share reaches it.
inline PcaModel fit_pca(const std::vector<Vec>& samples, int d = -1,
                        double variance_threshold = -1.0) {
    require(samples.size() >= 2, "fit_pca: need at least 2 samples");
    const int n = static_cast<int>(samples[0].size());
    for (const Vec& s : samples) require(static_cast<int>(s.size()) == n, "fit_pca: ragged samples");
    require(d <= n, "fit_pca: d exceeds feature count");

    PcaModel model;
    model.mean.assign(n, 0.0);
    for (const Vec& s : samples)
        for (int i = 0; i < n; ++i) model.mean[i] += s[i];
    for (double& v : model.mean) v /= static_cast<double>(samples.size());

    Mat sigma(n, n);
    for (const Vec& s : samples) {
        Vec c(n);
        for (int i = 0; i < n; ++i) c[i] = s[i] - model.mean[i];
        for (int i = 0; i < n; ++i) {
            if (c[i] == 0.0) continue;
            for (int j = 0; j < n; ++j) sigma(i, j) += c[i] * c[j];
        }
    }
    for (double& v : sigma.data) v /= static_cast<double>(samples.size());

    EigenResult eig = eigh_symmetric(sigma);
    model.eigenvalues = eig.values;

    int dims = d;
    if (dims < 0) {
        if (variance_threshold > 0.0) {
            double total = 0.0;
            for (double l : eig.values) total += std::max(0.0, l);
            double acc = 0.0;
            dims = n;
            for (int i = 0; i < n; ++i) {
                acc += std::max(0.0, eig.values[i]);
                if (total <= 0.0 || acc / total >= variance_threshold) {
                    dims = i + 1;
                    break;
                }
            }
        } else {
            dims = n;
        }
    }
    model.projection = Mat(n, dims);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < dims; ++c) model.projection(r, c) = eig.vectors(r, c);
    return model;
}

// Projects the centered vector: (v - mean)^T W.
inline Vec apply_pca(const PcaModel& model, const Vec& v) {
    require(v.size() == model.mean.size(), "apply_pca: length mismatch");
    const int n = static_cast<int>(v.size());
    const int d = model.projection.cols;
    Vec out(d, 0.0);
    for (int i = 0; i < n; ++i) {
        const double c = v[i] - model.mean[i];
        if (c == 0.0) continue;
        for (int j = 0; j < d; ++j) out[j] += c * model.projection(i, j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// 2D^2 PCA (per-filter)

struct TwoDPcaFilter {
    Mat w;         // n x d, column projection
    Mat q;         // n x r, row projection
    Mat mean_map;  // training mean, kept for persistence/diagnostics
};

struct TwoDPcaModel {
    std::vector<TwoDPcaFilter> filters;
};

// Fits one (W, Q) pair from the given maps. Covariances are built from
// centered maps; degenerate (all-identical) ensembles fall back to the
// canonical basis via the eigensolver of the zero matrix.
inline TwoDPcaFilter fit_2d2pca_filter(const std::vector<Mat>& maps, int d, int r) {
    require(maps.size() >= 2, "fit_2d2pca: need at least 2 maps");
    const int n = maps[0].rows;
    require(maps[0].cols == n, "fit_2d2pca: square maps expected");
    require(d <= n && r <= n, "fit_2d2pca: d/r exceed map size");

    TwoDPcaFilter f;
    f.mean_map = Mat(n, n);
    for (const Mat& m : maps)
        for (size_t i = 0; i < m.data.size(); ++i) f.mean_map.data[i] += m.data[i];
    for (double& v : f.mean_map.data) v /= static_cast<double>(maps.size());

    Mat sw(n, n), sq(n, n);
    Mat c(n, n);
    for (const Mat& m : maps) {
        for (size_t i = 0; i < m.data.size(); ++i) c.data[i] = m.data[i] - f.mean_map.data[i];
        const Mat ct = transpose(c);
        const Mat a = matmul(ct, c);  // C^T C
        const Mat b = matmul(c, ct);  // C C^T
        for (size_t i = 0; i < a.data.size(); ++i) {
            sw.data[i] += a.data[i];
            sq.data[i] += b.data[i];
        }
    }
    for (size_t i = 0; i < sw.data.size(); ++i) {
        sw.data[i] /= static_cast<double>(maps.size());
        sq.data[i] /= static_cast<double>(maps.size());
    }

    EigenResult ew = eigh_symmetric(sw);
    EigenResult eq = eigh_symmetric(sq);
    f.w = Mat(n, d);
    f.q = Mat(n, r);
    for (int row = 0; row < n; ++row) {
        for (int col = 0; col < d; ++col) f.w(row, col) = ew.vectors(row, col);
        for (int col = 0; col < r; ++col) f.q(row, col) = eq.vectors(row, col);
    }
    return f;
}

// maps_per_filter[j] holds the training feature map matrices of filter j.
inline TwoDPcaModel fit_2d2pca(const std::vector<std::vector<Mat>>& maps_per_filter, int d, int r) {
    TwoDPcaModel model;
    model.filters.reserve(maps_per_filter.size());
    for (const auto& maps : maps_per_filter) model.filters.push_back(fit_2d2pca_filter(maps, d, r));
    return model;
}

// Q^T V W on the raw (uncentered) map.
inline Mat apply_2d2pca(const TwoDPcaModel& model, int filter_index, const Mat& p) {
    const TwoDPcaFilter& f = model.filters.at(filter_index);
    require(p.rows == f.q.rows && p.cols == f.w.rows, "apply_2d2pca: dimension mismatch");
    return matmul(transpose(f.q), matmul(p, f.w));
}

// ---------------------------------------------------------------------------
// Scalarization g(.)

enum class ScalarizerKind { max, mean, twod_pca };

// One feature per filter: v_j = g(P_j).
inline Vec scalarize(const Tensor3& p, ScalarizerKind kind, const TwoDPcaModel* model = nullptr) {
    Vec v(p.channels);
    for (int j = 0; j < p.channels; ++j) {
        const double* plane = p.plane(j);
        const size_t n = static_cast<size_t>(p.dim1) * p.dim2;
        switch (kind) {
            case ScalarizerKind::max: {
                double best = plane[0];
                for (size_t i = 1; i < n; ++i) best = std::max(best, plane[i]);
                v[j] = best;
                break;
            }
            case ScalarizerKind::mean: {
                double s = 0.0;
                for (size_t i = 0; i < n; ++i) s += plane[i];
                v[j] = s / static_cast<double>(n);
                break;
            }
            case ScalarizerKind::twod_pca: {
                require(model != nullptr, "scalarize: 2d2pca requires a fitted model");
                const TwoDPcaFilter& f = model->filters.at(j);
                require(f.w.cols == 1 && f.q.cols == 1, "scalarize: 2d2pca needs d = r = 1");
                // q1^T P_j w1 without forming intermediates
                double s = 0.0;
                for (int row = 0; row < p.dim1; ++row) {
                    double inner = 0.0;
                    const double* prow = plane + static_cast<size_t>(row) * p.dim2;
                    for (int col = 0; col < p.dim2; ++col) inner += prow[col] * f.w(col, 0);
                    s += f.q(row, 0) * inner;
                }
                v[j] = s;
                break;
            }
        }
    }
    return v;
}

// ---------------------------------------------------------------------------
// Refinement s(.)

enum class RefinerKind { none, scale, standard, norm };

struct RefinerModel {
    RefinerKind kind = RefinerKind::none;
    Vec v_min, v_max, v_mu, v_sigma;
};

inline RefinerModel fit_refiner(const std::vector<Vec>& samples, RefinerKind kind) {
    require(!samples.empty(), "fit_refiner: empty sample set");
    const int n = static_cast<int>(samples[0].size());
    RefinerModel m;
    m.kind = kind;
    m.v_min.assign(n, std::numeric_limits<double>::infinity());
    m.v_max.assign(n, -std::numeric_limits<double>::infinity());
    m.v_mu.assign(n, 0.0);
    m.v_sigma.assign(n, 0.0);
    for (const Vec& s : samples) {
        require(static_cast<int>(s.size()) == n, "fit_refiner: ragged samples");
        for (int i = 0; i < n; ++i) {
            m.v_min[i] = std::min(m.v_min[i], s[i]);
            m.v_max[i] = std::max(m.v_max[i], s[i]);
            m.v_mu[i] += s[i];
        }
    }
    for (double& v : m.v_mu) v /= static_cast<double>(samples.size());
    for (const Vec& s : samples)
        for (int i = 0; i < n; ++i) {
            const double d = s[i] - m.v_mu[i];
            m.v_sigma[i] += d * d;
        }
    for (double& v : m.v_sigma) v = std::sqrt(v / static_cast<double>(samples.size()));
    return m;
}

// Dead (zero-variance) features map to 0: the divisor is replaced by 1.
inline Vec refine(const RefinerModel& m, const Vec& v) {
    if (m.kind == RefinerKind::none) return v;
    require(v.size() == m.v_mu.size(), "refine: length mismatch");
    Vec out(v.size());
    for (size_t i = 0; i < v.size(); ++i) {
        const double range = m.v_max[i] - m.v_min[i];
        switch (m.kind) {
            case RefinerKind::scale:
                out[i] = range > 0.0 ? (v[i] - m.v_min[i]) / range : 0.0;
                break;
            case RefinerKind::standard:
                out[i] = m.v_sigma[i] > 0.0 ? (v[i] - m.v_mu[i]) / m.v_sigma[i] : 0.0;
                break;
            case RefinerKind::norm:
                out[i] = range > 0.0 ? (v[i] - m.v_mu[i]) / range : 0.0;
                break;
            case RefinerKind::none:
                out[i] = v[i];
                break;
        }
    }
    return out;
}

}  // namespace safeocc
