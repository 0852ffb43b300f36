#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "cnn.hpp"
#include "core.hpp"
#include "rng.hpp"

namespace safeocc {

enum class DisturbanceKind { blockages, blur, fog, noise, shift, spatter };

inline const char* disturbance_name(DisturbanceKind k) {
    switch (k) {
        case DisturbanceKind::blockages: return "blockages";
        case DisturbanceKind::blur: return "blur";
        case DisturbanceKind::fog: return "fog";
        case DisturbanceKind::noise: return "noise";
        case DisturbanceKind::shift: return "shift";
        case DisturbanceKind::spatter: return "spatter";
    }
    return "?";
}

inline DisturbanceKind disturbance_from_name(const std::string& name) {
    for (DisturbanceKind k :
         {DisturbanceKind::blockages, DisturbanceKind::blur, DisturbanceKind::fog,
          DisturbanceKind::noise, DisturbanceKind::shift, DisturbanceKind::spatter})
        if (name == disturbance_name(k)) return k;
    throw std::invalid_argument("unknown disturbance kind: " + name);
}

// Per-kind intensity parameters with their documented ranges. Every draw is
// deterministic under `seed`.
struct DisturbanceSpec {
    DisturbanceKind kind = DisturbanceKind::noise;
    uint64_t seed = 0;

    int blockage_count_min = 1, blockage_count_max = 4;
    double blockage_side_min = 0.10, blockage_side_max = 0.25;  // fraction of image
    double blockage_fill = 0.5;

    double blur_radius_min = 1.0, blur_radius_max = 3.0;  // disc radius, px

    double fog_strength_min = 0.3, fog_strength_max = 0.6;  // mean blend toward 1.0

    double noise_sigma_min = 0.05, noise_sigma_max = 0.15;

    double shift_jitter_frac = 0.08;  // corner jitter, fraction of width

    double spatter_coverage_min = 0.02, spatter_coverage_max = 0.08;
    double spatter_ink = 0.1;
};

namespace detail {

// 3x3 homography mapping the four source corners to the four destination
// corners (DLT, Gaussian elimination on the 8x8 system).
inline std::array<double, 9> homography(const std::array<double, 8>& src,
                                        const std::array<double, 8>& dst) {
    double a[8][9] = {};
    for (int i = 0; i < 4; ++i) {
        const double x = src[2 * i], y = src[2 * i + 1];
        const double u = dst[2 * i], v = dst[2 * i + 1];
        double* r1 = a[2 * i];
        double* r2 = a[2 * i + 1];
        r1[0] = x; r1[1] = y; r1[2] = 1; r1[6] = -u * x; r1[7] = -u * y; r1[8] = u;
        r2[3] = x; r2[4] = y; r2[5] = 1; r2[6] = -v * x; r2[7] = -v * y; r2[8] = v;
    }
    for (int col = 0; col < 8; ++col) {
        int piv = col;
        for (int r = col + 1; r < 8; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        std::swap_ranges(a[col], a[col] + 9, a[piv]);
        for (int r = 0; r < 8; ++r) {
            if (r == col || a[r][col] == 0.0) continue;
            const double f = a[r][col] / a[col][col];
            for (int cc = col; cc < 9; ++cc) a[r][cc] -= f * a[col][cc];
        }
    }
    std::array<double, 9> h;
    for (int i = 0; i < 8; ++i) h[i] = a[i][8] / a[i][i];
    h[8] = 1.0;
    return h;
}

// 3-octave value noise on fixed lattices, bilinear interpolated, output in [0, 1].
inline Mat value_noise(int n, Rng& rng) {
    Mat out(n, n);
    const int cells[3] = {4, 8, 16};
    const double weights[3] = {0.5, 0.3, 0.2};
    for (int oct = 0; oct < 3; ++oct) {
        const int g = cells[oct] + 1;
        std::vector<double> lattice(static_cast<size_t>(g) * g);
        for (double& v : lattice) v = rng.uniform();
        const double scale = static_cast<double>(cells[oct]) / n;
        for (int r = 0; r < n; ++r) {
            const double fy = r * scale;
            const int y0 = static_cast<int>(fy);
            const double ty = fy - y0;
            for (int c = 0; c < n; ++c) {
                const double fx = c * scale;
                const int x0 = static_cast<int>(fx);
                const double tx = fx - x0;
                const double v00 = lattice[static_cast<size_t>(y0) * g + x0];
                const double v01 = lattice[static_cast<size_t>(y0) * g + x0 + 1];
                const double v10 = lattice[static_cast<size_t>(y0 + 1) * g + x0];
                const double v11 = lattice[static_cast<size_t>(y0 + 1) * g + x0 + 1];
                out(r, c) += weights[oct] * ((1 - ty) * ((1 - tx) * v00 + tx * v01) +
                                             ty * ((1 - tx) * v10 + tx * v11));
            }
        }
    }
    return out;
}

inline double sample_bilinear_white(const Tensor3& img, double x, double y) {
    // out-of-frame fills white
    if (x < 0.0 || y < 0.0 || x > img.dim2 - 1 || y > img.dim1 - 1) {
        const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
        auto at = [&](int r, int c) -> double {
            if (r < 0 || c < 0 || r >= img.dim1 || c >= img.dim2) return 1.0;
            return img(r, c, 0);
        };
        const double tx = x - x0, ty = y - y0;
        return (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x0 + 1)) +
               ty * ((1 - tx) * at(y0 + 1, x0) + tx * at(y0 + 1, x0 + 1));
    }
    const int x0 = std::min(static_cast<int>(x), img.dim2 - 2);
    const int y0 = std::min(static_cast<int>(y), img.dim1 - 2);
    const double tx = x - x0, ty = y - y0;
    return (1 - ty) * ((1 - tx) * img(y0, x0, 0) + tx * img(y0, x0 + 1, 0)) +
           ty * ((1 - tx) * img(y0 + 1, x0, 0) + tx * img(y0 + 1, x0 + 1, 0));
}

}  // namespace detail

inline Tensor3 apply_disturbance(const Tensor3& image, const DisturbanceSpec& spec) {
    require(image.channels == 1, "apply_disturbance: grayscale input expected");
    const int n1 = image.dim1, n2 = image.dim2;
    Rng rng(spec.seed);
    Tensor3 out = image;

    switch (spec.kind) {
        case DisturbanceKind::blockages: {
            const int count = spec.blockage_count_min +
                              static_cast<int>(rng.below(
                                  spec.blockage_count_max - spec.blockage_count_min + 1));
            for (int b = 0; b < count; ++b) {
                const int w = std::max(1, static_cast<int>(
                                              rng.uniform(spec.blockage_side_min,
                                                          spec.blockage_side_max) * n2));
                const int h = std::max(1, static_cast<int>(
                                              rng.uniform(spec.blockage_side_min,
                                                          spec.blockage_side_max) * n1));
                const int r0 = static_cast<int>(rng.below(std::max(1, n1 - h)));
                const int c0 = static_cast<int>(rng.below(std::max(1, n2 - w)));
                for (int r = r0; r < std::min(n1, r0 + h); ++r)
                    for (int c = c0; c < std::min(n2, c0 + w); ++c)
                        out(r, c, 0) = spec.blockage_fill;
            }
            break;
        }
        case DisturbanceKind::blur: {
            const double radius = rng.uniform(spec.blur_radius_min, spec.blur_radius_max);
            const int rad = static_cast<int>(std::ceil(radius));
            std::vector<double> kernel;
            double total = 0.0;
            for (int dr = -rad; dr <= rad; ++dr)
                for (int dc = -rad; dc <= rad; ++dc) {
                    const double w = std::sqrt(double(dr * dr + dc * dc)) <= radius ? 1.0 : 0.0;
                    kernel.push_back(w);
                    total += w;
                }
            for (double& w : kernel) w /= total;
            // clamp-to-edge keeps a constant image constant
            for (int r = 0; r < n1; ++r)
                for (int c = 0; c < n2; ++c) {
                    double acc = 0.0;
                    size_t ki = 0;
                    for (int dr = -rad; dr <= rad; ++dr)
                        for (int dc = -rad; dc <= rad; ++dc) {
                            const int rr = std::clamp(r + dr, 0, n1 - 1);
                            const int cc = std::clamp(c + dc, 0, n2 - 1);
                            acc += kernel[ki++] * image(rr, cc, 0);
                        }
                    out(r, c, 0) = acc;
                }
            break;
        }
        case DisturbanceKind::fog: {
            const double beta = rng.uniform(spec.fog_strength_min, spec.fog_strength_max);
            Mat mask = detail::value_noise(std::max(n1, n2), rng);
            double mean = 0.0;
            for (double v : mask.data) mean += v;
            mean /= static_cast<double>(mask.data.size());
            const double gain = mean > 0.0 ? beta / mean : 0.0;
            for (int r = 0; r < n1; ++r)
                for (int c = 0; c < n2; ++c) {
                    const double m = std::clamp(mask(r, c) * gain, 0.0, 1.0);
                    out(r, c, 0) = image(r, c, 0) + m * (1.0 - image(r, c, 0));
                }
            break;
        }
        case DisturbanceKind::noise: {
            const double sigma = rng.uniform(spec.noise_sigma_min, spec.noise_sigma_max);
            for (double& v : out.data) v += sigma * rng.normal();
            break;
        }
        case DisturbanceKind::shift: {
            const double j = spec.shift_jitter_frac * n2;
            std::array<double, 8> src = {0, 0, double(n2 - 1), 0,
                                         double(n2 - 1), double(n1 - 1), 0, double(n1 - 1)};
            std::array<double, 8> dst = src;
            for (double& v : dst) v += rng.uniform(-j, j);
            // warp output -> source, so build the homography from jittered
            // corners back to the originals
            const auto h = detail::homography(dst, src);
            for (int r = 0; r < n1; ++r)
                for (int c = 0; c < n2; ++c) {
                    const double w = h[6] * c + h[7] * r + h[8];
                    const double sx = (h[0] * c + h[1] * r + h[2]) / w;
                    const double sy = (h[3] * c + h[4] * r + h[5]) / w;
                    out(r, c, 0) = detail::sample_bilinear_white(image, sx, sy);
                }
            break;
        }
        case DisturbanceKind::spatter: {
            const double coverage =
                rng.uniform(spec.spatter_coverage_min, spec.spatter_coverage_max);
            const int n = std::max(n1, n2);
            Mat noise(n, n);
            for (double& v : noise.data) v = rng.uniform();
            // small box blur to clump the noise into blobs
            Mat blurred(n, n);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c < n; ++c) {
                    double acc = 0.0;
                    int cnt = 0;
                    for (int dr = -2; dr <= 2; ++dr)
                        for (int dc = -2; dc <= 2; ++dc) {
                            const int rr = r + dr, cc = c + dc;
                            if (rr < 0 || cc < 0 || rr >= n || cc >= n) continue;
                            acc += noise(rr, cc);
                            ++cnt;
                        }
                    blurred(r, c) = acc / cnt;
                }
            std::vector<double> sorted = blurred.data;
            std::sort(sorted.begin(), sorted.end());
            const size_t cut = static_cast<size_t>((1.0 - coverage) * (sorted.size() - 1));
            const double threshold = sorted[cut];
            for (int r = 0; r < n1; ++r)
                for (int c = 0; c < n2; ++c)
                    if (blurred(r, c) > threshold) out(r, c, 0) = spec.spatter_ink;
            break;
        }
    }
    for (double& v : out.data) v = std::clamp(v, 0.0, 1.0);
    return out;
}

// Appends one disturbed copy per original frame for each requested kind,
// keeping the source label. Per-image seeds derive from `seed`.
inline void augment_dataset(Dataset& data, const std::vector<DisturbanceKind>& kinds,
                            uint64_t seed) {
    require(!data.images.empty(), "augment_dataset: empty dataset");
    const size_t n = data.images.size();
    Rng master(seed);
    for (size_t ki = 0; ki < kinds.size(); ++ki) {
        for (size_t i = 0; i < n; ++i) {
            DisturbanceSpec spec;
            spec.kind = kinds[ki];
            spec.seed = master.derive(ki * n + i).next_u64();
            data.images.push_back(apply_disturbance(data.images[i], spec));
            data.labels.push_back(data.labels[i]);
        }
    }
}

}  // namespace safeocc
