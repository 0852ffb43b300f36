#include <catch2/catch_amalgamated.hpp>

#include "safeocc/reduction.hpp"
#include "safeocc/rng.hpp"

using namespace safeocc;

namespace {

std::vector<Vec> random_cloud(int n, int dim, Rng& rng) {
    std::vector<Vec> out;
    for (int i = 0; i < n; ++i) {
        Vec v(dim);
        for (double& x : v) x = rng.uniform(-2.0, 2.0);
        out.push_back(v);
    }
    return out;
}

}  // namespace

TEST_CASE("pca on collinear points") {
    std::vector<Vec> pts;
    for (int i = 0; i < 10; ++i) pts.push_back({double(i), double(i)});
    PcaModel m = fit_pca(pts, 2);
    REQUIRE(std::abs(m.eigenvalues[1]) < 1e-10);
    const double s = 1.0 / std::sqrt(2.0);
    REQUIRE(std::abs(m.projection(0, 0) - s) < 1e-8);
    REQUIRE(std::abs(m.projection(1, 0) - s) < 1e-8);
}

TEST_CASE("pca with d = n preserves pairwise distances") {
    Rng rng(1);
    auto pts = random_cloud(20, 5, rng);
    PcaModel m = fit_pca(pts, 5);
    std::vector<Vec> proj;
    for (const Vec& p : pts) proj.push_back(apply_pca(m, p));
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j)
            REQUIRE(std::abs(std::sqrt(sq_dist(pts[i], pts[j])) -
                             std::sqrt(sq_dist(proj[i], proj[j]))) < 1e-8);
}

TEST_CASE("pca full-rank reconstruction") {
    Rng rng(2);
    auto pts = random_cloud(30, 5, rng);
    PcaModel m = fit_pca(pts, 5);
    for (const Vec& p : pts) {
        Vec z = apply_pca(m, p);
        // reconstruct: mean + W z
        Vec rec = m.mean;
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) rec[i] += m.projection(i, j) * z[j];
        for (int i = 0; i < 5; ++i) REQUIRE(std::abs(rec[i] - p[i]) < 1e-8);
    }
}

TEST_CASE("pca centering maps the mean to zero and is pure") {
    Rng rng(3);
    auto pts = random_cloud(10, 4, rng);
    PcaModel m = fit_pca(pts, 4);
    Vec z = apply_pca(m, m.mean);
    for (double v : z) REQUIRE(std::abs(v) < 1e-12);
    REQUIRE(apply_pca(m, pts[0]) == apply_pca(m, pts[0]));
    REQUIRE_THROWS_AS(apply_pca(m, Vec{1.0}), std::invalid_argument);
}

TEST_CASE("pca eigenvector input yields unit coordinate") {
    Rng rng(4);
    auto pts = random_cloud(40, 3, rng);
    PcaModel m = fit_pca(pts, 3);
    Vec v = m.mean;
    for (int i = 0; i < 3; ++i) v[i] += m.projection(i, 0);
    Vec z = apply_pca(m, v);
    REQUIRE(z[0] == Catch::Approx(1.0).margin(1e-8));
    REQUIRE(std::abs(z[1]) < 1e-8);
    REQUIRE(std::abs(z[2]) < 1e-8);
}

TEST_CASE("pca variance threshold selects dimension count") {
    std::vector<Vec> pts;
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.normal() * 10.0, b = rng.normal() * 0.1;
        pts.push_back({a, b, 0.01 * rng.normal()});
    }
    PcaModel m = fit_pca(pts, -1, 0.99);
    REQUIRE(m.projection.cols == 1);
    REQUIRE(fit_pca(pts, -1, 0.999999).projection.cols >= 2);
    REQUIRE_THROWS_AS(fit_pca({pts[0]}, 1), std::invalid_argument);
}

TEST_CASE("2d2pca identical maps degenerate to canonical axes") {
    // two copies keep the mean exact, so the covariances are exactly zero
    Mat map(3, 3);
    Rng rng(6);
    for (double& v : map.data) v = rng.uniform(-1, 1);
    TwoDPcaFilter f = fit_2d2pca_filter({map, map}, 1, 1);
    REQUIRE(f.w(0, 0) == Catch::Approx(1.0));
    REQUIRE(f.q(0, 0) == Catch::Approx(1.0));
}

TEST_CASE("2d2pca recovers rank-1 directions") {
    // maps a_k * u w^T plus the mean: covariances align with u (rows) and w (cols)
    Vec u = {0.6, 0.8, 0.0};
    Vec w = {0.0, 1.0, 0.0};
    Rng rng(7);
    std::vector<Mat> maps;
    for (int k = 0; k < 20; ++k) {
        const double a = rng.uniform(-1, 1);
        Mat m(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = a * u[i] * w[j];
        maps.push_back(m);
    }
    TwoDPcaFilter f = fit_2d2pca_filter(maps, 1, 1);
    for (int i = 0; i < 3; ++i) {
        REQUIRE(std::abs(std::abs(f.q(i, 0)) - std::abs(u[i])) < 1e-8);
        REQUIRE(std::abs(std::abs(f.w(i, 0)) - std::abs(w[i])) < 1e-8);
    }
}

TEST_CASE("2d2pca full-rank reconstruction of the centered map") {
    Rng rng(8);
    std::vector<Mat> maps;
    for (int k = 0; k < 6; ++k) {
        Mat m(4, 4);
        for (double& v : m.data) v = rng.uniform(-1, 1);
        maps.push_back(m);
    }
    TwoDPcaFilter f = fit_2d2pca_filter(maps, 4, 4);
    TwoDPcaModel model;
    model.filters.push_back(f);
    for (const Mat& m : maps) {
        Mat core = apply_2d2pca(model, 0, m);  // Q^T V W
        Mat rec = matmul(f.q, matmul(core, transpose(f.w)));
        for (size_t i = 0; i < m.data.size(); ++i) REQUIRE(std::abs(rec.data[i] - m.data[i]) < 1e-8);
    }
}

TEST_CASE("apply_2d2pca identity projections and scalar case") {
    Rng rng(9);
    Mat p(3, 3);
    for (double& v : p.data) v = rng.uniform(-1, 1);
    TwoDPcaFilter f;
    f.w = Mat(3, 3);
    f.q = Mat(3, 3);
    for (int i = 0; i < 3; ++i) {
        f.w(i, i) = 1.0;
        f.q(i, i) = 1.0;
    }
    f.mean_map = Mat(3, 3);
    TwoDPcaModel model;
    model.filters.push_back(f);
    Mat out = apply_2d2pca(model, 0, p);
    for (size_t i = 0; i < p.data.size(); ++i) REQUIRE(out.data[i] == Catch::Approx(p.data[i]));
    REQUIRE_THROWS_AS(apply_2d2pca(model, 0, Mat(2, 2)), std::invalid_argument);
}

TEST_CASE("scalarize max and mean") {
    Tensor3 t(2, 2, 2);
    t(0, 0, 0) = 1; t(0, 1, 0) = 2; t(1, 0, 0) = 3; t(1, 1, 0) = 4;
    for (int i = 0; i < 4; ++i) t.data[4 + i] = 7.0;  // constant second channel
    Vec vmax = scalarize(t, ScalarizerKind::max);
    Vec vmean = scalarize(t, ScalarizerKind::mean);
    REQUIRE(vmax.size() == 2);
    REQUIRE(vmax[0] == 4.0);
    REQUIRE(vmean[0] == Catch::Approx(2.5));
    REQUIRE(vmax[1] == 7.0);
    REQUIRE(vmean[1] == Catch::Approx(7.0));
}

TEST_CASE("scalarize twod_pca equals direct projection") {
    Rng rng(10);
    std::vector<std::vector<Mat>> per_filter(1);
    for (int k = 0; k < 8; ++k) {
        Mat m(3, 3);
        for (double& v : m.data) v = rng.uniform(-1, 1);
        per_filter[0].push_back(m);
    }
    TwoDPcaModel model = fit_2d2pca(per_filter, 1, 1);
    Tensor3 t(3, 3, 1);
    for (double& v : t.data) v = rng.uniform(-1, 1);
    Vec v = scalarize(t, ScalarizerKind::twod_pca, &model);
    double expect = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            expect += model.filters[0].q(r, 0) * t(r, c, 0) * model.filters[0].w(c, 0);
    REQUIRE(v[0] == Catch::Approx(expect).margin(1e-12));
    REQUIRE_THROWS_AS(scalarize(t, ScalarizerKind::twod_pca, nullptr), std::invalid_argument);
}

TEST_CASE("refiner moment identities") {
    Rng rng(11);
    auto pts = random_cloud(50, 4, rng);
    RefinerModel scale = fit_refiner(pts, RefinerKind::scale);
    RefinerModel standard = fit_refiner(pts, RefinerKind::standard);
    RefinerModel norm = fit_refiner(pts, RefinerKind::norm);

    REQUIRE(refine(scale, scale.v_min)[0] == 0.0);
    REQUIRE(refine(scale, scale.v_max)[0] == 1.0);

    Vec mean(4, 0.0), var(4, 0.0);
    for (const Vec& p : pts) {
        Vec r = refine(standard, p);
        for (int i = 0; i < 4; ++i) mean[i] += r[i];
    }
    for (double& m : mean) m /= pts.size();
    for (const Vec& p : pts) {
        Vec r = refine(standard, p);
        for (int i = 0; i < 4; ++i) var[i] += (r[i] - mean[i]) * (r[i] - mean[i]);
    }
    for (int i = 0; i < 4; ++i) {
        REQUIRE(std::abs(mean[i]) < 1e-9);
        REQUIRE(std::abs(var[i] / pts.size() - 1.0) < 1e-9);
    }

    // s_norm = s_standard * sigma / range
    for (const Vec& p : pts) {
        Vec a = refine(norm, p);
        Vec b = refine(standard, p);
        for (int i = 0; i < 4; ++i) {
            const double range = norm.v_max[i] - norm.v_min[i];
            REQUIRE(a[i] == Catch::Approx(b[i] * standard.v_sigma[i] / range).margin(1e-12));
        }
    }
}

TEST_CASE("refiner zero-variance features map to zero") {
    std::vector<Vec> pts = {{1.0, 2.0}, {1.0, 3.0}, {1.0, 4.0}};
    for (RefinerKind k : {RefinerKind::scale, RefinerKind::standard, RefinerKind::norm}) {
        RefinerModel m = fit_refiner(pts, k);
        Vec r = refine(m, {1.0, 3.0});
        REQUIRE(r[0] == 0.0);
        REQUIRE(std::isfinite(r[1]));
    }
}
