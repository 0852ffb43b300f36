#include <catch2/catch_amalgamated.hpp>

#include "safeocc/ocsvm.hpp"
#include "safeocc/rng.hpp"

using namespace safeocc;

namespace {

std::vector<Vec> gaussian_blob(int n, int dim, double center, Rng& rng) {
    std::vector<Vec> out;
    for (int i = 0; i < n; ++i) {
        Vec v(dim);
        for (double& x : v) x = center + rng.normal();
        out.push_back(v);
    }
    return out;
}

std::vector<double> gram_matrix(const std::vector<Vec>& xs, double gamma) {
    const int n = static_cast<int>(xs.size());
    std::vector<double> k(static_cast<size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) k[static_cast<size_t>(i) * n + j] = gaussian_kernel(xs[i], xs[j], gamma);
    return k;
}

double dual_objective(const std::vector<double>& k, const Vec& alpha) {
    const int n = static_cast<int>(alpha.size());
    double obj = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) obj += alpha[i] * k[static_cast<size_t>(i) * n + j] * alpha[j];
    return 0.5 * obj;
}

// Euclidean projection onto {0 <= a <= c, sum a = 1} by bisection on the
// simplex multiplier.
Vec project_capped_simplex(const Vec& v, double c) {
    const int n = static_cast<int>(v.size());
    double lo = -2.0, hi = 2.0;
    for (double x : v) {
        lo = std::min(lo, x - c - 1.0);
        hi = std::max(hi, x + 1.0);
    }
    for (int it = 0; it < 200; ++it) {
        const double tau = 0.5 * (lo + hi);
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += std::clamp(v[i] - tau, 0.0, c);
        (s > 1.0 ? lo : hi) = tau;
    }
    Vec out(n);
    const double tau = 0.5 * (lo + hi);
    for (int i = 0; i < n; ++i) out[i] = std::clamp(v[i] - tau, 0.0, c);
    return out;
}

// Independent projected-gradient solver for the same dual. Step size comes
// from a power-iteration estimate of the largest kernel eigenvalue.
Vec projected_gradient_dual(const std::vector<double>& k, int n, double nu) {
    const double c = 1.0 / (nu * n);
    Vec z(n, 1.0);
    double lam = 1.0;
    for (int it = 0; it < 100; ++it) {
        Vec w(n, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) w[i] += k[static_cast<size_t>(i) * n + j] * z[j];
        double norm = 0.0;
        for (double x : w) norm += x * x;
        lam = std::sqrt(norm);
        for (int i = 0; i < n; ++i) z[i] = w[i] / lam;
    }
    Vec alpha = project_capped_simplex(Vec(n, 1.0 / n), c);
    const double step = 1.0 / lam;
    for (int it = 0; it < 50000; ++it) {
        Vec trial(n);
        for (int i = 0; i < n; ++i) {
            double g = 0.0;
            for (int j = 0; j < n; ++j) g += k[static_cast<size_t>(i) * n + j] * alpha[j];
            trial[i] = alpha[i] - step * g;
        }
        alpha = project_capped_simplex(trial, c);
    }
    return alpha;
}

// Reassemble the full alpha vector from a fitted model.
Vec full_alpha(const OcSvmModel& model, const std::vector<Vec>& samples) {
    Vec alpha(samples.size(), 0.0);
    for (size_t k = 0; k < model.support_vectors.size(); ++k) {
        for (size_t i = 0; i < samples.size(); ++i) {
            if (alpha[i] == 0.0 && samples[i] == model.support_vectors[k]) {
                alpha[i] = model.alphas[k];
                break;
            }
        }
    }
    return alpha;
}

}  // namespace

TEST_CASE("gaussian kernel identities") {
    Vec a = {1.0, 2.0}, b = {2.0, 0.0};
    REQUIRE(gaussian_kernel(a, a, 0.7) == 1.0);
    REQUIRE(gaussian_kernel(a, b, 0.5) == Catch::Approx(std::exp(-0.5 * 5.0)));
    REQUIRE(gaussian_kernel(a, b, 0.5) == gaussian_kernel(b, a, 0.5));
    REQUIRE(gaussian_kernel(a, b, 0.5) <= 1.0);
    REQUIRE_THROWS_AS(gaussian_kernel(a, Vec{1.0}, 0.5), std::invalid_argument);
    REQUIRE_THROWS_AS(gaussian_kernel(a, b, 0.0), std::invalid_argument);
}

TEST_CASE("two symmetric points split the mass evenly") {
    std::vector<Vec> xs = {{0.0}, {1.0}};
    OcSvmModel m = fit_ocsvm(xs, 0.5, 1.0);
    REQUIRE(m.support_vectors.size() == 2);
    REQUIRE(m.alphas[0] == Catch::Approx(0.5).margin(1e-6));
    REQUIRE(m.alphas[1] == Catch::Approx(0.5).margin(1e-6));
    REQUIRE(decision(m, xs[0]) == Catch::Approx(decision(m, xs[1])).margin(1e-9));
}

TEST_CASE("dual feasibility on random data") {
    Rng rng(13);
    for (double nu : {0.05, 0.3}) {
        auto xs = gaussian_blob(40, 3, 0.0, rng);
        OcSvmModel m = fit_ocsvm(xs, nu, 1.0 / 3.0);
        const double c = 1.0 / (nu * xs.size());
        double total = 0.0;
        for (double a : m.alphas) {
            REQUIRE(a > 0.0);
            REQUIRE(a <= c + 1e-9);
            total += a;
        }
        REQUIRE(total == Catch::Approx(1.0).margin(1e-9));
    }
}

TEST_CASE("smo matches projected-gradient oracle") {
    Rng rng(21);
    auto xs = gaussian_blob(30, 2, 0.0, rng);
    const double nu = 0.2, gamma = 0.5;
    auto k = gram_matrix(xs, gamma);
    OcSvmModel m = fit_ocsvm(xs, nu, gamma);
    Vec alpha_smo = full_alpha(m, xs);
    Vec alpha_pg = projected_gradient_dual(k, 30, nu);
    const double obj_smo = dual_objective(k, alpha_smo);
    const double obj_pg = dual_objective(k, alpha_pg);
    REQUIRE(std::abs(obj_smo - obj_pg) < 1e-4);
}

TEST_CASE("nu bounds the training rejection rate") {
    Rng rng(34);
    for (double nu : {0.05, 0.1, 0.2}) {
        auto xs = gaussian_blob(200, 2, 0.0, rng);
        OcSvmModel m = fit_ocsvm(xs, nu, 0.5);
        int rejected = 0;
        for (const Vec& x : xs)
            if (classify(m, x).verdict == Verdict::novel) ++rejected;
        REQUIRE(double(rejected) / xs.size() <= nu + 0.05);
    }
}

TEST_CASE("far outliers classify as novel") {
    Rng rng(55);
    auto xs = gaussian_blob(100, 2, 0.0, rng);
    OcSvmModel m = fit_ocsvm(xs, 0.1, 0.5);
    Classification far = classify(m, {50.0, 50.0});
    REQUIRE(far.verdict == Verdict::novel);
    REQUIRE(far.score > 0.0);
    REQUIRE(far.h_hat == Catch::Approx(0.0).margin(1e-12));

    Classification center = classify(m, {0.0, 0.0});
    REQUIRE(center.verdict == Verdict::normal);
    REQUIRE(center.score < 0.0);
}

TEST_CASE("tie classifies as normal") {
    OcSvmModel m;
    m.support_vectors = {{0.0}};
    m.alphas = {1.0};
    m.gamma = 1.0;
    m.rho = 1.0;  // decision at the support vector is exactly rho
    Classification c = classify(m, {0.0});
    REQUIRE(c.h_hat == 1.0);
    REQUIRE(c.score == 0.0);
    REQUIRE(c.verdict == Verdict::normal);
    // epsilon widens the normal region
    REQUIRE(classify(m, {1.0}, 0.0).verdict == Verdict::novel);
    REQUIRE(classify(m, {1.0}, 1.0).verdict == Verdict::normal);
}

TEST_CASE("decision is a kernel expansion") {
    OcSvmModel m;
    m.support_vectors = {{0.0}, {2.0}};
    m.alphas = {0.3, 0.7};
    m.gamma = 0.25;
    const double expect = 0.3 * std::exp(-0.25) + 0.7 * std::exp(-0.25);
    REQUIRE(decision(m, {1.0}) == Catch::Approx(expect));
}

TEST_CASE("fit rejects bad arguments") {
    std::vector<Vec> xs = {{0.0}, {1.0}};
    REQUIRE_THROWS_AS(fit_ocsvm({{0.0}}, 0.5, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_ocsvm(xs, 0.0, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_ocsvm(xs, 1.5, 1.0), std::invalid_argument);
    REQUIRE_THROWS_AS(fit_ocsvm(xs, 0.5, -1.0), std::invalid_argument);
}

TEST_CASE("fit is deterministic") {
    Rng rng(77);
    auto xs = gaussian_blob(50, 2, 0.0, rng);
    OcSvmModel a = fit_ocsvm(xs, 0.1, 0.5);
    OcSvmModel b = fit_ocsvm(xs, 0.1, 0.5);
    REQUIRE(a.rho == b.rho);
    REQUIRE(a.alphas == b.alphas);
    REQUIRE(a.support_vectors.size() == b.support_vectors.size());
}
