#pragma once

#include <cmath>
#include <vector>

#include "cnn.hpp"
#include "core.hpp"
#include "rng.hpp"

namespace safeocc {

// Wrap to (-pi, pi].
inline double wrap_angle(double theta) {
    double t = std::fmod(theta + M_PI, 2.0 * M_PI);
    if (t <= 0.0) t += 2.0 * M_PI;
    return t - M_PI;
}

// ---------------------------------------------------------------------------
// Pendulum swing-up (theta = 0 is upright)

struct PendulumState {
    double theta = 0.0;
    double theta_dot = 0.0;
};

struct PendulumParams {
    double g = 10.0;
    double m = 1.0;
    double l = 1.0;
    double dt = 0.05;
    double max_speed = 8.0;
    double max_torque = 2.0;
};

// Semi-implicit Euler of th'' = (3g / 2l) sin(th) + 3u / (m l^2).
inline PendulumState pendulum_step(const PendulumState& s, double torque,
                                   const PendulumParams& p = {}) {
    require(std::isfinite(s.theta) && std::isfinite(s.theta_dot), "pendulum_step: non-finite state");
    const double u = std::clamp(torque, -p.max_torque, p.max_torque);
    const double acc = 3.0 * p.g / (2.0 * p.l) * std::sin(s.theta) + 3.0 * u / (p.m * p.l * p.l);
    PendulumState out;
    out.theta_dot = std::clamp(s.theta_dot + acc * p.dt, -p.max_speed, p.max_speed);
    out.theta = wrap_angle(s.theta + out.theta_dot * p.dt);
    return out;
}

// ---------------------------------------------------------------------------
// Cart-pole (Barto 1983 formulation, Euler integration)

struct CartPoleState {
    double x = 0.0;
    double x_dot = 0.0;
    double theta = 0.0;  // from vertical
    double theta_dot = 0.0;
    bool fallen = false;  // |theta| exceeded pi
};

struct CartPoleParams {
    double gravity = 9.8;
    double mass_cart = 1.0;
    double mass_pole = 0.1;
    double half_length = 0.5;
    double force_mag = 10.0;
    double dt = 0.02;
    double x_limit = 2.4;
    double theta_limit = 12.0 * M_PI / 180.0;  // dataset termination
};

inline CartPoleState cartpole_step(const CartPoleState& s, int action,
                                   const CartPoleParams& p = {}) {
    require(std::isfinite(s.x) && std::isfinite(s.x_dot) && std::isfinite(s.theta) &&
                std::isfinite(s.theta_dot),
            "cartpole_step: non-finite state");
    const double force = action == 1 ? p.force_mag : -p.force_mag;
    const double total_mass = p.mass_cart + p.mass_pole;
    const double pole_ml = p.mass_pole * p.half_length;
    const double cos_t = std::cos(s.theta);
    const double sin_t = std::sin(s.theta);
    const double temp = (force + pole_ml * s.theta_dot * s.theta_dot * sin_t) / total_mass;
    const double theta_acc = (p.gravity * sin_t - cos_t * temp) /
                             (p.half_length * (4.0 / 3.0 - p.mass_pole * cos_t * cos_t / total_mass));
    const double x_acc = temp - pole_ml * theta_acc * cos_t / total_mass;

    CartPoleState out;
    out.x = s.x + p.dt * s.x_dot;
    out.x_dot = s.x_dot + p.dt * x_acc;
    out.theta = s.theta + p.dt * s.theta_dot;
    out.theta_dot = s.theta_dot + p.dt * theta_acc;
    out.fallen = s.fallen || std::abs(out.theta) > M_PI;
    return out;
}

// ---------------------------------------------------------------------------
// Rendering

struct RenderSpec {
    int size = 64;
    int supersample = 2;
    double rod_length_frac = 0.38;   // pendulum rod, fraction of image size
    double rod_width_frac = 0.045;
    double axle_radius_frac = 0.035;
    double cart_width_frac = 0.16;   // cart-pole geometry
    double cart_height_frac = 0.08;
    double track_row_frac = 0.72;
    double pole_length_frac = 0.30;
    double pole_width_frac = 0.03;
    double ink = 0.15;  // dark foreground value
};

namespace detail {

inline double dist_point_segment(double px, double py, double ax, double ay, double bx, double by) {
    const double vx = bx - ax, vy = by - ay;
    const double len2 = vx * vx + vy * vy;
    double t = len2 > 0.0 ? ((px - ax) * vx + (py - ay) * vy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double dx = px - (ax + t * vx), dy = py - (ay + t * vy);
    return std::sqrt(dx * dx + dy * dy);
}

// Supersampled coverage rasterization: sample(x, y) returns the scene value
// at a continuous point; the pixel takes the mean over the sub-grid.
template <typename SceneFn>
Tensor3 rasterize(const RenderSpec& spec, SceneFn&& scene) {
    const int n = spec.size;
    const int ss = std::max(1, spec.supersample);
    Tensor3 img(n, n, 1);
    const double inv = 1.0 / (ss * ss);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) {
            double acc = 0.0;
            for (int sr = 0; sr < ss; ++sr)
                for (int sc = 0; sc < ss; ++sc)
                    acc += scene(c + (sc + 0.5) / ss, r + (sr + 0.5) / ss);
            img(r, c, 0) = acc * inv;
        }
    }
    return img;
}

}  // namespace detail

// White background, dark rod from the image center at angle theta, dark axle
// disc. The label is computed from the state, never from pixels.
inline Tensor3 render_pendulum(const PendulumState& s, const RenderSpec& spec) {
    const double n = spec.size;
    const double cx = n / 2.0, cy = n / 2.0;
    const double len = spec.rod_length_frac * n;
    const double half_w = spec.rod_width_frac * n / 2.0;
    const double axle_r = spec.axle_radius_frac * n;
    const double tipx = cx + len * std::sin(s.theta);
    const double tipy = cy - len * std::cos(s.theta);
    return detail::rasterize(spec, [&](double x, double y) {
        const double d_rod = detail::dist_point_segment(x, y, cx, cy, tipx, tipy);
        const double dx = x - cx, dy = y - cy;
        const double d_axle = std::sqrt(dx * dx + dy * dy);
        return (d_rod <= half_w || d_axle <= axle_r) ? spec.ink : 1.0;
    });
}

inline Vec pendulum_label(const PendulumState& s) {
    return {std::sin(s.theta), std::cos(s.theta)};
}

// Track line, cart box, pole from the cart top at angle theta. x maps
// linearly from [-x_limit, x_limit] onto the horizontal pixel span.
inline Tensor3 render_cartpole(const CartPoleState& s, const RenderSpec& spec,
                               const CartPoleParams& p = {}) {
    const double n = spec.size;
    const double cart_w = spec.cart_width_frac * n;
    const double cart_h = spec.cart_height_frac * n;
    const double track_y = spec.track_row_frac * n;
    const double pole_len = spec.pole_length_frac * n;
    const double pole_hw = spec.pole_width_frac * n / 2.0;
    const double margin = cart_w / 2.0;
    const double cart_x = margin + (s.x + p.x_limit) / (2.0 * p.x_limit) * (n - 2.0 * margin);
    const double cart_top = track_y - cart_h;
    const double tipx = cart_x + pole_len * std::sin(s.theta);
    const double tipy = cart_top - pole_len * std::cos(s.theta);
    return detail::rasterize(spec, [&](double x, double y) {
        if (std::abs(y - track_y) <= 1.0) return spec.ink;  // track line
        if (std::abs(x - cart_x) <= cart_w / 2.0 && y >= cart_top && y <= track_y)
            return spec.ink;
        if (detail::dist_point_segment(x, y, cart_x, cart_top, tipx, tipy) <= pole_hw)
            return spec.ink;
        return 1.0;
    });
}

inline double cartpole_label_degrees(const CartPoleState& s) { return s.theta * 180.0 / M_PI; }

// ---------------------------------------------------------------------------
// Dataset generation under uniform-random control

struct EpisodeDataset {
    Dataset data;
    std::vector<int> episode_starts;  // frame index where each episode begins
};

inline EpisodeDataset generate_pendulum_dataset(int n_episodes, uint64_t seed,
                                                const RenderSpec& spec, int horizon = 40) {
    require(n_episodes >= 1, "generate_pendulum_dataset: need at least one episode");
    EpisodeDataset out;
    Rng master(seed);
    PendulumParams params;
    for (int ep = 0; ep < n_episodes; ++ep) {
        Rng rng = master.derive(ep);
        out.episode_starts.push_back(static_cast<int>(out.data.images.size()));
        PendulumState s{rng.uniform(-M_PI, M_PI), rng.uniform(-1.0, 1.0)};
        for (int t = 0; t < horizon; ++t) {
            out.data.images.push_back(render_pendulum(s, spec));
            out.data.labels.push_back(pendulum_label(s));
            s = pendulum_step(s, rng.uniform(-params.max_torque, params.max_torque), params);
        }
    }
    return out;
}

inline EpisodeDataset generate_cartpole_dataset(int n_episodes, uint64_t seed,
                                                const RenderSpec& spec, int max_steps = 200) {
    require(n_episodes >= 1, "generate_cartpole_dataset: need at least one episode");
    EpisodeDataset out;
    Rng master(seed);
    CartPoleParams params;
    for (int ep = 0; ep < n_episodes; ++ep) {
        Rng rng = master.derive(ep);
        out.episode_starts.push_back(static_cast<int>(out.data.images.size()));
        // spread the starts across the whole operating envelope so the frames
        // cover off-center carts, not just falls from the middle of the track
        CartPoleState s{rng.uniform(-2.0, 2.0), rng.uniform(-1.0, 1.0),
                        rng.uniform(-0.2, 0.2), rng.uniform(-1.0, 1.0)};
        for (int t = 0; t < max_steps; ++t) {
            out.data.images.push_back(render_cartpole(s, spec, params));
            out.data.labels.push_back({cartpole_label_degrees(s)});
            s = cartpole_step(s, static_cast<int>(rng.below(2)), params);
            if (std::abs(s.theta) > params.theta_limit || std::abs(s.x) > params.x_limit) break;
        }
    }
    return out;
}

}  // namespace safeocc
