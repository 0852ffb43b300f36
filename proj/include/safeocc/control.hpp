#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "augment.hpp"
#include "cnn.hpp"
#include "core.hpp"
#include "detector.hpp"
#include "envs.hpp"

namespace safeocc {

// Discrete PID with a first-order derivative filter and integral clamping.
struct PidController {
    double kp = 0.0, ki = 0.0, kd = 0.0;
    double dt = 0.02;
    double tau_f = 0.0;           // derivative filter time constant
    double integral_clamp = 1e6;  // |integral| bound

    double integral = 0.0;
    double prev_error = 0.0;
    double d_filtered = 0.0;
    bool primed = false;

    void reset() {
        integral = 0.0;
        prev_error = 0.0;
        d_filtered = 0.0;
        primed = false;
    }
};

inline double pid_step(PidController& c, double y_e) {
    c.integral = std::clamp(c.integral + y_e * c.dt, -c.integral_clamp, c.integral_clamp);
    const double raw_d = c.primed ? (y_e - c.prev_error) / c.dt : 0.0;
    const double beta = c.dt / (c.tau_f + c.dt);
    c.d_filtered += beta * (raw_d - c.d_filtered);
    c.prev_error = y_e;
    c.primed = true;
    return c.kp * y_e + c.ki * c.integral + c.kd * c.d_filtered;
}

// z = 1 iff sigmoid(u) >= 0.5, i.e. u >= 0 (tie maps to 1).
inline int binary_action(double u) { return u >= 0.0 ? 1 : 0; }

enum class RecoursePolicy { freeze_last_control, zero_control };

// Debounced, latching alarm over the novelty verdict stream.
struct SafetySystem {
    int debounce = 3;  // consecutive novel verdicts to alarm
    RecoursePolicy policy = RecoursePolicy::freeze_last_control;

    int consecutive = 0;
    bool alarmed = false;

    void reset() {
        consecutive = 0;
        alarmed = false;
    }
};

// Returns true when the recourse policy is in force.
inline bool safety_update(SafetySystem& ss, Verdict verdict) {
    if (!ss.alarmed) {
        if (verdict == Verdict::novel) {
            if (++ss.consecutive >= ss.debounce) ss.alarmed = true;
        } else {
            ss.consecutive = 0;
        }
    }
    return ss.alarmed;
}

struct LoopStep {
    int t;
    double y_true;
    double y_hat;
    double y_err;
    int z;
    double h_hat;
    double score;
    Verdict verdict;
    bool alarm;
};

struct LoopScenario {
    std::optional<DisturbanceKind> disturbance;
    int onset = 150;
    int horizon = 400;
    double setpoint = 0.0;  // degrees
};

// Default cart-pole gains fixed by a recorded tuning run on true-state
// feedback (see tests). Error convention: y_e = setpoint - y_hat, so a pole
// leaning right (positive angle) yields negative error and the negative gains
// push the cart right.
inline PidController default_cartpole_pid() {
    PidController c;
    c.kp = -1.0;
    c.ki = -0.02;
    c.kd = -0.35;
    c.dt = 0.02;
    c.tau_f = 0.04;
    c.integral_clamp = 50.0;
    return c;
}

// Closed cart-pole loop of render -> (disturb) -> CNN -> detector -> safety ->
// PID -> environment. Runs to the horizon or until the pole falls below the
// cart. Fully deterministic under `seed`.
inline std::vector<LoopStep> run_closed_loop(const CnnModel& sensor,
                                             const SafeOccDetector* detector, PidController pid,
                                             SafetySystem* safety, const LoopScenario& scenario,
                                             uint64_t seed, const RenderSpec& spec,
                                             const CartPoleParams& params = {}) {
    Rng rng(seed);
    CartPoleState state{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05),
                        rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)};
    pid.reset();
    if (safety) safety->reset();

    std::vector<LoopStep> records;
    int last_z = 0;
    for (int t = 0; t < scenario.horizon; ++t) {
        Tensor3 image = render_cartpole(state, spec, params);
        if (scenario.disturbance && t >= scenario.onset) {
            // the physical disturbance pattern persists once it appears
            DisturbanceSpec d;
            d.kind = *scenario.disturbance;
            d.seed = rng.derive(1000000 + scenario.onset).next_u64();
            image = apply_disturbance(image, d);
        }

        const ForwardPass fp = forward(sensor, image);
        const double y_hat = fp.output[0];

        NoveltySignal sig{Verdict::normal, 0.0, 0.0};
        if (detector) sig = novelty_from_pass(*detector, fp);

        bool recourse = false;
        if (safety) recourse = safety_update(*safety, sig.verdict);

        const double y_e = scenario.setpoint - y_hat;
        const double u = pid_step(pid, y_e);
        int z = binary_action(u);
        if (recourse)
            z = safety->policy == RecoursePolicy::freeze_last_control ? last_z : 0;

        records.push_back({t, cartpole_label_degrees(state), y_hat, y_e, z, sig.h_hat, sig.score,
                           sig.verdict, safety ? safety->alarmed : false});

        state = cartpole_step(state, z, params);
        last_z = z;
        if (state.fallen) break;
    }
    return records;
}

}  // namespace safeocc
