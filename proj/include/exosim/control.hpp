#pragma once
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "exosim/render.hpp"
#include "exosim/statics.hpp"
#include "exosim/train.hpp"

// Incremental proportional force control with the estimator (or the contact
// model itself) closing the loop: u_k = u_{k-1} + K_P * (F_t - F_meas).

namespace exosim {

// net force on the finger: plain sum of the seven sphere force magnitudes
inline double f_net(const std::array<double, 7>& forces) {
    double s = 0;
    for (double f : forces) s += f;
    return s;
}

inline double control_step(double u_prev, double F_target, double F_meas, double K_P) {
    return u_prev + K_P * (F_target - F_meas);
}

enum class FeedbackSource { Estimator, Oracle };

struct ControlConfig {
    double K_P = 5.0;
    std::function<double(int)> target; // F_t per step index
    int steps = 50;
    double period = 0.2; // s, time axis only
    FeedbackSource feedback = FeedbackSource::Oracle;
    bool clamp_u = false;
    double u_min = 0.0, u_max = 0.0;
    int jobs = 1;
};

struct ControlStep {
    int k = 0;
    double t = 0.0;
    double u = 0.0;
    double f_net_estimator = 0.0; // NaN in oracle-only runs
    double f_net_oracle = 0.0;
    double error = 0.0;
    bool converged = true;
    bool stuck = false;
};

struct ControlTrace {
    std::vector<ControlStep> steps;
    bool stuck = false; // an equilibrium solve failed and u was frozen

    // first step index after which |e| stayed below `tol` for `hold` steps
    int settle_step(double tol, int hold) const {
        int run = 0;
        for (size_t i = 0; i < steps.size(); ++i) {
            run = (std::abs(steps[i].error) < tol) ? run + 1 : 0;
            if (run >= hold) return int(i) - hold + 1;
        }
        return -1;
    }
};

// baseline experiment plant: linear taper 1 cm -> 0.5 cm over 9.5 cm
inline RodModel control_rod_model() {
    RodModel rod;
    rod.length = 0.095;
    rod.radius = [](double xl) { return 0.01 + xl * (0.005 - 0.01); };
    return rod;
}

// Per step k: the error uses the measurement from the previous pose,
// u_k = u_{k-1} + K_P e_k is applied, the plant settles, and the new pose is
// measured. The recorded columns therefore satisfy u_k - u_{k-1} = K_P e_k
// exactly while the plant is converging; an equilibrium failure freezes u and
// flags the remaining steps.
inline ControlTrace run_experiment(const ControlConfig& cfg, const CoupledSystem& sys,
                                   Network<float>* params = nullptr,
                                   const RenderOptions& ropts = {}) {
    if (cfg.feedback == FeedbackSource::Estimator && !params)
        throw std::invalid_argument("estimator feedback needs trained parameters");
    ControlTrace trace;
    SystemState state = zero_state(sys);
    double u = 0.0;
    bool frozen = false;
    double f_meas = 0.0;

    auto measure = [&](ControlStep& step) {
        std::array<double, 7> oracle_forces{};
        for (int i = 1; i < 8; ++i) oracle_forces[size_t(i - 1)] = state.contact.magnitude(i);
        step.f_net_oracle = f_net(oracle_forces);
        if (cfg.feedback == FeedbackSource::Estimator) {
            const Image img = render_scene(sys.rod, state.q, sys.finger, state.theta, ropts);
            step.f_net_estimator = f_net(predict_forces(*params, img, cfg.jobs));
            f_meas = step.f_net_estimator;
        } else {
            step.f_net_estimator = std::numeric_limits<double>::quiet_NaN();
            f_meas = step.f_net_oracle;
        }
    };

    for (int k = 0; k < cfg.steps; ++k) {
        ControlStep step;
        step.k = k;
        step.t = k * cfg.period;
        if (k > 0) {
            step.error = cfg.target(k) - f_meas;
            if (!frozen) {
                double u_next = control_step(u, cfg.target(k), f_meas, cfg.K_P);
                if (cfg.clamp_u) u_next = std::min(std::max(u_next, cfg.u_min), cfg.u_max);
                u = u_next;
            }
        }
        step.u = u;
        if (!frozen) {
            SystemState next = solve_equilibrium(sys, u, state);
            if (next.converged) {
                state = next;
            } else {
                frozen = true; // keep the last good pose, freeze the actuation
                trace.stuck = true;
            }
        }
        step.converged = !frozen;
        step.stuck = frozen;
        measure(step);
        if (k == 0) step.error = cfg.target(0) - f_meas;
        trace.steps.push_back(step);
    }
    return trace;
}

inline void write_trace_csv(const ControlTrace& trace, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "step,t,u,f_net_estimator,f_net_oracle,error,converged\n";
    char buf[200];
    for (const auto& s : trace.steps) {
        std::snprintf(buf, sizeof buf, "%d,%.3f,%.9g,%.9g,%.9g,%.9g,%d\n", s.k, s.t, s.u,
                      s.f_net_estimator, s.f_net_oracle, s.error, int(s.converged));
        f << buf;
    }
}

// steady-state protocol: constant target
inline ControlConfig steady_state_config(double F_t, double K_P = 5.0, int steps = 50) {
    ControlConfig cfg;
    cfg.K_P = K_P;
    cfg.steps = steps;
    cfg.target = [F_t](int) { return F_t; };
    return cfg;
}

// step protocol: F_t for the first half, zero after
inline ControlConfig step_response_config(double F_t, double K_P, int steps_per_phase = 50) {
    ControlConfig cfg;
    cfg.K_P = K_P;
    cfg.steps = 2 * steps_per_phase;
    cfg.target = [F_t, steps_per_phase](int k) { return k < steps_per_phase ? F_t : 0.0; };
    return cfg;
}

} // namespace exosim
