#pragma once
#include <cstdio>
#include <string>
#include <vector>

#include "exosim/nn.hpp"
#include "exosim/rng.hpp"
#include "exosim/shapes.hpp"
#include "exosim/statics.hpp"

// Independent oracles for the kinematics, statics and learning stacks. Each
// check recomputes its reference through a different route than the
// implementation it validates (power series vs closed form, dense Runge-Kutta
// vs Magnus steps, finite differences vs backpropagation, beam theory vs the
// coupled solver).

namespace exosim::verify {

struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0; // reported measurement (error, deviation, ...)
    double bound = 0.0;
    std::string detail;
};

// --- Lie group -------------------------------------------------------------

// truncated matrix power series of exp(hat(xi))
inline Mat4 exp_series(const Twist& xi, int terms = 30) {
    const Mat4 A = hat(xi);
    Mat4 acc = Mat4::Identity();
    Mat4 term = Mat4::Identity();
    for (int k = 1; k <= terms; ++k) {
        term = term * A / double(k);
        acc += term;
    }
    return acc;
}

inline CheckResult check_exp_series(uint64_t seed = 2024, int trials = 1000) {
    Rng rng(seed);
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
        Vec3 w(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        if (w.norm() > 0) w *= rng.uniform01() * M_PI / w.norm(); // ||w|| <= pi
        const Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
        const Twist xi(w, v);
        const Mat4 err = exp_map(xi).matrix() - exp_series(xi);
        worst = std::max(worst, err.cwiseAbs().maxCoeff());
    }
    return {"exp map vs 30-term power series", worst < 1e-12, worst, 1e-12, ""};
}

inline CheckResult check_adjoint_composition(uint64_t seed = 77, int trials = 1000) {
    Rng rng(seed);
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
        auto rand_g = [&]() {
            Vec3 w(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            Vec3 v(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
            return exp_map(Twist(w, v));
        };
        const Transform g1 = rand_g(), g2 = rand_g();
        const Mat6 lhs = adjoint_Ad(g1 * g2);
        const Mat6 rhs = adjoint_Ad(g1) * adjoint_Ad(g2);
        worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
    }
    return {"adjoint composition Ad(g1 g2) = Ad(g1) Ad(g2)", worst < 1e-12, worst, 1e-12, ""};
}

// --- rod kinematics ----------------------------------------------------------

// dense fixed-step RK4 integration of g' = g hat(xi)
inline Transform dense_fk(const RodModel& m, const VectorXd& q, double X, int steps) {
    Mat4 g = m.base_pose.matrix();
    const double h = X / steps;
    auto f = [&](double x, const Mat4& gg) { return Mat4(gg * hat(strain_at(m, q, x))); };
    for (int i = 0; i < steps; ++i) {
        const double x0 = i * h;
        const Mat4 k1 = f(x0, g);
        const Mat4 k2 = f(x0 + h / 2, Mat4(g + h / 2 * k1));
        const Mat4 k3 = f(x0 + h / 2, Mat4(g + h / 2 * k2));
        const Mat4 k4 = f(x0 + h, Mat4(g + h * k3));
        g += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return {g.topLeftCorner<3, 3>(), g.topRightCorner<3, 1>()};
}

inline RodModel random_shape_model(Rng& rng) {
    ShapeSpec spec;
    spec.family = ShapeFamily::R01;
    spec.params = {rng.uniform(0.004, 0.01), rng.uniform(0.004, 0.01)};
    spec.length = rng.uniform(0.07, 0.11);
    return make_rod(spec);
}

inline VectorXd random_coordinates(Rng& rng, const RodModel& m, double bend_scale = 12.0,
                                   double stretch_scale = 0.25) {
    VectorXd q(m.dof());
    const int nn = m.basis.node_count();
    for (int i = 0; i < nn; ++i) q[i] = rng.uniform(-bend_scale, bend_scale);
    for (int i = nn; i < m.dof(); ++i) q[i] = rng.uniform(-stretch_scale, stretch_scale);
    return q;
}

inline CheckResult check_fk_dense(uint64_t seed = 31, int trials = 100) {
    Rng rng(seed);
    double worst = 0;
    for (int t = 0; t < trials; ++t) {
        const RodModel m = random_shape_model(rng);
        const VectorXd q = random_coordinates(rng, m);
        const Transform a = tip_pose(m, q);
        const Transform b = dense_fk(m, q, m.length, 10000);
        worst = std::max(worst, (a.r - b.r).norm());
    }
    return {"forward kinematics vs dense RK4 (1e4 steps)", worst < 1e-6, worst, 1e-6, "m"};
}

inline CheckResult check_jacobian_fd(uint64_t seed = 47, int trials = 100) {
    Rng rng(seed);
    double worst = 0;
    const double h = 3e-6;
    for (int t = 0; t < trials; ++t) {
        const RodModel m = random_shape_model(rng);
        const VectorXd q = random_coordinates(rng, m, 8.0, 0.2);
        const double X = rng.uniform(0.15, 1.0) * m.length;
        const Mat6xN J = jacobian(m, q, X);
        Mat6xN Jfd(6, m.dof());
        const Transform g0 = forward_kinematics(m, q, {X})[0];
        const Mat4 g0inv = g0.inverse().matrix();
        for (int j = 0; j < m.dof(); ++j) {
            VectorXd qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const Mat4 gp = forward_kinematics(m, qp, {X})[0].matrix();
            const Mat4 gm = forward_kinematics(m, qm, {X})[0].matrix();
            const Mat4 D = g0inv * (gp - gm) / (2 * h);
            Vec6 col;
            col << D(2, 1), D(0, 2), D(1, 0), D(0, 3), D(1, 3), D(2, 3);
            Jfd.col(j) = col;
        }
        const double rel = (J - Jfd).norm() / std::max(J.norm(), 1e-12);
        worst = std::max(worst, rel);
    }
    return {"geometric Jacobian vs central differences", worst < 1e-5, worst, 1e-5, "relative"};
}

// --- beam statics ------------------------------------------------------------

// Euler-Bernoulli tip deflection for a clamped tapered rod under a tip load:
// w = int_0^L P (L-X)^2 / (E I(X)) dX  (equals P L^3 / 3EI for constant I)
inline double beam_tip_deflection(const RodModel& m, double P, int n = 20000) {
    double w = 0;
    const double h = m.length / n;
    for (int i = 0; i < n; ++i) {
        const double X = (i + 0.5) * h;
        const double S = m.radius_at(X);
        const double I = M_PI * S * S * S * S / 4.0;
        w += P * (m.length - X) * (m.length - X) / (m.youngs_modulus * I) * h;
    }
    return w;
}

inline CheckResult check_beam_benchmark(bool tapered) {
    RodModel rod; // tapered: baseline design profile; else constant section
    if (!tapered) rod.radius = [](double) { return 0.0058; };
    CoupledSystem sys = make_system(rod);
    sys.finger_enabled = false;
    const double EI0 =
        rod.youngs_modulus * M_PI * std::pow(rod.radius_at(0.0), 4) / 4.0;
    const double P = 3.0 * EI0 * (0.004) / std::pow(rod.length, 3); // few-mm deflection
    sys.rod_tip_force = Vec3(0, 0, -P);
    const SystemState st = solve_equilibrium(sys, 0.0, zero_state(sys));
    const double defl = sys.rod.base_pose.r.z() - tip_pose(sys.rod, st.q).r.z();
    const double ref = tapered ? beam_tip_deflection(rod, P)
                               : P * std::pow(rod.length, 3) / (3.0 * EI0);
    const double rel = std::abs(defl - ref) / ref;
    CheckResult r;
    r.name = tapered ? "beam benchmark (tapered section, quadrature reference)"
                     : "beam benchmark (constant section, P L^3/3EI)";
    r.pass = st.converged && rel < 0.02;
    r.value = rel;
    r.bound = 0.02;
    char buf[128];
    std::snprintf(buf, sizeof buf, "deflection %.4g m vs %.4g m", defl, ref);
    r.detail = buf;
    return r;
}

// --- network gradients ---------------------------------------------------------

inline NetworkSpec tiny_spec() {
    NetworkSpec s;
    s.input_size = 8;
    s.input_channels = 1;
    s.conv_filters = {2, 3};
    s.dense_units = {4};
    s.outputs = 2;
    return s;
}

inline CheckResult check_gradients(uint64_t seed = 99) {
    const NetworkSpec ts = tiny_spec();
    Network<double> net(ts);
    Rng rng(seed);
    net.init(rng);
    const int n = 3;
    Batch<double> b;
    b.resize(n, 1, ts.input_size, ts.input_size);
    for (auto& v : b.v) v = rng.uniform01();
    nn_detail::Mat<double> lab(ts.outputs, n);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < ts.outputs; ++k) lab(k, i) = rng.uniform01();

    const auto [loss, grads] = net.loss_and_gradients(b, lab);
    auto loss_at = [&](std::vector<double> p) {
        Network<double> tmp(ts);
        tmp.params = std::move(p);
        tmp.stats = net.stats;
        Workspace<double> ws;
        const auto& out = tmp.forward(b, true, ws);
        double L = 0;
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < ts.outputs; ++k)
                L += std::abs(out(k, i) - lab(k, i)) / (n * ts.outputs);
        return L;
    };
    const double h = 1e-4;
    double worst = 0;
    for (int j = 0; j < net.param_count(); ++j) {
        auto p1 = net.params, p2 = net.params;
        p1[size_t(j)] += h;
        p2[size_t(j)] -= h;
        const double fd = (loss_at(p1) - loss_at(p2)) / (2 * h);
        const double g = grads[size_t(j)];
        const double denom = std::max({std::abs(fd), std::abs(g), 1e-8});
        const double rel = std::abs(fd - g) / denom;
        if (rel > worst && (std::abs(fd) > 1e-12 || std::abs(g) > 1e-12)) worst = rel;
    }
    return {"backpropagation vs central finite differences", worst < 1e-4, worst, 1e-4,
            "relative, tiny network, every layer type"};
}

// --- suite runner ----------------------------------------------------------

inline std::vector<CheckResult> run_all() {
    std::vector<CheckResult> checks;
    checks.push_back(check_exp_series());
    checks.push_back(check_adjoint_composition());
    checks.push_back(check_fk_dense());
    checks.push_back(check_jacobian_fd());
    checks.push_back(check_beam_benchmark(false));
    checks.push_back(check_beam_benchmark(true));
    checks.push_back(check_gradients());
    return checks;
}

inline bool print_results(const std::vector<CheckResult>& checks) {
    bool all = true;
    for (const auto& c : checks) {
        std::printf("[%s] %s: %.3e (bound %.3e)%s%s\n", c.pass ? "PASS" : "FAIL",
                    c.name.c_str(), c.value, c.bound, c.detail.empty() ? "" : " - ",
                    c.detail.c_str());
        all = all && c.pass;
    }
    return all;
}

} // namespace exosim::verify
