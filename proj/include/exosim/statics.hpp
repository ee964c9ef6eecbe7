#pragma once
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "exosim/contact.hpp"
#include "exosim/finger.hpp"
#include "exosim/rod.hpp"

// Coupled static equilibrium of the 22-DOF rod and the 3-DOF finger:
//   rows 0..21 : K q - B(q) u - F_rod(q, theta)
//   rows 22..24: K_joint theta - tau_contact(q, theta) - tau_limit(theta)
// solved by damped Newton with a forward-difference Jacobian, continued
// along an actuation schedule with warm starts.

namespace exosim {

struct CoupledSystem {
    RodModel rod;
    FingerModel finger;
    double contact_stiffness = 2000.0; // N/m
    bool finger_enabled = true;
    Vec3 rod_tip_force = Vec3::Zero(); // optional external world-frame tip load
    MatrixXd K;                        // cached rod stiffness

    int dof() const { return rod.dof() + 3; }
};

// Clamp the rod base above the finger base so the initial surface gap is zero.
inline Transform mounting_pose(const RodModel& rod, const FingerModel& finger) {
    return Transform(Mat3::Identity(),
                     finger.base_pose.r + Vec3(0, 0, rod.radius(0.0) + finger.radius_base[0]));
}

inline CoupledSystem make_system(RodModel rod, FingerModel finger = FingerModel{}) {
    CoupledSystem sys;
    rod.base_pose = mounting_pose(rod, finger);
    sys.rod = std::move(rod);
    sys.finger = finger;
    sys.K = stiffness_matrix(sys.rod);
    return sys;
}

struct SystemState {
    VectorXd q;        // 22 rod coordinates
    Vec3 theta;        // finger joint angles
    double u = 0.0;    // actuation force
    ContactResult contact;
    double residual_norm = 0.0; // inf-norm at return
    bool converged = false;
    int iterations = 0;
    std::string note;

    double f_net() const {
        double s = 0.0;
        for (int i = 1; i < 8; ++i) s += contact.magnitude(i);
        return s;
    }
};

inline SystemState zero_state(const CoupledSystem& sys) {
    SystemState st;
    st.q = VectorXd::Zero(sys.rod.dof());
    st.theta = Vec3::Zero();
    st.contact.rod_force.assign(size_t(sys.rod.station_count), Vec3::Zero());
    st.contact.overlap.setZero(sys.rod.station_count, 8);
    return st;
}

// reusable buffers for the solver's inner loops
struct StaticsScratch {
    RodKinematics rk;
    VectorXd B;
};

inline VectorXd residual(const CoupledSystem& sys, const VectorXd& q, const Vec3& theta,
                         double u, ContactResult* contact_out = nullptr,
                         const ContactSet* fixed_set = nullptr,
                         StaticsScratch* scratch = nullptr) {
    const int n = sys.rod.dof();
    StaticsScratch local;
    StaticsScratch& ws = scratch ? *scratch : local;
    rod_kinematics_into(sys.rod, q, true, ws.rk);
    const RodKinematics& rk = ws.rk;

    ContactResult contact;
    Vec3 tau_c = Vec3::Zero();
    VectorXd F_rod = VectorXd::Zero(n);
    if (sys.finger_enabled) {
        const FingerPose pose = finger_fk(sys.finger, theta);
        contact = pairwise_contact(rod_contact_spheres(sys.rod, rk), pose.spheres,
                                   sys.contact_stiffness, fixed_set);
        F_rod = rod_generalized_forces(sys.rod, rk, contact.rod_force);
        tau_c = finger_generalized_torques(pose, contact.finger_force);
    } else {
        contact.rod_force.assign(size_t(sys.rod.station_count), Vec3::Zero());
        contact.overlap.setZero(sys.rod.station_count, 8);
    }
    if (!sys.rod_tip_force.isZero()) {
        Vec6 w;
        w << Vec3::Zero(), rk.station_g.back().R.transpose() * sys.rod_tip_force;
        F_rod += rk.station_J.back().transpose() * w;
    }

    actuation_matrix_into(sys.rod, q, ws.B);
    VectorXd r(n + 3);
    r.head(n) = sys.K * q - ws.B * u - F_rod;
    const Vec3 kj(sys.finger.joint_stiffness[0], sys.finger.joint_stiffness[1],
                  sys.finger.joint_stiffness[2]);
    r.tail(3) = kj.cwiseProduct(theta) - tau_c - limit_torques(sys.finger, theta);

    if (contact_out) *contact_out = std::move(contact);
    return r;
}

inline VectorXd residual(const CoupledSystem& sys, const SystemState& st,
                         ContactResult* contact_out = nullptr) {
    return residual(sys, st.q, st.theta, st.u, contact_out);
}

struct SolveOptions {
    double tol = 1e-8;       // inf-norm convergence threshold
    int max_iters = 100;
    double fd_step = 1e-7;   // forward-difference step per coordinate
    int max_damping = 30;    // damping escalations per iteration before giving up
    double lambda_init = 1e-9;
    double contact_eps = 1e-11; // m; overlaps below this count as separated in
                                // the solver's active-set logic (forces there
                                // are orders of magnitude below tol)
};

namespace detail {

// Damped Newton (Levenberg-Marquardt damping on the forward-difference
// Jacobian) for a fixed contact set, where the residual is smooth. The
// damped system is solved as a stacked least-squares problem
// [J; sqrt(lambda) D] dx = [-r; 0] to avoid forming J^T J.
struct InnerResult {
    VectorXd x;
    VectorXd r;
    ContactResult contact;
    bool converged = false;
    bool singular = false;
    int iterations = 0;
};

template <typename Eval>
InnerResult newton_fixed_set(Eval&& eval, VectorXd x, const SolveOptions& opts,
                             int iter_budget) {
    const int m = int(x.size());
    InnerResult out;
    VectorXd r = eval(x, &out.contact);
    double lambda = opts.lambda_init;
    MatrixXd Jfd(m, m);
    MatrixXd stacked(2 * m, m);
    VectorXd rhs = VectorXd::Zero(2 * m);

    // Residual rows span ~10 orders of magnitude (stiff contact rows against
    // the nearly-free tip elastic rows); without row equilibration the linear
    // solves cannot deliver the soft rows to tolerance and the iteration
    // random-walks. Scales are frozen on the first iteration of the solve.
    VectorXd rowscale = VectorXd::Ones(m);
    bool have_scale = false;

    // Once below tol, keep polishing while each step still gains a decade;
    // the softest coordinates (tip curl against K entries ~1e-8) otherwise
    // retain O(1e-3) remnants that tol alone cannot see.
    int polish_left = 3;
    double prev_inf = std::numeric_limits<double>::infinity();
    for (out.iterations = 0; out.iterations < iter_budget; ++out.iterations) {
        const double rinf = r.lpNorm<Eigen::Infinity>();
        if (rinf < opts.tol) {
            if (polish_left == 0 || rinf == 0.0 || rinf > 0.1 * prev_inf || rinf < 1e-15)
                break;
            --polish_left;
        }
        prev_inf = rinf;
        for (int j = 0; j < m; ++j) {
            VectorXd xp = x;
            xp[j] += opts.fd_step;
            Jfd.col(j) = (eval(xp, nullptr) - r) / opts.fd_step;
        }
        if (!have_scale) {
            for (int i = 0; i < m; ++i) rowscale[i] = 1.0 / std::max(Jfd.row(i).norm(), 1e-300);
            const double smin = rowscale.minCoeff();
            rowscale = rowscale.cwiseMin(smin * 1e12);
            have_scale = true;
        }
        const MatrixXd Js = rowscale.asDiagonal() * Jfd;
        VectorXd colscale(m);
        for (int j = 0; j < m; ++j) colscale[j] = Js.col(j).norm();
        const double cmax = colscale.maxCoeff();
        if (!(cmax > 0.0) || !std::isfinite(cmax)) {
            out.singular = true;
            break;
        }
        colscale = colscale.cwiseMax(1e-14 * cmax);

        const double rn = (rowscale.asDiagonal() * r).norm();
        bool accepted = false;
        for (int attempt = 0; attempt <= opts.max_damping; ++attempt) {
            stacked.topRows(m) = Js;
            stacked.bottomRows(m) = (std::sqrt(lambda) * colscale).asDiagonal();
            rhs.head(m) = -(rowscale.asDiagonal() * r);
            const VectorXd dx = stacked.colPivHouseholderQr().solve(rhs);
            if (!dx.allFinite()) {
                out.singular = true;
                break;
            }
            VectorXd xt = x + dx;
            ContactResult ct;
            VectorXd rt = eval(xt, &ct);
            if ((rowscale.asDiagonal() * rt).norm() < rn ||
                rt.lpNorm<Eigen::Infinity>() < opts.tol) {
                x = std::move(xt);
                r = std::move(rt);
                out.contact = std::move(ct);
                lambda = std::max(lambda / 3.0, 1e-12);
                accepted = true;
                break;
            }
            lambda = std::min(lambda * 8.0, 1e16);
            if (lambda >= 1e16) break;
        }
        if (!accepted || out.singular) break;
    }
    out.converged = !out.singular && r.lpNorm<Eigen::Infinity>() < opts.tol;
    out.x = std::move(x);
    out.r = std::move(r);
    return out;
}

} // namespace detail

namespace detail {

// interference depths of all pairs at configuration x
inline MatrixXd overlaps_at(const CoupledSystem& sys, const VectorXd& x,
                            RodKinematics* scratch = nullptr) {
    const int n = sys.rod.dof();
    RodKinematics local;
    RodKinematics& rk = scratch ? *scratch : local;
    rod_kinematics_into(sys.rod, x.head(n), false, rk);
    const FingerPose pose = finger_fk(sys.finger, Vec3(x.tail(3)));
    const auto rs = rod_contact_spheres(sys.rod, rk);
    MatrixXd d(rs.size(), 8);
    for (size_t s = 0; s < rs.size(); ++s)
        for (int i = 0; i < 8; ++i)
            d(Eigen::Index(s), i) = pose.spheres[size_t(i)].radius + rs[s].radius -
                                    (rs[s].center - pose.spheres[size_t(i)].center).norm();
    return d;
}

inline bool set_contains(const ContactSet& set, int s, int i) {
    for (auto [a, b] : set)
        if (a == s && b == i) return true;
    return false;
}

// largest overlap among pairs outside the set
inline double max_outside_overlap(const MatrixXd& d, const ContactSet& set) {
    double best = -1e30;
    for (Eigen::Index s = 0; s < d.rows(); ++s)
        for (int i = 0; i < 8; ++i)
            if (!set_contains(set, int(s), i)) best = std::max(best, d(s, i));
    return best;
}

} // namespace detail

// Active-set damped Newton. The unilateral penalty law has a kink at zero
// interference that makes plain Newton chatter when a grazing contact slides,
// so the solve alternates: freeze the set of interfering pairs, solve the
// smooth bilateral problem on that set, then update the set. A step whose
// solution would newly interfere outside the set is backtracked to the
// first-touch configuration and the touching pairs are annexed, so the set
// only changes incrementally. A state accepted as converged has every frozen
// pair interfering and every other pair separated, hence satisfies the plain
// unilateral residual; that is re-checked from scratch before returning.
// pseudo-transient proximal term: mu * M * (x - x_ref) added to the residual;
// mu = 0 recovers the plain statics residual
struct PseudoTerm {
    double mu = 0.0;
    VectorXd scale; // M diagonal, residual units per coordinate unit
    VectorXd x_ref;
};

inline SystemState solve_equilibrium_impl(const CoupledSystem& sys, double u,
                                          const SystemState& guess,
                                          const SolveOptions& opts,
                                          const PseudoTerm* pseudo) {
    const int n = sys.rod.dof();
    const int m = n + 3;
    SystemState st = guess;
    st.u = u;
    st.note.clear();
    st.converged = false;
    st.iterations = 0;

    VectorXd x(m);
    x.head(n) = guess.q;
    x.tail(3) = Vec3::Map(guess.theta.data());

    StaticsScratch scratch;
    RodKinematics overlap_scratch;
    auto augment = [&](const VectorXd& xv, VectorXd r) {
        if (pseudo && pseudo->mu > 0.0)
            r += pseudo->mu * pseudo->scale.cwiseProduct(xv - pseudo->x_ref);
        return r;
    };

    auto finish = [&](bool ok, const char* note) {
        ContactResult pure;
        const VectorXd r =
            augment(x, residual(sys, x.head(n), Vec3(x.tail(3)), u, &pure));
        st.residual_norm = r.lpNorm<Eigen::Infinity>();
        st.contact = std::move(pure);
        st.converged = ok && st.residual_norm < opts.tol;
        if (!st.converged && note) st.note = note;
        if (!st.converged && st.note.empty()) st.note = "active set inconsistent";
        st.q = x.head(n);
        st.theta = x.tail(3);
        return st;
    };

    if (!sys.finger_enabled) {
        ContactSet empty;
        auto eval = [&](const VectorXd& xv, ContactResult* c) {
            return augment(xv,
                           residual(sys, xv.head(n), Vec3(xv.tail(3)), u, c, &empty, &scratch));
        };
        auto inner = detail::newton_fixed_set(eval, x, opts, opts.max_iters);
        st.iterations = inner.iterations;
        x = inner.x;
        return finish(inner.converged, inner.singular ? "singular Jacobian" : "no convergence");
    }

    const double deps = opts.contact_eps;
    ContactSet set;
    {
        const MatrixXd d0 = detail::overlaps_at(sys, x, &overlap_scratch);
        for (Eigen::Index s = 0; s < d0.rows(); ++s)
            for (int i = 0; i < 8; ++i)
                if (d0(s, i) > deps) set.emplace_back(int(s), i);
    }

    const int max_outer = 60;
    int budget = opts.max_iters;
    for (int outer = 0; outer < max_outer && budget > 0; ++outer) {
        auto eval = [&](const VectorXd& xv, ContactResult* c) {
            return augment(xv, residual(sys, xv.head(n), Vec3(xv.tail(3)), u, c, &set, &scratch));
        };
        auto inner = detail::newton_fixed_set(eval, x, opts, budget);
        budget -= std::max(inner.iterations, 1);
        st.iterations += inner.iterations;
        if (inner.singular) {
            x = inner.x;
            return finish(false, "singular Jacobian");
        }
        if (!inner.converged) {
            x = inner.x;
            return finish(false, "no convergence");
        }

        // annex newly touching pairs at the first-touch point of the step
        MatrixXd d_new = detail::overlaps_at(sys, inner.x, &overlap_scratch);
        if (detail::max_outside_overlap(d_new, set) > deps) {
            const VectorXd x_old = x;
            double lo = 0.0, hi = 1.0; // lo side separated, hi side penetrating
            for (int b = 0; b < 60; ++b) {
                const double mid = 0.5 * (lo + hi);
                const VectorXd xm = x_old + mid * (inner.x - x_old);
                if (detail::max_outside_overlap(
                        detail::overlaps_at(sys, xm, &overlap_scratch), set) > deps)
                    hi = mid;
                else
                    lo = mid;
            }
            x = x_old + hi * (inner.x - x_old);
            const MatrixXd dt = detail::overlaps_at(sys, x, &overlap_scratch);
            int annexed = 0;
            for (Eigen::Index s = 0; s < dt.rows(); ++s)
                for (int i = 0; i < 8; ++i)
                    if (dt(s, i) > deps && !detail::set_contains(set, int(s), i)) {
                        set.emplace_back(int(s), i);
                        ++annexed;
                    }
            if (annexed == 0) {
                // the touch point collapsed below floating-point resolution;
                // take the full step and annex whatever interferes there
                x = inner.x;
                for (Eigen::Index s = 0; s < d_new.rows(); ++s)
                    for (int i = 0; i < 8; ++i)
                        if (d_new(s, i) > deps && !detail::set_contains(set, int(s), i))
                            set.emplace_back(int(s), i);
            }
            continue;
        }

        // drop separated members
        x = inner.x;
        ContactSet kept;
        for (auto [s, i] : set)
            if (d_new(s, i) > deps) kept.emplace_back(s, i);
        if (kept.size() != set.size()) {
            set = std::move(kept);
            continue;
        }
        return finish(true, nullptr);
    }
    return finish(false, "no convergence (active set cycling)");
}

// Damped-Newton equilibrium solve. When the plain solve fails (typically at a
// fold of the equilibrium path, e.g. the rod tip snapping over the fingertip
// sphere) it falls back to pseudo-transient continuation: a proximal term
// mu*M*(x - x_ref) is added and mu is walked down to zero, following the
// overdamped quasi-static path onto the next branch. The final stage has
// mu = 0, so any state returned as converged is a root of the plain residual.
inline SystemState solve_equilibrium(const CoupledSystem& sys, double u,
                                     const SystemState& guess,
                                     const SolveOptions& opts = {}) {
    SystemState plain = solve_equilibrium_impl(sys, u, guess, opts, nullptr);
    if (plain.converged) return plain;

    const int n = sys.rod.dof();
    const int m = n + 3;
    PseudoTerm pseudo;
    pseudo.x_ref.resize(m);
    pseudo.x_ref.head(n) = guess.q;
    pseudo.x_ref.tail(3) = Vec3::Map(guess.theta.data());

    // coordinate-to-residual scales from the Jacobian diagonal at the guess
    pseudo.scale.resize(m);
    {
        const VectorXd r0 = residual(sys, guess.q, guess.theta, u);
        for (int j = 0; j < m; ++j) {
            VectorXd xp = pseudo.x_ref;
            xp[j] += opts.fd_step;
            const VectorXd rp = residual(sys, xp.head(n), Vec3(xp.tail(3)), u);
            pseudo.scale[j] = std::abs((rp[j] - r0[j]) / opts.fd_step);
        }
        const double smax = pseudo.scale.maxCoeff();
        if (!(smax > 0.0) || !std::isfinite(smax)) return plain;
        pseudo.scale = pseudo.scale.cwiseMax(1e-9 * smax);
    }

    // implicit-Euler marching: each stage solves r(x) + mu M (x - x_k) = 0,
    // then advances x_k; mu shrinks while stages converge easily and grows on
    // failure. Once the proximal term at a stage root is negligible the root
    // is a plain root.
    SystemState walk = guess;
    int iters_spent = plain.iterations;
    double mu = 1e-2;
    SolveOptions sopts = opts;
    sopts.max_iters = std::max(40, opts.max_iters / 4);
    for (int stage_idx = 0; stage_idx < 400; ++stage_idx) {
        pseudo.mu = mu;
        SystemState stage = solve_equilibrium_impl(sys, u, walk, sopts, &pseudo);
        iters_spent += stage.iterations;
        if (!stage.converged) {
            mu *= 8.0;
            if (mu > 1e4) {
                stage.iterations = iters_spent;
                if (!stage.note.empty()) stage.note += " (pseudo-transient)";
                return stage;
            }
            continue;
        }
        VectorXd xs(m);
        xs.head(n) = stage.q;
        xs.tail(3) = Vec3::Map(stage.theta.data());
        const double prox =
            mu * (pseudo.scale.cwiseProduct(xs - pseudo.x_ref)).lpNorm<Eigen::Infinity>();
        walk = stage;
        pseudo.x_ref = xs;
        if (prox < 0.5 * opts.tol) {
            SystemState polish = solve_equilibrium_impl(sys, u, walk, opts, nullptr);
            polish.iterations += iters_spent;
            if (polish.converged) return polish;
            mu *= 8.0; // settled onto a spurious point; stiffen and keep going
            if (mu > 1e4) return polish;
            continue;
        }
        if (stage.iterations <= 6) mu *= 0.5; // flow is easy, accelerate
    }
    SystemState out = solve_equilibrium_impl(sys, u, walk, opts, nullptr);
    out.iterations += iters_spent;
    if (!out.converged && !out.note.empty()) out.note += " (pseudo-transient budget)";
    return out;
}

inline std::vector<double> triangle_schedule(double peak = 4.0, double step = 0.1) {
    std::vector<double> u;
    const int nu = int(std::round(peak / step));
    for (int i = 0; i <= nu; ++i) u.push_back(i * step);
    for (int i = nu - 1; i >= 0; --i) u.push_back(i * step);
    return u;
}

struct SweepResult {
    std::vector<SystemState> states; // one per schedule entry, ordered
    bool aborted = false;
    int failure_index = -1;
};

inline void write_sweep_csv(const SweepResult& res, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << "u,iterations,residual,F_net";
    if (!res.states.empty()) {
        for (int i = 0; i < res.states.front().q.size(); ++i) f << ",q" << i;
        f << ",theta0,theta1,theta2";
    }
    f << "\n";
    for (const auto& st : res.states) {
        f << st.u << "," << st.iterations << "," << st.residual_norm << "," << st.f_net();
        for (int i = 0; i < st.q.size(); ++i) f << "," << st.q[i];
        for (int i = 0; i < 3; ++i) f << "," << st.theta[i];
        f << "\n";
    }
}

// Sequential continuation with warm starts. A failing step is retried with
// the increment halved (substepping) up to `max_refinements` times; each
// level also raises the iteration budget, since crossing a fold (the rod tip
// snapping over the fingertip sphere) needs raw iterations rather than
// smaller increments.
inline SweepResult actuation_sweep(const CoupledSystem& sys, const std::vector<double>& schedule,
                                   const SolveOptions& opts = {}, int max_refinements = 6) {
    SweepResult res;
    if (schedule.empty()) return res;
    SystemState prev = zero_state(sys);
    double u_prev = 0.0;
    for (size_t idx = 0; idx < schedule.size(); ++idx) {
        const double u = schedule[idx];
        SystemState next = solve_equilibrium(sys, u, prev, opts);
        if (!next.converged) {
            bool fixed = false;
            for (int level = 1; level <= max_refinements && !fixed; ++level) {
                const int sub = 1 << level;
                SolveOptions lopts = opts;
                lopts.max_iters = std::min(opts.max_iters * (1 << level), 1000);
                SystemState walk = prev;
                bool ok = true;
                for (int sstep = 1; sstep <= sub; ++sstep) {
                    const double usub = u_prev + (u - u_prev) * double(sstep) / double(sub);
                    walk = solve_equilibrium(sys, usub, walk, lopts);
                    if (!walk.converged) { ok = false; break; }
                }
                if (ok) {
                    next = walk;
                    fixed = true;
                }
            }
            if (!fixed) {
                res.states.push_back(next);
                res.aborted = true;
                res.failure_index = int(idx);
                return res;
            }
        }
        res.states.push_back(next);
        prev = res.states.back();
        u_prev = u;
    }
    return res;
}

} // namespace exosim
