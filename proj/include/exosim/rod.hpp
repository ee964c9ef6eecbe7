#pragma once
#include <Eigen/Dense>
#include <functional>
#include <stdexcept>
#include <vector>

#include "exosim/lie.hpp"

// Geometric-variable-strain rod: the strain field xi(X) = Phi(X) q + xi*
// lives on a nodal quadratic basis; poses follow by composing per-step
// exponentials of a fourth-order two-point Magnus quadrature.

namespace exosim {

using Eigen::VectorXd;
using Eigen::MatrixXd;
using Mat6xN = Eigen::Matrix<double, 6, Eigen::Dynamic>;

namespace gauss {

// Gauss-Legendre abscissae/weights on [0,1]
struct Rule {
    std::vector<double> x, w;
};

inline Rule make_rule(int n) {
    // nodes tabulated on [-1,1], mapped to [0,1]
    static const double x2[] = {-0.5773502691896257, 0.5773502691896257};
    static const double w2[] = {1.0, 1.0};
    static const double x4[] = {-0.8611363115940526, -0.3399810435848563,
                                0.3399810435848563, 0.8611363115940526};
    static const double w4[] = {0.3478548451374538, 0.6521451548625461,
                                0.6521451548625461, 0.3478548451374538};
    static const double x8[] = {-0.9602898564975363, -0.7966664774136267,
                                -0.5255324099163290, -0.1834346424956498,
                                0.1834346424956498, 0.5255324099163290,
                                0.7966664774136267, 0.9602898564975363};
    static const double w8[] = {0.1012285362903763, 0.2223810344533745,
                                0.3137066458778873, 0.3626837833783620,
                                0.3626837833783620, 0.3137066458778873,
                                0.2223810344533745, 0.1012285362903763};
    const double *xs, *ws;
    switch (n) {
        case 2: xs = x2; ws = w2; break;
        case 4: xs = x4; ws = w4; break;
        case 8: xs = x8; ws = w8; break;
        default: throw std::invalid_argument("unsupported gauss rule");
    }
    Rule r;
    for (int i = 0; i < n; ++i) {
        r.x.push_back(0.5 * (1.0 + xs[i]));
        r.w.push_back(0.5 * ws[i]);
    }
    return r;
}

inline const Rule& rule(int n) {
    switch (n) {
        case 2: {
            static const Rule r = make_rule(2);
            return r;
        }
        case 4: {
            static const Rule r = make_rule(4);
            return r;
        }
        case 8: {
            static const Rule r = make_rule(8);
            return r;
        }
        default: throw std::invalid_argument("unsupported gauss rule");
    }
}

} // namespace gauss

// Nodal quadratic basis: element_count elements, 2E+1 nodes, two active
// strain components (bending about local y, extension along local x).
// Coordinate layout: q = [bending node 0..N-1 | extension node 0..N-1].
struct StrainBasis {
    int element_count = 5;
    int quadrature_per_element = 8; // rule used for stiffness/actuation integrals

    int node_count() const { return 2 * element_count + 1; }
    int dof() const { return 2 * node_count(); }

    // nodal shape values at arclength X (rod length L); exactly the three
    // nodes of the owning element are nonzero
    void shape_values(double X, double L, VectorXd& phi) const {
        phi.setZero(node_count());
        const double he = L / element_count;
        int e = int(X / he);
        if (e >= element_count) e = element_count - 1;
        if (e < 0) e = 0;
        const double t = (X - e * he) / he;
        phi[2 * e] = (1.0 - t) * (1.0 - 2.0 * t);
        phi[2 * e + 1] = 4.0 * t * (1.0 - t);
        phi[2 * e + 2] = t * (2.0 * t - 1.0);
    }
};

// xi* : straight unstretched rod
inline Twist reference_strain() { return Twist(Vec3::Zero(), Vec3(1, 0, 0)); }

struct RodModel {
    double length = 0.10;                          // m
    std::function<double(double)> radius =          // S as a function of X/L
        [](double xl) { return 0.0058 + xl * (0.004 - 0.0058); };
    double youngs_modulus = 30e3;                  // Pa
    double shear_modulus = 10e3;                   // Pa (stored; unused by the active components)
    StrainBasis basis;
    int station_count = 42;                        // kinematic integration stations, reused for contact
    Transform base_pose;                           // clamped mounting frame

    int dof() const { return basis.dof(); }
    double radius_at(double X) const { return radius(X / length); }
};

inline void check_arclength(const RodModel& m, double X) {
    if (X < -1e-12 || X > m.length + 1e-12)
        throw std::out_of_range("arclength outside [0, L]");
}

// 6 x n strain basis matrix at X (rows in twist order)
inline Mat6xN strain_matrix(const RodModel& m, double X) {
    VectorXd phi;
    m.basis.shape_values(X, m.length, phi);
    const int n = m.basis.node_count();
    Mat6xN Phi = Mat6xN::Zero(6, m.dof());
    Phi.block(1, 0, 1, n) = phi.transpose(); // bending about local y
    Phi.block(3, n, 1, n) = phi.transpose(); // extension along local x
    return Phi;
}

inline Twist strain_at(const RodModel& m, const VectorXd& q, double X) {
    check_arclength(m, X);
    VectorXd phi;
    m.basis.shape_values(X, m.length, phi);
    const int n = m.basis.node_count();
    const double bend = phi.dot(q.head(n));
    const double ext = phi.dot(q.tail(n));
    Twist xi = reference_strain();
    xi.angular.y() += bend;
    xi.linear.x() += ext;
    return xi;
}

namespace detail {

// fourth-order Magnus increment over [X0, X0+h] and its q-derivative
struct MagnusStep {
    Twist omega;
    Mat6xN domega_dq; // only filled when requested
};

// Shape-function evaluation without allocating: phi values of the three
// active nodes plus their global index.
struct LocalShape {
    int first_node;
    double n0, n1, n2;
};

inline LocalShape local_shape(const StrainBasis& basis, double X, double L) {
    const double he = L / basis.element_count;
    int e = int(X / he);
    if (e >= basis.element_count) e = basis.element_count - 1;
    if (e < 0) e = 0;
    const double t = (X - e * he) / he;
    return {2 * e, (1.0 - t) * (1.0 - 2.0 * t), 4.0 * t * (1.0 - t), t * (2.0 * t - 1.0)};
}

inline Twist strain_from_shape(const VectorXd& q, int node_count, const LocalShape& s) {
    const int f = s.first_node;
    Twist xi = reference_strain();
    xi.angular.y() += s.n0 * q[f] + s.n1 * q[f + 1] + s.n2 * q[f + 2];
    xi.linear.x() +=
        s.n0 * q[node_count + f] + s.n1 * q[node_count + f + 1] + s.n2 * q[node_count + f + 2];
    return xi;
}

// adds w * (row vector of shape values) into two rows of a 6 x n matrix
inline void add_shape_rows(Mat6xN& M, int node_count, const LocalShape& s, int angular_row,
                           int linear_row, double wa, double wl) {
    const int f = s.first_node;
    M(angular_row, f) += wa * s.n0;
    M(angular_row, f + 1) += wa * s.n1;
    M(angular_row, f + 2) += wa * s.n2;
    M(linear_row, node_count + f) += wl * s.n0;
    M(linear_row, node_count + f + 1) += wl * s.n1;
    M(linear_row, node_count + f + 2) += wl * s.n2;
}

inline void magnus_step_into(const RodModel& m, const VectorXd& q, double X0, double h,
                             Mat6xN* deriv, Twist& omega) {
    static const double c1 = 0.5 - std::sqrt(3.0) / 6.0;
    static const double c2 = 0.5 + std::sqrt(3.0) / 6.0;
    const double Xa = X0 + c1 * h, Xb = X0 + c2 * h;
    const int nn = m.basis.node_count();
    const LocalShape sa = local_shape(m.basis, Xa, m.length);
    const LocalShape sb = local_shape(m.basis, Xb, m.length);
    const Twist xa = strain_from_shape(q, nn, sa);
    const Twist xb = strain_from_shape(q, nn, sb);
    const Mat6 ad_a = adjoint_ad(xa);
    const double k2 = std::sqrt(3.0) * h * h / 12.0;

    omega = Twist(Vec6(0.5 * h * (xa.vec() + xb.vec()) + k2 * (ad_a * xb.vec())));
    if (deriv) {
        deriv->setZero();
        add_shape_rows(*deriv, nn, sa, 1, 3, 0.5 * h, 0.5 * h);
        add_shape_rows(*deriv, nn, sb, 1, 3, 0.5 * h, 0.5 * h);
        const Mat6 ad_b = adjoint_ad(xb);
        auto add_cols = [&](const Mat6& A, const LocalShape& sh, double w) {
            const int f = sh.first_node;
            deriv->col(f) += (w * sh.n0) * A.col(1);
            deriv->col(f + 1) += (w * sh.n1) * A.col(1);
            deriv->col(f + 2) += (w * sh.n2) * A.col(1);
            deriv->col(nn + f) += (w * sh.n0) * A.col(3);
            deriv->col(nn + f + 1) += (w * sh.n1) * A.col(3);
            deriv->col(nn + f + 2) += (w * sh.n2) * A.col(3);
        };
        add_cols(ad_a, sb, k2);
        add_cols(ad_b, sa, -k2);
    }
}

inline MagnusStep magnus_step(const RodModel& m, const VectorXd& q, double X0, double h,
                              bool with_derivative) {
    MagnusStep s;
    if (with_derivative) {
        s.domega_dq.resize(6, m.dof());
        magnus_step_into(m, q, X0, h, &s.domega_dq, s.omega);
    } else {
        magnus_step_into(m, q, X0, h, nullptr, s.omega);
    }
    return s;
}

} // namespace detail

// Poses (and optionally body Jacobians) at the integration stations. The
// struct doubles as a reusable workspace: repeated fills reuse its buffers.
struct RodKinematics {
    std::vector<double> station_X;
    std::vector<Transform> station_g;
    std::vector<Mat6xN> station_J; // empty unless requested
    Mat6xN deriv_scratch;
};

inline void rod_kinematics_into(const RodModel& m, const VectorXd& q, bool with_jacobians,
                                RodKinematics& rk) {
    const int ns = m.station_count;
    const double h = m.length / (ns - 1);
    rk.station_X.resize(size_t(ns));
    rk.station_g.resize(size_t(ns));
    if (with_jacobians) {
        rk.station_J.resize(size_t(ns));
        for (auto& J : rk.station_J)
            if (J.cols() != m.dof()) J.resize(6, m.dof());
        if (rk.deriv_scratch.cols() != m.dof()) rk.deriv_scratch.resize(6, m.dof());
        rk.station_J[0].setZero(); // clamped base: J(0) = 0
    } else {
        rk.station_J.clear();
    }

    Transform g = m.base_pose;
    rk.station_X[0] = 0.0;
    rk.station_g[0] = g;

    Twist omega;
    for (int k = 1; k < ns; ++k) {
        const double X0 = (k - 1) * h;
        detail::magnus_step_into(m, q, X0, h, with_jacobians ? &rk.deriv_scratch : nullptr,
                                 omega);
        const Transform e = exp_map(omega);
        if (with_jacobians) {
            rk.station_J[size_t(k)].noalias() =
                adjoint_Ad(e.inverse()) * rk.station_J[size_t(k - 1)];
            rk.station_J[size_t(k)].noalias() += tangent_operator(omega) * rk.deriv_scratch;
        }
        g = g * e;
        rk.station_X[size_t(k)] = k * h;
        rk.station_g[size_t(k)] = g;
    }
}

inline RodKinematics rod_kinematics(const RodModel& m, const VectorXd& q,
                                    bool with_jacobians = false) {
    RodKinematics rk;
    rod_kinematics_into(m, q, with_jacobians, rk);
    return rk;
}

// Pose at arbitrary arclengths (sorted targets); stations plus one partial
// Magnus step per target.
inline std::vector<Transform> forward_kinematics(const RodModel& m, const VectorXd& q,
                                                 const std::vector<double>& X_targets) {
    for (double X : X_targets) check_arclength(m, X);
    const int ns = m.station_count;
    const double h = m.length / (ns - 1);
    std::vector<Transform> out(X_targets.size());

    Transform g = m.base_pose;
    size_t t = 0;
    for (int k = 0; k < ns; ++k) {
        const double Xk = k * h;
        const double Xnext = (k + 1 < ns) ? (k + 1) * h : m.length + 1.0;
        while (t < X_targets.size() && X_targets[t] < Xnext) {
            const double dX = X_targets[t] - Xk;
            if (dX <= 1e-15) {
                out[t] = g;
            } else {
                auto step = detail::magnus_step(m, q, Xk, dX, false);
                out[t] = g * exp_map(step.omega);
            }
            ++t;
        }
        if (k + 1 < ns) {
            auto step = detail::magnus_step(m, q, Xk, h, false);
            g = g * exp_map(step.omega);
        }
    }
    return out;
}

inline Transform tip_pose(const RodModel& m, const VectorXd& q) {
    return forward_kinematics(m, q, {m.length})[0];
}

// Body-frame geometric Jacobian at arclength X: eta(X) = J(q, X) qdot.
inline Mat6xN jacobian(const RodModel& m, const VectorXd& q, double X) {
    check_arclength(m, X);
    const int ns = m.station_count;
    const double h = m.length / (ns - 1);
    Mat6xN J = Mat6xN::Zero(6, m.dof());
    double Xk = 0.0;
    while (Xk + h <= X + 1e-15 && Xk + h <= m.length + 1e-15) {
        auto step = detail::magnus_step(m, q, Xk, h, true);
        J = adjoint_Ad(exp_map(step.omega).inverse()) * J +
            tangent_operator(step.omega) * step.domega_dq;
        Xk += h;
    }
    const double dX = X - Xk;
    if (dX > 1e-15) {
        auto step = detail::magnus_step(m, q, Xk, dX, true);
        J = adjoint_Ad(exp_map(step.omega).inverse()) * J +
            tangent_operator(step.omega) * step.domega_dq;
    }
    return J;
}

// K = int Phi^T Sigma Phi dX with Sigma = diag(E I_y, E A) on the active rows,
// assembled element-by-element with Gauss quadrature. Exactly symmetric.
inline MatrixXd stiffness_matrix(const RodModel& m) {
    const int n = m.basis.node_count();
    MatrixXd K = MatrixXd::Zero(m.dof(), m.dof());
    const auto& rule = gauss::rule(m.basis.quadrature_per_element);
    const double he = m.length / m.basis.element_count;
    VectorXd phi;
    for (int e = 0; e < m.basis.element_count; ++e) {
        for (size_t i = 0; i < rule.x.size(); ++i) {
            const double X = (e + rule.x[i]) * he;
            const double w = rule.w[i] * he;
            const double S = m.radius_at(X);
            const double A = M_PI * S * S;
            const double Iy = M_PI * S * S * S * S / 4.0;
            m.basis.shape_values(X, m.length, phi);
            const MatrixXd outer = phi * phi.transpose();
            K.topLeftCorner(n, n) += (w * m.youngs_modulus * Iy) * outer;
            K.bottomRightCorner(n, n) += (w * m.youngs_modulus * A) * outer;
        }
    }
    return K;
}

// Generalized force per unit actuation for the surface line at local offset
// d(X) = (0, 0, +S(X)), the side opposite the finger. The line acts as a
// distributed wrench [d x t_c; t_c] with t_c the unit line tangent in the
// local frame, so positive u bends the rod toward the finger (-z) and
// stretches it axially.
inline void actuation_matrix_into(const RodModel& m, const VectorXd& q, VectorXd& B) {
    const int n = m.basis.node_count();
    B.setZero(m.dof());
    const auto& rule = gauss::rule(m.basis.quadrature_per_element);
    const double he = m.length / m.basis.element_count;
    const double dstep = 1e-6 * m.length;
    for (int e = 0; e < m.basis.element_count; ++e) {
        for (size_t i = 0; i < rule.x.size(); ++i) {
            const double X = (e + rule.x[i]) * he;
            const double w = rule.w[i] * he;
            const double S = m.radius_at(X);
            const double Xp = std::min(X + dstep, m.length);
            const double Xm = std::max(X - dstep, 0.0);
            const double dS = (m.radius_at(Xp) - m.radius_at(Xm)) / (Xp - Xm);
            const auto sh = detail::local_shape(m.basis, X, m.length);
            const Twist xi = detail::strain_from_shape(q, n, sh);
            const Vec3 d(0, 0, S);
            Vec3 tangent = xi.linear + xi.angular.cross(d) + Vec3(0, 0, dS);
            if (tangent.norm() < 1e-12) tangent = Vec3(1, 0, 0);
            const Vec3 tc = tangent.normalized();
            const Vec3 moment = d.cross(tc);
            const int f = sh.first_node;
            const double wb = w * moment.y(), wl = w * tc.x();
            B[f] += wb * sh.n0;
            B[f + 1] += wb * sh.n1;
            B[f + 2] += wb * sh.n2;
            B[n + f] += wl * sh.n0;
            B[n + f + 1] += wl * sh.n1;
            B[n + f + 2] += wl * sh.n2;
        }
    }
}

inline VectorXd actuation_matrix(const RodModel& m, const VectorXd& q) {
    VectorXd B;
    actuation_matrix_into(m, q, B);
    return B;
}

// Length of the actuation line for the current strain field (used by the
// elastic-energy bookkeeping tests and trace output).
inline double actuation_line_length(const RodModel& m, const VectorXd& q) {
    const auto& rule = gauss::rule(m.basis.quadrature_per_element);
    const double he = m.length / m.basis.element_count;
    const double dstep = 1e-6 * m.length;
    double len = 0.0;
    for (int e = 0; e < m.basis.element_count; ++e) {
        for (size_t i = 0; i < rule.x.size(); ++i) {
            const double X = (e + rule.x[i]) * he;
            const double w = rule.w[i] * he;
            const double S = m.radius_at(X);
            const double Xp = std::min(X + dstep, m.length);
            const double Xm = std::max(X - dstep, 0.0);
            const double dS = (m.radius_at(Xp) - m.radius_at(Xm)) / (Xp - Xm);
            const Twist xi = strain_at(m, q, X);
            const Vec3 d(0, 0, S);
            len += w * (xi.linear + xi.angular.cross(d) + Vec3(0, 0, dS)).norm();
        }
    }
    return len;
}

} // namespace exosim
