#pragma once
#include <Eigen/Dense>
#include <cmath>

// Rigid-motion group primitives. Twists are ordered (angular; linear)
// throughout the library; all adjoint block layouts below assume that order.

namespace exosim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

struct Twist {
    Vec3 angular = Vec3::Zero();
    Vec3 linear = Vec3::Zero();

    Twist() = default;
    Twist(const Vec3& w, const Vec3& v) : angular(w), linear(v) {}
    explicit Twist(const Vec6& x) : angular(x.head<3>()), linear(x.tail<3>()) {}

    Vec6 vec() const {
        Vec6 x;
        x << angular, linear;
        return x;
    }
};

// Frame of a rigid body: rotation R and origin r, i.e. the 4x4 matrix [R r; 0 1].
struct Transform {
    Mat3 R = Mat3::Identity();
    Vec3 r = Vec3::Zero();

    Transform() = default;
    Transform(const Mat3& R_, const Vec3& r_) : R(R_), r(r_) {}

    Mat4 matrix() const {
        Mat4 g = Mat4::Identity();
        g.topLeftCorner<3, 3>() = R;
        g.topRightCorner<3, 1>() = r;
        return g;
    }

    Transform operator*(const Transform& o) const { return {R * o.R, R * o.r + r}; }

    Transform inverse() const { return {R.transpose(), -(R.transpose() * r)}; }

    Vec3 apply(const Vec3& p) const { return R * p + r; }

    // orthonormality / determinant defect, used by validity checks
    double rotation_defect() const {
        double d1 = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
        double d2 = std::abs(R.determinant() - 1.0);
        return std::max(d1, d2);
    }
};

inline Mat3 skew(const Vec3& w) {
    Mat3 W;
    W << 0, -w.z(), w.y(),
        w.z(), 0, -w.x(),
        -w.y(), w.x(), 0;
    return W;
}

// R^6 -> se(3): [w^ v; 0 0]
inline Mat4 hat(const Twist& t) {
    Mat4 m = Mat4::Zero();
    m.topLeftCorner<3, 3>() = skew(t.angular);
    m.topRightCorner<3, 1>() = t.linear;
    return m;
}

inline Twist vee(const Mat4& m) {
    Vec3 w(m(2, 1), m(0, 2), m(1, 0));
    return {w, m.topRightCorner<3, 1>()};
}

// Closed-form exponential. For small rotation angles the Rodrigues
// coefficients switch to their Taylor expansions.
inline Transform exp_map(const Twist& t) {
    const Vec3& w = t.angular;
    const Vec3& v = t.linear;
    const double th = w.norm();
    const Mat3 W = skew(w);
    double a, b, c; // sin(th)/th, (1-cos th)/th^2, (th - sin th)/th^3
    if (th < 1e-6) {
        const double th2 = th * th;
        a = 1.0 - th2 / 6.0 + th2 * th2 / 120.0;
        b = 0.5 - th2 / 24.0 + th2 * th2 / 720.0;
        c = 1.0 / 6.0 - th2 / 120.0 + th2 * th2 / 5040.0;
    } else {
        a = std::sin(th) / th;
        b = (1.0 - std::cos(th)) / (th * th);
        c = (th - std::sin(th)) / (th * th * th);
    }
    Mat3 R = Mat3::Identity() + a * W + b * W * W;
    Mat3 V = Mat3::Identity() + b * W + c * W * W;
    return {R, V * v};
}

// Ad_g = [R 0; r^ R, R] so that (Ad_g xi)^ = g xi^ g^-1.
inline Mat6 adjoint_Ad(const Transform& g) {
    Mat6 A = Mat6::Zero();
    A.topLeftCorner<3, 3>() = g.R;
    A.bottomRightCorner<3, 3>() = g.R;
    A.bottomLeftCorner<3, 3>() = skew(g.r) * g.R;
    return A;
}

// ad_xi = [w^ 0; v^ w^]. Bracket convention: [xi, eta] = ad_xi eta, which is
// antisymmetric: ad(xi) eta = -ad(eta) xi.
inline Mat6 adjoint_ad(const Twist& t) {
    Mat6 A = Mat6::Zero();
    const Mat3 W = skew(t.angular);
    A.topLeftCorner<3, 3>() = W;
    A.bottomRightCorner<3, 3>() = W;
    A.bottomLeftCorner<3, 3>() = skew(t.linear);
    return A;
}

// T(Omega) = dexp_{-Omega} = sum_k (-ad_Omega)^k / (k+1)!.
// Maps d(Omega)/dq to the body twist of g exp(Omega^). The series converges
// like ||Omega||^k / k!; terms are added until they vanish at double precision.
inline Mat6 tangent_operator(const Twist& omega) {
    const Mat6 A = -adjoint_ad(omega);
    Mat6 T = Mat6::Identity();
    Mat6 term = Mat6::Identity();
    for (int k = 1; k <= 30; ++k) {
        term = (term * A) / double(k + 1);
        T += term;
        if (term.cwiseAbs().maxCoeff() < 1e-18) break;
    }
    return T;
}

} // namespace exosim
