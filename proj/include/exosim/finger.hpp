#pragma once
#include <array>
#include <cmath>

#include "exosim/lie.hpp"

// Rigid RRR finger in the sagittal (x-z) plane. Positive joint angles rotate
// about +y, i.e. flexion toward -z, matching the rod's bending convention.

namespace exosim {

inline Mat3 rot_y(double a) {
    Mat3 R;
    R << std::cos(a), 0, std::sin(a),
        0, 1, 0,
        -std::sin(a), 0, std::cos(a);
    return R;
}

struct FingerModel {
    // links: ph1, ph2, ph3, tip (the tip link is fixed to ph3)
    std::array<double, 4> link_length{0.045, 0.0253, 0.0236, 0.001};
    std::array<double, 4> radius_base{0.0108, 0.00695, 0.0051, 0.00435};
    std::array<double, 4> radius_tip{0.00695, 0.0051, 0.00435, 0.004};
    std::array<double, 3> joint_stiffness{0.04, 0.03, 0.02}; // N*m/rad
    std::array<double, 3> limit_lo{-10.0 * M_PI / 180.0, -5.0 * M_PI / 180.0,
                                   -5.0 * M_PI / 180.0};
    std::array<double, 3> limit_hi{M_PI / 2.0, M_PI / 2.0, M_PI / 2.0};
    double limit_penalty = 10.0; // N*m/rad one-sided stiffness beyond a limit
    Transform base_pose;

    // taper radius at arclength s along link i
    double link_radius(int i, double s) const {
        const double t = s / link_length[i];
        return radius_base[i] + t * (radius_tip[i] - radius_base[i]);
    }
};

struct ContactSphere {
    enum class Owner { Rod, Finger };
    Owner owner;
    int station; // rod station index or finger sphere index C_i
    Vec3 center;
    double radius;
};

struct FingerPose {
    std::array<double, 3> theta;        // possibly clamped
    std::array<Vec3, 3> joint_origin;   // world joint positions
    std::array<Transform, 4> link_pose; // frame at each link base
    std::array<ContactSphere, 8> spheres;
    Vec3 fingertip; // distal end of the tip link
    bool clamped = false;
};

// Planar serial-chain poses plus the eight contact spheres (base and
// mid-length of every link, tip link included).
inline FingerPose finger_fk(const FingerModel& m, const Vec3& theta,
                            bool clamp_to_limits = false) {
    FingerPose p;
    p.clamped = false;
    for (int j = 0; j < 3; ++j) {
        double a = theta[j];
        if (clamp_to_limits) {
            if (a < m.limit_lo[j]) { a = m.limit_lo[j]; p.clamped = true; }
            if (a > m.limit_hi[j]) { a = m.limit_hi[j]; p.clamped = true; }
        }
        p.theta[j] = a;
    }

    Transform g = m.base_pose;
    for (int link = 0; link < 4; ++link) {
        if (link < 3) {
            p.joint_origin[link] = g.r;
            g = Transform(g.R * rot_y(p.theta[link]), g.r);
        }
        p.link_pose[link] = g;
        const Vec3 axis = g.R.col(0);
        p.spheres[2 * link] = {ContactSphere::Owner::Finger, 2 * link, g.r,
                               m.radius_base[link]};
        p.spheres[2 * link + 1] = {ContactSphere::Owner::Finger, 2 * link + 1,
                                   g.r + 0.5 * m.link_length[link] * axis,
                                   m.link_radius(link, 0.5 * m.link_length[link])};
        g = Transform(g.R, g.r + m.link_length[link] * axis);
    }
    p.fingertip = g.r;
    return p;
}

// Generalized joint torques for point forces at the finger spheres:
// tau_j = sum_i (y_axis x (p_i - o_j)) . f_i over spheres distal to joint j.
inline Vec3 finger_generalized_torques(const FingerPose& pose,
                                       const std::array<Vec3, 8>& sphere_force) {
    const Vec3 y_axis(0, 1, 0);
    Vec3 tau = Vec3::Zero();
    for (int i = 0; i < 8; ++i) {
        const int link = i / 2;
        const int last_joint = std::min(link, 2);
        for (int j = 0; j <= last_joint; ++j)
            tau[j] += y_axis.cross(pose.spheres[i].center - pose.joint_origin[j])
                          .dot(sphere_force[i]);
    }
    return tau;
}

// One-sided penalty torque pushing a joint back inside its limits.
inline Vec3 limit_torques(const FingerModel& m, const Vec3& theta) {
    Vec3 tau = Vec3::Zero();
    for (int j = 0; j < 3; ++j) {
        if (theta[j] > m.limit_hi[j]) tau[j] = -m.limit_penalty * (theta[j] - m.limit_hi[j]);
        else if (theta[j] < m.limit_lo[j]) tau[j] = -m.limit_penalty * (theta[j] - m.limit_lo[j]);
    }
    return tau;
}

} // namespace exosim
