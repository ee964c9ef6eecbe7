#pragma once
#include <stdexcept>
#include <vector>

#include "exosim/finger.hpp"
#include "exosim/rod.hpp"

// Sphere-interference contact: every rod station carries a sphere of the
// local surface radius, the finger carries eight. Overlapping pairs exchange
// a normal penalty force k*d along the center line; no tangential friction.

namespace exosim {

inline std::vector<ContactSphere> rod_contact_spheres(const RodModel& m,
                                                      const RodKinematics& rk) {
    std::vector<ContactSphere> s;
    s.reserve(rk.station_g.size());
    for (size_t i = 0; i < rk.station_g.size(); ++i)
        s.push_back({ContactSphere::Owner::Rod, int(i), rk.station_g[i].r,
                     m.radius_at(rk.station_X[i])});
    return s;
}

inline std::vector<ContactSphere> rod_contact_spheres(const RodModel& m,
                                                      const VectorXd& q) {
    return rod_contact_spheres(m, rod_kinematics(m, q, false));
}

struct ContactResult {
    std::array<Vec3, 8> finger_force{}; // net force on each finger sphere
    std::vector<Vec3> rod_force;        // reaction on each rod station
    MatrixXd overlap;                   // interference depth d per (station, C_i); <=0 means separated
    int active_pairs = 0;

    ContactResult() {
        finger_force.fill(Vec3::Zero());
    }

    // force-magnitude label for sphere C_i
    double magnitude(int i) const { return finger_force[size_t(i)].norm(); }
};

using ContactSet = std::vector<std::pair<int, int>>; // (rod station, finger sphere)

// Interference model: d = R_i + R_s - |r_c|, force k*d along the center line
// for d > 0. The finger is pushed away from the rod, the rod carries the
// equal and opposite reaction, so the pair sums to zero exactly.
//
// When `fixed_set` is given the listed pairs act bilaterally (force k*d*n for
// any d) and all others are off; the statics solver iterates on that set so
// each inner solve is smooth. A state whose active set matches its overlap
// signs satisfies the plain unilateral law exactly.
inline ContactResult pairwise_contact(const std::vector<ContactSphere>& rod_spheres,
                                      const std::array<ContactSphere, 8>& finger_spheres,
                                      double k, const ContactSet* fixed_set = nullptr) {
    ContactResult res;
    res.rod_force.assign(rod_spheres.size(), Vec3::Zero());
    res.overlap.setZero(Eigen::Index(rod_spheres.size()), 8);

    auto pair_force = [&](int s, int i) {
        const Vec3 rc = rod_spheres[size_t(s)].center - finger_spheres[size_t(i)].center;
        const double dist = rc.norm();
        if (dist < 1e-12) throw std::runtime_error("degenerate contact");
        const Vec3 f = (k * res.overlap(s, i) / dist) * rc;
        res.rod_force[size_t(s)] += f;
        res.finger_force[size_t(i)] -= f;
        ++res.active_pairs;
    };

    for (size_t s = 0; s < rod_spheres.size(); ++s)
        for (int i = 0; i < 8; ++i) {
            const Vec3 rc = rod_spheres[s].center - finger_spheres[size_t(i)].center;
            res.overlap(Eigen::Index(s), i) =
                finger_spheres[size_t(i)].radius + rod_spheres[s].radius - rc.norm();
        }

    if (fixed_set) {
        for (auto [s, i] : *fixed_set) pair_force(s, i);
    } else {
        for (int s = 0; s < int(rod_spheres.size()); ++s)
            for (int i = 0; i < 8; ++i)
                if (res.overlap(s, i) > 0.0) pair_force(s, i);
    }
    return res;
}

// pairs with positive interference
inline ContactSet active_set(const ContactResult& c) {
    ContactSet set;
    for (Eigen::Index s = 0; s < c.overlap.rows(); ++s)
        for (int i = 0; i < 8; ++i)
            if (c.overlap(s, i) > 0.0) set.emplace_back(int(s), i);
    return set;
}

// Project contact point forces onto the generalized coordinates:
// F_rod = sum_s J_s^T [0; R_s^T f_s], tau_finger = J_C^T f_C.
// Requires rk computed with Jacobians.
inline VectorXd rod_generalized_forces(const RodModel& m, const RodKinematics& rk,
                                       const std::vector<Vec3>& station_force) {
    VectorXd F = VectorXd::Zero(m.dof());
    for (size_t s = 0; s < station_force.size(); ++s) {
        if (station_force[s].isZero()) continue;
        Vec6 wrench;
        wrench << Vec3::Zero(), rk.station_g[s].R.transpose() * station_force[s];
        F += rk.station_J[s].transpose() * wrench;
    }
    return F;
}

} // namespace exosim
