#include <catch2/catch_amalgamated.hpp>

#include "exosim/contact.hpp"
#include "exosim/finger.hpp"
#include "exosim/rng.hpp"
#include "exosim/statics.hpp"
#include "exosim/verify.hpp"

using namespace exosim;

namespace {
// stiffer linear-taper rod: fast, well-behaved solves for the solver tests
RodModel thick_rod() {
    RodModel rod;
    rod.length = 0.095;
    rod.radius = [](double xl) { return 0.01 + xl * (0.005 - 0.01); };
    return rod;
}
} // namespace

TEST_CASE("finger forward kinematics") {
    FingerModel m;

    SECTION("straight pose sphere stations") {
        const FingerPose p = finger_fk(m, Vec3::Zero());
        const double expect_x[8] = {0.0, 0.0225, 0.045, 0.05765, 0.0703, 0.0821, 0.0939, 0.0944};
        for (int i = 0; i < 8; ++i) {
            CHECK(p.spheres[size_t(i)].center.x() == Catch::Approx(expect_x[i]).margin(1e-12));
            CHECK(p.spheres[size_t(i)].center.y() == 0.0);
            CHECK(p.spheres[size_t(i)].center.z() == 0.0);
        }
        CHECK(p.fingertip.x() == Catch::Approx(0.0949).margin(1e-12));
        // taper radii: base value at the link base, midpoint value at the CoM
        CHECK(p.spheres[0].radius == Catch::Approx(0.0108));
        CHECK(p.spheres[1].radius == Catch::Approx(0.008875));
    }

    SECTION("base joint rotation moves the chain rigidly") {
        const FingerPose p0 = finger_fk(m, Vec3::Zero());
        const FingerPose p1 = finger_fk(m, Vec3(M_PI / 2, 0, 0));
        const Mat3 R = rot_y(M_PI / 2);
        for (int i = 0; i < 8; ++i) {
            const Vec3 expect = R * p0.spheres[size_t(i)].center;
            CHECK((p1.spheres[size_t(i)].center - expect).norm() < 1e-12);
        }
    }

    SECTION("limit clamping flag") {
        const FingerPose p = finger_fk(m, Vec3(2.0, 0, 0), true);
        CHECK(p.clamped);
        CHECK(p.theta[0] == Catch::Approx(M_PI / 2));
        CHECK_FALSE(finger_fk(m, Vec3(0.5, 0.1, 0.1), true).clamped);
    }
}

TEST_CASE("pairwise sphere contact") {
    FingerModel fm;
    const FingerPose pose = finger_fk(fm, Vec3::Zero());

    SECTION("separated spheres produce no force") {
        std::vector<ContactSphere> rod = {{ContactSphere::Owner::Rod, 0, Vec3(0, 0, 1.0), 0.01}};
        const ContactResult c = pairwise_contact(rod, pose.spheres, 1000.0);
        CHECK(c.active_pairs == 0);
        for (int i = 0; i < 8; ++i) CHECK(c.magnitude(i) == 0.0);
    }

    SECTION("direct interference arithmetic") {
        // radii 0.01 both, centers 0.015 apart, k = 1000 -> overlap 0.005, 5 N
        std::vector<ContactSphere> rod = {
            {ContactSphere::Owner::Rod, 0, pose.spheres[3].center + Vec3(0, 0, 0.015), 0.01}};
        std::array<ContactSphere, 8> fs = pose.spheres;
        for (auto& s : fs) s.center += Vec3(5, 0, 0); // move everything else away
        fs[3] = pose.spheres[3];
        fs[3].radius = 0.01;
        const ContactResult c = pairwise_contact(rod, fs, 1000.0);
        CHECK(c.magnitude(3) == Catch::Approx(5.0).epsilon(1e-12));
        // repulsive: the finger sphere is pushed away from the rod sphere
        CHECK(c.finger_force[3].z() == Catch::Approx(-5.0).epsilon(1e-12));
        CHECK(c.rod_force[0].z() == Catch::Approx(5.0).epsilon(1e-12));
    }

    SECTION("action and reaction cancel exactly") {
        Rng rng(3);
        std::vector<ContactSphere> rod;
        for (int s = 0; s < 30; ++s)
            rod.push_back({ContactSphere::Owner::Rod, s,
                           Vec3(rng.uniform(0, 0.1), 0, rng.uniform(-0.01, 0.02)),
                           rng.uniform(0.004, 0.01)});
        const ContactResult c = pairwise_contact(rod, pose.spheres, 2000.0);
        Vec3 total = Vec3::Zero();
        for (const auto& f : c.finger_force) total += f;
        for (const auto& f : c.rod_force) total += f;
        CHECK(total.norm() == 0.0);
    }

    SECTION("force magnitude is continuous and monotone in the overlap") {
        std::array<ContactSphere, 8> fs = pose.spheres;
        auto mag_at = [&](double dist) {
            std::vector<ContactSphere> rod = {
                {ContactSphere::Owner::Rod, 0, fs[2].center + Vec3(0, 0, dist), 0.01}};
            return pairwise_contact(rod, fs, 2000.0).magnitude(2);
        };
        const double touch = fs[2].radius + 0.01;
        CHECK(mag_at(touch + 1e-9) == 0.0);
        CHECK(mag_at(touch - 1e-9) < 1e-4); // force -> 0 as overlap -> 0+
        double prev = -1;
        for (double d = touch; d > touch - 0.005; d -= 1e-4) {
            const double f = mag_at(d);
            CHECK(f >= prev);
            prev = f;
        }
    }

    SECTION("coincident centers are rejected") {
        std::vector<ContactSphere> rod = {
            {ContactSphere::Owner::Rod, 0, pose.spheres[0].center, 0.01}};
        CHECK_THROWS_WITH(pairwise_contact(rod, pose.spheres, 1000.0),
                          "degenerate contact");
    }
}

TEST_CASE("generalized contact forces") {
    CoupledSystem sys = make_system(RodModel{});
    const int n = sys.rod.dof();

    SECTION("no contact, no generalized force") {
        const VectorXd q = VectorXd::Zero(n);
        const auto rk = rod_kinematics(sys.rod, q, true);
        std::vector<Vec3> zero_forces(size_t(sys.rod.station_count), Vec3::Zero());
        CHECK(rod_generalized_forces(sys.rod, rk, zero_forces).isZero(0.0));
    }

    SECTION("tip force matches the virtual-work finite difference") {
        Rng rng(21);
        const VectorXd q = verify::random_coordinates(rng, sys.rod, 5.0, 0.1);
        const Vec3 f_world(0, 0, -0.01);
        const auto rk = rod_kinematics(sys.rod, q, true);
        std::vector<Vec3> forces(size_t(sys.rod.station_count), Vec3::Zero());
        forces.back() = f_world;
        const VectorXd F = rod_generalized_forces(sys.rod, rk, forces);
        // independent: F_j = f . d(tip position)/dq_j
        const double h = 1e-6;
        for (int j = 0; j < n; j += 3) {
            VectorXd qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const Vec3 dp = (tip_pose(sys.rod, qp).r - tip_pose(sys.rod, qm).r) / (2 * h);
            CHECK(F[j] == Catch::Approx(f_world.dot(dp)).margin(1e-5 * 0.01));
        }
    }

    SECTION("force on the base joint axis exerts no torque") {
        FingerModel fm;
        const FingerPose pose = finger_fk(fm, Vec3(0.3, 0.2, 0.1));
        std::array<Vec3, 8> forces{};
        forces[0] = Vec3(0, 0, -2.0); // C_0 sits on the joint-1 axis
        const Vec3 tau = finger_generalized_torques(pose, forces);
        CHECK(tau[0] == 0.0);
        CHECK(tau[1] == 0.0);
        CHECK(tau[2] == 0.0);
    }

    SECTION("planarity: all out-of-plane components stay zero") {
        Rng rng(9);
        const VectorXd q = verify::random_coordinates(rng, sys.rod);
        const auto rk = rod_kinematics(sys.rod, q, false);
        for (const auto& g : rk.station_g) CHECK(g.r.y() == 0.0);
        const FingerPose pose = finger_fk(FingerModel{}, Vec3(0.7, 0.4, 0.2));
        for (const auto& s : pose.spheres) CHECK(s.center.y() == 0.0);
    }
}

TEST_CASE("static equilibrium solver") {
    SECTION("unloaded reference state") {
        CoupledSystem sys = make_system(RodModel{});
        const SystemState z = zero_state(sys);
        CHECK(residual(sys, z).lpNorm<Eigen::Infinity>() == 0.0);
        const SystemState st = solve_equilibrium(sys, 0.0, z);
        CHECK(st.converged);
        CHECK(st.iterations <= 2);
        CHECK(st.q.isZero(0.0));
    }

    SECTION("actuation scaling: u = 0 removes the B term exactly") {
        CoupledSystem sys = make_system(RodModel{});
        Rng rng(2);
        const VectorXd q = verify::random_coordinates(rng, sys.rod, 2.0, 0.05);
        const Vec3 th(0.1, 0.05, 0.02);
        const VectorXd r0 = residual(sys, q, th, 0.0);
        const VectorXd r1 = residual(sys, q, th, 1.0);
        const VectorXd B = actuation_matrix(sys.rod, q);
        CHECK((r1.head(sys.rod.dof()) - (r0.head(sys.rod.dof()) - B)).cwiseAbs().maxCoeff() <
              1e-14);
    }

    SECTION("beam benchmark, constant and tapered sections") {
        auto flat = verify::check_beam_benchmark(false);
        INFO(flat.detail);
        CHECK(flat.pass);
        auto taper = verify::check_beam_benchmark(true);
        INFO(taper.detail);
        CHECK(taper.pass);
    }

    SECTION("converged states re-evaluate below tolerance") {
        CoupledSystem sys = make_system(thick_rod());
        SystemState st = zero_state(sys);
        for (double u : {0.01, 0.03, 0.05}) {
            st = solve_equilibrium(sys, u, st);
            REQUIRE(st.converged);
            const VectorXd r = residual(sys, st);
            CHECK(r.lpNorm<Eigen::Infinity>() < 1e-8);
        }
    }

    SECTION("warm and cold solves agree where both converge") {
        CoupledSystem sys = make_system(thick_rod());
        SystemState warm = zero_state(sys);
        for (double u : {0.02, 0.04}) warm = solve_equilibrium(sys, u, warm);
        REQUIRE(warm.converged);
        const SystemState cold = solve_equilibrium(sys, 0.04, zero_state(sys));
        REQUIRE(cold.converged);
        CHECK((warm.q - cold.q).norm() < 1e-6);
    }

    SECTION("elastic energy equals the actuation line work without contact") {
        CoupledSystem sys = make_system(RodModel{});
        sys.finger_enabled = false;
        SystemState st = zero_state(sys);
        double work = 0;
        double prev_len = actuation_line_length(sys.rod, st.q);
        double prev_u = 0;
        const MatrixXd K = stiffness_matrix(sys.rod);
        for (int i = 1; i <= 30; ++i) {
            const double u = 0.3 * i / 30.0;
            st = solve_equilibrium(sys, u, st);
            REQUIRE(st.converged);
            const double len = actuation_line_length(sys.rod, st.q);
            work += 0.5 * (u + prev_u) * (len - prev_len); // trapezoid in u dl
            prev_len = len;
            prev_u = u;
        }
        const double elastic = 0.5 * st.q.dot(K * st.q);
        CHECK(std::abs(work - elastic) / elastic < 0.01);
    }

    SECTION("joint limits hold within the penalty zone") {
        CoupledSystem sys = make_system(thick_rod());
        SystemState st = zero_state(sys);
        for (double u : {0.05, 0.1, 0.2, 0.4}) {
            st = solve_equilibrium(sys, u, st);
            REQUIRE(st.converged);
            for (int j = 0; j < 3; ++j) {
                CHECK(st.theta[j] > sys.finger.limit_lo[j] - 2.0 * M_PI / 180.0);
                CHECK(st.theta[j] < sys.finger.limit_hi[j] + 2.0 * M_PI / 180.0);
            }
        }
    }

    SECTION("single zero-actuation schedule") {
        CoupledSystem sys = make_system(RodModel{});
        const SweepResult res = actuation_sweep(sys, {0.0});
        REQUIRE(res.states.size() == 1);
        CHECK(res.states[0].converged);
        CHECK(res.states[0].q.isZero(0.0));
        CHECK_FALSE(res.aborted);
    }
}
