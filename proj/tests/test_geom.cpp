#include <catch2/catch_amalgamated.hpp>

#include "exosim/lie.hpp"
#include "exosim/rng.hpp"
#include "exosim/rod.hpp"
#include "exosim/verify.hpp"

using namespace exosim;

TEST_CASE("hat builds the se(3) matrix") {
    CHECK(hat(Twist()).isZero(0.0));

    Twist t(Vec3(0, 0, 1), Vec3::Zero());
    const Mat4 m = hat(t);
    CHECK(m(1, 0) == 1.0);
    CHECK(m(0, 1) == -1.0);
    CHECK(m(2, 0) == 0.0);
    CHECK(m(0, 2) == 0.0);
    CHECK(m.row(3).isZero(0.0));

    Rng rng(11);
    for (int i = 0; i < 50; ++i) {
        Twist r(Vec3(rng.normal(), rng.normal(), rng.normal()),
                Vec3(rng.normal(), rng.normal(), rng.normal()));
        const Twist back = vee(hat(r));
        CHECK(back.angular == r.angular);
        CHECK(back.linear == r.linear);
    }
}

TEST_CASE("exp map") {
    const Transform id = exp_map(Twist());
    CHECK(id.R.isIdentity(0.0));
    CHECK(id.r.isZero(0.0));

    const Transform tr = exp_map(Twist(Vec3::Zero(), Vec3(1, 2, 3)));
    CHECK(tr.R.isIdentity(1e-15));
    CHECK((tr.r - Vec3(1, 2, 3)).norm() < 1e-15);

    // against the truncated power series
    const Twist x(Vec3(0, 0, M_PI / 2), Vec3(1, 0, 0));
    CHECK((exp_map(x).matrix() - verify::exp_series(x)).cwiseAbs().maxCoeff() < 1e-12);

    auto r = verify::check_exp_series(2024, 1000);
    INFO(r.name << " err " << r.value);
    CHECK(r.pass);
}

TEST_CASE("adjoint of a transform") {
    CHECK(adjoint_Ad(Transform()).isIdentity(0.0));

    const Transform rot = exp_map(Twist(Vec3(0.3, -0.2, 0.9), Vec3::Zero()));
    const Mat6 A = adjoint_Ad(rot);
    CHECK(A.topRightCorner<3, 3>().isZero(0.0));
    CHECK(A.bottomLeftCorner<3, 3>().isZero(1e-15)); // r = 0 kills the coupling block
    CHECK((A.topLeftCorner<3, 3>() - rot.R).norm() == 0.0);

    auto r = verify::check_adjoint_composition();
    CHECK(r.pass);
}

TEST_CASE("adjoint of a twist") {
    CHECK(adjoint_ad(Twist()).isZero(0.0));

    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        Twist a(Vec3(rng.normal(), rng.normal(), rng.normal()),
                Vec3(rng.normal(), rng.normal(), rng.normal()));
        Twist b(Vec3(rng.normal(), rng.normal(), rng.normal()),
                Vec3(rng.normal(), rng.normal(), rng.normal()));
        // self-bracket has zero angular part; antisymmetry of the bracket
        CHECK(Vec6(adjoint_ad(a) * a.vec()).head<3>().norm() == 0.0);
        const Vec6 lhs = adjoint_ad(a) * b.vec();
        const Vec6 rhs = -(adjoint_ad(b) * a.vec());
        CHECK((lhs - rhs).norm() < 1e-12);
    }

    // d/dt Ad(exp(t xi)) at 0 equals ad(xi)
    const Twist xi(Vec3(0.4, -0.1, 0.25), Vec3(0.3, 0.8, -0.5));
    const double h = 1e-6;
    const Mat6 fd =
        (adjoint_Ad(exp_map(Twist(Vec3(h * xi.angular), Vec3(h * xi.linear)))) -
         adjoint_Ad(exp_map(Twist(Vec3(-h * xi.angular), Vec3(-h * xi.linear))))) /
        (2 * h);
    CHECK((fd - adjoint_ad(xi)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("strain field evaluation") {
    RodModel m;
    VectorXd q = VectorXd::Zero(m.dof());

    for (double X : {0.0, 0.013, 0.05, 0.1}) {
        const Twist xi = strain_at(m, q, X);
        CHECK(xi.vec() == reference_strain().vec());
    }

    // nodal interpolation: a single nodal coordinate is reproduced at its node
    const int node = 7;
    q[node] = 2.5;
    const double Xn = m.length * node / 10.0;
    CHECK(strain_at(m, q, Xn).angular.y() == Catch::Approx(2.5).margin(1e-14));

    // mid-element value matches an independent quadratic Lagrange interpolation
    q.setZero();
    Rng rng(5);
    for (int i = 0; i < m.dof(); ++i) q[i] = rng.normal();
    const double he = m.length / 5.0;
    const double X = 2 * he + 0.37 * he; // inside element 2
    auto nodal = [&](int j) { return strain_at(m, q, m.length * j / 10.0).angular.y(); };
    const double t = 0.37;
    const double lagr = nodal(4) * (1 - t) * (1 - 2 * t) + nodal(5) * 4 * t * (1 - t) +
                        nodal(6) * t * (2 * t - 1);
    CHECK(strain_at(m, q, X).angular.y() == Catch::Approx(lagr).epsilon(1e-12));

    CHECK_THROWS_AS(strain_at(m, q, -0.01), std::out_of_range);
    CHECK_THROWS_AS(strain_at(m, q, m.length + 0.01), std::out_of_range);
}

TEST_CASE("forward kinematics") {
    RodModel m;
    VectorXd q = VectorXd::Zero(m.dof());

    SECTION("straight rod") {
        const Transform tip = tip_pose(m, q);
        CHECK((tip.r - (m.base_pose.r + Vec3(m.length, 0, 0))).norm() < 1e-14);
        CHECK(tip.R.isIdentity(1e-14));
    }

    SECTION("constant curvature arc") {
        const double kappa = 9.0;
        q.head(m.basis.node_count()).setConstant(kappa);
        const Transform tip = tip_pose(m, q);
        // positive bending about local y curls toward -z in this convention
        const Vec3 expect = m.base_pose.r + Vec3(std::sin(kappa * m.length) / kappa, 0,
                                                 -(1 - std::cos(kappa * m.length)) / kappa);
        CHECK((tip.r - expect).norm() < 1e-6);
    }

    SECTION("dense integration oracle and rotation drift") {
        auto r = verify::check_fk_dense(31, 20);
        INFO("worst tip error " << r.value);
        CHECK(r.pass);

        Rng rng(17);
        const VectorXd qr = verify::random_coordinates(rng, m);
        const auto rk = rod_kinematics(m, qr, false);
        double drift = 0;
        for (const auto& g : rk.station_g) drift = std::max(drift, g.rotation_defect());
        CHECK(drift < 1e-9);
    }

    SECTION("quadrature order on a smooth bending field") {
        Rng rng(23);
        RodModel fine = m;
        VectorXd qs(m.dof());
        const int nn = m.basis.node_count();
        for (int i = 0; i < nn; ++i) qs[i] = 10.0 + 5.0 * std::sin(2.0 * i);
        for (int i = nn; i < m.dof(); ++i) qs[i] = 0.1;
        const Transform ref = verify::dense_fk(m, qs, m.length, 200000);
        double prev_err = 0;
        double order = 0;
        for (int stations : {11, 21, 41}) {
            fine.station_count = stations;
            const double err = (tip_pose(fine, qs).r - ref.r).norm();
            if (prev_err > 0) order = std::log2(prev_err / err);
            prev_err = err;
        }
        CHECK(order >= 3.5);
    }
}

TEST_CASE("geometric Jacobian") {
    RodModel m;
    VectorXd q = VectorXd::Zero(m.dof());

    SECTION("clamped base") { CHECK(jacobian(m, q, 0.0).isZero(0.0)); }

    SECTION("matches finite differences") {
        auto r = verify::check_jacobian_fd(47, 15);
        INFO("worst relative deviation " << r.value);
        CHECK(r.pass);
    }

    SECTION("columns with support beyond X vanish") {
        Rng rng(7);
        const VectorXd qr = verify::random_coordinates(rng, m);
        const double X = 0.33 * m.length; // inside element 1
        const Mat6xN J = jacobian(m, qr, X);
        // nodes 6..10 live in elements 3 and 4, entirely beyond X
        const int nn = m.basis.node_count();
        for (int node = 6; node < nn; ++node) {
            CHECK(J.col(node).norm() == 0.0);
            CHECK(J.col(nn + node).norm() == 0.0);
        }
    }
}

TEST_CASE("stiffness matrix") {
    RodModel m;

    SECTION("constant section against a fine Riemann sum") {
        m.radius = [](double) { return 0.005; };
        const MatrixXd K = stiffness_matrix(m);
        // independent: Riemann sum of E*I * phi_i phi_j and E*A * phi_i phi_j
        const double S = 0.005;
        const double EI = m.youngs_modulus * M_PI * S * S * S * S / 4.0;
        const double EA = m.youngs_modulus * M_PI * S * S;
        const int nn = m.basis.node_count();
        const int steps = 200000;
        MatrixXd Kref = MatrixXd::Zero(m.dof(), m.dof());
        VectorXd phi;
        for (int i = 0; i < steps; ++i) {
            const double X = (i + 0.5) * m.length / steps;
            m.basis.shape_values(X, m.length, phi);
            const MatrixXd outer = phi * phi.transpose() * (m.length / steps);
            Kref.topLeftCorner(nn, nn) += EI * outer;
            Kref.bottomRightCorner(nn, nn) += EA * outer;
        }
        CHECK((K - Kref).norm() / Kref.norm() < 1e-8);
    }

    SECTION("linearity in the modulus and exact symmetry") {
        const MatrixXd K1 = stiffness_matrix(m);
        RodModel m2 = m;
        m2.youngs_modulus *= 2.0;
        const MatrixXd K2 = stiffness_matrix(m2);
        CHECK((K2 - 2.0 * K1).cwiseAbs().maxCoeff() < 1e-18);
        CHECK((K1 - K1.transpose()).cwiseAbs().maxCoeff() == 0.0);
    }

    SECTION("positive definite for sampled shapes") {
        Rng rng(13);
        for (int t = 0; t < 10; ++t) {
            const RodModel ms = verify::random_shape_model(rng);
            Eigen::LLT<MatrixXd> llt(stiffness_matrix(ms));
            CHECK(llt.info() == Eigen::Success);
        }
    }
}

TEST_CASE("actuation matrix") {
    RodModel m;
    m.radius = [](double) { return 0.005; };
    VectorXd q = VectorXd::Zero(m.dof());

    SECTION("straight rod against a discrete line-work oracle") {
        const VectorXd B = actuation_matrix(m, q);
        // independent route: W_j = d(line length)/dq_j by central differences
        // of a dense polyline of the offset curve
        auto line_length = [&](const VectorXd& qq) {
            const int npts = 4000;
            std::vector<double> Xs(npts + 1);
            for (int i = 0; i <= npts; ++i) Xs[size_t(i)] = m.length * i / npts;
            const auto gs = forward_kinematics(m, qq, Xs);
            double len = 0;
            Vec3 prev;
            for (int i = 0; i <= npts; ++i) {
                const Vec3 p = gs[size_t(i)].r +
                               gs[size_t(i)].R * Vec3(0, 0, m.radius_at(Xs[size_t(i)]));
                if (i > 0) len += (p - prev).norm();
                prev = p;
            }
            return len;
        };
        const double h = 1e-6;
        for (int j : {0, 3, 10, 11, 16, 21}) {
            VectorXd qp = q, qm = q;
            qp[j] += h;
            qm[j] -= h;
            const double fd = (line_length(qp) - line_length(qm)) / (2 * h);
            CHECK(B[j] == Catch::Approx(fd).margin(1e-6));
        }
        // straight rod, constant S: bending rows = +S * basis integral and
        // extension rows = +(basis integral): the line extends under positive
        // actuation, bending the rod toward the finger
        VectorXd phi_int = VectorXd::Zero(m.basis.node_count());
        const int steps = 100000;
        VectorXd phi;
        for (int i = 0; i < steps; ++i) {
            m.basis.shape_values((i + 0.5) * m.length / steps, m.length, phi);
            phi_int += phi * (m.length / steps);
        }
        const int nn = m.basis.node_count();
        CHECK((B.head(nn) - 0.005 * phi_int).cwiseAbs().maxCoeff() < 1e-9);
        CHECK((B.tail(nn) - phi_int).cwiseAbs().maxCoeff() < 1e-9);
    }

    SECTION("zero surface offset kills the bending rows") {
        RodModel thin = m;
        thin.radius = [](double) { return 0.0; };
        const VectorXd B = actuation_matrix(thin, q);
        CHECK(B.head(thin.basis.node_count()).cwiseAbs().maxCoeff() < 1e-15);
    }

    SECTION("zero actuation contributes nothing for any q") {
        Rng rng(19);
        const VectorXd qr = verify::random_coordinates(rng, m);
        const VectorXd B = actuation_matrix(m, qr);
        CHECK((B * 0.0).isZero(0.0));
    }
}
