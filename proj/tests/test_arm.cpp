#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metadyn/arm.hpp"
#include "metadyn/errors.hpp"
#include "metadyn/rng.hpp"

using namespace metadyn;

namespace {

ArmModel plain_model(int n_links, std::vector<double> lengths) {
    ArmModel m = default_arm_model(n_links);
    for (int i = 0; i < n_links; ++i) m.link_lengths[i] = lengths[static_cast<size_t>(i)];
    for (int i = 0; i < n_links; ++i) m.com_offsets[i] = 0.5 * m.link_lengths[i];
    return m;
}

ArmModel random_model(Rng& rng, int n_links) {
    ArmModel m = default_arm_model(n_links);
    for (int i = 0; i < n_links; ++i) {
        m.link_lengths[i] = rng.uniform(0.2, 0.8);
        m.link_masses[i] = rng.uniform(0.5, 2.0);
        m.com_offsets[i] = rng.uniform(0.1, 0.9) * m.link_lengths[i];
        m.link_inertias[i] = rng.uniform(0.005, 0.05);
    }
    return m;
}

Eigen::VectorXd random_q(Rng& rng, int n) {
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) q[i] = rng.uniform(-2.0, 2.0);
    return q;
}

// Independent oracle: chain of explicit 2x2 rotations and translations.
Eigen::Vector2d fk_oracle(const ArmModel& m, const Eigen::VectorXd& q) {
    Eigen::Matrix2d R = Eigen::Matrix2d::Identity();
    Eigen::Vector2d p = Eigen::Vector2d::Zero();
    for (int i = 0; i < m.n_links; ++i) {
        Eigen::Matrix2d Ri;
        Ri << std::cos(q[i]), -std::sin(q[i]), std::sin(q[i]), std::cos(q[i]);
        R = R * Ri;
        p += R * Eigen::Vector2d(m.link_lengths[i], 0.0);
    }
    return p;
}

} // namespace

TEST_CASE("forward kinematics axis-aligned chains") {
    const ArmModel one = plain_model(1, {1.0});
    Eigen::Vector2d p;
    double theta;
    forward_kinematics(one, Eigen::VectorXd::Zero(1), p, theta);
    CHECK(p.x() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(p.y() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(theta == doctest::Approx(0.0));

    const ArmModel two = plain_model(2, {1.0, 1.0});
    Eigen::VectorXd q(2);
    q << M_PI / 2.0, 0.0;
    forward_kinematics(two, q, p, theta);
    CHECK(p.x() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.y() == doctest::Approx(2.0).epsilon(1e-12));
    // Orientation is the plain joint-angle sum.
    CHECK(theta == doctest::Approx(M_PI / 2.0));
}

TEST_CASE("forward kinematics matches the rotation-matrix chain oracle") {
    const ArmModel m = plain_model(3, {1.0, 0.8, 0.5});
    Eigen::VectorXd q(3);
    q << 0.3, -0.2, 0.5;
    Eigen::Vector2d p;
    double theta;
    forward_kinematics(m, q, p, theta);
    const Eigen::Vector2d expected = fk_oracle(m, q);
    CHECK(p.x() == doctest::Approx(expected.x()).epsilon(1e-12));
    CHECK(p.y() == doctest::Approx(expected.y()).epsilon(1e-12));
    CHECK(theta == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("forward kinematics rejects dimension mismatch") {
    const ArmModel m = plain_model(2, {1.0, 1.0});
    Eigen::Vector2d p;
    double theta;
    CHECK_THROWS_AS(forward_kinematics(m, Eigen::VectorXd::Zero(3), p, theta), ConfigError);
}

TEST_CASE("jacobian hand cases") {
    const ArmModel one = plain_model(1, {1.0});
    Eigen::MatrixXd J = jacobian(one, Eigen::VectorXd::Zero(1));
    CHECK(J(0, 0) == doctest::Approx(0.0));
    CHECK(J(1, 0) == doctest::Approx(1.0));
    CHECK(J(2, 0) == doctest::Approx(1.0));

    const ArmModel two = plain_model(2, {1.0, 1.0});
    J = jacobian(two, Eigen::VectorXd::Zero(2));
    CHECK(J(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(J(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(J(1, 0) == doctest::Approx(2.0));
    CHECK(J(1, 1) == doctest::Approx(1.0));
    CHECK(J(2, 0) == doctest::Approx(1.0));
    CHECK(J(2, 1) == doctest::Approx(1.0));
}

TEST_CASE("jacobian matches central finite differences over 100 random samples") {
    Rng rng(42);
    const double h = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(4));
        const ArmModel m = random_model(rng, n);
        const Eigen::VectorXd q = random_q(rng, n);
        const Eigen::MatrixXd J = jacobian(m, q);
        double max_err = 0.0;
        for (int k = 0; k < n; ++k) {
            Eigen::VectorXd qp = q, qm = q;
            qp[k] += h;
            qm[k] -= h;
            Eigen::Vector2d pp, pm;
            double tp, tm;
            forward_kinematics(m, qp, pp, tp);
            forward_kinematics(m, qm, pm, tm);
            max_err = std::max(max_err, std::abs((pp.x() - pm.x()) / (2 * h) - J(0, k)));
            max_err = std::max(max_err, std::abs((pp.y() - pm.y()) / (2 * h) - J(1, k)));
            max_err = std::max(max_err, std::abs((tp - tm) / (2 * h) - J(2, k)));
        }
        CHECK(max_err < 1e-6);
    }
}

TEST_CASE("inertia matrix is symmetric positive definite at random states") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(4));
        const ArmModel m = random_model(rng, n);
        ArmState s;
        s.q = random_q(rng, n);
        s.qdot = random_q(rng, n);
        const DynamicsTerms terms = dynamics_terms(m, s);
        CHECK((terms.M - terms.M.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::LLT<Eigen::MatrixXd> llt(terms.M);
        CHECK(llt.info() == Eigen::Success);
    }
}

TEST_CASE("single pendulum inertia and gravity") {
    ArmModel m = plain_model(1, {1.0});
    m.link_masses[0] = 1.0;
    m.com_offsets[0] = 0.5;
    m.link_inertias[0] = 1.0 / 12.0;
    ArmState s;
    s.q = Eigen::VectorXd::Zero(1);
    s.qdot = Eigen::VectorXd::Zero(1);
    const DynamicsTerms terms = dynamics_terms(m, s);
    CHECK(terms.M(0, 0) == doctest::Approx(1.0 * 0.25 + 1.0 / 12.0).epsilon(1e-12));

    s.q[0] = M_PI / 2.0; // link pointing straight up -> zero gravity torque
    const DynamicsTerms up = dynamics_terms(m, s);
    CHECK(std::abs(up.g[0]) < 1e-12);
}

TEST_CASE("(Mdot - 2C) is skew-symmetric") {
    Rng rng(99);
    const double h = 1e-7;
    for (int trial = 0; trial < 3; ++trial) {
        const int n = 3;
        const ArmModel m = random_model(rng, n);
        ArmState s;
        s.q = random_q(rng, n);
        s.qdot = random_q(rng, n);
        const DynamicsTerms terms = dynamics_terms(m, s);

        // Mdot by central finite differences along qdot.
        ArmState sp = s, sm = s;
        sp.q += h * s.qdot;
        sm.q -= h * s.qdot;
        const Eigen::MatrixXd Mdot =
            (dynamics_terms(m, sp).M - dynamics_terms(m, sm).M) / (2.0 * h);
        const Eigen::MatrixXd skew = Mdot - 2.0 * terms.C;
        for (int trial_v = 0; trial_v < 10; ++trial_v) {
            const Eigen::VectorXd v = random_q(rng, n);
            CHECK(std::abs(v.dot(skew * v)) < 1e-8 * std::max(1.0, v.squaredNorm()));
        }
    }
}

TEST_CASE("forward dynamics hand cases and residual") {
    ArmModel m = plain_model(1, {1.0});
    m.link_masses[0] = 1.0;
    m.com_offsets[0] = 0.5;
    m.link_inertias[0] = 1.0 / 12.0;
    m.joint_damping[0] = 0.0;
    m.joint_stiffness[0] = 0.0;
    m.gravity = 9.81;

    ArmState s;
    s.q = Eigen::VectorXd::Constant(1, M_PI / 2.0);
    s.qdot = Eigen::VectorXd::Zero(1);
    CHECK(std::abs(forward_dynamics(m, s, Eigen::VectorXd::Zero(1))[0]) < 1e-12);

    s.q[0] = 0.0;
    const double qdd = forward_dynamics(m, s, Eigen::VectorXd::Zero(1))[0];
    CHECK(qdd == doctest::Approx(-14.715).epsilon(1e-9));

    // Substitute the solution back: M qdd + C qd + g + D qd + K (q - rest) = tau.
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(4));
        const ArmModel rm = random_model(rng, n);
        ArmState rs;
        rs.q = random_q(rng, n);
        rs.qdot = random_q(rng, n);
        const Eigen::VectorXd tau = random_q(rng, n);
        const Eigen::VectorXd qdd2 = forward_dynamics(rm, rs, tau);
        const DynamicsTerms t = dynamics_terms(rm, rs);
        const Eigen::VectorXd residual =
            t.M * qdd2 + t.C * rs.qdot + t.g + rm.joint_damping.cwiseProduct(rs.qdot) +
            rm.joint_stiffness.cwiseProduct(rs.q - rm.rest_positions) - tau;
        CHECK(residual.cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("step is pure and keeps time bookkeeping") {
    ArmModel m = plain_model(2, {1.0, 0.8});
    m.gravity = 0.0;
    m.joint_stiffness.setZero();
    m.joint_damping.setZero();
    ArmState s;
    s.q = Eigen::VectorXd::Constant(2, 0.3);
    s.qdot = Eigen::VectorXd::Zero(2);
    const ArmState next = step(m, s, Eigen::VectorXd::Zero(2), 0.01);
    CHECK(next.q == s.q);
    CHECK(next.qdot == s.qdot);
    CHECK(next.t == doctest::Approx(0.01));

    const ArmState again = step(m, s, Eigen::VectorXd::Zero(2), 0.01);
    CHECK(again.q == next.q); // bit-identical on identical inputs
    CHECK(again.qdot == next.qdot);
}

TEST_CASE("undamped pendulum small-oscillation period within 1 percent") {
    ArmModel m = plain_model(1, {1.0});
    m.link_masses[0] = 1.0;
    m.com_offsets[0] = 0.5;
    m.link_inertias[0] = 1.0 / 12.0;
    m.joint_damping[0] = 0.0;
    m.joint_stiffness[0] = 0.0;
    m.q_limit_lower[0] = -10.0;
    m.q_limit_upper[0] = 10.0;
    m.floor_y = -10.0;

    // Small swing about the hanging equilibrium (-pi/2 with gravity on -y).
    const double amplitude = 0.01;
    ArmState s;
    s.q = Eigen::VectorXd::Constant(1, -M_PI / 2.0 + amplitude);
    s.qdot = Eigen::VectorXd::Zero(1);

    const double I_total = m.link_masses[0] * 0.25 + m.link_inertias[0];
    const double T_expected = 2.0 * M_PI * std::sqrt(I_total / (m.link_masses[0] * 9.81 * 0.5));

    const double dt = 1.0 / 6000.0;
    const Eigen::VectorXd tau = Eigen::VectorXd::Zero(1);
    double prev_q = s.q[0];
    std::vector<double> upward_crossings;
    for (int k = 0; k < static_cast<int>(3.5 * T_expected / dt); ++k) {
        s = step(m, s, tau, dt);
        if (prev_q < -M_PI / 2.0 && s.q[0] >= -M_PI / 2.0) {
            // Linear interpolation of the crossing instant.
            const double frac = (-M_PI / 2.0 - prev_q) / (s.q[0] - prev_q);
            upward_crossings.push_back(s.t - dt + frac * dt);
        }
        prev_q = s.q[0];
    }
    REQUIRE(upward_crossings.size() >= 3);
    const double period = upward_crossings[2] - upward_crossings[1];
    CHECK(std::abs(period - T_expected) / T_expected < 0.01);
}

TEST_CASE("semi-implicit Euler is first-order convergent") {
    ArmModel m = plain_model(1, {1.0});
    m.joint_damping[0] = 0.0;
    m.joint_stiffness[0] = 0.0;
    ArmState s0;
    s0.q = Eigen::VectorXd::Constant(1, 0.4);
    s0.qdot = Eigen::VectorXd::Zero(1);
    const Eigen::VectorXd tau = Eigen::VectorXd::Zero(1);

    const auto integrate_to = [&](double dt, double t_end) {
        ArmState s = s0;
        const int steps = static_cast<int>(std::lround(t_end / dt));
        for (int i = 0; i < steps; ++i) s = step(m, s, tau, dt);
        return s.q[0];
    };
    const double reference = integrate_to(1e-5, 0.5);
    const double err_h = std::abs(integrate_to(2e-3, 0.5) - reference);
    const double err_h2 = std::abs(integrate_to(1e-3, 0.5) - reference);
    const double ratio = err_h / err_h2;
    CHECK(ratio > 1.5);
    CHECK(ratio < 2.6);
}

TEST_CASE("energy drift below 2 percent over 10 s for the conservative arm") {
    ArmModel m = default_arm_model(3);
    m.joint_damping.setZero();
    m.joint_stiffness.setZero();
    m.q_limit_lower.setConstant(-100.0);
    m.q_limit_upper.setConstant(100.0);
    m.floor_y = -100.0;
    // Moderate swing released near the hanging pose.
    ArmState s;
    s.q = Eigen::VectorXd::Zero(3);
    s.q << -M_PI / 2.0 + 0.3, 0.15, -0.1;
    s.qdot = Eigen::VectorXd::Zero(3);

    // Drift measured against the motion's kinetic-energy swing.
    const double E0 = total_energy(m, s);
    const Eigen::VectorXd tau = Eigen::VectorXd::Zero(3);
    const double dt = 1.0 / 600.0;
    double e_min = E0, e_max = E0;
    ArmState sim = s;
    double kinetic_peak = 0.0;
    for (int k = 0; k < 6000; ++k) {
        sim = step(m, sim, tau, dt);
        const double e = total_energy(m, sim);
        e_min = std::min(e_min, e);
        e_max = std::max(e_max, e);
        ArmState rest = sim;
        rest.qdot.setZero();
        kinetic_peak = std::max(kinetic_peak, e - total_energy(m, rest));
    }
    CHECK((e_max - e_min) / std::max(kinetic_peak, 1e-9) < 0.02);
}

TEST_CASE("violation checks") {
    ArmModel m = default_arm_model(3);
    m.floor_y = -10.0;
    ArmState s;
    s.q = Eigen::VectorXd::Zero(3);
    s.qdot = Eigen::VectorXd::Zero(3);
    CHECK_FALSE(check_violations(m, s, Eigen::VectorXd::Constant(3, 0.1)).any());

    Eigen::VectorXd tau = Eigen::VectorXd::Constant(3, 0.1);
    tau[0] = 1.01 * m.torque_limits[0];
    const ViolationSet v = check_violations(m, s, tau);
    CHECK(v.torque_saturation);
    CHECK_FALSE(v.position_limit);

    s.q[1] = m.q_limit_upper[1];
    CHECK(check_violations(m, s, Eigen::VectorXd::Zero(3)).position_limit);

    s.q[1] = 0.0;
    m.floor_y = -0.05;
    s.q[0] = -1.2; // arm dips below the floor
    CHECK(check_violations(m, s, Eigen::VectorXd::Zero(3)).floor_collision);
}

TEST_CASE("self collision detected for a folded three-link arm") {
    ArmModel m = plain_model(3, {1.0, 1.0, 1.0});
    m.q_limit_lower.setConstant(-10.0);
    m.q_limit_upper.setConstant(10.0);
    m.floor_y = -10.0;
    ArmState s;
    // Link 2 folds back over link 1, link 3 sweeps down across link 1
    // (the distal segment crosses y=0 at x ~ 0.29).
    s.q = Eigen::VectorXd::Zero(3);
    s.q << 0.0, 2.0, 2.4;
    s.qdot = Eigen::VectorXd::Zero(3);
    CHECK(check_violations(m, s, Eigen::VectorXd::Zero(3)).self_collision);

    s.q << 0.0, 0.5, 0.5; // gentle arc, no contact
    CHECK_FALSE(check_violations(m, s, Eigen::VectorXd::Zero(3)).self_collision);
}
