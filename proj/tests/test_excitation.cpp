#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "metadyn/arm.hpp"
#include "metadyn/datagen.hpp"
#include "metadyn/excitation.hpp"
#include "metadyn/rng.hpp"

using namespace metadyn;

TEST_CASE("multisin hand values at t=0") {
    MultiSinConfig cfg;
    cfg.f_m = 0.2;
    cfg.amplitude_bound = 3.0;
    cfg.amplitudes = {{1.0, 0.0, 0.0, 0.0}};
    cfg.f0 = {0.2};
    CHECK(multisin_torque(cfg, 0, 0.0) == doctest::Approx(1.0));

    cfg.amplitudes = {{0.0, 1.0, 0.0, 0.0}};
    CHECK(multisin_torque(cfg, 0, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("multisin matches an independent term-by-term evaluation") {
    MultiSinConfig cfg;
    cfg.f_m = 0.2;
    cfg.amplitudes = {{1.0, 1.0, 1.0, 1.0}};
    cfg.f0 = {0.2};
    const double t = 1.25;
    const double w0 = 2.0 * M_PI * 0.2;
    // Harmonic ladder [w0, 1.5 w0, 2 w0, 3 w0] evaluated term by term.
    const double expected = std::cos(w0 * t) + std::sin(1.5 * w0 * t) +
                            std::cos(2.0 * w0 * t) + std::sin(3.0 * w0 * t);
    CHECK(multisin_torque(cfg, 0, t) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("multisin amplitude bound holds everywhere") {
    Rng rng(5);
    MultiSinConfig cfg = sample_multisin(3, 0.2, rng);
    for (int j = 0; j < 3; ++j) {
        const double bound = cfg.amplitudes[j].cwiseAbs().sum();
        for (double t = 0.0; t < 30.0; t += 0.01)
            CHECK(std::abs(multisin_torque(cfg, j, t)) <= bound + 1e-12);
    }
}

TEST_CASE("sampled excitation configs respect their interval bounds over many draws") {
    Rng rng(11);
    const double f_m = 0.18;
    for (int i = 0; i < 10000; ++i) {
        const MultiSinConfig ms = sample_multisin(2, f_m, rng);
        for (int j = 0; j < 2; ++j) {
            CHECK(ms.f0[j] >= f_m / 1.5);
            CHECK(ms.f0[j] <= 1.5 * f_m);
            for (int k = 0; k < 4; ++k) {
                CHECK(ms.amplitudes[j][k] >= -15.0 * f_m);
                CHECK(ms.amplitudes[j][k] <= 15.0 * f_m);
            }
        }
        const ChirpConfig ch = sample_chirp(2, f_m, rng);
        CHECK(ch.phase >= -M_PI);
        CHECK(ch.phase <= M_PI);
        CHECK(ch.f1 >= f_m);
        CHECK(ch.f1 <= 1.5 * f_m);
        CHECK(ch.f2 >= f_m / 1.5);
        CHECK(ch.f2 <= 2.0 * f_m);
        for (double a : ch.amplitudes) {
            CHECK(a >= -4.0);
            CHECK(a <= 4.0);
        }
    }
}

TEST_CASE("chirp hand values") {
    ChirpConfig cfg;
    cfg.amplitudes = {2.0};
    cfg.phase = 0.0;
    cfg.f1 = 0.3;
    cfg.f2 = 0.15;
    CHECK(chirp_torque(cfg, 0, 0.0) == doctest::Approx(2.0)); // A cos(phi)

    cfg.phase = M_PI / 2.0;
    CHECK(std::abs(chirp_torque(cfg, 0, 0.0)) < 1e-12);

    cfg.phase = 0.0;
    const double t = 2.0;
    const double expected =
        2.0 * std::cos(2.0 * M_PI * 0.3 * (1.0 + 0.25 * std::cos(2.0 * M_PI * 0.15 * t)) * t);
    CHECK(chirp_torque(cfg, 0, t) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("reference trajectory analytic derivatives") {
    OscConfig circle;
    circle.task = OscTask::circle;
    circle.radius = 0.1;
    circle.frequency = 0.1;
    circle.center = {0.4, 0.3};

    const ReferencePoint at0 = reference_trajectory(circle, 0.0);
    CHECK(at0.pos.x() == doctest::Approx(0.5));
    CHECK(at0.pos.y() == doctest::Approx(0.3));
    CHECK(at0.vel.x() == doctest::Approx(0.0));
    CHECK(at0.vel.y() == doctest::Approx(0.1 * 2.0 * M_PI * 0.1));

    OscConfig spiral = circle;
    spiral.task = OscTask::spiral;
    spiral.radius_growth = 0.002;

    for (const OscConfig& cfg : {circle, spiral}) {
        const double h = 1e-6;
        for (double t : {0.5, 2.0, 7.25}) {
            const ReferencePoint c = reference_trajectory(cfg, t);
            const ReferencePoint p = reference_trajectory(cfg, t + h);
            const ReferencePoint m = reference_trajectory(cfg, t - h);
            const Eigen::Vector2d vel_fd = (p.pos - m.pos) / (2.0 * h);
            const Eigen::Vector2d acc_fd = (p.vel - m.vel) / (2.0 * h);
            CHECK((vel_fd - c.vel).norm() < 1e-6);
            CHECK((acc_fd - c.acc).norm() < 1e-6);
        }
    }
}

TEST_CASE("spiral up and down mirror about the initial radius") {
    OscConfig up;
    up.task = OscTask::spiral;
    up.radius = 0.1;
    up.frequency = 0.08;
    up.center = {0.0, 0.0};
    up.radius_growth = 0.003;
    OscConfig down = up;
    down.radius_growth = -0.003;
    for (double t : {0.0, 1.0, 4.0, 9.5}) {
        const double r_up = reference_trajectory(up, t).pos.norm();
        const double r_down = reference_trajectory(down, t).pos.norm();
        CHECK(r_up + r_down == doctest::Approx(2.0 * 0.1).epsilon(1e-12));
    }
}

TEST_CASE("osc torque reduces to gravity compensation at the target") {
    ArmModel m = default_arm_model(3);
    ArmState s;
    s.q = Eigen::VectorXd::Zero(3);
    s.q << 1.2, -0.9, -0.4;
    s.qdot = Eigen::VectorXd::Zero(3);

    Eigen::Vector2d ee;
    double theta;
    forward_kinematics(m, s.q, ee, theta);

    OscConfig cfg;
    cfg.task = OscTask::circle;
    cfg.radius = 0.1;
    cfg.frequency = 0.0; // frozen reference: xd == start point, vel == acc == 0
    cfg.center = ee - Eigen::Vector2d(0.1, 0.0);

    const Eigen::VectorXd u = osc_torque(m, s, cfg, 0.0);
    const Eigen::VectorXd g = dynamics_terms(m, s).g;
    CHECK((u - g).cwiseAbs().maxCoeff() < 1e-9);

    m.gravity = 0.0; // and to zero without gravity
    const Eigen::VectorXd u0 = osc_torque(m, s, cfg, 0.0);
    CHECK(u0.cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("osc torque mirrors under reflection about the x axis when gravity is zero") {
    ArmModel m = default_arm_model(3);
    m.gravity = 0.0;
    ArmState s;
    s.q = Eigen::VectorXd::Zero(3);
    s.q << 0.7, -0.5, 0.3;
    s.qdot = Eigen::VectorXd::Zero(3);
    s.qdot << 0.2, -0.1, 0.4;

    OscConfig cfg;
    cfg.task = OscTask::circle;
    cfg.radius = 0.08;
    cfg.frequency = 0.1;
    cfg.center = {0.5, 0.2};

    ArmState mirrored;
    mirrored.q = -s.q;
    mirrored.qdot = -s.qdot;
    OscConfig mirrored_cfg = cfg;
    mirrored_cfg.center = {cfg.center.x(), -cfg.center.y()};
    mirrored_cfg.frequency = -cfg.frequency; // sweep the reflected circle the other way

    const double t = 1.7;
    const Eigen::VectorXd u = osc_torque(m, s, cfg, t);
    const Eigen::VectorXd u_mirror = osc_torque(m, mirrored, mirrored_cfg, t);
    CHECK((u + u_mirror).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("osc tracks a circle within 1 cm RMS over the second period") {
    // Fixture: spring-free arm with realistic joint damping, started at a
    // bent pose with the reference anchored at the initial EE point.
    ArmModel m = default_arm_model(3);
    m.joint_stiffness.setZero();
    m.joint_damping.setConstant(2.0);

    ArmState s;
    s.q = osc_home_pose(3);
    s.qdot = Eigen::VectorXd::Zero(3);

    Eigen::Vector2d ee0;
    double theta0;
    forward_kinematics(m, s.q, ee0, theta0);

    OscConfig cfg;
    cfg.task = OscTask::circle;
    cfg.kp = 400.0;
    cfg.kd = 40.0;
    cfg.radius = 0.1;
    cfg.frequency = 0.1;
    cfg.center = ee0 - Eigen::Vector2d(cfg.radius, 0.0);

    const double dt = 1.0 / 60.0;
    const int substeps = 10;
    double t = 0.0;
    double err_sq = 0.0;
    int count = 0;
    for (int k = 0; k < 1200; ++k) { // two reference periods
        const Eigen::VectorXd u = osc_torque(m, s, cfg, t);
        for (int i = 0; i < substeps; ++i) s = step(m, s, u, dt / substeps);
        t += dt;
        if (t >= 10.0) {
            Eigen::Vector2d p;
            double theta;
            forward_kinematics(m, s.q, p, theta);
            err_sq += (p - reference_trajectory(cfg, t).pos).squaredNorm();
            count += 1;
        }
    }
    REQUIRE(count > 0);
    CHECK(std::sqrt(err_sq / count) < 0.01);
}
