#include "metadyn/excitation.hpp"

#include <cmath>

#include "metadyn/errors.hpp"

namespace metadyn {

MultiSinConfig sample_multisin(int n_joints, double f_m, Rng& rng) {
    MultiSinConfig cfg;
    cfg.f_m = f_m;
    cfg.amplitude_bound = 15.0 * f_m;
    cfg.amplitudes.resize(static_cast<size_t>(n_joints));
    cfg.f0.resize(static_cast<size_t>(n_joints));
    for (int j = 0; j < n_joints; ++j) {
        for (int k = 0; k < 4; ++k)
            cfg.amplitudes[static_cast<size_t>(j)][k] = rng.uniform(-cfg.amplitude_bound, cfg.amplitude_bound);
        cfg.f0[static_cast<size_t>(j)] = rng.uniform(f_m / 1.5, 1.5 * f_m);
    }
    return cfg;
}

double multisin_torque(const MultiSinConfig& cfg, int joint, double t) {
    const auto& a = cfg.amplitudes.at(static_cast<size_t>(joint));
    const double w0 = 2.0 * M_PI * cfg.f0.at(static_cast<size_t>(joint));
    return a[0] * std::cos(w0 * t) + a[1] * std::sin(1.5 * w0 * t) +
           a[2] * std::cos(2.0 * w0 * t) + a[3] * std::sin(3.0 * w0 * t);
}

ChirpConfig sample_chirp(int n_joints, double f_m, Rng& rng) {
    ChirpConfig cfg;
    cfg.f_m = f_m;
    cfg.amplitudes.resize(static_cast<size_t>(n_joints));
    for (int j = 0; j < n_joints; ++j) cfg.amplitudes[static_cast<size_t>(j)] = rng.uniform(-4.0, 4.0);
    cfg.phase = rng.uniform(-M_PI, M_PI);
    cfg.f1 = rng.uniform(f_m, 1.5 * f_m);
    cfg.f2 = rng.uniform(f_m / 1.5, 2.0 * f_m);
    return cfg;
}

double chirp_torque(const ChirpConfig& cfg, int joint, double t) {
    const double a = cfg.amplitudes.at(static_cast<size_t>(joint));
    const double w1 = 2.0 * M_PI * cfg.f1;
    const double w2 = 2.0 * M_PI * cfg.f2;
    return a * std::cos(w1 * (1.0 + 0.25 * std::cos(w2 * t)) * t + cfg.phase);
}

OscConfig sample_osc(OscTask task, double horizon_s, const ArmModel& model,
                     const Eigen::VectorXd& initial_q, Rng& rng) {
    OscConfig cfg;
    cfg.task = task;
    cfg.radius = rng.uniform(0.05, 0.15) * (model.link_lengths.sum() / 1.2);
    // Circles share one sweep frequency across robots; spirals vary it.
    cfg.frequency = task == OscTask::circle ? 0.1 : rng.uniform(0.05, 0.15);
    // The reference starts at the arm's current EE point.
    Eigen::Vector2d ee0;
    double theta0 = 0.0;
    forward_kinematics(model, initial_q, ee0, theta0);
    cfg.center = ee0 - Eigen::Vector2d(cfg.radius, 0.0);
    if (task == OscTask::spiral) {
        cfg.direction = rng.uniform01() < 0.5 ? SpiralDirection::up : SpiralDirection::down;
        // Radius sweeps half of itself over the horizon, mirrored for "down".
        const double rate = 0.5 * cfg.radius / std::max(horizon_s, 1e-9);
        cfg.radius_growth = cfg.direction == SpiralDirection::up ? rate : -rate;
    }
    return cfg;
}

ReferencePoint reference_trajectory(const OscConfig& cfg, double t) {
    if (t < 0.0) throw ConfigError("reference_trajectory: t must be >= 0");
    const double w = 2.0 * M_PI * cfg.frequency;
    const double r = cfg.radius + cfg.radius_growth * t;
    const double rdot = cfg.radius_growth;
    const Eigen::Vector2d e{std::cos(w * t), std::sin(w * t)};
    const Eigen::Vector2d eperp{-std::sin(w * t), std::cos(w * t)};
    ReferencePoint ref;
    ref.pos = cfg.center + r * e;
    ref.vel = rdot * e + r * w * eperp;
    ref.acc = 2.0 * rdot * w * eperp - r * w * w * e;
    return ref;
}

Eigen::VectorXd osc_torque(const ArmModel& model, const ArmState& state,
                           const OscConfig& cfg, double t) {
    if (model.n_links < 2) throw ConfigError("osc_torque: needs at least 2 links for a planar task");
    const DynamicsTerms terms = dynamics_terms(model, state);
    const Eigen::MatrixXd J = jacobian(model, state.q);
    const Eigen::MatrixXd Jp = J.topRows(2); // position rows

    Eigen::Vector2d x;
    double theta = 0.0;
    forward_kinematics(model, state.q, x, theta);
    const Eigen::Vector2d xdot = Jp * state.qdot;

    const ReferencePoint ref = reference_trajectory(cfg, t);

    // Operational-space inertia with damping so singular poses stay solvable.
    const Eigen::MatrixXd Minv_Jt = terms.M.ldlt().solve(Jp.transpose());
    const Eigen::Matrix2d lambda_inv =
        Jp * Minv_Jt + cfg.lambda * Eigen::Matrix2d::Identity();
    const Eigen::Matrix2d M_ee = lambda_inv.inverse();

    const Eigen::Vector2d f = M_ee * ref.acc + cfg.kp * (ref.pos - x) + cfg.kd * (ref.vel - xdot);
    Eigen::VectorXd u = terms.g + Jp.transpose() * f;
    for (int i = 0; i < u.size(); ++i)
        u[i] = std::clamp(u[i], -model.torque_limits[i], model.torque_limits[i]);
    return u;
}

} // namespace metadyn
