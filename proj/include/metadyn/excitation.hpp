#pragma once

#include <Eigen/Dense>
#include <vector>

#include "metadyn/arm.hpp"
#include "metadyn/rng.hpp"

namespace metadyn {

// Harmonic-ladder torque: u = A0 cos(w0 t) + A1 sin(1.5 w0 t) + A2 cos(2 w0 t)
// + A3 sin(3 w0 t), per joint, with A_k in +-15 f_m and f_0 in [f_m/1.5, 1.5 f_m].
struct MultiSinConfig {
    double f_m = 0.15;          // Hz, main frequency parameter
    double amplitude_bound = 0; // N m, = 15 f_m
    std::vector<Eigen::Vector4d> amplitudes; // per joint, A_0..A_3
    std::vector<double> f0;                  // per joint, Hz
};

MultiSinConfig sample_multisin(int n_joints, double f_m, Rng& rng);
double multisin_torque(const MultiSinConfig& cfg, int joint, double t);

// Frequency-modulated cosine: u_i = A_i cos(w1 (1 + cos(w2 t)/4) t + phi).
struct ChirpConfig {
    double f_m = 0.15;
    std::vector<double> amplitudes; // per joint, N m in [-4, 4]
    double phase = 0.0;             // rad in [-pi, pi]
    double f1 = 0.0;                // Hz in [f_m, 1.5 f_m]
    double f2 = 0.0;                // Hz in [f_m/1.5, 2 f_m]
};

ChirpConfig sample_chirp(int n_joints, double f_m, Rng& rng);
double chirp_torque(const ChirpConfig& cfg, int joint, double t);

enum class OscTask { circle, spiral };
enum class SpiralDirection { up, down };

struct OscConfig {
    double kp = 400.0; // N/m, diagonal task-space gain
    double kd = 40.0;  // N s/m
    OscTask task = OscTask::circle;
    Eigen::Vector2d center{0.45, 0.35};
    double radius = 0.1;        // m (initial radius for spirals)
    double frequency = 0.1;     // Hz, angular sweep rate of the reference
    SpiralDirection direction = SpiralDirection::up;
    double radius_growth = 0.0; // m/s, signed; 0 for circles
    double lambda = 1e-4;       // damped pseudo-inverse regularizer
};

// Circle radii vary per robot at a shared frequency; spirals vary both and
// grow or shrink the radius linearly over the horizon. The reference is
// anchored at the arm's start pose: the circle passes through the initial EE
// position, so tracking begins without a step transient.
OscConfig sample_osc(OscTask task, double horizon_s, const ArmModel& model,
                     const Eigen::VectorXd& initial_q, Rng& rng);

struct ReferencePoint {
    Eigen::Vector2d pos;
    Eigen::Vector2d vel;
    Eigen::Vector2d acc;
};

ReferencePoint reference_trajectory(const OscConfig& cfg, double t);

// Task-space PD with dynamics feedforward, mapped through the position
// Jacobian transpose; output is clamped to the model's torque limits.
Eigen::VectorXd osc_torque(const ArmModel& model, const ArmState& state,
                           const OscConfig& cfg, double t);

} // namespace metadyn
