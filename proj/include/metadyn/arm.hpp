#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace metadyn {

// Planar N-link revolute arm. Joint angle q_i is relative to the previous
// link; link i's absolute angle is the running sum s_i = q_0 + ... + q_i.
// Gravity acts along -y. Base joint sits at the origin.
struct ArmModel {
    int n_links = 0;
    Eigen::VectorXd link_lengths;   // m
    Eigen::VectorXd link_masses;    // kg
    Eigen::VectorXd com_offsets;    // m from proximal joint along the link
    Eigen::VectorXd link_inertias;  // kg m^2 about the COM
    Eigen::VectorXd joint_damping;  // N m s / rad
    Eigen::VectorXd joint_stiffness; // N m / rad, spring toward rest_positions
    Eigen::VectorXd rest_positions; // rad
    double gravity = 9.81;          // m/s^2, along -y
    Eigen::VectorXd torque_limits;  // N m, per joint
    Eigen::VectorXd q_limit_lower;  // rad
    Eigen::VectorXd q_limit_upper;  // rad
    double floor_y = -0.05;         // m

    void validate() const; // throws ConfigError on violated invariants
};

// Nominal desk-scale arm used as the randomization center.
ArmModel default_arm_model(int n_links = 3);

struct ArmState {
    Eigen::VectorXd q;    // rad
    Eigen::VectorXd qdot; // rad/s
    double t = 0.0;       // s
};

struct PoseOutput {
    double ee_x = 0.0;
    double ee_y = 0.0;
    double ee_cos = 1.0;
    double ee_sin = 0.0;
    Eigen::VectorXd q;

    // Row layout of the dataset's y channels: [ee_x, ee_y, cos, sin, q_0..].
    std::vector<double> flatten() const;
};

inline int pose_output_dim(int n_links) { return 4 + n_links; }
std::vector<std::string> pose_channel_names(int n_links);

struct DynamicsTerms {
    Eigen::MatrixXd M; // inertia, symmetric positive definite
    Eigen::MatrixXd C; // Coriolis/centrifugal from Christoffel symbols
    Eigen::VectorXd g; // gravity torque, dV/dq
};

struct ViolationSet {
    bool torque_saturation = false;
    bool position_limit = false;
    bool floor_collision = false;
    bool self_collision = false;

    bool any() const { return torque_saturation || position_limit || floor_collision || self_collision; }
    std::string describe() const;
};

// EE position and orientation (sum of joint angles).
void forward_kinematics(const ArmModel& model, const Eigen::VectorXd& q,
                        Eigen::Vector2d& ee_position, double& ee_orientation);

PoseOutput pose_output(const ArmModel& model, const ArmState& state);

// 3 x n: rows d(ee_x)/dq, d(ee_y)/dq, d(orientation)/dq (the last is all ones).
Eigen::MatrixXd jacobian(const ArmModel& model, const Eigen::VectorXd& q);

DynamicsTerms dynamics_terms(const ArmModel& model, const ArmState& state);

// Solves M qdd = tau - C qd - g - damping qd - stiffness (q - rest).
Eigen::VectorXd forward_dynamics(const ArmModel& model, const ArmState& state,
                                 const Eigen::VectorXd& tau);

// One semi-implicit Euler step: qdot += dt qdd, then q += dt qdot.
// Throws NumericError if the resulting state is non-finite.
ArmState step(const ArmModel& model, const ArmState& state, const Eigen::VectorXd& tau, double dt);

ViolationSet check_violations(const ArmModel& model, const ArmState& state,
                              const Eigen::VectorXd& tau, double self_collision_clearance = 0.01);

// Kinetic + gravitational potential energy (springs excluded); used by the
// symplectic-drift checks.
double total_energy(const ArmModel& model, const ArmState& state);

} // namespace metadyn
