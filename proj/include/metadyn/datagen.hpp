#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metadyn/arm.hpp"
#include "metadyn/excitation.hpp"
#include "metadyn/rng.hpp"

namespace metadyn {

struct RandomizationConfig {
    double mass_variation = 0.20;  // fraction, +- around nominal
    double com_variation = 0.02;   // m, along-link offset bound
    double damping_min = 1.2, damping_max = 3.0;       // N m s / rad
    double stiffness_min = 8.0, stiffness_max = 16.0;  // N m / rad
    double initial_q_bound = 0.5;  // rad, uniform around mid-positions
    double f_m_min = 0.1, f_m_max = 0.25; // Hz
    uint64_t seed = 1;

    void validate() const;
};

// "narrow" = +-5% mass, "wide" = +-40%; used for the ID/OOD experiments.
RandomizationConfig randomization_preset(const std::string& name);

enum class SignalFamily { multisin, chirp, mixed, osc_circle, osc_spiral };

std::string to_string(SignalFamily f);
SignalFamily signal_family_from_string(const std::string& s);

struct GenerationJob {
    int num_robots = 8;
    int timesteps = 1000;
    double dt = 1.0 / 60.0;
    int substeps = 10; // physics substeps per recorded step
    SignalFamily family = SignalFamily::multisin;
    RandomizationConfig randomization;
    int n_links = 3;

    void validate() const;
};

// One sampled robot instance: the randomized plant plus its start pose and
// per-robot main excitation frequency.
struct RobotParams {
    int index = 0;
    ArmModel model;
    Eigen::VectorXd initial_q;
    double f_m = 0.15;
};

struct Trajectory {
    int n_steps = 0;
    int n_u = 0;
    int n_y = 0;
    double dt = 0.0;
    std::vector<float> u; // row-major n_steps x n_u
    std::vector<float> y; // row-major n_steps x n_y

    float uat(int step, int ch) const { return u[static_cast<size_t>(step) * n_u + ch]; }
    float yat(int step, int ch) const { return y[static_cast<size_t>(step) * n_y + ch]; }
};

enum class ViolationKind {
    torque_saturation,
    position_limit,
    floor_collision,
    self_collision,
    divergence,
    discontinuity,
};

std::string to_string(ViolationKind k);

struct BlacklistEntry {
    int robot_index = 0;
    ViolationKind kind = ViolationKind::torque_saturation;
    int step = 0;
};

struct ChannelStats {
    std::vector<double> u_mean, u_std, y_mean, y_std;

    uint64_t fingerprint() const;
};

struct Dataset {
    GenerationJob job;
    std::vector<RobotParams> params;       // kept robots, in original index order
    std::vector<Trajectory> trajectories;  // parallel to params
    std::vector<int> kept_indices;
    std::vector<BlacklistEntry> blacklist;
    ChannelStats stats;
    int n_u = 0;
    int n_y = 0;

    int num_kept() const { return static_cast<int>(trajectories.size()); }
};

// Initial joints are sampled around the mid-positions plus an optional
// family-specific home offset (OSC tasks anchor at a bent home pose so the
// reference stays inside the workspace).
RobotParams sample_robot(const ArmModel& nominal, const RandomizationConfig& cfg,
                         int robot_index, Rng& rng,
                         const Eigen::VectorXd& home_offset = Eigen::VectorXd());

// Bent elbow-down pose used as the OSC anchor.
Eigen::VectorXd osc_home_pose(int n_links);

struct RolloutResult {
    Trajectory trajectory; // only the steps recorded before any violation
    std::optional<BlacklistEntry> violation;
};

RolloutResult rollout(const RobotParams& robot, const GenerationJob& job, Rng& rng);

// First step whose jump in any output channel exceeds threshold x the
// channel's running mean step size; nullopt for smooth trajectories.
std::optional<int> detect_output_discontinuity(const Trajectory& traj, double threshold = 5.0);

Dataset generate(const GenerationJob& job);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

std::string manifest_json(const Dataset& ds);

} // namespace metadyn
