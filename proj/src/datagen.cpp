#include "metadyn/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <nlohmann/json.hpp>

#include "metadyn/errors.hpp"
#include "metadyn/io.hpp"
#include "metadyn/parallel.hpp"

namespace metadyn {

namespace {

constexpr uint32_t kDatasetVersion = 1;
constexpr char kDatasetMagic[4] = {'R', 'M', 'D', 'S'};

// Per-robot stream derivation: every consumer of randomness forks off the
// robot stream with a fixed tag, so adding a consumer never shifts the draws
// of existing ones and results stay independent of rollout order.
enum StreamTag : uint64_t { kTagParams = 1, kTagSignal = 2 };

SignalFamily family_for_robot(const GenerationJob& job, int robot_index) {
    if (job.family != SignalFamily::mixed) return job.family;
    return robot_index < job.num_robots / 2 ? SignalFamily::multisin : SignalFamily::chirp;
}

struct SignalSampler {
    SignalFamily family;
    MultiSinConfig multisin;
    ChirpConfig chirp;
    OscConfig osc;
};

SignalSampler make_signal(const RobotParams& robot, const GenerationJob& job, Rng& rng) {
    SignalSampler s;
    s.family = family_for_robot(job, robot.index);
    const int n = robot.model.n_links;
    const double horizon_s = job.timesteps * job.dt;
    switch (s.family) {
        case SignalFamily::multisin: s.multisin = sample_multisin(n, robot.f_m, rng); break;
        case SignalFamily::chirp: s.chirp = sample_chirp(n, robot.f_m, rng); break;
        case SignalFamily::osc_circle:
            s.osc = sample_osc(OscTask::circle, horizon_s, robot.model, robot.initial_q, rng);
            break;
        case SignalFamily::osc_spiral:
            s.osc = sample_osc(OscTask::spiral, horizon_s, robot.model, robot.initial_q, rng);
            break;
        case SignalFamily::mixed: throw ConfigError("make_signal: mixed resolves per robot");
    }
    return s;
}

Eigen::VectorXd signal_torque(const SignalSampler& s, const ArmModel& model,
                              const ArmState& state, double t) {
    const int n = model.n_links;
    Eigen::VectorXd u(n);
    switch (s.family) {
        case SignalFamily::multisin:
            for (int j = 0; j < n; ++j) u[j] = multisin_torque(s.multisin, j, t);
            break;
        case SignalFamily::chirp:
            for (int j = 0; j < n; ++j) u[j] = chirp_torque(s.chirp, j, t);
            break;
        case SignalFamily::osc_circle:
        case SignalFamily::osc_spiral:
            u = osc_torque(model, state, s.osc, t);
            break;
        case SignalFamily::mixed:
            throw ConfigError("signal_torque: mixed resolves per robot");
    }
    return u;
}

ViolationKind first_violation_kind(const ViolationSet& v) {
    if (v.torque_saturation) return ViolationKind::torque_saturation;
    if (v.position_limit) return ViolationKind::position_limit;
    if (v.floor_collision) return ViolationKind::floor_collision;
    return ViolationKind::self_collision;
}

void write_params_block(ByteWriter& w, const RobotParams& p) {
    w.u32(static_cast<uint32_t>(p.index));
    w.u32(static_cast<uint32_t>(p.model.n_links));
    w.f64(p.f_m);
    w.f64(p.model.gravity);
    w.f64(p.model.floor_y);
    for (int i = 0; i < p.model.n_links; ++i) {
        w.f64(p.model.link_lengths[i]);
        w.f64(p.model.link_masses[i]);
        w.f64(p.model.com_offsets[i]);
        w.f64(p.model.link_inertias[i]);
        w.f64(p.model.joint_damping[i]);
        w.f64(p.model.joint_stiffness[i]);
        w.f64(p.model.rest_positions[i]);
        w.f64(p.model.torque_limits[i]);
        w.f64(p.model.q_limit_lower[i]);
        w.f64(p.model.q_limit_upper[i]);
        w.f64(p.initial_q[i]);
    }
}

RobotParams read_params_block(ByteReader& r) {
    RobotParams p;
    p.index = static_cast<int>(r.u32());
    const int n = static_cast<int>(r.u32());
    if (n < 1 || n > 64) throw DataError("dataset: implausible n_links in params block");
    p.f_m = r.f64();
    ArmModel& m = p.model;
    m.n_links = n;
    m.gravity = r.f64();
    m.floor_y = r.f64();
    m.link_lengths.resize(n);
    m.link_masses.resize(n);
    m.com_offsets.resize(n);
    m.link_inertias.resize(n);
    m.joint_damping.resize(n);
    m.joint_stiffness.resize(n);
    m.rest_positions.resize(n);
    m.torque_limits.resize(n);
    m.q_limit_lower.resize(n);
    m.q_limit_upper.resize(n);
    p.initial_q.resize(n);
    for (int i = 0; i < n; ++i) {
        m.link_lengths[i] = r.f64();
        m.link_masses[i] = r.f64();
        m.com_offsets[i] = r.f64();
        m.link_inertias[i] = r.f64();
        m.joint_damping[i] = r.f64();
        m.joint_stiffness[i] = r.f64();
        m.rest_positions[i] = r.f64();
        m.torque_limits[i] = r.f64();
        m.q_limit_lower[i] = r.f64();
        m.q_limit_upper[i] = r.f64();
        p.initial_q[i] = r.f64();
    }
    return p;
}

nlohmann::json job_to_json(const GenerationJob& job) {
    const auto& rz = job.randomization;
    return nlohmann::json{
        {"num_robots", job.num_robots},
        {"timesteps", job.timesteps},
        {"dt", job.dt},
        {"substeps", job.substeps},
        {"family", to_string(job.family)},
        {"n_links", job.n_links},
        {"randomization",
         {{"mass_variation", rz.mass_variation},
          {"com_variation", rz.com_variation},
          {"damping_min", rz.damping_min},
          {"damping_max", rz.damping_max},
          {"stiffness_min", rz.stiffness_min},
          {"stiffness_max", rz.stiffness_max},
          {"initial_q_bound", rz.initial_q_bound},
          {"f_m_min", rz.f_m_min},
          {"f_m_max", rz.f_m_max},
          {"seed", rz.seed}}},
    };
}

GenerationJob job_from_json(const nlohmann::json& j) {
    GenerationJob job;
    job.num_robots = j.at("num_robots").get<int>();
    job.timesteps = j.at("timesteps").get<int>();
    job.dt = j.at("dt").get<double>();
    job.substeps = j.at("substeps").get<int>();
    job.family = signal_family_from_string(j.at("family").get<std::string>());
    job.n_links = j.at("n_links").get<int>();
    const auto& r = j.at("randomization");
    auto& rz = job.randomization;
    rz.mass_variation = r.at("mass_variation").get<double>();
    rz.com_variation = r.at("com_variation").get<double>();
    rz.damping_min = r.at("damping_min").get<double>();
    rz.damping_max = r.at("damping_max").get<double>();
    rz.stiffness_min = r.at("stiffness_min").get<double>();
    rz.stiffness_max = r.at("stiffness_max").get<double>();
    rz.initial_q_bound = r.at("initial_q_bound").get<double>();
    rz.f_m_min = r.at("f_m_min").get<double>();
    rz.f_m_max = r.at("f_m_max").get<double>();
    rz.seed = r.at("seed").get<uint64_t>();
    return job;
}

std::string manifest_path(const std::string& dataset_path) { return dataset_path + ".manifest.json"; }

} // namespace

void RandomizationConfig::validate() const {
    if (mass_variation < 0.0 || mass_variation >= 1.0)
        throw ConfigError("randomization: mass_variation must lie in [0, 1)");
    if (damping_min > damping_max || stiffness_min > stiffness_max || f_m_min > f_m_max)
        throw ConfigError("randomization: empty range");
    if (com_variation < 0.0 || initial_q_bound < 0.0)
        throw ConfigError("randomization: bounds must be non-negative");
}

RandomizationConfig randomization_preset(const std::string& name) {
    RandomizationConfig cfg;
    if (name == "narrow") {
        cfg.mass_variation = 0.05;
        cfg.com_variation = 0.005;
    } else if (name == "wide") {
        cfg.mass_variation = 0.40;
        cfg.com_variation = 0.04;
    } else if (name != "default") {
        throw ConfigError("unknown randomization preset: " + name);
    }
    return cfg;
}

void GenerationJob::validate() const {
    if (num_robots < 1) throw ConfigError("job: num_robots must be >= 1");
    if (timesteps < 2) throw ConfigError("job: timesteps must be >= 2");
    if (!(dt > 0.0)) throw ConfigError("job: dt must be positive");
    if (substeps < 1) throw ConfigError("job: substeps must be >= 1");
    if (n_links < 1) throw ConfigError("job: n_links must be >= 1");
    randomization.validate();
}

std::string to_string(SignalFamily f) {
    switch (f) {
        case SignalFamily::multisin: return "multisin";
        case SignalFamily::chirp: return "chirp";
        case SignalFamily::mixed: return "mixed";
        case SignalFamily::osc_circle: return "osc_circle";
        case SignalFamily::osc_spiral: return "osc_spiral";
    }
    return "?";
}

SignalFamily signal_family_from_string(const std::string& s) {
    if (s == "multisin") return SignalFamily::multisin;
    if (s == "chirp") return SignalFamily::chirp;
    if (s == "mixed") return SignalFamily::mixed;
    if (s == "osc_circle") return SignalFamily::osc_circle;
    if (s == "osc_spiral") return SignalFamily::osc_spiral;
    throw ConfigError("unknown signal family: " + s);
}

std::string to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::torque_saturation: return "torque_saturation";
        case ViolationKind::position_limit: return "position_limit";
        case ViolationKind::floor_collision: return "floor_collision";
        case ViolationKind::self_collision: return "self_collision";
        case ViolationKind::divergence: return "divergence";
        case ViolationKind::discontinuity: return "discontinuity";
    }
    return "?";
}

Eigen::VectorXd osc_home_pose(int n_links) {
    Eigen::VectorXd home = Eigen::VectorXd::Zero(n_links);
    home[0] = 1.4;
    for (int i = 1; i < n_links; ++i) home[i] = -2.1 / (n_links - 1);
    return home;
}

RobotParams sample_robot(const ArmModel& nominal, const RandomizationConfig& cfg,
                         int robot_index, Rng& rng, const Eigen::VectorXd& home_offset) {
    nominal.validate();
    cfg.validate();
    RobotParams p;
    p.index = robot_index;
    p.model = nominal;
    const int n = nominal.n_links;
    for (int i = 0; i < n; ++i) {
        const double x = cfg.mass_variation;
        p.model.link_masses[i] = rng.uniform((1.0 - x) * nominal.link_masses[i],
                                             (1.0 + x) * nominal.link_masses[i]);
        const double com = nominal.com_offsets[i] + rng.uniform(-cfg.com_variation, cfg.com_variation);
        p.model.com_offsets[i] = std::clamp(com, 0.0, nominal.link_lengths[i]);
    }
    for (int i = 0; i < n; ++i)
        p.model.joint_damping[i] = rng.uniform(cfg.damping_min, cfg.damping_max);
    for (int i = 0; i < n; ++i)
        p.model.joint_stiffness[i] = rng.uniform(cfg.stiffness_min, cfg.stiffness_max);
    p.initial_q.resize(n);
    for (int i = 0; i < n; ++i) {
        const double mid = 0.5 * (nominal.q_limit_lower[i] + nominal.q_limit_upper[i]);
        const double anchor = mid + (home_offset.size() == n ? home_offset[i] : 0.0);
        const double q0 = anchor + rng.uniform(-cfg.initial_q_bound, cfg.initial_q_bound);
        p.initial_q[i] = std::clamp(q0, nominal.q_limit_lower[i], nominal.q_limit_upper[i]);
    }
    p.f_m = rng.uniform(cfg.f_m_min, cfg.f_m_max);
    // The arm rests where it starts; springs pull back toward the start pose.
    p.model.rest_positions = p.initial_q;
    return p;
}

RolloutResult rollout(const RobotParams& robot, const GenerationJob& job, Rng& rng) {
    job.validate();
    robot.model.validate();
    const int n_u = robot.model.n_links;
    const int n_y = pose_output_dim(robot.model.n_links);

    RolloutResult out;
    out.trajectory.n_u = n_u;
    out.trajectory.n_y = n_y;
    out.trajectory.dt = job.dt;
    out.trajectory.u.reserve(static_cast<size_t>(job.timesteps) * n_u);
    out.trajectory.y.reserve(static_cast<size_t>(job.timesteps) * n_y);

    Rng signal_rng = rng.fork(kTagSignal);
    const SignalSampler signal = make_signal(robot, job, signal_rng);

    ArmState state;
    state.q = robot.initial_q;
    state.qdot = Eigen::VectorXd::Zero(robot.model.n_links);
    state.t = 0.0;

    const double sub_dt = job.dt / job.substeps;
    for (int k = 0; k < job.timesteps; ++k) {
        const double t = k * job.dt;
        Eigen::VectorXd u;
        try {
            u = signal_torque(signal, robot.model, state, t);
        } catch (const NumericError&) {
            out.violation = BlacklistEntry{robot.index, ViolationKind::divergence, k};
            break;
        }
        if (!u.allFinite() || !state.q.allFinite() || !state.qdot.allFinite()) {
            out.violation = BlacklistEntry{robot.index, ViolationKind::divergence, k};
            break;
        }
        const ViolationSet v = check_violations(robot.model, state, u);
        if (v.any()) {
            out.violation = BlacklistEntry{robot.index, first_violation_kind(v), k};
            break;
        }
        for (int c = 0; c < n_u; ++c) out.trajectory.u.push_back(static_cast<float>(u[c]));
        const PoseOutput pose = pose_output(robot.model, state);
        for (double val : pose.flatten()) out.trajectory.y.push_back(static_cast<float>(val));
        out.trajectory.n_steps += 1;

        try {
            for (int s = 0; s < job.substeps; ++s) state = step(robot.model, state, u, sub_dt);
        } catch (const NumericError&) {
            out.violation = BlacklistEntry{robot.index, ViolationKind::divergence, k};
            break;
        }
    }
    return out;
}

std::optional<int> detect_output_discontinuity(const Trajectory& traj, double threshold) {
    if (traj.n_steps < 2) return std::nullopt;
    constexpr int kWarmup = 8;       // steps before the running scale is trusted
    constexpr double kFloor = 1e-9;  // scale floor so flat channels stay silent
    for (int c = 0; c < traj.n_y; ++c) {
        double delta_sum = 0.0;
        int count = 0;
        for (int k = 1; k < traj.n_steps; ++k) {
            const double delta = std::abs(static_cast<double>(traj.yat(k, c)) - traj.yat(k - 1, c));
            if (count >= kWarmup) {
                const double scale = std::max(delta_sum / count, kFloor);
                if (delta > threshold * scale) return k;
            }
            delta_sum += delta;
            count += 1;
        }
    }
    return std::nullopt;
}

Dataset generate(const GenerationJob& job) {
    job.validate();
    const ArmModel nominal = default_arm_model(job.n_links);

    struct Slot {
        RobotParams params;
        RolloutResult result;
    };
    std::vector<Slot> slots(static_cast<size_t>(job.num_robots));
    const Rng root(job.randomization.seed);
    const Eigen::VectorXd home = osc_home_pose(job.n_links);
    parallel_for(job.num_robots, [&](int i) {
        Rng robot_rng = root.fork(static_cast<uint64_t>(i));
        Rng param_rng = robot_rng.fork(kTagParams);
        Slot& slot = slots[static_cast<size_t>(i)];
        const SignalFamily family = family_for_robot(job, i);
        const bool osc = family == SignalFamily::osc_circle || family == SignalFamily::osc_spiral;
        slot.params = sample_robot(nominal, job.randomization, i, param_rng,
                                   osc ? home : Eigen::VectorXd());
        slot.result = rollout(slot.params, job, robot_rng);
    });

    Dataset ds;
    ds.job = job;
    ds.n_u = nominal.n_links;
    ds.n_y = pose_output_dim(nominal.n_links);
    for (int i = 0; i < job.num_robots; ++i) {
        Slot& slot = slots[static_cast<size_t>(i)];
        if (slot.result.violation) {
            ds.blacklist.push_back(*slot.result.violation);
            continue;
        }
        if (const auto disc = detect_output_discontinuity(slot.result.trajectory)) {
            ds.blacklist.push_back(BlacklistEntry{i, ViolationKind::discontinuity, *disc});
            continue;
        }
        ds.kept_indices.push_back(i);
        ds.params.push_back(std::move(slot.params));
        ds.trajectories.push_back(std::move(slot.result.trajectory));
    }

    if (ds.trajectories.empty()) {
        std::map<std::string, int> counts;
        for (const auto& b : ds.blacklist) counts[to_string(b.kind)] += 1;
        std::string dominant;
        int best = -1;
        for (const auto& [name, count] : counts)
            if (count > best) {
                best = count;
                dominant = name;
            }
        throw DataError("generate: all " + std::to_string(job.num_robots) +
                        " robots blacklisted; dominant violation: " + dominant);
    }

    // Per-channel statistics over kept robots, accumulated in double.
    ds.stats.u_mean.assign(static_cast<size_t>(ds.n_u), 0.0);
    ds.stats.u_std.assign(static_cast<size_t>(ds.n_u), 0.0);
    ds.stats.y_mean.assign(static_cast<size_t>(ds.n_y), 0.0);
    ds.stats.y_std.assign(static_cast<size_t>(ds.n_y), 0.0);
    const auto accumulate = [](const std::vector<const Trajectory*>& trajs, bool inputs,
                               std::vector<double>& mean, std::vector<double>& stddev) {
        const int n_ch = static_cast<int>(mean.size());
        std::vector<double> sum(static_cast<size_t>(n_ch), 0.0), sumsq(static_cast<size_t>(n_ch), 0.0);
        int64_t count = 0;
        for (const Trajectory* t : trajs) {
            const auto& data = inputs ? t->u : t->y;
            for (int k = 0; k < t->n_steps; ++k)
                for (int c = 0; c < n_ch; ++c) {
                    const double v = data[static_cast<size_t>(k) * n_ch + c];
                    sum[static_cast<size_t>(c)] += v;
                    sumsq[static_cast<size_t>(c)] += v * v;
                }
            count += t->n_steps;
        }
        for (int c = 0; c < n_ch; ++c) {
            const double mu = sum[static_cast<size_t>(c)] / count;
            const double var = std::max(sumsq[static_cast<size_t>(c)] / count - mu * mu, 0.0);
            mean[static_cast<size_t>(c)] = mu;
            stddev[static_cast<size_t>(c)] = std::max(std::sqrt(var), 1e-12);
        }
    };
    std::vector<const Trajectory*> kept;
    kept.reserve(ds.trajectories.size());
    for (const auto& t : ds.trajectories) kept.push_back(&t);
    accumulate(kept, true, ds.stats.u_mean, ds.stats.u_std);
    accumulate(kept, false, ds.stats.y_mean, ds.stats.y_std);
    return ds;
}

uint64_t ChannelStats::fingerprint() const {
    ByteWriter w;
    w.f64s(u_mean);
    w.f64s(u_std);
    w.f64s(y_mean);
    w.f64s(y_std);
    return fnv1a64(w.bytes().data(), w.size());
}

std::string manifest_json(const Dataset& ds) {
    nlohmann::json j;
    j["format_version"] = kDatasetVersion;
    j["job"] = job_to_json(ds.job);
    j["seed"] = ds.job.randomization.seed;
    j["n_u"] = ds.n_u;
    j["n_y"] = ds.n_y;
    j["kept"] = ds.kept_indices;
    nlohmann::json bl = nlohmann::json::array();
    for (const auto& b : ds.blacklist)
        bl.push_back({{"robot", b.robot_index}, {"violation", to_string(b.kind)}, {"step", b.step}});
    j["blacklist"] = bl;
    j["stats"] = {{"u_mean", ds.stats.u_mean},
                  {"u_std", ds.stats.u_std},
                  {"y_mean", ds.stats.y_mean},
                  {"y_std", ds.stats.y_std}};
    j["stats_fingerprint"] = ds.stats.fingerprint();
    if (ds.job.family == SignalFamily::mixed) {
        j["family_counts"] = {{"multisin", ds.job.num_robots / 2},
                              {"chirp", ds.job.num_robots - ds.job.num_robots / 2}};
    }
    return j.dump(2);
}

void save_dataset(const Dataset& ds, const std::string& path) {
    if (ds.trajectories.empty()) throw DataError("save_dataset: empty dataset");
    const int n_steps = ds.trajectories.front().n_steps;
    for (const auto& t : ds.trajectories)
        if (t.n_steps != n_steps) throw DataError("save_dataset: inconsistent step counts");

    ByteWriter payload;
    payload.u32(static_cast<uint32_t>(ds.num_kept()));
    payload.u32(static_cast<uint32_t>(n_steps));
    payload.u32(static_cast<uint32_t>(ds.n_u));
    payload.u32(static_cast<uint32_t>(ds.n_y));
    payload.f64(ds.job.dt);
    for (int i = 0; i < ds.num_kept(); ++i) {
        write_params_block(payload, ds.params[static_cast<size_t>(i)]);
        payload.f32s(ds.trajectories[static_cast<size_t>(i)].u);
        payload.f32s(ds.trajectories[static_cast<size_t>(i)].y);
    }

    ByteWriter file;
    file.raw(kDatasetMagic, 4);
    file.u32(kDatasetVersion);
    file.raw(payload.bytes().data(), payload.size());
    file.u32(crc32(payload.bytes().data(), payload.size()));
    write_file(path, file.bytes());
    write_text_file(manifest_path(path), manifest_json(ds));
}

Dataset load_dataset(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 12) throw DataError("dataset: truncated file (no header)");
    if (std::memcmp(bytes.data(), kDatasetMagic, 4) != 0)
        throw DataError("dataset: format error (bad magic)");
    ByteReader header(bytes.data() + 4, bytes.size() - 4);
    const uint32_t version = header.u32();
    if (version != kDatasetVersion)
        throw DataError("dataset: unsupported format version " + std::to_string(version));

    const size_t payload_len = bytes.size() - 12;
    const uint8_t* payload = bytes.data() + 8;
    uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (crc32(payload, payload_len) != stored_crc)
        throw DataError("dataset: checksum failure");

    ByteReader r(payload, payload_len);
    Dataset ds;
    const int n_robots = static_cast<int>(r.u32());
    const int n_steps = static_cast<int>(r.u32());
    ds.n_u = static_cast<int>(r.u32());
    ds.n_y = static_cast<int>(r.u32());
    const double dt = r.f64();
    for (int i = 0; i < n_robots; ++i) {
        RobotParams p = read_params_block(r);
        Trajectory t;
        t.n_steps = n_steps;
        t.n_u = ds.n_u;
        t.n_y = ds.n_y;
        t.dt = dt;
        t.u = r.f32s(static_cast<size_t>(n_steps) * ds.n_u);
        t.y = r.f32s(static_cast<size_t>(n_steps) * ds.n_y);
        ds.kept_indices.push_back(p.index);
        ds.params.push_back(std::move(p));
        ds.trajectories.push_back(std::move(t));
    }

    // Manifest sidecar restores the job, blacklist, and normalization stats.
    const auto manifest_bytes = read_file(manifest_path(path));
    nlohmann::json j = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
    ds.job = job_from_json(j.at("job"));
    ds.job.dt = dt;
    for (const auto& b : j.at("blacklist")) {
        BlacklistEntry e;
        e.robot_index = b.at("robot").get<int>();
        e.step = b.at("step").get<int>();
        const std::string kind = b.at("violation").get<std::string>();
        if (kind == "torque_saturation") e.kind = ViolationKind::torque_saturation;
        else if (kind == "position_limit") e.kind = ViolationKind::position_limit;
        else if (kind == "floor_collision") e.kind = ViolationKind::floor_collision;
        else if (kind == "self_collision") e.kind = ViolationKind::self_collision;
        else if (kind == "divergence") e.kind = ViolationKind::divergence;
        else if (kind == "discontinuity") e.kind = ViolationKind::discontinuity;
        else throw DataError("dataset manifest: unknown violation kind " + kind);
        ds.blacklist.push_back(e);
    }
    const auto& stats = j.at("stats");
    ds.stats.u_mean = stats.at("u_mean").get<std::vector<double>>();
    ds.stats.u_std = stats.at("u_std").get<std::vector<double>>();
    ds.stats.y_mean = stats.at("y_mean").get<std::vector<double>>();
    ds.stats.y_std = stats.at("y_std").get<std::vector<double>>();
    if (static_cast<int>(ds.stats.u_mean.size()) != ds.n_u ||
        static_cast<int>(ds.stats.y_mean.size()) != ds.n_y)
        throw DataError("dataset manifest: stats dimensions disagree with file header");
    return ds;
}

} // namespace metadyn
