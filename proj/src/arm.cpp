#include "metadyn/arm.hpp"

#include <cmath>

#include "metadyn/errors.hpp"

namespace metadyn {

namespace {

void require_dim(const ArmModel& model, const Eigen::VectorXd& v, const char* what) {
    if (v.size() != model.n_links)
        throw ConfigError(std::string(what) + ": expected " + std::to_string(model.n_links) +
                          " entries, got " + std::to_string(v.size()));
}

inline Eigen::Vector2d unit(double angle) { return {std::cos(angle), std::sin(angle)}; }
inline Eigen::Vector2d perp(const Eigen::Vector2d& v) { return {-v.y(), v.x()}; }

// w[i][k] = d(com_i)/dq_k rotated back by -90 degrees:
//   w_ik = sum_{j=k..i-1} L_j e(s_j) + lc_i e(s_i)   for k <= i, else 0.
// Then d(com_i)/dq_k = perp(w_ik) and d^2(com_i)/(dq_k dq_m) = -w_{i,max(k,m)}.
std::vector<std::vector<Eigen::Vector2d>> com_lever_arms(const ArmModel& model,
                                                         const Eigen::VectorXd& s) {
    const int n = model.n_links;
    std::vector<std::vector<Eigen::Vector2d>> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        w[static_cast<size_t>(i)].assign(static_cast<size_t>(i) + 1, Eigen::Vector2d::Zero());
        Eigen::Vector2d acc = model.com_offsets[i] * unit(s[i]);
        for (int k = i; k >= 0; --k) {
            if (k < i) acc += model.link_lengths[k] * unit(s[k]);
            w[static_cast<size_t>(i)][static_cast<size_t>(k)] = acc;
        }
    }
    return w;
}

Eigen::VectorXd cumulative_angles(const Eigen::VectorXd& q) {
    Eigen::VectorXd s(q.size());
    double acc = 0.0;
    for (int i = 0; i < q.size(); ++i) {
        acc += q[i];
        s[i] = acc;
    }
    return s;
}

// Joint anchor points j_0..j_n (j_n is the end effector).
std::vector<Eigen::Vector2d> joint_points(const ArmModel& model, const Eigen::VectorXd& q) {
    const Eigen::VectorXd s = cumulative_angles(q);
    std::vector<Eigen::Vector2d> pts(static_cast<size_t>(model.n_links) + 1);
    pts[0] = Eigen::Vector2d::Zero();
    for (int i = 0; i < model.n_links; ++i)
        pts[static_cast<size_t>(i) + 1] = pts[static_cast<size_t>(i)] + model.link_lengths[i] * unit(s[i]);
    return pts;
}

double segment_distance(const Eigen::Vector2d& p1, const Eigen::Vector2d& p2,
                        const Eigen::Vector2d& q1, const Eigen::Vector2d& q2) {
    const auto point_seg = [](const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
        const Eigen::Vector2d ab = b - a;
        const double len2 = ab.squaredNorm();
        double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        return (p - (a + t * ab)).norm();
    };
    const auto orient = [](const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
        return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    };
    const double d1 = orient(p1, p2, q1), d2 = orient(p1, p2, q2);
    const double d3 = orient(q1, q2, p1), d4 = orient(q1, q2, p2);
    if (((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0))) return 0.0; // proper crossing
    return std::min(std::min(point_seg(p1, q1, q2), point_seg(p2, q1, q2)),
                    std::min(point_seg(q1, p1, p2), point_seg(q2, p1, p2)));
}

} // namespace

void ArmModel::validate() const {
    if (n_links < 1) throw ConfigError("ArmModel: n_links must be >= 1");
    const auto expect_n = [&](const Eigen::VectorXd& v, const char* name) {
        if (v.size() != n_links)
            throw ConfigError(std::string("ArmModel: ") + name + " must have n_links entries");
    };
    expect_n(link_lengths, "link_lengths");
    expect_n(link_masses, "link_masses");
    expect_n(com_offsets, "com_offsets");
    expect_n(link_inertias, "link_inertias");
    expect_n(joint_damping, "joint_damping");
    expect_n(joint_stiffness, "joint_stiffness");
    expect_n(rest_positions, "rest_positions");
    expect_n(torque_limits, "torque_limits");
    expect_n(q_limit_lower, "q_limit_lower");
    expect_n(q_limit_upper, "q_limit_upper");
    for (int i = 0; i < n_links; ++i) {
        if (!(link_lengths[i] > 0)) throw ConfigError("ArmModel: link lengths must be positive");
        if (!(link_masses[i] > 0)) throw ConfigError("ArmModel: link masses must be positive");
        if (!(link_inertias[i] > 0)) throw ConfigError("ArmModel: link inertias must be positive");
        if (com_offsets[i] < 0 || com_offsets[i] > link_lengths[i])
            throw ConfigError("ArmModel: com_offsets must lie within [0, link_length]");
        if (!(torque_limits[i] > 0)) throw ConfigError("ArmModel: torque limits must be positive");
        if (!(q_limit_lower[i] < q_limit_upper[i]))
            throw ConfigError("ArmModel: lower position limit must be below upper");
        if (joint_damping[i] < 0 || joint_stiffness[i] < 0)
            throw ConfigError("ArmModel: damping and stiffness must be non-negative");
    }
}

ArmModel default_arm_model(int n_links) {
    ArmModel m;
    m.n_links = n_links;
    m.link_lengths = Eigen::VectorXd::Zero(n_links);
    m.link_masses = Eigen::VectorXd::Zero(n_links);
    m.com_offsets = Eigen::VectorXd::Zero(n_links);
    m.link_inertias = Eigen::VectorXd::Zero(n_links);
    for (int i = 0; i < n_links; ++i) {
        // Tapered chain, rod-like inertia about the COM.
        const double len = n_links == 3 ? std::vector<double>{0.5, 0.4, 0.3}[static_cast<size_t>(i)]
                                        : 0.5 * std::pow(0.85, i);
        const double mass = n_links == 3 ? std::vector<double>{1.2, 1.0, 0.8}[static_cast<size_t>(i)]
                                         : 1.2 * std::pow(0.85, i);
        m.link_lengths[i] = len;
        m.link_masses[i] = mass;
        m.com_offsets[i] = 0.5 * len;
        m.link_inertias[i] = mass * len * len / 12.0;
    }
    m.joint_damping = Eigen::VectorXd::Constant(n_links, 1.5);
    m.joint_stiffness = Eigen::VectorXd::Constant(n_links, 12.0);
    m.rest_positions = Eigen::VectorXd::Zero(n_links);
    m.gravity = 9.81;
    m.torque_limits = Eigen::VectorXd::Constant(n_links, 50.0);
    m.q_limit_lower = Eigen::VectorXd::Constant(n_links, -2.8);
    m.q_limit_upper = Eigen::VectorXd::Constant(n_links, 2.8);
    m.floor_y = -0.05;
    return m;
}

std::vector<double> PoseOutput::flatten() const {
    std::vector<double> v;
    v.reserve(4 + static_cast<size_t>(q.size()));
    v.push_back(ee_x);
    v.push_back(ee_y);
    v.push_back(ee_cos);
    v.push_back(ee_sin);
    for (int i = 0; i < q.size(); ++i) v.push_back(q[i]);
    return v;
}

std::vector<std::string> pose_channel_names(int n_links) {
    std::vector<std::string> names = {"x", "y", "cos", "sin"};
    for (int i = 0; i < n_links; ++i) names.push_back("q" + std::to_string(i));
    return names;
}

void forward_kinematics(const ArmModel& model, const Eigen::VectorXd& q,
                        Eigen::Vector2d& ee_position, double& ee_orientation) {
    require_dim(model, q, "forward_kinematics: q");
    const Eigen::VectorXd s = cumulative_angles(q);
    ee_position.setZero();
    for (int i = 0; i < model.n_links; ++i) ee_position += model.link_lengths[i] * unit(s[i]);
    ee_orientation = q.sum();
}

PoseOutput pose_output(const ArmModel& model, const ArmState& state) {
    Eigen::Vector2d p;
    double theta = 0.0;
    forward_kinematics(model, state.q, p, theta);
    PoseOutput out;
    out.ee_x = p.x();
    out.ee_y = p.y();
    out.ee_cos = std::cos(theta);
    out.ee_sin = std::sin(theta);
    out.q = state.q;
    return out;
}

Eigen::MatrixXd jacobian(const ArmModel& model, const Eigen::VectorXd& q) {
    require_dim(model, q, "jacobian: q");
    const int n = model.n_links;
    const Eigen::VectorXd s = cumulative_angles(q);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(3, n);
    // d(ee)/dq_k = perp(sum_{j>=k} L_j e(s_j)); accumulate from the distal end.
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    for (int k = n - 1; k >= 0; --k) {
        acc += model.link_lengths[k] * unit(s[k]);
        const Eigen::Vector2d d = perp(acc);
        J(0, k) = d.x();
        J(1, k) = d.y();
        J(2, k) = 1.0;
    }
    return J;
}

DynamicsTerms dynamics_terms(const ArmModel& model, const ArmState& state) {
    require_dim(model, state.q, "dynamics_terms: q");
    require_dim(model, state.qdot, "dynamics_terms: qdot");
    const int n = model.n_links;
    const Eigen::VectorXd s = cumulative_angles(state.q);
    const auto w = com_lever_arms(model, s);

    DynamicsTerms out;
    out.M = Eigen::MatrixXd::Zero(n, n);
    out.C = Eigen::MatrixXd::Zero(n, n);
    out.g = Eigen::VectorXd::Zero(n);

    for (int i = 0; i < n; ++i) {
        const double mi = model.link_masses[i];
        const auto& wi = w[static_cast<size_t>(i)];
        for (int k = 0; k <= i; ++k) {
            const Eigen::Vector2d aik = perp(wi[static_cast<size_t>(k)]);
            out.g[k] += mi * model.gravity * aik.y();
            for (int l = 0; l <= i; ++l) {
                const Eigen::Vector2d ail = perp(wi[static_cast<size_t>(l)]);
                out.M(k, l) += mi * aik.dot(ail) + model.link_inertias[i];
            }
        }
    }

    // dM(k,l)/dq_m = sum_i m_i [ -w_{i,max(k,m)} . perp(w_il) - perp(w_ik) . w_{i,max(l,m)} ];
    // Christoffel symbols then give C with (Mdot - 2C) skew-symmetric.
    const auto dM = [&](int k, int l, int m) {
        double acc = 0.0;
        for (int i = std::max(k, l); i < n; ++i) {
            if (m > i) continue;
            const auto& wi = w[static_cast<size_t>(i)];
            const Eigen::Vector2d& wkm = wi[static_cast<size_t>(std::max(k, m))];
            const Eigen::Vector2d& wlm = wi[static_cast<size_t>(std::max(l, m))];
            const Eigen::Vector2d ail = perp(wi[static_cast<size_t>(l)]);
            const Eigen::Vector2d aik = perp(wi[static_cast<size_t>(k)]);
            acc += model.link_masses[i] * (-wkm.dot(ail) - aik.dot(wlm));
        }
        return acc;
    };
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j) {
            double c = 0.0;
            for (int m = 0; m < n; ++m)
                c += 0.5 * (dM(k, j, m) + dM(k, m, j) - dM(j, m, k)) * state.qdot[m];
            out.C(k, j) = c;
        }
    return out;
}

Eigen::VectorXd forward_dynamics(const ArmModel& model, const ArmState& state,
                                 const Eigen::VectorXd& tau) {
    require_dim(model, tau, "forward_dynamics: tau");
    const DynamicsTerms terms = dynamics_terms(model, state);
    const Eigen::VectorXd rhs = tau - terms.C * state.qdot - terms.g -
                                model.joint_damping.cwiseProduct(state.qdot) -
                                model.joint_stiffness.cwiseProduct(state.q - model.rest_positions);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(terms.M);
    if (ldlt.info() != Eigen::Success)
        throw NumericError("forward_dynamics: inertia matrix factorization failed");
    return ldlt.solve(rhs);
}

ArmState step(const ArmModel& model, const ArmState& state, const Eigen::VectorXd& tau, double dt) {
    if (!(dt > 0.0)) throw ConfigError("step: dt must be positive");
    const Eigen::VectorXd qdd = forward_dynamics(model, state, tau);
    ArmState next;
    next.qdot = state.qdot + dt * qdd;
    next.q = state.q + dt * next.qdot;
    next.t = state.t + dt;
    if (!next.q.allFinite() || !next.qdot.allFinite())
        throw NumericError("step: simulation diverged (non-finite state)");
    return next;
}

ViolationSet check_violations(const ArmModel& model, const ArmState& state,
                              const Eigen::VectorXd& tau, double self_collision_clearance) {
    require_dim(model, tau, "check_violations: tau");
    ViolationSet v;
    for (int i = 0; i < model.n_links; ++i) {
        if (std::abs(tau[i]) >= model.torque_limits[i]) v.torque_saturation = true;
        if (state.q[i] <= model.q_limit_lower[i] || state.q[i] >= model.q_limit_upper[i])
            v.position_limit = true;
    }
    const auto pts = joint_points(model, state.q);
    for (size_t i = 1; i < pts.size(); ++i)
        if (pts[i].y() < model.floor_y) v.floor_collision = true;
    // Segment s spans pts[s]..pts[s+1]; adjacent segments share a joint and
    // are exempt, everything else must keep the clearance margin.
    const size_t n_seg = pts.size() - 1;
    for (size_t a = 0; a + 2 < n_seg; ++a) {
        for (size_t b = a + 2; b < n_seg; ++b) {
            const double d = segment_distance(pts[a], pts[a + 1], pts[b], pts[b + 1]);
            if (d < self_collision_clearance) v.self_collision = true;
        }
    }
    return v;
}

double total_energy(const ArmModel& model, const ArmState& state) {
    const int n = model.n_links;
    const Eigen::VectorXd s = cumulative_angles(state.q);
    const auto w = com_lever_arms(model, s);
    double kinetic = 0.0;
    double potential = 0.0;
    Eigen::VectorXd sdot = cumulative_angles(state.qdot); // absolute angular rates
    std::vector<Eigen::Vector2d> joints = joint_points(model, state.q);
    for (int i = 0; i < n; ++i) {
        // COM velocity: sum_k d(com_i)/dq_k qdot_k
        Eigen::Vector2d vel = Eigen::Vector2d::Zero();
        for (int k = 0; k <= i; ++k)
            vel += perp(w[static_cast<size_t>(i)][static_cast<size_t>(k)]) * state.qdot[k];
        kinetic += 0.5 * model.link_masses[i] * vel.squaredNorm() +
                   0.5 * model.link_inertias[i] * sdot[i] * sdot[i];
        const Eigen::Vector2d com = joints[static_cast<size_t>(i)] + model.com_offsets[i] * unit(s[i]);
        potential += model.link_masses[i] * model.gravity * com.y();
    }
    return kinetic + potential;
}

std::string ViolationSet::describe() const {
    std::string out;
    const auto add = [&](bool flag, const char* name) {
        if (!flag) return;
        if (!out.empty()) out += "+";
        out += name;
    };
    add(torque_saturation, "torque_saturation");
    add(position_limit, "position_limit");
    add(floor_collision, "floor_collision");
    add(self_collision, "self_collision");
    return out.empty() ? "none" : out;
}

} // namespace metadyn
