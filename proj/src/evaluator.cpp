#include "metadyn/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "metadyn/errors.hpp"
#include "metadyn/parallel.hpp"

namespace metadyn {

namespace {

void require_pair(std::span<const double> y, std::span<const double> y_hat, const char* op) {
    if (y.size() != y_hat.size())
        throw ConfigError(std::string(op) + ": length mismatch " + std::to_string(y.size()) + " vs " +
                          std::to_string(y_hat.size()));
    if (y.size() < 2) throw ConfigError(std::string(op) + ": need at least 2 samples");
}

double mean_of(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

std::string fmt(std::optional<double> v) {
    if (!v) return "NA";
    std::ostringstream os;
    os.precision(10);
    os << *v;
    return os.str();
}

int eval_context(const Checkpoint& ckpt, const Dataset& ds, const EvalConfig& cfg) {
    if (!(cfg.context_fraction > 0.0 && cfg.context_fraction < 1.0))
        throw ConfigError("evaluate: context_fraction must lie in (0, 1)");
    const int N = ds.trajectories.front().n_steps;
    const int m = std::clamp(static_cast<int>(std::lround(cfg.context_fraction * N)), 1, N - 1);
    if (m > ckpt.trained_context)
        throw ConfigError("evaluate: unsupported configuration, test context " + std::to_string(m) +
                          " exceeds training context " + std::to_string(ckpt.trained_context));
    return m;
}

} // namespace

std::optional<double> r2(std::span<const double> y, std::span<const double> y_hat) {
    require_pair(y, y_hat, "r2");
    const double ybar = mean_of(y);
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        ss_res += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        ss_tot += (y[i] - ybar) * (y[i] - ybar);
    }
    if (ss_tot == 0.0) return std::nullopt;
    return 1.0 - ss_res / ss_tot;
}

double rmse(std::span<const double> y, std::span<const double> y_hat) {
    require_pair(y, y_hat, "rmse");
    double acc = 0.0;
    for (size_t i = 0; i < y.size(); ++i) acc += (y_hat[i] - y[i]) * (y_hat[i] - y[i]);
    return std::sqrt(acc / static_cast<double>(y.size()));
}

std::optional<double> nrmse(std::span<const double> y, std::span<const double> y_hat) {
    require_pair(y, y_hat, "nrmse");
    const double ybar = mean_of(y);
    double var = 0.0;
    for (double v : y) var += (v - ybar) * (v - ybar);
    var /= static_cast<double>(y.size()); // population variance
    if (var == 0.0) return std::nullopt;
    return rmse(y, y_hat) / std::sqrt(var);
}

std::optional<double> fit_index(std::span<const double> y, std::span<const double> y_hat) {
    require_pair(y, y_hat, "fit_index");
    const double ybar = mean_of(y);
    double err_sq = 0.0, dev_sq = 0.0;
    for (size_t i = 0; i < y.size(); ++i) {
        err_sq += (y[i] - y_hat[i]) * (y[i] - y_hat[i]);
        dev_sq += (y[i] - ybar) * (y[i] - ybar);
    }
    if (dev_sq == 0.0) return std::nullopt;
    return 100.0 * (1.0 - std::sqrt(err_sq) / std::sqrt(dev_sq));
}

std::string fi_band(double fi) {
    if (fi >= 90.0) return ">=90";
    if (fi >= 80.0) return "80-89.99";
    if (fi >= 60.0) return "60-79.99";
    if (fi >= 30.0) return "30-59.99";
    return "<30";
}

PredictionSet predict_dataset(const Checkpoint& ckpt, const Dataset& ds, const EvalConfig& cfg) {
    if (ds.trajectories.empty()) throw DataError("evaluate: empty dataset");
    const int N = ds.trajectories.front().n_steps;
    const int m = eval_context(ckpt, ds, cfg);
    const int H = cfg.horizon > 0 ? cfg.horizon : N - m;
    if (H < 1 || H > N - m)
        throw ConfigError("evaluate: horizon " + std::to_string(H) + " outside [1, " +
                          std::to_string(N - m) + "]");
    if (H > ckpt.trained_query)
        throw ConfigError("evaluate: horizon exceeds trained query length");
    const int robots = cfg.max_robots > 0 ? std::min(cfg.max_robots, ds.num_kept()) : ds.num_kept();

    PredictionSet preds;
    preds.m = m;
    preds.horizon = H;
    preds.n_y = ds.n_y;
    preds.y_true.resize(static_cast<size_t>(robots));
    preds.y_pred.resize(static_cast<size_t>(robots));
    preds.stats_mismatch_warning = ds.stats.fingerprint() != ckpt.stats_fingerprint;

    parallel_for(robots, [&](int r) {
        const Trajectory& traj = ds.trajectories[static_cast<size_t>(r)];
        std::vector<float> u_ctx(traj.u.begin(), traj.u.begin() + static_cast<size_t>(m) * ds.n_u);
        std::vector<float> y_ctx(traj.y.begin(), traj.y.begin() + static_cast<size_t>(m) * ds.n_y);
        std::vector<float> u_query(traj.u.begin() + static_cast<size_t>(m) * ds.n_u,
                                   traj.u.begin() + static_cast<size_t>(m + H) * ds.n_u);
        const SimulateResult sim = simulate(ckpt, u_ctx, y_ctx, m, u_query, H, ds.stats.fingerprint());
        preds.y_pred[static_cast<size_t>(r)] = sim.y_hat;
        preds.y_true[static_cast<size_t>(r)] =
            std::vector<float>(traj.y.begin() + static_cast<size_t>(m) * ds.n_y,
                               traj.y.begin() + static_cast<size_t>(m + H) * ds.n_y);
    });
    return preds;
}

MetricsReport metrics_from_predictions(const PredictionSet& preds, EvalApproach approach,
                                       const std::vector<std::string>& coord_names) {
    const int n_y = preds.n_y;
    const int H = preds.horizon;
    const int robots = static_cast<int>(preds.y_true.size());
    MetricsReport report;
    report.robots = robots;
    report.stats_mismatch_warning = preds.stats_mismatch_warning;

    const auto channel = [&](const std::vector<float>& data, int c) {
        std::vector<double> v(static_cast<size_t>(H));
        for (int k = 0; k < H; ++k) v[static_cast<size_t>(k)] = data[static_cast<size_t>(k) * n_y + c];
        return v;
    };

    if (approach == EvalApproach::A_per_robot_average) {
        report.approach = "A";
        // Per robot: metric per coordinate, mean over coordinates; aggregate
        // mean and population sigma across robots.
        std::vector<double> robot_r2, robot_rmse, robot_fi;
        for (int r = 0; r < robots; ++r) {
            double r2_sum = 0.0, rmse_sum = 0.0, fi_sum = 0.0;
            int used = 0;
            for (int c = 0; c < n_y; ++c) {
                const auto y = channel(preds.y_true[static_cast<size_t>(r)], c);
                const auto p = channel(preds.y_pred[static_cast<size_t>(r)], c);
                const auto r2v = r2(y, p);
                const auto fiv = fit_index(y, p);
                if (!r2v || !fiv) {
                    report.sentinel_count += 1;
                    continue;
                }
                r2_sum += *r2v;
                fi_sum += *fiv;
                rmse_sum += rmse(y, p);
                used += 1;
            }
            if (used == 0) continue;
            robot_r2.push_back(r2_sum / used);
            robot_rmse.push_back(rmse_sum / used);
            robot_fi.push_back(fi_sum / used);
        }
        if (robot_r2.empty()) throw DataError("evaluate: every coordinate was a zero-variance sentinel");
        const auto mean_std = [](const std::vector<double>& v, double& mean, double& stddev) {
            mean = mean_of(v);
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            stddev = std::sqrt(var / static_cast<double>(v.size()));
        };
        mean_std(robot_r2, report.mean_r2, report.std_r2);
        mean_std(robot_rmse, report.mean_rmse, report.std_rmse);
        double fi_mean, fi_std;
        mean_std(robot_fi, fi_mean, fi_std);
        report.mean_fi = fi_mean;
        return report;
    }

    report.approach = "B";
    // Merge robots coordinate by coordinate, metric once per coordinate.
    double r2_acc = 0.0, rmse_acc = 0.0, fi_acc = 0.0;
    int used = 0;
    for (int c = 0; c < n_y; ++c) {
        std::vector<double> y_merged, p_merged;
        y_merged.reserve(static_cast<size_t>(robots) * H);
        p_merged.reserve(static_cast<size_t>(robots) * H);
        for (int r = 0; r < robots; ++r) {
            const auto y = channel(preds.y_true[static_cast<size_t>(r)], c);
            const auto p = channel(preds.y_pred[static_cast<size_t>(r)], c);
            y_merged.insert(y_merged.end(), y.begin(), y.end());
            p_merged.insert(p_merged.end(), p.begin(), p.end());
        }
        CoordinateMetrics cm;
        cm.coordinate = c < static_cast<int>(coord_names.size()) ? coord_names[static_cast<size_t>(c)]
                                                                 : "c" + std::to_string(c);
        cm.r2 = r2(y_merged, p_merged);
        cm.rmse = rmse(y_merged, p_merged);
        cm.nrmse = nrmse(y_merged, p_merged);
        cm.fi = fit_index(y_merged, p_merged);
        cm.band = cm.fi ? fi_band(*cm.fi) : "NA";
        if (cm.r2 && cm.fi) {
            r2_acc += *cm.r2;
            rmse_acc += cm.rmse;
            fi_acc += *cm.fi;
            used += 1;
        } else {
            report.sentinel_count += 1;
        }
        report.per_coordinate.push_back(std::move(cm));
    }
    if (used == 0) throw DataError("evaluate: every coordinate was a zero-variance sentinel");
    report.mean_r2 = r2_acc / used;
    report.mean_rmse = rmse_acc / used;
    report.mean_fi = fi_acc / used;
    return report;
}

MetricsReport evaluate_approach_A(const Checkpoint& ckpt, const Dataset& ds, const EvalConfig& cfg) {
    const PredictionSet preds = predict_dataset(ckpt, ds, cfg);
    return metrics_from_predictions(preds, EvalApproach::A_per_robot_average,
                                    pose_channel_names(ds.n_u));
}

MetricsReport evaluate_approach_B(const Checkpoint& ckpt, const Dataset& ds, const EvalConfig& cfg) {
    const PredictionSet preds = predict_dataset(ckpt, ds, cfg);
    return metrics_from_predictions(preds, EvalApproach::B_merged_coordinates,
                                    pose_channel_names(ds.n_u));
}

std::string MetricsReport::per_coordinate_csv() const {
    std::ostringstream os;
    os << "coordinate,R2,RMSE,NRMSE,FI,band\n";
    os.precision(10);
    for (const auto& c : per_coordinate)
        os << c.coordinate << "," << fmt(c.r2) << "," << c.rmse << "," << fmt(c.nrmse) << ","
           << fmt(c.fi) << "," << c.band << "\n";
    return os.str();
}

std::string MetricsReport::aggregate_csv() const {
    std::ostringstream os;
    os << "approach,mean_R2,std_R2,mean_RMSE,std_RMSE,sentinel_count\n";
    os.precision(10);
    os << approach << "," << mean_r2 << "," << std_r2 << "," << mean_rmse << "," << std_rmse << ","
       << sentinel_count << "\n";
    return os.str();
}

SweepTable sweep_context_horizon(const Checkpoint& ckpt, const Dataset& ds,
                                 const std::vector<double>& fractions,
                                 const std::vector<int>& horizons) {
    SweepTable table;
    table.coord_names = pose_channel_names(ds.n_u);
    for (double frac : fractions) {
        for (int horizon : horizons) {
            EvalConfig cfg;
            cfg.context_fraction = frac;
            cfg.horizon = horizon;
            const PredictionSet preds = predict_dataset(ckpt, ds, cfg);
            const MetricsReport report =
                metrics_from_predictions(preds, EvalApproach::A_per_robot_average, table.coord_names);
            SweepCell cell;
            cell.context_fraction = frac;
            cell.horizon = preds.horizon;
            cell.mean_r2 = report.mean_r2;
            cell.mean_fi = report.mean_fi;
            cell.per_step_abs_error.assign(static_cast<size_t>(preds.horizon),
                                           std::vector<double>(static_cast<size_t>(ds.n_y), 0.0));
            for (size_t r = 0; r < preds.y_true.size(); ++r)
                for (int k = 0; k < preds.horizon; ++k)
                    for (int c = 0; c < ds.n_y; ++c)
                        cell.per_step_abs_error[static_cast<size_t>(k)][static_cast<size_t>(c)] +=
                            std::abs(static_cast<double>(
                                         preds.y_pred[r][static_cast<size_t>(k) * ds.n_y + c]) -
                                     preds.y_true[r][static_cast<size_t>(k) * ds.n_y + c]) /
                            static_cast<double>(preds.y_true.size());
            table.cells.push_back(std::move(cell));
        }
    }
    return table;
}

std::string SweepTable::table_csv() const {
    std::ostringstream os;
    os << "context_frac,horizon,mean_R2,mean_FI\n";
    os.precision(10);
    for (const auto& c : cells)
        os << c.context_fraction << "," << c.horizon << "," << c.mean_r2 << "," << c.mean_fi << "\n";
    return os.str();
}

std::string SweepTable::error_curve_csv(const SweepCell& cell) const {
    std::ostringstream os;
    os << "step";
    for (const auto& name : coord_names) os << "," << name;
    os << "\n";
    os.precision(10);
    for (size_t k = 0; k < cell.per_step_abs_error.size(); ++k) {
        os << k;
        for (double v : cell.per_step_abs_error[k]) os << "," << v;
        os << "\n";
    }
    return os.str();
}

ComparisonTable compare_zero_shot_ft_scratch(const Checkpoint& zero, const Checkpoint& ft,
                                             const Checkpoint& scratch, const Dataset& ds_ood,
                                             const EvalConfig& cfg) {
    for (const Checkpoint* c : {&zero, &ft, &scratch})
        if (c->config.n_u != ds_ood.n_u || c->config.n_y != ds_ood.n_y)
            throw ConfigError("compare: checkpoint channel dims do not match the dataset");

    const auto names = pose_channel_names(ds_ood.n_u);
    const MetricsReport rz = evaluate_approach_B(zero, ds_ood, cfg);
    const MetricsReport rf = evaluate_approach_B(ft, ds_ood, cfg);
    const MetricsReport rs = evaluate_approach_B(scratch, ds_ood, cfg);

    ComparisonTable table;
    for (size_t c = 0; c < rz.per_coordinate.size(); ++c) {
        ComparisonRow row;
        row.coordinate = rz.per_coordinate[c].coordinate;
        row.r2_zero = rz.per_coordinate[c].r2;
        row.fi_zero = rz.per_coordinate[c].fi;
        row.r2_ft = rf.per_coordinate[c].r2;
        row.fi_ft = rf.per_coordinate[c].fi;
        row.r2_scratch = rs.per_coordinate[c].r2;
        row.fi_scratch = rs.per_coordinate[c].fi;
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string ComparisonTable::to_csv() const {
    std::ostringstream os;
    os << "coordinate,zero_R2,zero_FI,zero_band,ft_R2,ft_FI,ft_band,scratch_R2,scratch_FI,scratch_band\n";
    os.precision(10);
    for (const auto& r : rows) {
        const auto band = [](const std::optional<double>& fi) { return fi ? fi_band(*fi) : "NA"; };
        os << r.coordinate << "," << fmt(r.r2_zero) << "," << fmt(r.fi_zero) << "," << band(r.fi_zero)
           << "," << fmt(r.r2_ft) << "," << fmt(r.fi_ft) << "," << band(r.fi_ft) << ","
           << fmt(r.r2_scratch) << "," << fmt(r.fi_scratch) << "," << band(r.fi_scratch) << "\n";
    }
    return os.str();
}

} // namespace metadyn
