#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metadyn/datagen.hpp"
#include "metadyn/model.hpp"

namespace metadyn {

// Scalar metrics. nullopt signals the zero-variance sentinel: y is constant
// and the ratio-form metrics are undefined for it.
std::optional<double> r2(std::span<const double> y, std::span<const double> y_hat);
double rmse(std::span<const double> y, std::span<const double> y_hat);
std::optional<double> nrmse(std::span<const double> y, std::span<const double> y_hat);
std::optional<double> fit_index(std::span<const double> y, std::span<const double> y_hat);

// Fit-index color band label.
std::string fi_band(double fi);

enum class EvalApproach { A_per_robot_average, B_merged_coordinates };

struct EvalConfig {
    double context_fraction = 0.20;
    int horizon = 0;      // 0 -> all remaining steps after the context
    EvalApproach approach = EvalApproach::A_per_robot_average;
    int max_robots = 0;   // 0 -> every kept robot
};

struct CoordinateMetrics {
    std::string coordinate;
    std::optional<double> r2;
    double rmse = 0.0;
    std::optional<double> nrmse;
    std::optional<double> fi;
    std::string band;
};

struct MetricsReport {
    std::string approach;
    std::vector<CoordinateMetrics> per_coordinate; // merged series (B) or per-robot means (A)
    double mean_r2 = 0.0;
    double std_r2 = 0.0;
    double mean_rmse = 0.0;
    double std_rmse = 0.0;
    double mean_fi = 0.0;
    int sentinel_count = 0;
    int robots = 0;
    bool stats_mismatch_warning = false;

    std::string per_coordinate_csv() const;
    std::string aggregate_csv() const;
};

// Model predictions for every evaluated robot, in dataset order.
struct PredictionSet {
    int m = 0;
    int horizon = 0;
    int n_y = 0;
    std::vector<std::vector<float>> y_true; // per robot, row-major horizon x n_y
    std::vector<std::vector<float>> y_pred;
    bool stats_mismatch_warning = false;
};

PredictionSet predict_dataset(const Checkpoint& ckpt, const Dataset& ds, const EvalConfig& cfg);

// Approach A: per robot, metric per coordinate then mean over coordinates;
// aggregate mean and sigma across robots.
MetricsReport evaluate_approach_A(const Checkpoint& ckpt, const Dataset& ds, const EvalConfig& cfg);

// Approach B: concatenate every robot's series per coordinate, metric once on
// the merged series.
MetricsReport evaluate_approach_B(const Checkpoint& ckpt, const Dataset& ds, const EvalConfig& cfg);

MetricsReport metrics_from_predictions(const PredictionSet& preds, EvalApproach approach,
                                       const std::vector<std::string>& coord_names);

struct SweepCell {
    double context_fraction = 0.0;
    int horizon = 0;
    double mean_r2 = 0.0;
    double mean_fi = 0.0;
    std::vector<std::vector<double>> per_step_abs_error; // horizon x n_y mean |err|
};

struct SweepTable {
    std::vector<SweepCell> cells;
    std::vector<std::string> coord_names;

    std::string table_csv() const;
    std::string error_curve_csv(const SweepCell& cell) const;
};

// Grid evaluation over context fractions and horizons. Contexts longer than
// the trained context are rejected.
SweepTable sweep_context_horizon(const Checkpoint& ckpt, const Dataset& ds,
                                 const std::vector<double>& fractions,
                                 const std::vector<int>& horizons);

struct ComparisonRow {
    std::string coordinate;
    std::optional<double> r2_zero, fi_zero;
    std::optional<double> r2_ft, fi_ft;
    std::optional<double> r2_scratch, fi_scratch;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::string to_csv() const;
};

ComparisonTable compare_zero_shot_ft_scratch(const Checkpoint& zero, const Checkpoint& ft,
                                             const Checkpoint& scratch, const Dataset& ds_ood,
                                             const EvalConfig& cfg);

} // namespace metadyn
