#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metadyn/datagen.hpp"
#include "metadyn/model.hpp"

namespace metadyn {

enum class LossKind { mse, huber };

struct TrainConfig {
    int batch_robots = 16;
    double context_fraction = 0.20;
    LossKind loss = LossKind::mse;
    float huber_delta = 1.0f;
    int warmup_steps = 200;
    double peak_lr = 3e-4;
    double lr_floor = 3e-5;
    int max_steps = 2000;
    double clip_norm = 1.0;
    int eval_every = 200;
    int checkpoint_every = 500;
    uint64_t seed = 0;

    void validate() const;
};

// Linear warmup to peak_lr at warmup_steps, cosine decay to lr_floor at
// max_steps. lr(0) == 0.
double lr_schedule(const TrainConfig& cfg, int64_t step);

struct Batch {
    // Normalized, row-major per robot.
    std::vector<std::vector<float>> u_ctx, y_ctx, u_query, y_query;
    std::vector<int> robot_positions; // positions within ds.trajectories
    int m = 0;
    int K = 0;
};

// Distinct training robots per batch (validation holdouts never appear);
// trajectories split at m = round(context_fraction * N).
Batch make_batch(const Dataset& ds, const TrainConfig& cfg, Rng& rng);

// Validation holdout: ~10% of kept robots, selected by a hash of the robot's
// original index and the dataset seed, independent of the training seed.
bool is_validation_robot(const Dataset& ds, int position);
std::vector<int> training_positions(const Dataset& ds);
std::vector<int> validation_positions(const Dataset& ds);

struct TrainLogRow {
    int64_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
    double val_r2 = 0.0;
    double val_fi = 0.0;
    bool has_val = false;
    bool skipped = false;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    std::vector<std::pair<int64_t, double>> loss_slope; // trailing-window slope, every 100 steps
    double wall_seconds = 0.0;
    std::string run_kind = "train";
    uint64_t parent_fingerprint = 0;

    std::string to_csv() const;
    std::string summary_json() const;
};

struct TrainResult {
    Checkpoint last;
    Checkpoint best; // highest validation R^2 seen
    TrainLog log;
};

TrainResult train(const Dataset& ds, const TransformerConfig& model_cfg, const TrainConfig& cfg);

// Continues a checkpoint (weights + optimizer + step counter) to
// cfg.max_steps; bit-identical to an uninterrupted run with equal seeds.
TrainResult resume(const Checkpoint& ckpt, const Dataset& ds, const TrainConfig& cfg);

// Same loop seeded from the parent's weights with a fresh optimizer; the log
// is tagged with the parent fingerprint.
TrainResult fine_tune(const Checkpoint& parent, const Dataset& ds, TrainConfig cfg);

} // namespace metadyn
