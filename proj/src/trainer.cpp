#include "metadyn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "metadyn/errors.hpp"
#include "metadyn/evaluator.hpp"
#include "metadyn/parallel.hpp"

namespace metadyn {

namespace {

// Stream tags; each consumer of randomness gets an independent fork so the
// loop stays bit-reproducible and resumable from any step.
enum StreamTag : uint64_t { kTagBatch = 1, kTagDropout = 2 };

std::vector<float> normalize_block(const float* data, int steps, int n_ch,
                                   const std::vector<double>& mean, const std::vector<double>& stddev) {
    std::vector<float> out(static_cast<size_t>(steps) * n_ch);
    for (int k = 0; k < steps; ++k)
        for (int c = 0; c < n_ch; ++c) {
            const size_t i = static_cast<size_t>(k) * n_ch + c;
            out[i] = static_cast<float>((data[i] - mean[static_cast<size_t>(c)]) / stddev[static_cast<size_t>(c)]);
        }
    return out;
}

int context_length(const Dataset& ds, double fraction) {
    const int N = ds.trajectories.front().n_steps;
    const int m = static_cast<int>(std::lround(fraction * N));
    return std::clamp(m, 1, N - 1);
}

struct StepOutcome {
    double loss = 0.0;
    double grad_norm = 0.0;
    bool finite = true;
};

struct RobotWorkspace {
    double loss = 0.0;
    std::vector<std::vector<float>> grads;
};

StepOutcome run_train_step(const Dataset& ds, const TransformerConfig& mcfg, const TrainConfig& cfg,
                           ParamStore& params, AdamState& adam, int64_t step) {
    Rng batch_rng = Rng(cfg.seed).fork(kTagBatch).fork(static_cast<uint64_t>(step));
    const Batch batch = make_batch(ds, cfg, batch_rng);
    const int B = static_cast<int>(batch.u_ctx.size());

    std::vector<RobotWorkspace> slots(static_cast<size_t>(B));
    parallel_for(B, [&](int r) {
        Graph g;
        Binder bind(g, params, /*requires_grad=*/true);
        Rng drop_rng = Rng(cfg.seed).fork(kTagDropout).fork(static_cast<uint64_t>(step)).fork(static_cast<uint64_t>(r));
        const Tensor pred = model_forward(g, bind, mcfg, batch.u_ctx[static_cast<size_t>(r)],
                                          batch.y_ctx[static_cast<size_t>(r)], batch.m,
                                          batch.u_query[static_cast<size_t>(r)], batch.K,
                                          /*train=*/true, &drop_rng);
        const Tensor target = g.constant({batch.K, mcfg.n_y}, batch.y_query[static_cast<size_t>(r)]);
        const Tensor loss = cfg.loss == LossKind::mse ? g.mse_loss(pred, target)
                                                      : g.huber_loss(pred, target, cfg.huber_delta);
        g.backward(loss);
        slots[static_cast<size_t>(r)].loss = loss.value()[0];
        slots[static_cast<size_t>(r)].grads = bind.collect_grads();
    });

    // Fixed-order reduction over robots; workers above only fill their slot.
    StepOutcome out;
    double loss_acc = 0.0;
    for (int r = 0; r < B; ++r) loss_acc += slots[static_cast<size_t>(r)].loss;
    out.loss = loss_acc / B;

    std::vector<std::vector<float>> grads(params.tensors.size());
    double norm_sq = 0.0;
    for (size_t p = 0; p < params.tensors.size(); ++p) {
        grads[p].assign(params.tensors[p].data.size(), 0.0f);
        for (size_t j = 0; j < grads[p].size(); ++j) {
            double acc = 0.0;
            for (int r = 0; r < B; ++r) acc += slots[static_cast<size_t>(r)].grads[p][j];
            const double g = acc / B;
            grads[p][j] = static_cast<float>(g);
            norm_sq += g * g;
        }
    }
    out.grad_norm = std::sqrt(norm_sq);
    out.finite = std::isfinite(out.loss) && std::isfinite(out.grad_norm);
    if (!out.finite) return out;

    if (out.grad_norm > cfg.clip_norm && out.grad_norm > 0.0) {
        const float s = static_cast<float>(cfg.clip_norm / out.grad_norm);
        for (auto& g : grads)
            for (auto& v : g) v *= s;
    }
    AdamConfig acfg;
    acfg.lr = lr_schedule(cfg, step);
    adam_step(params, grads, adam, acfg);
    return out;
}

struct ValMetrics {
    double r2 = 0.0;
    double fi = 0.0;
};

ValMetrics validation_metrics(const Dataset& ds, const TransformerConfig& mcfg,
                              const TrainConfig& cfg, const ParamStore& params) {
    const std::vector<int> val = validation_positions(ds);
    if (val.empty()) return {0.0, 0.0};
    const int m = context_length(ds, cfg.context_fraction);
    const int N = ds.trajectories.front().n_steps;
    const int K = N - m;

    struct RobotVal {
        double r2 = 0.0;
        double fi = 0.0;
        bool ok = false;
    };
    std::vector<RobotVal> results(val.size());
    parallel_for(static_cast<int>(val.size()), [&](int vi) {
        const Trajectory& traj = ds.trajectories[static_cast<size_t>(val[static_cast<size_t>(vi)])];
        const std::vector<float> u_ctx = normalize_block(traj.u.data(), m, ds.n_u, ds.stats.u_mean, ds.stats.u_std);
        const std::vector<float> y_ctx = normalize_block(traj.y.data(), m, ds.n_y, ds.stats.y_mean, ds.stats.y_std);
        const std::vector<float> u_query = normalize_block(traj.u.data() + static_cast<size_t>(m) * ds.n_u,
                                                           K, ds.n_u, ds.stats.u_mean, ds.stats.u_std);
        Graph g;
        Binder bind(g, params, /*requires_grad=*/false);
        const Tensor pred =
            model_forward(g, bind, mcfg, u_ctx, y_ctx, m, u_query, K, /*train=*/false, nullptr);
        // Metrics per coordinate on normalized series; R2 and FI are invariant
        // to the per-channel affine normalization.
        double r2_sum = 0.0, fi_sum = 0.0;
        int used = 0;
        std::vector<double> yc(static_cast<size_t>(K)), pc(static_cast<size_t>(K));
        for (int c = 0; c < ds.n_y; ++c) {
            for (int k = 0; k < K; ++k) {
                yc[static_cast<size_t>(k)] = traj.yat(m + k, c);
                pc[static_cast<size_t>(k)] =
                    pred.value()[static_cast<size_t>(k) * ds.n_y + c] * ds.stats.y_std[static_cast<size_t>(c)] +
                    ds.stats.y_mean[static_cast<size_t>(c)];
            }
            const auto r = r2(yc, pc);
            const auto f = fit_index(yc, pc);
            if (r && f) {
                r2_sum += *r;
                fi_sum += *f;
                used += 1;
            }
        }
        if (used > 0)
            results[static_cast<size_t>(vi)] = {r2_sum / used, fi_sum / used, true};
    });
    double r2_acc = 0.0, fi_acc = 0.0;
    int n = 0;
    for (const auto& r : results)
        if (r.ok) {
            r2_acc += r.r2;
            fi_acc += r.fi;
            n += 1;
        }
    if (n == 0) return {0.0, 0.0};
    return {r2_acc / n, fi_acc / n};
}

Checkpoint make_checkpoint(const Dataset& ds, const TransformerConfig& mcfg, const TrainConfig& cfg,
                           const ParamStore& params, int64_t step, uint64_t parent_fp) {
    Checkpoint ckpt;
    ckpt.config = mcfg;
    ckpt.params = params;
    ckpt.stats = ds.stats;
    ckpt.stats_fingerprint = ds.stats.fingerprint();
    ckpt.train_step = step;
    ckpt.trained_context = context_length(ds, cfg.context_fraction);
    ckpt.trained_query = ds.trajectories.front().n_steps - ckpt.trained_context;
    ckpt.parent_fingerprint = parent_fp;
    return ckpt;
}

TrainResult train_loop(const Dataset& ds, const TransformerConfig& mcfg, const TrainConfig& cfg,
                       ParamStore params, AdamState adam, int64_t start_step, uint64_t parent_fp,
                       const std::string& run_kind) {
    cfg.validate();
    mcfg.validate();
    if (ds.trajectories.empty()) throw DataError("train: empty dataset");
    if (mcfg.n_u != ds.n_u || mcfg.n_y != ds.n_y)
        throw ConfigError("train: model channels (" + std::to_string(mcfg.n_u) + "," +
                          std::to_string(mcfg.n_y) + ") do not match dataset (" +
                          std::to_string(ds.n_u) + "," + std::to_string(ds.n_y) + ")");
    const int N = ds.trajectories.front().n_steps;
    const int m = context_length(ds, cfg.context_fraction);
    if (mcfg.max_context < m || mcfg.max_query < N - m)
        throw ConfigError("train: positional table too small for the dataset split (need " +
                          std::to_string(m) + "+" + std::to_string(N - m) + ")");

    const auto t0 = std::chrono::steady_clock::now();
    TrainResult result;
    result.log.run_kind = run_kind;
    result.log.parent_fingerprint = parent_fp;

    ParamStore best_params = params;
    double best_r2 = -1e300;
    int64_t best_step = start_step;
    int consecutive_skips = 0;
    std::vector<double> trailing_losses;

    for (int64_t step = start_step + 1; step <= cfg.max_steps; ++step) {
        const StepOutcome oc = run_train_step(ds, mcfg, cfg, params, adam, step);
        TrainLogRow row;
        row.step = step;
        row.loss = oc.loss;
        row.lr = lr_schedule(cfg, step);
        row.grad_norm = oc.grad_norm;
        row.skipped = !oc.finite;
        if (!oc.finite) {
            consecutive_skips += 1;
            if (consecutive_skips >= 10)
                throw NumericError("train: 10 consecutive non-finite steps at step " + std::to_string(step));
        } else {
            consecutive_skips = 0;
            trailing_losses.push_back(oc.loss);
        }

        if (cfg.eval_every > 0 && (step % cfg.eval_every == 0 || step == cfg.max_steps)) {
            const ValMetrics vm = validation_metrics(ds, mcfg, cfg, params);
            row.val_r2 = vm.r2;
            row.val_fi = vm.fi;
            row.has_val = true;
            if (vm.r2 > best_r2) {
                best_r2 = vm.r2;
                best_params = params;
                best_step = step;
            }
        }
        result.log.rows.push_back(row);

        if (step % 100 == 0 && trailing_losses.size() >= 20) {
            // Plateau diagnostic: least-squares slope of the trailing window.
            const size_t w = std::min<size_t>(trailing_losses.size(), 100);
            const size_t off = trailing_losses.size() - w;
            double mean_i = 0.0, mean_l = 0.0;
            for (size_t i = 0; i < w; ++i) {
                mean_i += static_cast<double>(i);
                mean_l += trailing_losses[off + i];
            }
            mean_i /= static_cast<double>(w);
            mean_l /= static_cast<double>(w);
            double cov = 0.0, var = 0.0;
            for (size_t i = 0; i < w; ++i) {
                const double di = static_cast<double>(i) - mean_i;
                cov += di * (trailing_losses[off + i] - mean_l);
                var += di * di;
            }
            result.log.loss_slope.emplace_back(step, var > 0 ? cov / var : 0.0);
        }
    }

    result.last = make_checkpoint(ds, mcfg, cfg, params, cfg.max_steps, parent_fp);
    result.last.has_optimizer = true;
    result.last.optimizer = std::move(adam);
    result.best = make_checkpoint(ds, mcfg, cfg, best_params, best_step, parent_fp);
    result.log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

} // namespace

void TrainConfig::validate() const {
    if (batch_robots < 1) throw ConfigError("train: batch_robots must be >= 1");
    if (!(context_fraction > 0.0 && context_fraction < 1.0))
        throw ConfigError("train: context_fraction must lie in (0, 1)");
    if (warmup_steps < 1) throw ConfigError("train: warmup_steps must be >= 1");
    if (!(peak_lr > 0.0) || lr_floor < 0.0 || lr_floor > peak_lr)
        throw ConfigError("train: need 0 <= lr_floor <= peak_lr and peak_lr > 0");
    if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
    if (!(clip_norm > 0.0)) throw ConfigError("train: clip_norm must be positive");
    if (huber_delta <= 0.0f) throw ConfigError("train: huber_delta must be positive");
}

double lr_schedule(const TrainConfig& cfg, int64_t step) {
    if (step <= 0) return 0.0;
    if (step <= cfg.warmup_steps)
        return cfg.peak_lr * static_cast<double>(step) / cfg.warmup_steps;
    if (cfg.max_steps <= cfg.warmup_steps) return cfg.peak_lr;
    const double progress = static_cast<double>(step - cfg.warmup_steps) /
                            static_cast<double>(cfg.max_steps - cfg.warmup_steps);
    return cfg.lr_floor +
           0.5 * (cfg.peak_lr - cfg.lr_floor) * (1.0 + std::cos(M_PI * std::min(progress, 1.0)));
}

bool is_validation_robot(const Dataset& ds, int position) {
    const int original_index = ds.kept_indices[static_cast<size_t>(position)];
    const uint64_t h = splitmix64(ds.job.randomization.seed ^
                                  (0x56414c49444eull + static_cast<uint64_t>(original_index) * 0x9e3779b97f4a7c15ull));
    return h % 10 == 0;
}

std::vector<int> training_positions(const Dataset& ds) {
    std::vector<int> out;
    for (int i = 0; i < ds.num_kept(); ++i)
        if (!is_validation_robot(ds, i)) out.push_back(i);
    return out;
}

std::vector<int> validation_positions(const Dataset& ds) {
    std::vector<int> out;
    for (int i = 0; i < ds.num_kept(); ++i)
        if (is_validation_robot(ds, i)) out.push_back(i);
    return out;
}

Batch make_batch(const Dataset& ds, const TrainConfig& cfg, Rng& rng) {
    cfg.validate();
    if (ds.trajectories.empty()) throw DataError("make_batch: empty dataset");
    std::vector<int> pool = training_positions(ds);
    if (static_cast<int>(pool.size()) < cfg.batch_robots)
        throw DataError("make_batch: dataset has " + std::to_string(pool.size()) +
                        " training robots, batch needs " + std::to_string(cfg.batch_robots));

    // Partial Fisher-Yates: distinct robots, without replacement.
    Batch batch;
    const int N = ds.trajectories.front().n_steps;
    batch.m = context_length(ds, cfg.context_fraction);
    batch.K = N - batch.m;
    for (int b = 0; b < cfg.batch_robots; ++b) {
        const size_t j = b + static_cast<size_t>(rng.below(pool.size() - static_cast<size_t>(b)));
        std::swap(pool[static_cast<size_t>(b)], pool[j]);
        const int pos = pool[static_cast<size_t>(b)];
        batch.robot_positions.push_back(pos);
        const Trajectory& traj = ds.trajectories[static_cast<size_t>(pos)];
        batch.u_ctx.push_back(normalize_block(traj.u.data(), batch.m, ds.n_u, ds.stats.u_mean, ds.stats.u_std));
        batch.y_ctx.push_back(normalize_block(traj.y.data(), batch.m, ds.n_y, ds.stats.y_mean, ds.stats.y_std));
        batch.u_query.push_back(normalize_block(traj.u.data() + static_cast<size_t>(batch.m) * ds.n_u,
                                                batch.K, ds.n_u, ds.stats.u_mean, ds.stats.u_std));
        batch.y_query.push_back(normalize_block(traj.y.data() + static_cast<size_t>(batch.m) * ds.n_y,
                                                batch.K, ds.n_y, ds.stats.y_mean, ds.stats.y_std));
    }
    return batch;
}

std::string TrainLog::to_csv() const {
    std::ostringstream os;
    os << "step,loss,lr,grad_norm,val_R2,val_FI\n";
    os.precision(10);
    for (const auto& r : rows) {
        os << r.step << "," << r.loss << "," << r.lr << "," << r.grad_norm << ",";
        if (r.has_val)
            os << r.val_r2 << "," << r.val_fi;
        else
            os << ",";
        os << "\n";
    }
    return os.str();
}

std::string TrainLog::summary_json() const {
    nlohmann::json j;
    j["run_kind"] = run_kind;
    j["parent_fingerprint"] = parent_fingerprint;
    j["steps"] = rows.empty() ? 0 : rows.back().step;
    j["wall_seconds"] = wall_seconds;
    int skipped = 0;
    for (const auto& r : rows) skipped += r.skipped ? 1 : 0;
    j["skipped_steps"] = skipped;
    if (!rows.empty()) j["final_loss"] = rows.back().loss;
    for (auto it = rows.rbegin(); it != rows.rend(); ++it)
        if (it->has_val) {
            j["final_val_R2"] = it->val_r2;
            j["final_val_FI"] = it->val_fi;
            break;
        }
    nlohmann::json slopes = nlohmann::json::array();
    for (const auto& [step, slope] : loss_slope) slopes.push_back({{"step", step}, {"slope", slope}});
    j["loss_slope"] = slopes;
    return j.dump(2);
}

TrainResult train(const Dataset& ds, const TransformerConfig& model_cfg, const TrainConfig& cfg) {
    ParamStore params = init_params(model_cfg);
    AdamState adam = AdamState::init(params);
    return train_loop(ds, model_cfg, cfg, std::move(params), std::move(adam), 0, 0, "train");
}

TrainResult resume(const Checkpoint& ckpt, const Dataset& ds, const TrainConfig& cfg) {
    if (!ckpt.has_optimizer)
        throw ConfigError("resume: checkpoint carries no optimizer state");
    return train_loop(ds, ckpt.config, cfg, ckpt.params, ckpt.optimizer, ckpt.train_step,
                      ckpt.parent_fingerprint, "train");
}

TrainResult fine_tune(const Checkpoint& parent, const Dataset& ds, TrainConfig cfg) {
    AdamState adam = AdamState::init(parent.params);
    return train_loop(ds, parent.config, cfg, parent.params, std::move(adam), 0,
                      parent.weights_fingerprint(), "finetune");
}

} // namespace metadyn
