#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metadyn/datagen.hpp"
#include "metadyn/tensor.hpp"

namespace metadyn {

struct TransformerConfig {
    int n_u = 3;
    int n_y = 7;
    int d_model = 128;
    int n_heads = 4;
    int n_layers_encoder = 4;
    int n_layers_decoder = 4;
    int d_ff = 0;        // 0 resolves to 4 * d_model
    int max_context = 100;
    int max_query = 400;
    float dropout = 0.0f;
    uint64_t seed = 0;

    int ff_dim() const { return d_ff > 0 ? d_ff : 4 * d_model; }
    void validate() const;
};

// Fresh parameter set for the architecture schema; weights ~ N(0, 0.02),
// biases zero, layer norms identity, from the config seed.
ParamStore init_params(const TransformerConfig& cfg);
int64_t parameter_count(const TransformerConfig& cfg);

// Binds ParamStore tensors into a Graph on first use and remembers the
// binding so gradients can be collected per store index afterwards.
class Binder {
public:
    Binder(Graph& g, const ParamStore& store, bool requires_grad)
        : graph_(g), store_(store), requires_grad_(requires_grad),
          bound_(store.tensors.size()) {}

    Tensor operator()(const std::string& name);

    // Gradients aligned with store order; zeros for parameters that never
    // entered the graph or never received gradient.
    std::vector<std::vector<float>> collect_grads() const;

private:
    Graph& graph_;
    const ParamStore& store_;
    bool requires_grad_;
    std::vector<Tensor> bound_;
};

// Per-step affine embedding of the (u, y) context rows plus learned absolute
// positions 0..m-1.
Tensor embed_context(Graph& g, Binder& bind, const TransformerConfig& cfg,
                     const std::vector<float>& u_ctx, const std::vector<float>& y_ctx, int m);

// Unmasked self-attention stack over the context embedding.
Tensor encode(Graph& g, Binder& bind, const TransformerConfig& cfg, Tensor ctx_embedding,
              bool train, Rng* dropout_rng);

// Causally masked self-attention + cross-attention over the encoder output;
// query rows occupy positions m_offset..m_offset+K-1 of the shared timeline.
Tensor decode(Graph& g, Binder& bind, const TransformerConfig& cfg, Tensor zeta,
              const std::vector<float>& u_query, int K, int m_offset, bool train, Rng* dropout_rng);

// embed -> encode -> decode on normalized data. Inputs are row-major.
Tensor model_forward(Graph& g, Binder& bind, const TransformerConfig& cfg,
                     const std::vector<float>& u_ctx, const std::vector<float>& y_ctx, int m,
                     const std::vector<float>& u_query, int K, bool train, Rng* dropout_rng);

struct Checkpoint {
    TransformerConfig config;
    ParamStore params;
    ChannelStats stats;            // dataset normalization carried with the weights
    uint64_t stats_fingerprint = 0;
    int64_t train_step = 0;
    int trained_context = 0;       // context length used during training
    int trained_query = 0;
    uint64_t parent_fingerprint = 0; // nonzero when fine-tuned from another checkpoint
    bool has_optimizer = false;
    AdamState optimizer;

    uint64_t weights_fingerprint() const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

struct SimulateResult {
    std::vector<float> y_hat; // row-major K x n_y, physical units
    int K = 0;
    int n_y = 0;
    bool stats_mismatch_warning = false;
};

// Eq-style model-free rollout: context pairs select the system instance, the
// query torques drive the prediction. Physical units in, physical units out.
// Rejects contexts longer than the training context and queries longer than
// the trained horizon.
SimulateResult simulate(const Checkpoint& ckpt,
                        const std::vector<float>& u_ctx, const std::vector<float>& y_ctx, int m,
                        const std::vector<float>& u_query, int K,
                        std::optional<uint64_t> data_stats_fingerprint = std::nullopt);

} // namespace metadyn
