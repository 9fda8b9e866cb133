#include "metadyn/model.hpp"

#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "metadyn/errors.hpp"
#include "metadyn/io.hpp"

namespace metadyn {

namespace {

constexpr uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'R', 'M', 'C', 'K'};
constexpr float kMaskFill = -1e9f;

std::string layer_name(const char* stack, int layer, const char* field) {
    return std::string(stack) + std::to_string(layer) + "." + field;
}

// One multi-head attention block. x_kv == x_q gives self-attention; a causal
// byte mask (1 = blocked) applies to the score matrix.
Tensor attention(Graph& g, Binder& bind, const TransformerConfig& cfg, const std::string& prefix,
                 Tensor x_q, Tensor x_kv, const std::vector<uint8_t>* mask, bool train,
                 Rng* dropout_rng) {
    const int d = cfg.d_model;
    const int heads = cfg.n_heads;
    const int dh = d / heads;
    const Tensor q = g.affine(x_q, bind(prefix + ".wq"), bind(prefix + ".bq"));
    const Tensor k = g.affine(x_kv, bind(prefix + ".wk"), bind(prefix + ".bk"));
    const Tensor v = g.affine(x_kv, bind(prefix + ".wv"), bind(prefix + ".bv"));
    const float inv_sqrt_dh = 1.0f / std::sqrt(static_cast<float>(dh));

    std::vector<Tensor> head_outputs;
    head_outputs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const Tensor qh = g.slice_last_dim(q, h * dh, (h + 1) * dh);
        const Tensor kh = g.slice_last_dim(k, h * dh, (h + 1) * dh);
        const Tensor vh = g.slice_last_dim(v, h * dh, (h + 1) * dh);
        Tensor scores = g.scale(g.matmul(qh, g.transpose_last_two(kh)), inv_sqrt_dh);
        if (mask != nullptr) scores = g.masked_fill(scores, *mask, kMaskFill);
        Tensor probs = g.softmax_last_dim(scores);
        if (train && cfg.dropout > 0.0f && dropout_rng != nullptr)
            probs = g.dropout(probs, cfg.dropout, train, *dropout_rng);
        head_outputs.push_back(g.matmul(probs, vh));
    }
    const Tensor merged = g.concat_last_dim(head_outputs);
    return g.affine(merged, bind(prefix + ".wo"), bind(prefix + ".bo"));
}

Tensor feed_forward(Graph& g, Binder& bind, const TransformerConfig& cfg, const std::string& prefix,
                    Tensor x, bool train, Rng* dropout_rng) {
    Tensor h = g.gelu(g.affine(x, bind(prefix + ".w1"), bind(prefix + ".b1")));
    if (train && cfg.dropout > 0.0f && dropout_rng != nullptr)
        h = g.dropout(h, cfg.dropout, train, *dropout_rng);
    return g.affine(h, bind(prefix + ".w2"), bind(prefix + ".b2"));
}

Tensor pre_norm(Graph& g, Binder& bind, const std::string& ln_prefix, Tensor x) {
    return g.layer_norm(x, bind(ln_prefix + ".g"), bind(ln_prefix + ".b"));
}

std::vector<uint8_t> causal_mask(int T) {
    std::vector<uint8_t> mask(static_cast<size_t>(T) * T, 0);
    for (int i = 0; i < T; ++i)
        for (int j = i + 1; j < T; ++j) mask[static_cast<size_t>(i) * T + j] = 1;
    return mask;
}

void init_matrix(NamedTensor& t, Rng& rng, double stddev) {
    for (auto& v : t.data) v = static_cast<float>(rng.normal(0.0, stddev));
}

nlohmann::json config_to_json(const TransformerConfig& c) {
    return nlohmann::json{{"n_u", c.n_u},
                          {"n_y", c.n_y},
                          {"d_model", c.d_model},
                          {"n_heads", c.n_heads},
                          {"n_layers_encoder", c.n_layers_encoder},
                          {"n_layers_decoder", c.n_layers_decoder},
                          {"d_ff", c.d_ff},
                          {"max_context", c.max_context},
                          {"max_query", c.max_query},
                          {"dropout", c.dropout},
                          {"seed", c.seed}};
}

TransformerConfig config_from_json(const nlohmann::json& j) {
    TransformerConfig c;
    c.n_u = j.at("n_u").get<int>();
    c.n_y = j.at("n_y").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_layers_encoder = j.at("n_layers_encoder").get<int>();
    c.n_layers_decoder = j.at("n_layers_decoder").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_context = j.at("max_context").get<int>();
    c.max_query = j.at("max_query").get<int>();
    c.dropout = j.at("dropout").get<float>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

} // namespace

void TransformerConfig::validate() const {
    if (n_u < 1 || n_y < 1) throw ConfigError("model: n_u and n_y must be >= 1");
    if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
        throw ConfigError("model: d_model must be a positive multiple of n_heads");
    if (n_layers_encoder < 1 || n_layers_decoder < 1)
        throw ConfigError("model: need at least one encoder and one decoder layer");
    if (max_context < 1 || max_query < 1)
        throw ConfigError("model: max_context and max_query must be >= 1");
    if (dropout < 0.0f || dropout >= 1.0f) throw ConfigError("model: dropout must lie in [0, 1)");
}

ParamStore init_params(const TransformerConfig& cfg) {
    cfg.validate();
    ParamStore store;
    Rng rng(splitmix64(cfg.seed ^ 0x6d657461646e796cull));
    const int d = cfg.d_model;
    const int ff = cfg.ff_dim();
    const double stddev = 0.02;

    const auto matrix = [&](const std::string& name, int rows, int cols) {
        init_matrix(store.add(name, {rows, cols}), rng, stddev);
    };
    const auto vector_zero = [&](const std::string& name, int n) { store.add(name, {n}); };
    const auto layer_norm_params = [&](const std::string& prefix) {
        auto& gain = store.add(prefix + ".g", {d});
        std::fill(gain.data.begin(), gain.data.end(), 1.0f);
        store.add(prefix + ".b", {d});
    };
    const auto attention_params = [&](const std::string& prefix) {
        for (const char* w : {".wq", ".wk", ".wv", ".wo"}) matrix(prefix + w, d, d);
        for (const char* b : {".bq", ".bk", ".bv", ".bo"}) vector_zero(prefix + b, d);
    };
    const auto ff_params = [&](const std::string& prefix) {
        matrix(prefix + ".w1", d, ff);
        vector_zero(prefix + ".b1", ff);
        matrix(prefix + ".w2", ff, d);
        vector_zero(prefix + ".b2", d);
    };

    matrix("ctx_embed.w", cfg.n_u + cfg.n_y, d);
    vector_zero("ctx_embed.b", d);
    matrix("query_embed.w", cfg.n_u, d);
    vector_zero("query_embed.b", d);
    matrix("pos", cfg.max_context + cfg.max_query, d);
    for (int l = 0; l < cfg.n_layers_encoder; ++l) {
        layer_norm_params(layer_name("enc", l, "ln1"));
        attention_params(layer_name("enc", l, "attn"));
        layer_norm_params(layer_name("enc", l, "ln2"));
        ff_params(layer_name("enc", l, "ff"));
    }
    layer_norm_params("enc_final_ln");
    for (int l = 0; l < cfg.n_layers_decoder; ++l) {
        layer_norm_params(layer_name("dec", l, "ln1"));
        attention_params(layer_name("dec", l, "self"));
        layer_norm_params(layer_name("dec", l, "ln2"));
        attention_params(layer_name("dec", l, "cross"));
        layer_norm_params(layer_name("dec", l, "ln3"));
        ff_params(layer_name("dec", l, "ff"));
    }
    layer_norm_params("dec_final_ln");
    matrix("head.w", d, cfg.n_y);
    vector_zero("head.b", cfg.n_y);
    return store;
}

int64_t parameter_count(const TransformerConfig& cfg) { return init_params(cfg).total_parameters(); }

Tensor Binder::operator()(const std::string& name) {
    for (size_t i = 0; i < store_.tensors.size(); ++i) {
        if (store_.tensors[i].name != name) continue;
        if (!bound_[i].valid()) {
            const auto& t = store_.tensors[i];
            bound_[i] = requires_grad_ ? graph_.param(t.shape, t.data.data())
                                       : graph_.input(t.shape, t.data, false);
        }
        return bound_[i];
    }
    throw ConfigError("Binder: unknown parameter " + name);
}

std::vector<std::vector<float>> Binder::collect_grads() const {
    std::vector<std::vector<float>> grads;
    grads.reserve(store_.tensors.size());
    for (size_t i = 0; i < store_.tensors.size(); ++i) {
        if (bound_[i].valid() && !bound_[i].grad().empty())
            grads.push_back(bound_[i].grad());
        else
            grads.emplace_back(store_.tensors[i].data.size(), 0.0f);
    }
    return grads;
}

Tensor embed_context(Graph& g, Binder& bind, const TransformerConfig& cfg,
                     const std::vector<float>& u_ctx, const std::vector<float>& y_ctx, int m) {
    if (m < 1 || m > cfg.max_context)
        throw ConfigError("embed_context: context length " + std::to_string(m) +
                          " outside [1, " + std::to_string(cfg.max_context) + "]");
    if (static_cast<int64_t>(u_ctx.size()) != static_cast<int64_t>(m) * cfg.n_u ||
        static_cast<int64_t>(y_ctx.size()) != static_cast<int64_t>(m) * cfg.n_y)
        throw ConfigError("embed_context: context data does not match m x (n_u, n_y)");
    const Tensor u = g.constant({m, cfg.n_u}, u_ctx);
    const Tensor y = g.constant({m, cfg.n_y}, y_ctx);
    const Tensor uy = g.concat_last_dim({u, y});
    const Tensor emb = g.affine(uy, bind("ctx_embed.w"), bind("ctx_embed.b"));
    const Tensor pos = g.slice_rows(bind("pos"), 0, m);
    return g.add(emb, pos);
}

Tensor encode(Graph& g, Binder& bind, const TransformerConfig& cfg, Tensor x,
              bool train, Rng* dropout_rng) {
    for (int l = 0; l < cfg.n_layers_encoder; ++l) {
        const std::string ln1 = layer_name("enc", l, "ln1");
        const std::string attn = layer_name("enc", l, "attn");
        const std::string ln2 = layer_name("enc", l, "ln2");
        const std::string ff = layer_name("enc", l, "ff");
        const Tensor normed = pre_norm(g, bind, ln1, x);
        x = g.add(x, attention(g, bind, cfg, attn, normed, normed, nullptr, train, dropout_rng));
        x = g.add(x, feed_forward(g, bind, cfg, ff, pre_norm(g, bind, ln2, x), train, dropout_rng));
    }
    return pre_norm(g, bind, "enc_final_ln", x);
}

Tensor decode(Graph& g, Binder& bind, const TransformerConfig& cfg, Tensor zeta,
              const std::vector<float>& u_query, int K, int m_offset, bool train, Rng* dropout_rng) {
    if (K < 1 || K > cfg.max_query)
        throw ConfigError("decode: query length " + std::to_string(K) + " outside [1, " +
                          std::to_string(cfg.max_query) + "]");
    if (static_cast<int64_t>(u_query.size()) != static_cast<int64_t>(K) * cfg.n_u)
        throw ConfigError("decode: query data does not match K x n_u");
    if (m_offset < 0 || m_offset + K > cfg.max_context + cfg.max_query)
        throw ConfigError("decode: query positions exceed the positional table");

    const Tensor uq = g.constant({K, cfg.n_u}, u_query);
    Tensor x = g.add(g.affine(uq, bind("query_embed.w"), bind("query_embed.b")),
                     g.slice_rows(bind("pos"), m_offset, m_offset + K));
    const std::vector<uint8_t> mask = causal_mask(K);
    for (int l = 0; l < cfg.n_layers_decoder; ++l) {
        const Tensor self_in = pre_norm(g, bind, layer_name("dec", l, "ln1"), x);
        x = g.add(x, attention(g, bind, cfg, layer_name("dec", l, "self"), self_in, self_in, &mask,
                               train, dropout_rng));
        const Tensor cross_in = pre_norm(g, bind, layer_name("dec", l, "ln2"), x);
        x = g.add(x, attention(g, bind, cfg, layer_name("dec", l, "cross"), cross_in, zeta, nullptr,
                               train, dropout_rng));
        const Tensor ff_in = pre_norm(g, bind, layer_name("dec", l, "ln3"), x);
        x = g.add(x, feed_forward(g, bind, cfg, layer_name("dec", l, "ff"), ff_in, train, dropout_rng));
    }
    x = pre_norm(g, bind, "dec_final_ln", x);
    return g.affine(x, bind("head.w"), bind("head.b"));
}

Tensor model_forward(Graph& g, Binder& bind, const TransformerConfig& cfg,
                     const std::vector<float>& u_ctx, const std::vector<float>& y_ctx, int m,
                     const std::vector<float>& u_query, int K, bool train, Rng* dropout_rng) {
    const Tensor ctx = embed_context(g, bind, cfg, u_ctx, y_ctx, m);
    const Tensor zeta = encode(g, bind, cfg, ctx, train, dropout_rng);
    return decode(g, bind, cfg, zeta, u_query, K, m, train, dropout_rng);
}

uint64_t Checkpoint::weights_fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& t : params.tensors) {
        h ^= fnv1a64(t.name.data(), t.name.size());
        h *= 0x100000001b3ull;
        h ^= fnv1a64(t.data.data(), t.data.size() * sizeof(float));
        h *= 0x100000001b3ull;
    }
    return h;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json j;
    j["config"] = config_to_json(ckpt.config);
    j["stats"] = {{"u_mean", ckpt.stats.u_mean},
                  {"u_std", ckpt.stats.u_std},
                  {"y_mean", ckpt.stats.y_mean},
                  {"y_std", ckpt.stats.y_std}};
    j["stats_fingerprint"] = ckpt.stats_fingerprint;
    j["train_step"] = ckpt.train_step;
    j["trained_context"] = ckpt.trained_context;
    j["trained_query"] = ckpt.trained_query;
    j["parent_fingerprint"] = ckpt.parent_fingerprint;
    j["has_optimizer"] = ckpt.has_optimizer;
    if (ckpt.has_optimizer) j["optimizer_step"] = ckpt.optimizer.step;

    ByteWriter payload;
    payload.str(j.dump());
    uint32_t tensor_count = static_cast<uint32_t>(ckpt.params.tensors.size());
    if (ckpt.has_optimizer) tensor_count *= 3; // weights + adam.m + adam.v
    payload.u32(tensor_count);
    const auto put_tensor = [&payload](const std::string& name, const std::vector<int>& shape,
                                       const std::vector<float>& data) {
        payload.str(name);
        payload.u32(static_cast<uint32_t>(shape.size()));
        for (int d : shape) payload.u32(static_cast<uint32_t>(d));
        payload.f32s(data);
    };
    for (const auto& t : ckpt.params.tensors) put_tensor(t.name, t.shape, t.data);
    if (ckpt.has_optimizer) {
        for (size_t i = 0; i < ckpt.params.tensors.size(); ++i) {
            const auto& t = ckpt.params.tensors[i];
            put_tensor("adam.m." + t.name, t.shape, ckpt.optimizer.m[i]);
            put_tensor("adam.v." + t.name, t.shape, ckpt.optimizer.v[i]);
        }
    }

    ByteWriter file;
    file.raw(kCheckpointMagic, 4);
    file.u32(kCheckpointVersion);
    file.raw(payload.bytes().data(), payload.size());
    file.u32(crc32(payload.bytes().data(), payload.size()));
    write_file(path, file.bytes());
}

Checkpoint load_checkpoint(const std::string& path) {
    const auto bytes = read_file(path);
    if (bytes.size() < 12) throw DataError("checkpoint: truncated file (no header)");
    if (std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw DataError("checkpoint: format error (bad magic)");
    ByteReader header(bytes.data() + 4, bytes.size() - 4);
    const uint32_t version = header.u32();
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(version));

    const size_t payload_len = bytes.size() - 12;
    const uint8_t* payload = bytes.data() + 8;
    uint32_t stored_crc;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    if (crc32(payload, payload_len) != stored_crc) throw DataError("checkpoint: checksum failure");

    ByteReader r(payload, payload_len);
    Checkpoint ckpt;
    const nlohmann::json j = nlohmann::json::parse(r.str());
    ckpt.config = config_from_json(j.at("config"));
    const auto& stats = j.at("stats");
    ckpt.stats.u_mean = stats.at("u_mean").get<std::vector<double>>();
    ckpt.stats.u_std = stats.at("u_std").get<std::vector<double>>();
    ckpt.stats.y_mean = stats.at("y_mean").get<std::vector<double>>();
    ckpt.stats.y_std = stats.at("y_std").get<std::vector<double>>();
    ckpt.stats_fingerprint = j.at("stats_fingerprint").get<uint64_t>();
    ckpt.train_step = j.at("train_step").get<int64_t>();
    ckpt.trained_context = j.at("trained_context").get<int>();
    ckpt.trained_query = j.at("trained_query").get<int>();
    ckpt.parent_fingerprint = j.at("parent_fingerprint").get<uint64_t>();
    ckpt.has_optimizer = j.at("has_optimizer").get<bool>();

    const uint32_t tensor_count = r.u32();
    std::vector<NamedTensor> adam_m, adam_v;
    for (uint32_t i = 0; i < tensor_count; ++i) {
        NamedTensor t;
        t.name = r.str();
        const uint32_t rank = r.u32();
        if (rank > 8) throw DataError("checkpoint: implausible tensor rank");
        int64_t numel = 1;
        for (uint32_t k = 0; k < rank; ++k) {
            const int d = static_cast<int>(r.u32());
            t.shape.push_back(d);
            numel *= d;
        }
        t.data = r.f32s(static_cast<size_t>(numel));
        for (float v : t.data)
            if (!std::isfinite(v)) throw DataError("checkpoint: non-finite weight in " + t.name);
        if (t.name.rfind("adam.m.", 0) == 0) {
            t.name = t.name.substr(7);
            adam_m.push_back(std::move(t));
        } else if (t.name.rfind("adam.v.", 0) == 0) {
            t.name = t.name.substr(7);
            adam_v.push_back(std::move(t));
        } else {
            ckpt.params.tensors.push_back(std::move(t));
        }
    }
    if (ckpt.has_optimizer) {
        if (adam_m.size() != ckpt.params.tensors.size() || adam_v.size() != ckpt.params.tensors.size())
            throw DataError("checkpoint: optimizer tensors missing");
        ckpt.optimizer.step = j.at("optimizer_step").get<int64_t>();
        for (size_t i = 0; i < ckpt.params.tensors.size(); ++i) {
            if (adam_m[i].name != ckpt.params.tensors[i].name)
                throw DataError("checkpoint: optimizer tensor order mismatch");
            ckpt.optimizer.m.push_back(std::move(adam_m[i].data));
            ckpt.optimizer.v.push_back(std::move(adam_v[i].data));
        }
    }
    return ckpt;
}

SimulateResult simulate(const Checkpoint& ckpt,
                        const std::vector<float>& u_ctx, const std::vector<float>& y_ctx, int m,
                        const std::vector<float>& u_query, int K,
                        std::optional<uint64_t> data_stats_fingerprint) {
    const TransformerConfig& cfg = ckpt.config;
    if (m > ckpt.trained_context)
        throw ConfigError("simulate: test context " + std::to_string(m) +
                          " exceeds training context " + std::to_string(ckpt.trained_context));
    if (K > ckpt.trained_query)
        throw ConfigError("simulate: query length " + std::to_string(K) +
                          " exceeds trained horizon " + std::to_string(ckpt.trained_query));

    const auto normalize = [](const std::vector<float>& data, const std::vector<double>& mean,
                              const std::vector<double>& stddev) {
        std::vector<float> out(data.size());
        const size_t n_ch = mean.size();
        for (size_t i = 0; i < data.size(); ++i)
            out[i] = static_cast<float>((data[i] - mean[i % n_ch]) / stddev[i % n_ch]);
        return out;
    };
    const std::vector<float> u_ctx_n = normalize(u_ctx, ckpt.stats.u_mean, ckpt.stats.u_std);
    const std::vector<float> y_ctx_n = normalize(y_ctx, ckpt.stats.y_mean, ckpt.stats.y_std);
    const std::vector<float> u_query_n = normalize(u_query, ckpt.stats.u_mean, ckpt.stats.u_std);

    Graph g;
    Binder bind(g, ckpt.params, /*requires_grad=*/false);
    const Tensor pred = model_forward(g, bind, cfg, u_ctx_n, y_ctx_n, m, u_query_n, K,
                                      /*train=*/false, nullptr);

    SimulateResult out;
    out.K = K;
    out.n_y = cfg.n_y;
    out.y_hat.resize(pred.value().size());
    const size_t n_ch = ckpt.stats.y_mean.size();
    for (size_t i = 0; i < out.y_hat.size(); ++i)
        out.y_hat[i] = static_cast<float>(pred.value()[i] * ckpt.stats.y_std[i % n_ch] +
                                          ckpt.stats.y_mean[i % n_ch]);
    out.stats_mismatch_warning =
        data_stats_fingerprint.has_value() && *data_stats_fingerprint != ckpt.stats_fingerprint;
    return out;
}

} // namespace metadyn
