#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metadyn/rng.hpp"

namespace metadyn {

// Dense f32 tensor graph with reverse-mode autodiff. A Graph owns every node
// created through it (the tape); Tensor is a cheap handle into that graph.
// Graphs are single-threaded; run distinct graphs on distinct threads.
class Graph;

class Tensor {
public:
    Tensor() = default;

    const std::vector<int>& shape() const;
    const std::vector<float>& value() const;
    const std::vector<float>& grad() const;
    int64_t numel() const;
    bool requires_grad() const;
    bool valid() const { return graph_ != nullptr; }

private:
    friend class Graph;
    Tensor(Graph* g, int id) : graph_(g), id_(id) {}
    Graph* graph_ = nullptr;
    int id_ = -1;
};

int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaves. input() copies the data; parameters get gradients.
    Tensor input(std::vector<int> shape, std::vector<float> data, bool requires_grad = false);
    Tensor constant(std::vector<int> shape, std::vector<float> data) { return input(std::move(shape), std::move(data), false); }
    Tensor param(std::vector<int> shape, const float* data);
    Tensor zeros(std::vector<int> shape);

    // Primitives. Shapes are validated; mismatches throw ConfigError naming
    // the op and both shapes.
    Tensor matmul(Tensor a, Tensor b);           // [m,k] x [k,n] -> [m,n]
    Tensor add(Tensor a, Tensor b);              // same shape, or b broadcast over last dim
    Tensor mul(Tensor a, Tensor b);              // elementwise
    Tensor scale(Tensor a, float s);
    Tensor transpose_last_two(Tensor a);         // 2-D transpose
    Tensor reshape(Tensor a, std::vector<int> shape);
    Tensor concat_last_dim(const std::vector<Tensor>& parts);
    Tensor slice_last_dim(Tensor a, int begin, int end);
    Tensor slice_rows(Tensor a, int begin, int end); // first-dim slice
    Tensor softmax_last_dim(Tensor a);
    Tensor layer_norm(Tensor a, Tensor gain, Tensor bias, float eps = 1e-5f);
    Tensor gelu(Tensor a);
    Tensor dropout(Tensor a, float p, bool train, Rng& rng);
    // Affine row map x W + b; the continuous-input replacement for a token
    // embedding lookup.
    Tensor affine(Tensor x, Tensor w, Tensor b);
    Tensor masked_fill(Tensor a, const std::vector<uint8_t>& mask, float fill);
    Tensor mean_all(Tensor a); // scalar [1]

    Tensor mse_loss(Tensor pred, Tensor target);
    Tensor huber_loss(Tensor pred, Tensor target, float delta);

    // Reverse-mode sweep from a scalar; every parameter reachable from `loss`
    // receives its gradient. Throws on non-scalar input.
    void backward(Tensor loss);

    size_t num_nodes() const { return nodes_.size(); }

private:
    friend class Tensor;

    struct Node {
        std::vector<int> shape;
        std::vector<float> value;
        std::vector<float> grad;
        bool requires_grad = false;
        std::function<void()> backprop; // null for leaves
    };

    Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }
    Tensor make(std::vector<int> shape, bool requires_grad);
    std::vector<float>& grad_buffer(int id);
    void check_same_graph(const Tensor& t, const char* op) const;

    std::vector<Node> nodes_;
};

// Named parameter collection (the model's phi) plus the Adam state that
// advances it.
struct NamedTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct ParamStore {
    std::vector<NamedTensor> tensors;

    NamedTensor& at(const std::string& name);
    const NamedTensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
    NamedTensor& add(const std::string& name, std::vector<int> shape);
    int64_t total_parameters() const;
};

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<float>> m; // first moments, aligned with ParamStore order
    std::vector<std::vector<float>> v; // second moments
    int64_t step = 0;

    static AdamState init(const ParamStore& params);
};

// One bias-corrected Adam update. `grads` is aligned with `params.tensors`.
void adam_step(ParamStore& params, const std::vector<std::vector<float>>& grads,
               AdamState& state, const AdamConfig& cfg);

} // namespace metadyn
