#include "metadyn/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "metadyn/errors.hpp"

namespace metadyn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

} // namespace

int64_t shape_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

const std::vector<int>& Tensor::shape() const { return graph_->node(id_).shape; }
const std::vector<float>& Tensor::value() const { return graph_->node(id_).value; }
int64_t Tensor::numel() const { return shape_numel(shape()); }
bool Tensor::requires_grad() const { return graph_->node(id_).requires_grad; }

const std::vector<float>& Tensor::grad() const {
    auto& n = graph_->node(id_);
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0f);
    return n.grad;
}

Tensor Graph::make(std::vector<int> shape, bool requires_grad) {
    Node n;
    n.shape = std::move(shape);
    n.value.assign(static_cast<size_t>(shape_numel(n.shape)), 0.0f);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

std::vector<float>& Graph::grad_buffer(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0f);
    return n.grad;
}

void Graph::check_same_graph(const Tensor& t, const char* op) const {
    require(t.valid() && t.graph_ == this, std::string(op) + ": tensor belongs to another graph");
}

Tensor Graph::input(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
    require(static_cast<int64_t>(data.size()) == shape_numel(shape),
            "input: data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    Node n;
    n.shape = std::move(shape);
    n.value = std::move(data);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Graph::param(std::vector<int> shape, const float* data) {
    const auto count = static_cast<size_t>(shape_numel(shape));
    return input(std::move(shape), std::vector<float>(data, data + count), true);
}

Tensor Graph::zeros(std::vector<int> shape) {
    const auto count = static_cast<size_t>(shape_numel(shape));
    return input(std::move(shape), std::vector<float>(count, 0.0f), false);
}

Tensor Graph::matmul(Tensor a, Tensor b) {
    check_same_graph(a, "matmul");
    check_same_graph(b, "matmul");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    require(sa.size() == 2 && sb.size() == 2 && sa[1] == sb[0],
            "matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    const int m = sa[0], k = sa[1], n = sb[1];
    Tensor out = make({m, n}, node(a.id_).requires_grad || node(b.id_).requires_grad);

    ConstMapMat A(node(a.id_).value.data(), m, k);
    ConstMapMat B(node(b.id_).value.data(), k, n);
    MapMat(node(out.id_).value.data(), m, n).noalias() = A * B;

    if (node(out.id_).requires_grad) {
        const int aid = a.id_, bid = b.id_, oid = out.id_;
        node(oid).backprop = [this, aid, bid, oid, m, k, n] {
            ConstMapMat dC(node(oid).grad.data(), m, n);
            if (node(aid).requires_grad) {
                ConstMapMat B2(node(bid).value.data(), k, n);
                MapMat(grad_buffer(aid).data(), m, k).noalias() += dC * B2.transpose();
            }
            if (node(bid).requires_grad) {
                ConstMapMat A2(node(aid).value.data(), m, k);
                MapMat(grad_buffer(bid).data(), k, n).noalias() += A2.transpose() * dC;
            }
        };
    }
    return out;
}

Tensor Graph::add(Tensor a, Tensor b) {
    check_same_graph(a, "add");
    check_same_graph(b, "add");
    const auto& sa = a.shape();
    const auto& sb = b.shape();
    const bool bias_broadcast = sb.size() == 1 && !sa.empty() && sa.back() == sb[0] &&
                                shape_numel(sa) != shape_numel(sb);
    require(sa == sb || bias_broadcast,
            "add: incompatible shapes " + shape_str(sa) + " + " + shape_str(sb));
    Tensor out = make(sa, node(a.id_).requires_grad || node(b.id_).requires_grad);
    auto& ov = node(out.id_).value;
    const auto& av = node(a.id_).value;
    const auto& bv = node(b.id_).value;
    if (bias_broadcast) {
        const size_t n = bv.size();
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i % n];
    } else {
        for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    }
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, bid = b.id_, oid = out.id_;
        node(oid).backprop = [this, aid, bid, oid, bias_broadcast] {
            const auto& g = node(oid).grad;
            if (node(aid).requires_grad) {
                auto& ga = grad_buffer(aid);
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (node(bid).requires_grad) {
                auto& gb = grad_buffer(bid);
                if (bias_broadcast) {
                    // Column sums in double; bias rows accumulate many terms.
                    const size_t n = gb.size();
                    std::vector<double> acc(n, 0.0);
                    for (size_t i = 0; i < g.size(); ++i) acc[i % n] += g[i];
                    for (size_t i = 0; i < n; ++i) gb[i] += static_cast<float>(acc[i]);
                } else {
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                }
            }
        };
    }
    return out;
}

Tensor Graph::mul(Tensor a, Tensor b) {
    check_same_graph(a, "mul");
    check_same_graph(b, "mul");
    require(a.shape() == b.shape(),
            "mul: incompatible shapes " + shape_str(a.shape()) + " * " + shape_str(b.shape()));
    Tensor out = make(a.shape(), node(a.id_).requires_grad || node(b.id_).requires_grad);
    auto& ov = node(out.id_).value;
    const auto& av = node(a.id_).value;
    const auto& bv = node(b.id_).value;
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, bid = b.id_, oid = out.id_;
        node(oid).backprop = [this, aid, bid, oid] {
            const auto& g = node(oid).grad;
            if (node(aid).requires_grad) {
                auto& ga = grad_buffer(aid);
                const auto& bv2 = node(bid).value;
                for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
            }
            if (node(bid).requires_grad) {
                auto& gb = grad_buffer(bid);
                const auto& av2 = node(aid).value;
                for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
            }
        };
    }
    return out;
}

Tensor Graph::scale(Tensor a, float s) {
    check_same_graph(a, "scale");
    Tensor out = make(a.shape(), node(a.id_).requires_grad);
    const auto& av = node(a.id_).value;
    auto& ov = node(out.id_).value;
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * s;
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid, s] {
            auto& ga = grad_buffer(aid);
            const auto& g = node(oid).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
        };
    }
    return out;
}

Tensor Graph::transpose_last_two(Tensor a) {
    check_same_graph(a, "transpose_last_two");
    const auto& sa = a.shape();
    require(sa.size() == 2, "transpose_last_two: expected rank 2, got " + shape_str(sa));
    const int m = sa[0], n = sa[1];
    Tensor out = make({n, m}, node(a.id_).requires_grad);
    ConstMapMat A(node(a.id_).value.data(), m, n);
    MapMat(node(out.id_).value.data(), n, m) = A.transpose();
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid, m, n] {
            ConstMapMat g(node(oid).grad.data(), n, m);
            MapMat(grad_buffer(aid).data(), m, n) += g.transpose();
        };
    }
    return out;
}

Tensor Graph::reshape(Tensor a, std::vector<int> shape) {
    check_same_graph(a, "reshape");
    require(shape_numel(shape) == a.numel(),
            "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    Tensor out = make(std::move(shape), node(a.id_).requires_grad);
    node(out.id_).value = node(a.id_).value;
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid] {
            auto& ga = grad_buffer(aid);
            const auto& g = node(oid).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    }
    return out;
}

Tensor Graph::concat_last_dim(const std::vector<Tensor>& parts) {
    require(!parts.empty(), "concat_last_dim: no inputs");
    for (const auto& p : parts) check_same_graph(p, "concat_last_dim");
    const auto& s0 = parts.front().shape();
    require(s0.size() == 2, "concat_last_dim: expected rank 2, got " + shape_str(s0));
    const int rows = s0[0];
    int total = 0;
    bool needs_grad = false;
    for (const auto& p : parts) {
        require(p.shape().size() == 2 && p.shape()[0] == rows,
                "concat_last_dim: row mismatch " + shape_str(s0) + " vs " + shape_str(p.shape()));
        total += p.shape()[1];
        needs_grad = needs_grad || p.requires_grad();
    }
    Tensor out = make({rows, total}, needs_grad);
    auto& ov = node(out.id_).value;
    int col = 0;
    for (const auto& p : parts) {
        const int w = p.shape()[1];
        const auto& pv = node(p.id_).value;
        for (int r = 0; r < rows; ++r)
            std::copy_n(pv.data() + static_cast<size_t>(r) * w, w,
                        ov.data() + static_cast<size_t>(r) * total + col);
        col += w;
    }
    if (needs_grad) {
        std::vector<int> ids;
        std::vector<int> widths;
        for (const auto& p : parts) {
            ids.push_back(p.id_);
            widths.push_back(p.shape()[1]);
        }
        const int oid = out.id_;
        node(oid).backprop = [this, ids, widths, oid, rows, total] {
            const auto& g = node(oid).grad;
            int col2 = 0;
            for (size_t j = 0; j < ids.size(); ++j) {
                const int w = widths[j];
                if (node(ids[j]).requires_grad) {
                    auto& gp = grad_buffer(ids[j]);
                    for (int r = 0; r < rows; ++r)
                        for (int c = 0; c < w; ++c)
                            gp[static_cast<size_t>(r) * w + c] +=
                                g[static_cast<size_t>(r) * total + col2 + c];
                }
                col2 += w;
            }
        };
    }
    return out;
}

Tensor Graph::slice_last_dim(Tensor a, int begin, int end) {
    check_same_graph(a, "slice_last_dim");
    const auto& sa = a.shape();
    require(sa.size() == 2, "slice_last_dim: expected rank 2, got " + shape_str(sa));
    require(0 <= begin && begin < end && end <= sa[1],
            "slice_last_dim: range [" + std::to_string(begin) + "," + std::to_string(end) +
                ") out of " + shape_str(sa));
    const int rows = sa[0], cols = sa[1], w = end - begin;
    Tensor out = make({rows, w}, node(a.id_).requires_grad);
    const auto& av = node(a.id_).value;
    auto& ov = node(out.id_).value;
    for (int r = 0; r < rows; ++r)
        std::copy_n(av.data() + static_cast<size_t>(r) * cols + begin, w,
                    ov.data() + static_cast<size_t>(r) * w);
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid, rows, cols, w, begin] {
            auto& ga = grad_buffer(aid);
            const auto& g = node(oid).grad;
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < w; ++c)
                    ga[static_cast<size_t>(r) * cols + begin + c] += g[static_cast<size_t>(r) * w + c];
        };
    }
    return out;
}

Tensor Graph::slice_rows(Tensor a, int begin, int end) {
    check_same_graph(a, "slice_rows");
    const auto& sa = a.shape();
    require(sa.size() == 2, "slice_rows: expected rank 2, got " + shape_str(sa));
    require(0 <= begin && begin < end && end <= sa[0],
            "slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " + shape_str(sa));
    const int cols = sa[1], h = end - begin;
    Tensor out = make({h, cols}, node(a.id_).requires_grad);
    const auto& av = node(a.id_).value;
    auto& ov = node(out.id_).value;
    std::copy_n(av.data() + static_cast<size_t>(begin) * cols, static_cast<size_t>(h) * cols, ov.data());
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid, cols, h, begin] {
            auto& ga = grad_buffer(aid);
            const auto& g = node(oid).grad;
            for (size_t i = 0; i < static_cast<size_t>(h) * cols; ++i)
                ga[static_cast<size_t>(begin) * cols + i] += g[i];
        };
    }
    return out;
}

Tensor Graph::softmax_last_dim(Tensor a) {
    check_same_graph(a, "softmax_last_dim");
    const auto& sa = a.shape();
    require(!sa.empty(), "softmax_last_dim: scalar input");
    const int n = sa.back();
    const int64_t rows = a.numel() / n;
    Tensor out = make(sa, node(a.id_).requires_grad);
    const auto& av = node(a.id_).value;
    auto& ov = node(out.id_).value;
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = av.data() + r * n;
        float* y = ov.data() + r * n;
        float mx = x[0];
        for (int i = 1; i < n; ++i) mx = std::max(mx, x[i]);
        double denom = 0.0; // f64 normalizer
        for (int i = 0; i < n; ++i) {
            y[i] = std::exp(x[i] - mx);
            denom += y[i];
        }
        const float inv = static_cast<float>(1.0 / denom);
        for (int i = 0; i < n; ++i) y[i] *= inv;
    }
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid, n, rows] {
            auto& ga = grad_buffer(aid);
            const auto& g = node(oid).grad;
            const auto& y = node(oid).value;
            for (int64_t r = 0; r < rows; ++r) {
                const float* yr = y.data() + r * n;
                const float* gr = g.data() + r * n;
                float* gar = ga.data() + r * n;
                double dot = 0.0;
                for (int i = 0; i < n; ++i) dot += static_cast<double>(yr[i]) * gr[i];
                for (int i = 0; i < n; ++i)
                    gar[i] += yr[i] * (gr[i] - static_cast<float>(dot));
            }
        };
    }
    return out;
}

Tensor Graph::layer_norm(Tensor a, Tensor gain, Tensor bias, float eps) {
    check_same_graph(a, "layer_norm");
    check_same_graph(gain, "layer_norm");
    check_same_graph(bias, "layer_norm");
    const auto& sa = a.shape();
    require(!sa.empty(), "layer_norm: scalar input");
    const int n = sa.back();
    require(gain.shape() == std::vector<int>{n} && bias.shape() == std::vector<int>{n},
            "layer_norm: gain/bias must be " + shape_str({n}) + ", got " + shape_str(gain.shape()) +
                " and " + shape_str(bias.shape()));
    const int64_t rows = a.numel() / n;
    const bool needs_grad =
        node(a.id_).requires_grad || node(gain.id_).requires_grad || node(bias.id_).requires_grad;
    Tensor out = make(sa, needs_grad);
    // Normalized rows are kept for the backward pass.
    std::vector<float> xhat(static_cast<size_t>(a.numel()));
    std::vector<float> inv_sigma(static_cast<size_t>(rows));
    const auto& av = node(a.id_).value;
    const auto& gv = node(gain.id_).value;
    const auto& bv = node(bias.id_).value;
    auto& ov = node(out.id_).value;
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = av.data() + r * n;
        double sum = 0.0, sumsq = 0.0; // f64 statistics
        for (int i = 0; i < n; ++i) {
            sum += x[i];
            sumsq += static_cast<double>(x[i]) * x[i];
        }
        const double mu = sum / n;
        const double var = std::max(sumsq / n - mu * mu, 0.0);
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        inv_sigma[static_cast<size_t>(r)] = inv;
        for (int i = 0; i < n; ++i) {
            const float xh = (x[i] - static_cast<float>(mu)) * inv;
            xhat[static_cast<size_t>(r * n + i)] = xh;
            ov[static_cast<size_t>(r * n + i)] = xh * gv[static_cast<size_t>(i)] + bv[static_cast<size_t>(i)];
        }
    }
    if (needs_grad) {
        const int aid = a.id_, gid = gain.id_, bid = bias.id_, oid = out.id_;
        node(oid).backprop = [this, aid, gid, bid, oid, n, rows, xhat = std::move(xhat),
                              inv_sigma = std::move(inv_sigma)] {
            const auto& g = node(oid).grad;
            const auto& gv2 = node(gid).value;
            if (node(gid).requires_grad || node(bid).requires_grad) {
                std::vector<double> dgain(static_cast<size_t>(n), 0.0), dbias(static_cast<size_t>(n), 0.0);
                for (int64_t r = 0; r < rows; ++r)
                    for (int i = 0; i < n; ++i) {
                        dgain[static_cast<size_t>(i)] +=
                            static_cast<double>(g[static_cast<size_t>(r * n + i)]) * xhat[static_cast<size_t>(r * n + i)];
                        dbias[static_cast<size_t>(i)] += g[static_cast<size_t>(r * n + i)];
                    }
                if (node(gid).requires_grad) {
                    auto& gg = grad_buffer(gid);
                    for (int i = 0; i < n; ++i) gg[static_cast<size_t>(i)] += static_cast<float>(dgain[static_cast<size_t>(i)]);
                }
                if (node(bid).requires_grad) {
                    auto& gb = grad_buffer(bid);
                    for (int i = 0; i < n; ++i) gb[static_cast<size_t>(i)] += static_cast<float>(dbias[static_cast<size_t>(i)]);
                }
            }
            if (node(aid).requires_grad) {
                auto& ga = grad_buffer(aid);
                for (int64_t r = 0; r < rows; ++r) {
                    const float* gr = g.data() + r * n;
                    const float* xh = xhat.data() + r * n;
                    double sum_gy = 0.0, sum_gy_xh = 0.0;
                    for (int i = 0; i < n; ++i) {
                        const double gyi = static_cast<double>(gr[i]) * gv2[static_cast<size_t>(i)];
                        sum_gy += gyi;
                        sum_gy_xh += gyi * xh[i];
                    }
                    const double inv = inv_sigma[static_cast<size_t>(r)];
                    for (int i = 0; i < n; ++i) {
                        const double gyi = static_cast<double>(gr[i]) * gv2[static_cast<size_t>(i)];
                        ga[static_cast<size_t>(r * n + i)] += static_cast<float>(
                            inv * (gyi - sum_gy / n - xh[i] * sum_gy_xh / n));
                    }
                }
            }
        };
    }
    return out;
}

Tensor Graph::gelu(Tensor a) {
    check_same_graph(a, "gelu");
    Tensor out = make(a.shape(), node(a.id_).requires_grad);
    const auto& av = node(a.id_).value;
    auto& ov = node(out.id_).value;
    constexpr double inv_sqrt2 = 0.7071067811865476;
    for (size_t i = 0; i < ov.size(); ++i) {
        const double x = av[i];
        ov[i] = static_cast<float>(0.5 * x * (1.0 + std::erf(x * inv_sqrt2)));
    }
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid] {
            auto& ga = grad_buffer(aid);
            const auto& g = node(oid).grad;
            const auto& av2 = node(aid).value;
            constexpr double inv_sqrt2pi = 0.3989422804014327;
            for (size_t i = 0; i < g.size(); ++i) {
                const double x = av2[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * 0.7071067811865476));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                ga[i] += g[i] * static_cast<float>(cdf + x * pdf);
            }
        };
    }
    return out;
}

Tensor Graph::dropout(Tensor a, float p, bool train, Rng& rng) {
    check_same_graph(a, "dropout");
    require(p >= 0.0f && p < 1.0f, "dropout: p must lie in [0, 1)");
    if (!train || p == 0.0f) return a; // exact identity
    Tensor out = make(a.shape(), node(a.id_).requires_grad);
    const auto& av = node(a.id_).value;
    auto& ov = node(out.id_).value;
    std::vector<float> mask(av.size());
    const float keep_scale = 1.0f / (1.0f - p);
    for (size_t i = 0; i < av.size(); ++i) {
        mask[i] = rng.uniform01() >= p ? keep_scale : 0.0f;
        ov[i] = av[i] * mask[i];
    }
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid, mask = std::move(mask)] {
            auto& ga = grad_buffer(aid);
            const auto& g = node(oid).grad;
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
        };
    }
    return out;
}

Tensor Graph::affine(Tensor x, Tensor w, Tensor b) {
    return add(matmul(x, w), b);
}

Tensor Graph::masked_fill(Tensor a, const std::vector<uint8_t>& mask, float fill) {
    check_same_graph(a, "masked_fill");
    require(mask.size() == static_cast<size_t>(a.numel()),
            "masked_fill: mask has " + std::to_string(mask.size()) + " entries for shape " +
                shape_str(a.shape()));
    Tensor out = make(a.shape(), node(a.id_).requires_grad);
    const auto& av = node(a.id_).value;
    auto& ov = node(out.id_).value;
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = mask[i] ? fill : av[i];
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid, mask] {
            auto& ga = grad_buffer(aid);
            const auto& g = node(oid).grad;
            for (size_t i = 0; i < g.size(); ++i)
                if (!mask[i]) ga[i] += g[i];
        };
    }
    return out;
}

Tensor Graph::mean_all(Tensor a) {
    check_same_graph(a, "mean_all");
    require(a.numel() > 0, "mean_all: empty tensor");
    Tensor out = make({1}, node(a.id_).requires_grad);
    const auto& av = node(a.id_).value;
    double sum = 0.0;
    for (float v : av) sum += v;
    node(out.id_).value[0] = static_cast<float>(sum / static_cast<double>(av.size()));
    if (node(out.id_).requires_grad) {
        const int aid = a.id_, oid = out.id_;
        node(oid).backprop = [this, aid, oid] {
            auto& ga = grad_buffer(aid);
            const float g = node(oid).grad[0] / static_cast<float>(ga.size());
            for (auto& v : ga) v += g;
        };
    }
    return out;
}

Tensor Graph::mse_loss(Tensor pred, Tensor target) {
    check_same_graph(pred, "mse_loss");
    check_same_graph(target, "mse_loss");
    require(pred.shape() == target.shape(),
            "mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    Tensor out = make({1}, pred.requires_grad() || target.requires_grad());
    const auto& pv = node(pred.id_).value;
    const auto& tv = node(target.id_).value;
    double sum = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        const double e = static_cast<double>(pv[i]) - tv[i];
        sum += e * e;
    }
    node(out.id_).value[0] = static_cast<float>(sum / static_cast<double>(pv.size()));
    if (node(out.id_).requires_grad) {
        const int pid = pred.id_, tid = target.id_, oid = out.id_;
        node(oid).backprop = [this, pid, tid, oid] {
            const float g = node(oid).grad[0];
            const auto& pv2 = node(pid).value;
            const auto& tv2 = node(tid).value;
            const float scale2 = 2.0f / static_cast<float>(pv2.size());
            if (node(pid).requires_grad) {
                auto& gp = grad_buffer(pid);
                for (size_t i = 0; i < pv2.size(); ++i) gp[i] += g * scale2 * (pv2[i] - tv2[i]);
            }
            if (node(tid).requires_grad) {
                auto& gt = grad_buffer(tid);
                for (size_t i = 0; i < pv2.size(); ++i) gt[i] -= g * scale2 * (pv2[i] - tv2[i]);
            }
        };
    }
    return out;
}

Tensor Graph::huber_loss(Tensor pred, Tensor target, float delta) {
    check_same_graph(pred, "huber_loss");
    check_same_graph(target, "huber_loss");
    require(pred.shape() == target.shape(),
            "huber_loss: shape mismatch " + shape_str(pred.shape()) + " vs " + shape_str(target.shape()));
    require(delta > 0.0f, "huber_loss: delta must be positive");
    Tensor out = make({1}, pred.requires_grad() || target.requires_grad());
    const auto& pv = node(pred.id_).value;
    const auto& tv = node(target.id_).value;
    double sum = 0.0;
    for (size_t i = 0; i < pv.size(); ++i) {
        const double e = std::abs(static_cast<double>(pv[i]) - tv[i]);
        sum += e <= delta ? 0.5 * e * e : delta * (e - 0.5 * delta);
    }
    node(out.id_).value[0] = static_cast<float>(sum / static_cast<double>(pv.size()));
    if (node(out.id_).requires_grad) {
        const int pid = pred.id_, tid = target.id_, oid = out.id_;
        node(oid).backprop = [this, pid, tid, oid, delta] {
            const float g = node(oid).grad[0];
            const auto& pv2 = node(pid).value;
            const auto& tv2 = node(tid).value;
            const float inv_n = 1.0f / static_cast<float>(pv2.size());
            for (size_t i = 0; i < pv2.size(); ++i) {
                const float e = pv2[i] - tv2[i];
                const float de = std::clamp(e, -delta, delta);
                if (node(pid).requires_grad) grad_buffer(pid)[i] += g * inv_n * de;
                if (node(tid).requires_grad) grad_buffer(tid)[i] -= g * inv_n * de;
            }
        };
    }
    return out;
}

void Graph::backward(Tensor loss) {
    check_same_graph(loss, "backward");
    require(loss.numel() == 1, "backward: loss must be scalar, got " + shape_str(loss.shape()));
    require(node(loss.id_).requires_grad, "backward: loss does not depend on any parameter");
    grad_buffer(loss.id_)[0] = 1.0f;
    for (int id = loss.id_; id >= 0; --id) {
        Node& n = node(id);
        if (!n.backprop || n.grad.empty()) continue;
        n.backprop();
    }
}

NamedTensor& ParamStore::at(const std::string& name) {
    for (auto& t : tensors)
        if (t.name == name) return t;
    throw ConfigError("ParamStore: unknown tensor " + name);
}

const NamedTensor& ParamStore::at(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw ConfigError("ParamStore: unknown tensor " + name);
}

bool ParamStore::has(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

NamedTensor& ParamStore::add(const std::string& name, std::vector<int> shape) {
    if (has(name)) throw ConfigError("ParamStore: duplicate tensor " + name);
    NamedTensor t;
    t.name = name;
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(shape_numel(t.shape)), 0.0f);
    tensors.push_back(std::move(t));
    return tensors.back();
}

int64_t ParamStore::total_parameters() const {
    int64_t n = 0;
    for (const auto& t : tensors) n += shape_numel(t.shape);
    return n;
}

AdamState AdamState::init(const ParamStore& params) {
    AdamState s;
    s.m.reserve(params.tensors.size());
    s.v.reserve(params.tensors.size());
    for (const auto& t : params.tensors) {
        s.m.emplace_back(t.data.size(), 0.0f);
        s.v.emplace_back(t.data.size(), 0.0f);
    }
    s.step = 0;
    return s;
}

void adam_step(ParamStore& params, const std::vector<std::vector<float>>& grads,
               AdamState& state, const AdamConfig& cfg) {
    if (grads.size() != params.tensors.size() || state.m.size() != params.tensors.size())
        throw ConfigError("adam_step: gradient/state tensor count mismatch");
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (size_t i = 0; i < params.tensors.size(); ++i) {
        auto& p = params.tensors[i].data;
        const auto& g = grads[i];
        if (g.size() != p.size()) throw ConfigError("adam_step: gradient shape mismatch at " + params.tensors[i].name);
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < p.size(); ++j) {
            m[j] = static_cast<float>(cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j]);
            v[j] = static_cast<float>(cfg.beta2 * v[j] + (1.0 - cfg.beta2) * static_cast<double>(g[j]) * g[j]);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] = static_cast<float>(p[j] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
    }
}

} // namespace metadyn
