#pragma once

// Parameter registry and the small set of layers the model is built from.

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "tearth/errors.hpp"
#include "tearth/rng.hpp"
#include "tearth/tensor.hpp"

namespace tearth {

struct Parameter {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

// Owns every parameter of a model under a unique dotted name, in
// registration order.
class ParameterStore {
public:
    Tensor& add(const std::string& name, Tensor tensor, bool trainable = true) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        tensor.set_requires_grad(trainable);
        index_[name] = params_.size();
        params_.push_back({name, std::move(tensor), trainable});
        return params_.back().tensor;
    }

    Tensor& normal(const std::string& name, Shape shape, double stddev, Rng& rng) {
        std::vector<double> values(shape_size(shape));
        for (auto& v : values) v = stddev * rng.normal();
        return add(name, Tensor(std::move(shape), std::move(values)));
    }

    Tensor& constant(const std::string& name, Shape shape, double value) {
        return add(name, Tensor::full(std::move(shape), value));
    }

    std::vector<Parameter>& all() { return params_; }
    const std::vector<Parameter>& all() const { return params_; }

    const Parameter& get(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter: " + name);
        return params_[it->second];
    }
    Parameter& get(const std::string& name) {
        return const_cast<Parameter&>(static_cast<const ParameterStore&>(*this).get(name));
    }
    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t scalar_count(bool trainable_only = true) const {
        std::size_t n = 0;
        for (const auto& p : params_)
            if (p.trainable || !trainable_only) n += p.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

private:
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

struct Linear {
    Tensor weight;  // [in x out]
    Tensor bias;    // [1 x out]

    Linear() = default;
    Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
           double gain = 1.0) {
        weight = store.normal(name + ".weight", {in, out}, gain / std::sqrt(static_cast<double>(in)), rng);
        bias = store.constant(name + ".bias", {1, out}, 0.0);
    }

    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
    std::size_t in_features() const { return weight.rows(); }
    std::size_t out_features() const { return weight.cols(); }
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;
    bool enabled = true;

    LayerNorm() = default;
    LayerNorm(ParameterStore& store, const std::string& name, std::size_t width, bool on) : enabled(on) {
        if (!enabled) return;
        gain = store.constant(name + ".gain", {1, width}, 1.0);
        bias = store.constant(name + ".bias", {1, width}, 0.0);
    }

    Tensor operator()(const Tensor& x) const { return enabled ? layer_norm(x, gain, bias, 1e-5) : x; }
};

// Two-layer GELU perceptron: width -> hidden -> width.
struct Mlp {
    Linear up;
    Linear down;

    Mlp() = default;
    Mlp(ParameterStore& store, const std::string& name, std::size_t width, std::size_t hidden, Rng& rng)
        : up(store, name + ".up", width, hidden, rng), down(store, name + ".down", hidden, width, rng) {}

    Tensor operator()(const Tensor& x) const { return down(gelu(up(x))); }
};

// Multi-head attention with independent query and key/value sources. Every
// head has `head_dim` channels; projections map model width <-> heads*head_dim.
struct MultiHeadAttention {
    Linear q_proj, k_proj, v_proj, out_proj;
    std::size_t heads = 1;
    std::size_t head_dim = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t query_width,
                       std::size_t kv_width, std::size_t n_heads, std::size_t dim_per_head, Rng& rng)
        : heads(n_heads), head_dim(dim_per_head) {
        const std::size_t inner = heads * head_dim;
        q_proj = Linear(store, name + ".wq", query_width, inner, rng);
        k_proj = Linear(store, name + ".wk", kv_width, inner, rng);
        v_proj = Linear(store, name + ".wv", kv_width, inner, rng);
        out_proj = Linear(store, name + ".wo", inner, query_width, rng);
    }

    Tensor operator()(const Tensor& queries, const Tensor& context) const {
        const Tensor q = q_proj(queries);
        const Tensor k = k_proj(context);
        const Tensor v = v_proj(context);
        const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        std::vector<Tensor> outputs;
        outputs.reserve(heads);
        for (std::size_t h = 0; h < heads; ++h) {
            const Tensor qh = heads == 1 ? q : slice(q, 1, h * head_dim, head_dim);
            const Tensor kh = heads == 1 ? k : slice(k, 1, h * head_dim, head_dim);
            const Tensor vh = heads == 1 ? v : slice(v, 1, h * head_dim, head_dim);
            const Tensor weights = softmax(scale(matmul_nt(qh, kh), inv_scale), 1);
            outputs.push_back(matmul(weights, vh));
        }
        return out_proj(heads == 1 ? outputs.front() : concat(outputs, 1));
    }
};

} // namespace tearth
