#pragma once

// Adam optimizer and the single-step training flow.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tearth/errors.hpp"
#include "tearth/loss.hpp"
#include "tearth/model.hpp"
#include "tearth/modality.hpp"
#include "tearth/nn.hpp"

namespace tearth {

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool clip = true;
    double clip_norm = 1.0;
};

inline void to_json(nlohmann::json& j, const AdamConfig& c) {
    j = nlohmann::json{{"lr", c.lr},     {"beta1", c.beta1}, {"beta2", c.beta2},
                       {"eps", c.eps},   {"clip", c.clip},   {"clip_norm", c.clip_norm}};
}
inline void from_json(const nlohmann::json& j, AdamConfig& c) {
    c.lr = j.value("lr", c.lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.eps = j.value("eps", c.eps);
    c.clip = j.value("clip", c.clip);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
}

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

// One bias-corrected Adam update of `param` in place. `step` counts from 1.
inline void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& state,
                        std::uint64_t step, const AdamConfig& cfg) {
    if (grad.size() != param.size()) {
        throw ContractError("adam_update: gradient has " + std::to_string(grad.size()) + " values for " +
                            std::to_string(param.size()) + " parameters");
    }
    if (state.m.empty()) state.m.assign(param.size(), 0.0);
    if (state.v.empty()) state.v.assign(param.size(), 0.0);
    if (state.m.size() != param.size() || state.v.size() != param.size()) {
        throw ContractError("adam_update: moment shapes differ from parameter shape");
    }
    if (step < 1) throw ContractError("adam_update: step counts from 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        param[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
}

class Adam {
public:
    Adam(ParameterStore& params, AdamConfig cfg) : cfg_(cfg) {
        for (const auto& p : params.all()) {
            if (p.trainable) moments_[p.name] = {std::vector<double>(p.tensor.size(), 0.0), std::vector<double>(p.tensor.size(), 0.0)};
        }
    }

    const AdamConfig& config() const { return cfg_; }
    std::uint64_t step_count() const { return step_; }
    void set_step_count(std::uint64_t s) { step_ = s; }
    std::map<std::string, AdamMoments>& moments() { return moments_; }
    const std::map<std::string, AdamMoments>& moments() const { return moments_; }

    // Global L2 norm of all trainable gradients.
    static double grad_norm(const ParameterStore& params) {
        double s = 0.0;
        for (const auto& p : params.all()) {
            if (!p.trainable || !p.tensor.has_grad()) continue;
            for (double g : p.tensor.grad()) s += g * g;
        }
        return std::sqrt(s);
    }

    void step(ParameterStore& params) {
        ++step_;
        double factor = 1.0;
        if (cfg_.clip) {
            const double norm = grad_norm(params);
            if (norm > cfg_.clip_norm) factor = cfg_.clip_norm / norm;
        }
        std::vector<double> scaled;
        for (auto& p : params.all()) {
            if (!p.trainable) continue;
            auto& state = moments_.at(p.name);
            if (!p.tensor.has_grad()) {
                scaled.assign(p.tensor.size(), 0.0);
            } else {
                scaled.assign(p.tensor.grad().begin(), p.tensor.grad().end());
                if (factor != 1.0)
                    for (double& g : scaled) g *= factor;
            }
            adam_update(p.tensor.mutable_data(), scaled, state, step_, cfg_);
        }
    }

private:
    AdamConfig cfg_;
    std::uint64_t step_ = 0;
    std::map<std::string, AdamMoments> moments_;
};

struct TrainRecord {
    std::uint64_t step = 0;
    double total_loss = 0.0;
    std::map<std::string, double> modality_losses;
    std::size_t subset_size = 0;
    std::size_t token_count = 0;
    std::size_t query_count = 0;
    double wall_ms = 0.0;
};

inline void to_json(nlohmann::json& j, const TrainRecord& r) {
    j = nlohmann::json{{"step", r.step},
                       {"total_loss", r.total_loss},
                       {"modality_losses", r.modality_losses},
                       {"subset_size", r.subset_size},
                       {"token_count", r.token_count},
                       {"query_count", r.query_count},
                       {"wall_ms", r.wall_ms}};
}
inline void from_json(const nlohmann::json& j, TrainRecord& r) {
    r.step = j.at("step").get<std::uint64_t>();
    r.total_loss = j.at("total_loss").get<double>();
    r.modality_losses = j.at("modality_losses").get<std::map<std::string, double>>();
    r.subset_size = j.at("subset_size").get<std::size_t>();
    r.token_count = j.at("token_count").get<std::size_t>();
    r.query_count = j.at("query_count").get<std::size_t>();
    r.wall_ms = j.value("wall_ms", 0.0);
}

// Runs encode -> decode -> routed losses -> total -> backward -> Adam, once
// per call, leaving gradients zeroed.
class Trainer {
public:
    Trainer(Model& model, AdamConfig adam, LossWeights weights = {},
            Aggregation aggregation = Aggregation::per_modality_mean)
        : model_(model), optimizer_(model.params(), adam), weights_(weights), aggregation_(aggregation) {
        weights_.validate();
    }

    Adam& optimizer() { return optimizer_; }
    const Adam& optimizer() const { return optimizer_; }
    const LossWeights& weights() const { return weights_; }

    TrainRecord step(const StepBatch& batch) {
        const auto start = std::chrono::steady_clock::now();
        model_.params().zero_grad();
        const FusedSequence seq = model_.fuse(batch.observations);
        const Tensor output = model_.decode(model_.encode(seq), model_.form_queries(batch.queries.points, batch.queries.task_ids));
        const auto terms = modality_losses(output, batch.queries, model_.registry(), model_.layout(), weights_);

        TrainRecord rec;
        for (const auto& t : terms) {
            const auto& name = model_.registry()[t.modality].name;
            const double v = t.loss.item();
            if (!std::isfinite(v)) {
                throw NumericError("non-finite loss in modality slice '" + name + "' at step " +
                                   std::to_string(optimizer_.step_count() + 1));
            }
            rec.modality_losses[name] = v;
        }
        const Tensor loss = total_loss(terms, aggregation_);
        backward(loss);
        optimizer_.step(model_.params());
        model_.params().zero_grad();

        rec.step = optimizer_.step_count();
        rec.total_loss = loss.item();
        rec.subset_size = batch.observations.size();
        rec.token_count = seq.length();
        rec.query_count = batch.queries.size();
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        return rec;
    }

private:
    Model& model_;
    Adam optimizer_;
    LossWeights weights_;
    Aggregation aggregation_;
};

} // namespace tearth
