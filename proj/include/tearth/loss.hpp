#pragma once

// Per-modality losses routed from the shared output head and the weighted
// multitask total.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "tearth/errors.hpp"
#include "tearth/model.hpp"
#include "tearth/modality.hpp"
#include "tearth/tensor.hpp"

namespace tearth {

// Signed difference a - b wrapped into [-R/2, R/2). Exact given a - b:
// fmod is exact and the single correction is exact by Sterbenz.
inline double wrapped_difference(double a, double b, double period) {
    double r = std::fmod(a - b, period);
    if (r >= period / 2.0) {
        r -= period;
    } else if (r < -period / 2.0) {
        r += period;
    }
    return r;
}

// min(|a - b|, R - |a - b|) after reduction modulo R.
inline double wrapped_distance(double a, double b, double period) { return std::abs(wrapped_difference(a, b, period)); }

inline void check_period(double period) {
    if (period != 180.0 && period != 360.0) {
        throw ConfigError("angular period must be 180 or 360 degrees, got " + std::to_string(period));
    }
}

// Mean squared wrapped angular error in units of half-periods.
inline double angular_loss_value(const std::vector<double>& pred_deg, const std::vector<double>& true_deg, double period) {
    check_period(period);
    if (pred_deg.empty() || pred_deg.size() != true_deg.size()) {
        throw ContractError("angular_loss: need equally many (>= 1) predictions and targets");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < pred_deg.size(); ++i) {
        const double w = wrapped_difference(pred_deg[i], true_deg[i], period) / (period / 2.0);
        s += w * w;
    }
    return s / static_cast<double>(pred_deg.size());
}

// Angular loss on head outputs [n x 1]; degrees = output * degrees_per_unit.
inline Tensor angular_loss(const Tensor& pred, const std::vector<double>& true_deg, double period,
                           double degrees_per_unit = 1.0) {
    check_period(period);
    const std::size_t n = pred.size();
    if (n == 0 || true_deg.size() != n) throw ContractError("angular_loss: predictions and targets differ in length");
    std::vector<double> w(n);
    double s = 0.0;
    const double half = period / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = wrapped_difference(pred.data()[i] * degrees_per_unit, true_deg[i], period) / half;
        s += w[i] * w[i];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    auto pn = pred.node();
    return detail::make_op({1}, {s * inv_n}, {&pred}, [pn, w = std::move(w), inv_n, half, degrees_per_unit](const std::vector<double>& g) {
        auto& gp = pn->grad_buffer();
        for (std::size_t i = 0; i < w.size(); ++i) gp[i] += g[0] * 2.0 * w[i] * inv_n * degrees_per_unit / half;
    });
}

inline Tensor mse_loss(const Tensor& pred, const std::vector<double>& target) {
    const std::size_t n = pred.size();
    if (n == 0 || target.size() != n) throw ContractError("mse_loss: predictions and targets differ in length");
    std::vector<double> diff(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        diff[i] = pred.data()[i] - target[i];
        s += diff[i] * diff[i];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    auto pn = pred.node();
    return detail::make_op({1}, {s * inv_n}, {&pred}, [pn, diff = std::move(diff), inv_n](const std::vector<double>& g) {
        auto& gp = pn->grad_buffer();
        for (std::size_t i = 0; i < diff.size(); ++i) gp[i] += g[0] * 2.0 * diff[i] * inv_n;
    });
}

inline Tensor mae_loss(const Tensor& pred, const std::vector<double>& target) {
    const std::size_t n = pred.size();
    if (n == 0 || target.size() != n) throw ContractError("mae_loss: predictions and targets differ in length");
    std::vector<double> sign(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pred.data()[i] - target[i];
        sign[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        s += std::abs(d);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    auto pn = pred.node();
    return detail::make_op({1}, {s * inv_n}, {&pred}, [pn, sign = std::move(sign), inv_n](const std::vector<double>& g) {
        auto& gp = pn->grad_buffer();
        for (std::size_t i = 0; i < sign.size(); ++i) gp[i] += g[0] * sign[i] * inv_n;
    });
}

// Mean negative log-probability of the true class, via log-sum-exp.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& classes) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be a matrix");
    const std::size_t n = logits.rows(), c = logits.cols();
    if (n == 0 || classes.size() != n) throw ContractError("cross_entropy: one class index per row required");
    std::vector<double> probs(n * c);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (classes[i] >= c) {
            throw DomainError("cross_entropy: class index " + std::to_string(classes[i]) + " >= width " + std::to_string(c));
        }
        const double* row = logits.data().data() + i * c;
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
        const double lse = mx + std::log(z);
        s += lse - row[classes[i]];
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    auto ln = logits.node();
    return detail::make_op({1}, {s * inv_n}, {&logits},
                           [ln, probs = std::move(probs), classes, c, inv_n](const std::vector<double>& g) {
                               auto& gl = ln->grad_buffer();
                               for (std::size_t i = 0; i < classes.size(); ++i) {
                                   for (std::size_t j = 0; j < c; ++j) {
                                       const double target = j == classes[i] ? 1.0 : 0.0;
                                       gl[i * c + j] += g[0] * (probs[i * c + j] - target) * inv_n;
                                   }
                               }
                           });
}

// ---------------------------------------------------------------------------
// Routing

struct ModalitySlice {
    std::size_t modality = 0;
    std::vector<std::size_t> rows;  // query indices routed to this modality
    Tensor pred;                    // [rows x width] slice of the head
};

// Groups query rows by task id (in layout order) and cuts each group's own
// columns out of the shared head.
inline std::vector<ModalitySlice> slice_by_mod(const Tensor& output, const std::vector<std::size_t>& task_ids,
                                               const OutputLayout& layout) {
    if (output.rank() != 2 || output.cols() != layout.total || output.rows() != task_ids.size()) {
        throw DimensionError("slice_by_mod: output " + shape_str(output.shape()) + " does not match " +
                             std::to_string(task_ids.size()) + " queries x " + std::to_string(layout.total));
    }
    std::vector<std::vector<std::size_t>> groups(layout.entries.size());
    for (std::size_t i = 0; i < task_ids.size(); ++i) {
        if (task_ids[i] >= layout.entries.size()) {
            throw RegistryError("slice_by_mod: task id " + std::to_string(task_ids[i]) + " absent from output layout");
        }
        groups[task_ids[i]].push_back(i);
    }
    std::vector<ModalitySlice> out;
    for (const auto& e : layout.entries) {
        auto& rows = groups[e.modality];
        if (rows.empty()) continue;
        ModalitySlice s;
        s.modality = e.modality;
        s.rows = rows;
        s.pred = slice(gather_rows(output, rows), 1, e.offset, e.width);
        out.push_back(std::move(s));
    }
    return out;
}

// Loss of one modality's slice against stored targets (raw values or class
// indices): angular loss in degrees, MSE on normalized values, or
// cross-entropy.
inline Tensor modality_loss(const ModalitySpec& spec, const Tensor& pred, const std::vector<double>& targets) {
    switch (spec.kind) {
        case TaskKind::angular:
            return angular_loss(pred, targets, spec.angular_period, spec.scale());
        case TaskKind::scalar: {
            std::vector<double> norm(targets.size());
            for (std::size_t i = 0; i < targets.size(); ++i) norm[i] = normalize(targets[i], spec);
            return mse_loss(pred, norm);
        }
        case TaskKind::classification: {
            std::vector<std::size_t> cls(targets.size());
            for (std::size_t i = 0; i < targets.size(); ++i) cls[i] = static_cast<std::size_t>(targets[i]);
            return cross_entropy(pred, cls);
        }
    }
    throw ContractError("modality_loss: unhandled task kind");
}

struct LossWeights {
    double angular = 20.0;      // C1, applied to every angular modality
    double depth_scalar = 10.0; // C2, applied to depth-varying scalar modalities
    double other = 1.0;

    double weight_for(const ModalitySpec& spec) const {
        if (spec.kind == TaskKind::angular) return angular;
        if (spec.kind == TaskKind::scalar && spec.depth_varying) return depth_scalar;
        return other;
    }

    void validate() const {
        if (!(angular > 0.0 && depth_scalar > 0.0 && other > 0.0)) throw ConfigError("loss weights must be positive");
    }
};

enum class Aggregation {
    per_modality_mean,  // (1/M_present) * sum_i w_i * L_i
    per_query_mean      // (1/N) * sum_i w_i * N_i * L_i
};

struct ModalityLoss {
    std::size_t modality = 0;
    std::size_t count = 0;  // queries contributing
    double weight = 1.0;
    Tensor loss;            // mean over this modality's queries
};

inline Tensor total_loss(const std::vector<ModalityLoss>& terms, Aggregation mode = Aggregation::per_modality_mean) {
    if (terms.empty()) throw ContractError("total_loss: no modality contributed this step");
    std::vector<Tensor> parts;
    std::vector<double> coeffs;
    std::size_t n_total = 0;
    for (const auto& t : terms) n_total += t.count;
    for (const auto& t : terms) {
        if (!(t.weight > 0.0)) throw ConfigError("total_loss: weights must be positive");
        parts.push_back(t.loss);
        if (mode == Aggregation::per_modality_mean) {
            coeffs.push_back(t.weight / static_cast<double>(terms.size()));
        } else {
            coeffs.push_back(t.weight * static_cast<double>(t.count) / static_cast<double>(n_total));
        }
    }
    return weighted_sum(parts, coeffs);
}

// Slices the head output, evaluates every present modality's loss, and
// returns the per-modality terms.
inline std::vector<ModalityLoss> modality_losses(const Tensor& output, const QueryBatch& queries,
                                                 const Registry& registry, const OutputLayout& layout,
                                                 const LossWeights& weights) {
    if (queries.targets.size() != queries.size()) throw ContractError("modality_losses: queries lack targets");
    std::vector<ModalityLoss> out;
    for (auto& s : slice_by_mod(output, queries.task_ids, layout)) {
        const auto& spec = registry.at(s.modality);
        std::vector<double> targets;
        targets.reserve(s.rows.size());
        for (auto r : s.rows) targets.push_back(queries.targets[r]);
        out.push_back({s.modality, s.rows.size(), weights.weight_for(spec), modality_loss(spec, s.pred, targets)});
    }
    return out;
}

} // namespace tearth
