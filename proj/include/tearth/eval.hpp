#pragma once

// Evaluation protocols on a frozen model: local nearest-neighbour in-context
// inference, global few-observation inference, held-out metrics, per-point
// difference records, and gridded field reconstruction.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "tearth/errors.hpp"
#include "tearth/loss.hpp"
#include "tearth/model.hpp"
#include "tearth/modality.hpp"
#include "tearth/rng.hpp"

namespace tearth {

// Thread count for parallel evaluation; TEARTH_THREADS overrides the default of 1.
inline std::size_t default_threads() {
    if (const char* env = std::getenv("TEARTH_THREADS")) {
        const long n = std::strtol(env, nullptr, 10);
        if (n > 0) return static_cast<std::size_t>(n);
    }
    return 1;
}

// Head output row -> value in natural units: degrees wrapped into [0, R) for
// angular modalities, denormalized scalars, or the argmax class index.
inline double decode_value(const ModalitySpec& spec, const double* row) {
    switch (spec.kind) {
        case TaskKind::angular: {
            const double deg = row[0] * spec.scale();
            double r = std::fmod(deg, spec.angular_period);
            if (r < 0.0) r += spec.angular_period;
            return r;
        }
        case TaskKind::scalar: return denormalize(row[0], spec);
        case TaskKind::classification:
            return static_cast<double>(std::max_element(row, row + spec.classes.size()) - row);
    }
    return 0.0;
}

// Predictions for `points` of one modality given encoder observations. The
// latents are computed once; query chunks are decoded independently.
inline std::vector<double> predict_values(const Model& model, const std::vector<ObservationBatch>& observations,
                                          const std::vector<GeoPoint>& points, std::size_t modality,
                                          std::size_t threads = 1, std::size_t chunk = 2048) {
    const auto& spec = model.registry().at(modality);
    std::vector<double> out(points.size());
    if (points.empty()) return out;
    Tensor latents;
    {
        NoGradGuard guard;
        latents = model.encode(model.fuse(observations));
    }
    const auto& entry = model.layout().entry(modality);
    const std::size_t n_chunks = (points.size() + chunk - 1) / chunk;
    auto work = [&](std::size_t first_chunk, std::size_t stride) {
        NoGradGuard guard;
        for (std::size_t c = first_chunk; c < n_chunks; c += stride) {
            const std::size_t begin = c * chunk;
            const std::size_t end = std::min(points.size(), begin + chunk);
            std::vector<GeoPoint> pts(points.begin() + static_cast<std::ptrdiff_t>(begin),
                                      points.begin() + static_cast<std::ptrdiff_t>(end));
            const Tensor y = model.decode(latents, model.form_queries(pts, std::vector<std::size_t>(pts.size(), modality)));
            for (std::size_t i = 0; i < pts.size(); ++i) {
                out[begin + i] = decode_value(spec, y.data().data() + i * y.cols() + entry.offset);
            }
        }
    };
    threads = std::max<std::size_t>(1, std::min(threads, n_chunks));
    if (threads == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
        for (auto& th : pool) th.join();
    }
    return out;
}

// Mean absolute error in natural units (wrapped for angular modalities).
inline double mean_absolute_error(const std::vector<double>& pred, const std::vector<double>& truth, const ModalitySpec& spec) {
    if (pred.empty() || pred.size() != truth.size()) throw ContractError("mae: predictions and truths differ in length");
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        s += spec.kind == TaskKind::angular ? wrapped_distance(pred[i], truth[i], spec.angular_period)
                                            : std::abs(pred[i] - truth[i]);
    }
    return s / static_cast<double>(pred.size());
}

inline double accuracy(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.empty() || pred.size() != truth.size()) throw ContractError("accuracy: predictions and truths differ in length");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// MAE for regression modalities, error rate (1 - accuracy) for categorical ones.
inline double protocol_error(const std::vector<double>& pred, const std::vector<double>& truth, const ModalitySpec& spec) {
    return spec.is_regression() ? mean_absolute_error(pred, truth, spec) : 1.0 - accuracy(pred, truth);
}

// ---------------------------------------------------------------------------
// Local protocol

struct LocalProtocolConfig {
    GeoPoint reference;
    std::size_t n_queries = 5;
    std::vector<std::size_t> neighbor_counts{0, 4, 8, 16, 24};
    std::size_t modality = 0;
    // Modalities supplying observations; empty means the modality under test only.
    std::vector<std::size_t> observation_modalities;
};

struct LocalResult {
    std::size_t neighbors = 0;
    double error = 0.0;
    std::size_t observations = 0;
};

// Test rows ordered by Euclidean distance in degrees from `ref`; ties keep row order.
inline std::vector<std::size_t> rank_by_distance(const std::vector<GeoPoint>& points, const GeoPoint& ref) {
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto dist2 = [&](std::size_t i) {
        const double dl = points[i].lat - ref.lat;
        const double dn = points[i].lon - ref.lon;
        return dl * dl + dn * dn;
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return dist2(a) < dist2(b); });
    return order;
}

inline std::vector<LocalResult> local_inference(const Model& model, const LocalProtocolConfig& cfg,
                                                const std::vector<ModalityDataset>& test) {
    if (cfg.modality >= test.size()) throw ProtocolError("local protocol: no test set for the modality under test");
    if (!std::is_sorted(cfg.neighbor_counts.begin(), cfg.neighbor_counts.end())) {
        throw ProtocolError("local protocol: neighbor counts must be sorted");
    }
    const auto& spec = model.registry().at(cfg.modality);
    const auto& data = test[cfg.modality];
    const std::size_t max_k = cfg.neighbor_counts.empty() ? 0 : cfg.neighbor_counts.back();
    if (data.size() < cfg.n_queries + max_k || cfg.n_queries == 0) {
        throw ProtocolError("local protocol: " + spec.name + " test set has " + std::to_string(data.size()) +
                            " points, needs " + std::to_string(cfg.n_queries + max_k));
    }
    const auto order = rank_by_distance(data.points, cfg.reference);
    std::vector<GeoPoint> qpts;
    std::vector<double> truth;
    for (std::size_t i = 0; i < cfg.n_queries; ++i) {
        qpts.push_back(data.points[order[i]]);
        truth.push_back(data.values[order[i]]);
    }
    std::vector<std::size_t> obs_mods = cfg.observation_modalities;
    if (obs_mods.empty()) obs_mods.push_back(cfg.modality);

    std::vector<LocalResult> out;
    for (std::size_t k : cfg.neighbor_counts) {
        std::vector<ObservationBatch> obs;
        if (k > 0) {
            for (std::size_t m : obs_mods) {
                if (m >= test.size() || test[m].empty()) continue;
                ObservationBatch b;
                b.modality = m;
                if (m == cfg.modality) {
                    for (std::size_t i = cfg.n_queries; i < cfg.n_queries + k; ++i) {
                        b.points.push_back(data.points[order[i]]);
                        b.values.push_back(data.values[order[i]]);
                    }
                } else {
                    const auto other = rank_by_distance(test[m].points, cfg.reference);
                    for (std::size_t i = 0; i < std::min(k, other.size()); ++i) {
                        b.points.push_back(test[m].points[other[i]]);
                        b.values.push_back(test[m].values[other[i]]);
                    }
                }
                obs.push_back(std::move(b));
            }
        }
        std::size_t n_obs = 0;
        for (const auto& b : obs) n_obs += b.size();
        const auto pred = predict_values(model, obs, qpts, cfg.modality);
        out.push_back({k, protocol_error(pred, truth, spec), n_obs});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Global protocol

enum class InputCondition { none, single_modality, all_modalities };

inline std::string to_string(InputCondition c) {
    switch (c) {
        case InputCondition::none: return "none";
        case InputCondition::single_modality: return "single";
        case InputCondition::all_modalities: return "all";
    }
    return "?";
}

struct GlobalProtocolConfig {
    std::vector<std::size_t> observation_counts{2, 4, 8};
    std::size_t seeds = 3;
    std::uint64_t base_seed = 0;
    std::vector<InputCondition> conditions{InputCondition::none, InputCondition::single_modality,
                                           InputCondition::all_modalities};
    std::vector<std::size_t> targets;  // modality ids; empty means every angular modality
    std::size_t threads = 1;
};

struct GlobalRow {
    std::size_t target = 0;
    InputCondition condition = InputCondition::none;
    std::size_t observations_per_modality = 0;
    std::size_t total_observations = 0;
    double mean = 0.0;
    double std_error = 0.0;
    std::vector<double> per_seed;
};

inline std::pair<double, double> mean_and_standard_error(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    if (v.size() < 2) return {mean, 0.0};
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

// `n` distinct rows drawn uniformly from `data`.
inline ObservationBatch draw_observations(const ModalityDataset& data, std::size_t modality, std::size_t n, Rng& rng) {
    if (n > data.size()) {
        throw ProtocolError("cannot draw " + std::to_string(n) + " observations from " + std::to_string(data.size()) +
                            " training points of '" + data.modality + "'");
    }
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(rows.size()) - 1));
        std::swap(rows[i], rows[j]);
    }
    ObservationBatch b;
    b.modality = modality;
    for (std::size_t i = 0; i < n; ++i) {
        b.points.push_back(data.points[rows[i]]);
        b.values.push_back(data.values[rows[i]]);
    }
    return b;
}

inline std::vector<GlobalRow> global_inference(const Model& model, const GlobalProtocolConfig& cfg,
                                               const std::vector<ModalityDataset>& train,
                                               const std::vector<ModalityDataset>& test) {
    const auto& registry = model.registry();
    if (train.size() != registry.size() || test.size() != registry.size()) {
        throw ProtocolError("global protocol: need train and test splits for every registered modality");
    }
    if (cfg.seeds < 1) throw ProtocolError("global protocol: need at least one seed");
    std::vector<std::size_t> targets = cfg.targets;
    if (targets.empty()) {
        for (std::size_t m = 0; m < registry.size(); ++m)
            if (registry[m].kind == TaskKind::angular) targets.push_back(m);
    }
    std::vector<GlobalRow> rows;
    for (std::size_t target : targets) {
        const auto& spec = registry.at(target);
        if (test[target].empty() || train[target].empty()) {
            throw ProtocolError("global protocol: empty split for '" + spec.name + "'");
        }
        for (InputCondition cond : cfg.conditions) {
            const std::vector<std::size_t> counts =
                cond == InputCondition::none ? std::vector<std::size_t>{0} : cfg.observation_counts;
            for (std::size_t n : counts) {
                GlobalRow row;
                row.target = target;
                row.condition = cond;
                row.observations_per_modality = n;
                const std::size_t seeds = cond == InputCondition::none ? 1 : cfg.seeds;
                for (std::size_t s = 0; s < seeds; ++s) {
                    Rng rng(cfg.base_seed + 1000003ULL * (s + 1) + 7919ULL * n + target);
                    std::vector<ObservationBatch> obs;
                    if (cond == InputCondition::single_modality) {
                        obs.push_back(draw_observations(train[target], target, n, rng));
                    } else if (cond == InputCondition::all_modalities) {
                        for (std::size_t m = 0; m < registry.size(); ++m) obs.push_back(draw_observations(train[m], m, n, rng));
                    }
                    row.total_observations = 0;
                    for (const auto& b : obs) row.total_observations += b.size();
                    const auto pred = predict_values(model, obs, test[target].points, target, cfg.threads);
                    row.per_seed.push_back(protocol_error(pred, test[target].values, spec));
                }
                std::tie(row.mean, row.std_error) = mean_and_standard_error(row.per_seed);
                rows.push_back(std::move(row));
            }
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Held-out metrics

struct HeldoutConfig {
    std::size_t observations_per_modality = 32;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

struct HeldoutRow {
    std::size_t modality = 0;
    std::string metric;  // "mae" or "accuracy"
    double value = 0.0;
    std::size_t count = 0;
};

// Every test split predicted with observations from all modalities' training splits.
inline std::vector<HeldoutRow> heldout_metrics(const Model& model, const HeldoutConfig& cfg,
                                               const std::vector<ModalityDataset>& train,
                                               const std::vector<ModalityDataset>& test) {
    const auto& registry = model.registry();
    if (train.size() != registry.size() || test.size() != registry.size()) {
        throw ProtocolError("heldout protocol: need train and test splits for every registered modality");
    }
    Rng rng(cfg.seed);
    std::vector<ObservationBatch> obs;
    for (std::size_t m = 0; m < registry.size(); ++m) {
        if (train[m].empty()) continue;
        obs.push_back(draw_observations(train[m], m, std::min(cfg.observations_per_modality, train[m].size()), rng));
    }
    std::vector<HeldoutRow> rows;
    for (std::size_t m = 0; m < registry.size(); ++m) {
        if (test[m].empty()) continue;
        const auto& spec = registry[m];
        const auto pred = predict_values(model, obs, test[m].points, m, cfg.threads);
        if (spec.is_regression()) {
            rows.push_back({m, "mae", mean_absolute_error(pred, test[m].values, spec), pred.size()});
        } else {
            rows.push_back({m, "accuracy", accuracy(pred, test[m].values), pred.size()});
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Difference records

struct ErrorRecord {
    GeoPoint point;
    double predicted = 0.0;
    double truth = 0.0;
    double error = 0.0;  // absolute (wrapped) error; 0/1 mismatch flag for classes
    bool correct = false;
};

inline std::vector<ErrorRecord> difference_map(const std::vector<GeoPoint>& points, const std::vector<double>& predictions,
                                               const std::vector<double>& truths, const ModalitySpec& spec) {
    if (points.size() != predictions.size() || predictions.size() != truths.size()) {
        throw ContractError("difference_map: points, predictions and truths differ in length");
    }
    std::vector<ErrorRecord> out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        ErrorRecord r{points[i], predictions[i], truths[i], 0.0, false};
        if (spec.kind == TaskKind::classification) {
            r.correct = predictions[i] == truths[i];
            r.error = r.correct ? 0.0 : 1.0;
        } else {
            r.error = spec.kind == TaskKind::angular ? wrapped_distance(predictions[i], truths[i], spec.angular_period)
                                                    : std::abs(predictions[i] - truths[i]);
            r.correct = r.error == 0.0;
        }
        out.push_back(r);
    }
    return out;
}

inline void write_difference_csv(const std::string& path, const std::vector<ErrorRecord>& records, const ModalitySpec& spec) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path);
    const bool cls = spec.kind == TaskKind::classification;
    out << (cls ? "lat,lon,correct\n" : "lat,lon,error\n");
    for (const auto& r : records) {
        out << detail::format_number(r.point.lat) << ',' << detail::format_number(r.point.lon) << ',';
        if (cls) {
            out << (r.correct ? 1 : 0);
        } else {
            out << detail::format_number(r.error);
        }
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Field reconstruction

// Equirectangular grid; row 0 is the northernmost band, cell index = row * n_lon + col.
struct FieldGrid {
    double resolution = 1.0;
    std::size_t n_lat = 0;
    std::size_t n_lon = 0;
    std::size_t modality = 0;
    std::vector<double> values;  // NaN where masked
    std::vector<bool> masked;

    std::size_t cells() const { return n_lat * n_lon; }
    GeoPoint center(std::size_t cell, double depth_km = 0.0) const {
        const std::size_t r = cell / n_lon, c = cell % n_lon;
        return {std::max(-90.0, 90.0 - (static_cast<double>(r) + 0.5) * resolution),
                std::min(180.0, -180.0 + (static_cast<double>(c) + 0.5) * resolution), depth_km};
    }
};

inline std::size_t grid_extent(double span, double resolution) {
    return static_cast<std::size_t>(std::ceil(span / resolution - 1e-9));
}

inline std::set<std::size_t> load_mask(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open mask file " + path);
    std::set<std::size_t> cells;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty() || !std::isdigit(static_cast<unsigned char>(line[0]))) continue;
        try {
            cells.insert(static_cast<std::size_t>(std::stoull(line)));
        } catch (const std::exception&) {
            throw SchemaError(path + ":" + std::to_string(line_no) + ": bad cell index '" + line + "'");
        }
    }
    return cells;
}

inline FieldGrid reconstruct_field(const Model& model, std::size_t modality, double resolution,
                                   const std::vector<ObservationBatch>& observations = {},
                                   const std::set<std::size_t>& mask = {}, double depth_km = 0.0,
                                   std::size_t threads = 1) {
    if (!(resolution > 0.0) || resolution > 180.0) throw ConfigError("grid resolution must lie in (0, 180] degrees");
    model.registry().at(modality);
    FieldGrid grid;
    grid.resolution = resolution;
    grid.modality = modality;
    grid.n_lat = grid_extent(180.0, resolution);
    grid.n_lon = grid_extent(360.0, resolution);
    grid.values.assign(grid.cells(), std::numeric_limits<double>::quiet_NaN());
    grid.masked.assign(grid.cells(), false);
    std::vector<GeoPoint> points;
    std::vector<std::size_t> cells;
    for (std::size_t c = 0; c < grid.cells(); ++c) {
        if (mask.count(c)) {
            grid.masked[c] = true;
            continue;
        }
        points.push_back(grid.center(c, depth_km));
        cells.push_back(c);
    }
    const auto values = predict_values(model, observations, points, modality, threads);
    for (std::size_t i = 0; i < cells.size(); ++i) grid.values[cells[i]] = values[i];
    return grid;
}

// Writes `lat,lon,value` rows for unmasked cells.
inline void write_field_csv(const std::string& path, const FieldGrid& grid, const ModalitySpec& spec) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path);
    out << "lat,lon,value\n";
    for (std::size_t c = 0; c < grid.cells(); ++c) {
        if (grid.masked[c]) continue;
        const auto p = grid.center(c);
        out << detail::format_number(p.lat) << ',' << detail::format_number(p.lon) << ',';
        if (spec.kind == TaskKind::classification) {
            out << spec.classes.at(static_cast<std::size_t>(grid.values[c]));
        } else {
            out << detail::format_number(grid.values[c]);
        }
        out << '\n';
    }
    if (!out) throw LoadError("failed writing " + path);
}

// Plain-text PGM (P2), 0..255 with linear min-max scaling over unmasked cells;
// masked cells are 0. The scaling is recorded in a JSON sidecar.
inline void write_field_pgm(const std::string& path, const std::string& sidecar_path, const FieldGrid& grid,
                            const ModalitySpec& spec) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t c = 0; c < grid.cells(); ++c) {
        if (grid.masked[c]) continue;
        lo = std::min(lo, grid.values[c]);
        hi = std::max(hi, grid.values[c]);
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write " + path);
    out << "P2\n" << grid.n_lon << ' ' << grid.n_lat << "\n255\n";
    for (std::size_t r = 0; r < grid.n_lat; ++r) {
        for (std::size_t col = 0; col < grid.n_lon; ++col) {
            const std::size_t c = r * grid.n_lon + col;
            int level = 0;
            if (!grid.masked[c]) level = hi > lo ? static_cast<int>(std::lround(255.0 * (grid.values[c] - lo) / (hi - lo))) : 0;
            out << level << (col + 1 == grid.n_lon ? '\n' : ' ');
        }
    }
    nlohmann::json side{{"modality", spec.name}, {"resolution_deg", grid.resolution}, {"width", grid.n_lon},
                        {"height", grid.n_lat},  {"scaling", "linear-min-max"},     {"min", lo},
                        {"max", hi},             {"maxval", 255},                   {"masked_level", 0},
                        {"row_order", "north-to-south"}};
    std::ofstream s(sidecar_path);
    if (!s) throw LoadError("cannot write " + sidecar_path);
    s << side.dump(2) << '\n';
}

} // namespace tearth
