#pragma once

// Run configuration and the end-to-end training loop used by the CLI.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tearth/checkpoint.hpp"
#include "tearth/errors.hpp"
#include "tearth/loss.hpp"
#include "tearth/modality.hpp"
#include "tearth/model.hpp"
#include "tearth/train.hpp"

namespace tearth {

namespace fs = std::filesystem;

struct RunConfig {
    ModelConfig model = preset_config("micro");
    std::string registry_path;  // empty: synthetic registry
    std::string data_dir;       // empty: synthetic fields generated in memory
    std::size_t synthetic_points = 5000;
    std::uint64_t data_seed = 0;
    double test_fraction = 0.05;
    std::uint64_t split_seed = 0;
    SamplerConfig sampler;
    AdamConfig optimizer;
    LossWeights weights;
    Aggregation aggregation = Aggregation::per_modality_mean;
    std::uint64_t steps = 5000;
    std::uint64_t checkpoint_every = 500;
    std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"model", c.model},
                       {"registry", c.registry_path},
                       {"data_dir", c.data_dir},
                       {"synthetic_points", c.synthetic_points},
                       {"data_seed", c.data_seed},
                       {"test_fraction", c.test_fraction},
                       {"split_seed", c.split_seed},
                       {"sampler", c.sampler},
                       {"optimizer", c.optimizer},
                       {"weights", {{"angular", c.weights.angular}, {"depth_scalar", c.weights.depth_scalar}, {"other", c.weights.other}}},
                       {"aggregation", c.aggregation == Aggregation::per_modality_mean ? "per_modality_mean" : "per_query_mean"},
                       {"steps", c.steps},
                       {"checkpoint_every", c.checkpoint_every},
                       {"seed", c.seed}};
}

// `model` may be a preset name or a full ModelConfig object; a "preset" key
// inside an object starts from that preset and overrides the listed fields.
inline void from_json(const nlohmann::json& j, RunConfig& c) {
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("preset")) c.model = preset_config(j.at("preset").get<std::string>());
        if (j.contains("model")) {
            const auto& m = j.at("model");
            if (m.is_string()) {
                c.model = preset_config(m.get<std::string>());
            } else {
                nlohmann::json merged = m.contains("preset") ? nlohmann::json(preset_config(m.at("preset").get<std::string>()))
                                                             : nlohmann::json(c.model);
                merged.update(m);
                c.model = merged.get<ModelConfig>();
            }
        }
        if (!j.contains("model") || !j.at("model").is_object() || !j.at("model").contains("seed")) c.model.seed = c.seed;
        c.registry_path = j.value("registry", c.registry_path);
        c.data_dir = j.value("data_dir", c.data_dir);
        c.synthetic_points = j.value("synthetic_points", c.synthetic_points);
        c.data_seed = j.value("data_seed", c.data_seed);
        c.test_fraction = j.value("test_fraction", c.test_fraction);
        c.split_seed = j.value("split_seed", c.split_seed);
        c.sampler.seed = c.seed;
        if (j.contains("sampler")) c.sampler = j.at("sampler").get<SamplerConfig>();
        if (j.contains("optimizer")) c.optimizer = j.at("optimizer").get<AdamConfig>();
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            c.weights.angular = w.value("angular", c.weights.angular);
            c.weights.depth_scalar = w.value("depth_scalar", c.weights.depth_scalar);
            c.weights.other = w.value("other", c.weights.other);
        }
        const auto agg = j.value("aggregation", std::string("per_modality_mean"));
        if (agg == "per_modality_mean") {
            c.aggregation = Aggregation::per_modality_mean;
        } else if (agg == "per_query_mean") {
            c.aggregation = Aggregation::per_query_mean;
        } else {
            throw ConfigError("unknown aggregation '" + agg + "'");
        }
        c.steps = j.value("steps", c.steps);
        c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("run config: ") + e.what());
    }
    c.weights.validate();
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return j.get<RunConfig>();
}

inline std::string modality_file(const std::string& dir, const ModalitySpec& spec) {
    return (fs::path(dir) / (slug(spec.name) + ".csv")).string();
}

struct DataSplits {
    Registry registry;
    std::vector<ModalityDataset> train;
    std::vector<ModalityDataset> test;
};

// Synthetic stand-in data: one field per registered modality, seeded per modality.
inline std::vector<ModalityDataset> synthetic_datasets(const Registry& registry, std::size_t points, std::uint64_t seed) {
    std::vector<ModalityDataset> out;
    for (std::size_t m = 0; m < registry.size(); ++m) {
        out.push_back(synth_field(synth_kind_for(registry[m]), {}, points, seed * 1000003ULL + m, registry[m].name));
    }
    return out;
}

inline DataSplits prepare_data(const RunConfig& cfg) {
    DataSplits d;
    d.registry = cfg.registry_path.empty() ? synthetic_registry() : Registry::load(cfg.registry_path);
    std::vector<ModalityDataset> full;
    if (cfg.data_dir.empty()) {
        full = synthetic_datasets(d.registry, cfg.synthetic_points, cfg.data_seed);
    } else {
        for (std::size_t m = 0; m < d.registry.size(); ++m) full.push_back(ingest_csv(modality_file(cfg.data_dir, d.registry[m]), d.registry[m]));
    }
    for (std::size_t m = 0; m < full.size(); ++m) {
        auto s = split(full[m], cfg.test_fraction, cfg.split_seed + m);
        d.train.push_back(std::move(s.train));
        d.test.push_back(std::move(s.test));
    }
    return d;
}

// Reads `<dir>/train/<slug>.csv` and `<dir>/test/<slug>.csv` for every modality.
inline DataSplits load_splits(const std::string& dir, const Registry& registry) {
    DataSplits d;
    d.registry = registry;
    for (std::size_t m = 0; m < registry.size(); ++m) {
        d.train.push_back(ingest_csv(modality_file((fs::path(dir) / "train").string(), registry[m]), registry[m]));
        d.test.push_back(ingest_csv(modality_file((fs::path(dir) / "test").string(), registry[m]), registry[m]));
    }
    return d;
}

inline void save_splits(const std::string& dir, const DataSplits& d) {
    fs::create_directories(fs::path(dir) / "train");
    fs::create_directories(fs::path(dir) / "test");
    for (std::size_t m = 0; m < d.registry.size(); ++m) {
        write_csv(modality_file((fs::path(dir) / "train").string(), d.registry[m]), d.train[m], d.registry[m]);
        write_csv(modality_file((fs::path(dir) / "test").string(), d.registry[m]), d.test[m], d.registry[m]);
    }
    d.registry.save((fs::path(dir) / "registry.json").string());
}

struct RunPaths {
    fs::path root;
    fs::path config() const { return root / "run_config.json"; }
    fs::path log() const { return root / "train_log.jsonl"; }
    fs::path checkpoint() const { return root / "checkpoint.ckpt"; }
    fs::path checkpoint_at(std::uint64_t step) const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "step_%08llu.ckpt", static_cast<unsigned long long>(step));
        return root / "checkpoints" / buf;
    }
    fs::path split() const { return root / "split"; }
};

// Trains from scratch, streaming one JSON line per step to the log and
// checkpointing every `checkpoint_every` steps and at the end. A non-finite
// loss propagates as NumericError; the last periodic checkpoint stays on disk.
inline void run_training(const RunConfig& cfg, const std::string& out_dir,
                         const std::function<void(const TrainRecord&)>& on_step = {}) {
    RunPaths paths{out_dir};
    fs::create_directories(paths.root / "checkpoints");
    {
        std::ofstream rc(paths.config());
        if (!rc) throw LoadError("cannot write " + paths.config().string());
        rc << nlohmann::json(cfg).dump(2) << '\n';
    }
    const DataSplits data = prepare_data(cfg);
    save_splits(paths.split().string(), data);

    Model model(cfg.model, data.registry);
    Trainer trainer(model, cfg.optimizer, cfg.weights, cfg.aggregation);
    Sampler sampler(cfg.sampler);
    const nlohmann::json run{{"split_dir", fs::absolute(paths.split()).string()}, {"config", cfg}};

    auto checkpoint = [&](std::uint64_t step) {
        CheckpointExtras extras{sampler.state(), run};
        extras.run["step"] = step;
        const std::string bytes = serialize_checkpoint(model, &trainer.optimizer(), extras);
        for (const auto& p : {paths.checkpoint_at(step), paths.checkpoint()}) {
            const std::string tmp = p.string() + ".tmp";
            std::ofstream o(tmp, std::ios::binary);
            if (!o) throw LoadError("cannot write checkpoint " + p.string());
            o.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
            o.close();
            fs::rename(tmp, p);
        }
    };

    std::ofstream log(paths.log());
    if (!log) throw LoadError("cannot write " + paths.log().string());
    if (cfg.steps == 0) {
        checkpoint(0);
        return;
    }
    for (std::uint64_t s = 1; s <= cfg.steps; ++s) {
        const TrainRecord rec = trainer.step(sampler.sample(data.train));
        log << nlohmann::json(rec).dump() << '\n';
        log.flush();
        if (on_step) on_step(rec);
        if ((cfg.checkpoint_every > 0 && s % cfg.checkpoint_every == 0) || s == cfg.steps) checkpoint(s);
    }
}

} // namespace tearth
