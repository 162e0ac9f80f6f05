#pragma once

// Checkpoint archive:
//   8 bytes   magic "TEARTHCK"
//   8 bytes   little-endian header length L
//   L bytes   JSON header (format version, config, registry, seed, tensor index)
//   blob      little-endian float64 values, addressed by the index
//
// The index lists every parameter, the raw text vectors, and (optionally) the
// Adam moments, each with its offset and count in values.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tearth/errors.hpp"
#include "tearth/geo_encode.hpp"
#include "tearth/model.hpp"
#include "tearth/train.hpp"

namespace tearth {

inline constexpr int kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'T', 'E', 'A', 'R', 'T', 'H', 'C', 'K'};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

inline void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }

class BlobWriter {
public:
    nlohmann::json add(const std::string& name, const Shape& shape, std::span<const double> values) {
        nlohmann::json entry{{"name", name}, {"shape", shape}, {"offset", count_}, {"count", values.size()}};
        for (double v : values) put_f64(bytes_, v);
        count_ += values.size();
        return entry;
    }
    const std::string& bytes() const { return bytes_; }

private:
    std::string bytes_;
    std::size_t count_ = 0;
};

// Text vectors captured in a checkpoint, keyed by modality name.
class StoredTextEmbedding final : public TextEmbeddingSource {
public:
    explicit StoredTextEmbedding(std::map<std::string, TextVector> v) : vectors_(std::move(v)) {}
    TextVector embed(const std::string& name, const std::string&) const override {
        auto it = vectors_.find(name);
        if (it == vectors_.end()) throw LoadError("checkpoint lacks text vector for modality '" + name + "'");
        return it->second;
    }

private:
    std::map<std::string, TextVector> vectors_;
};

} // namespace detail

struct CheckpointExtras {
    std::optional<std::string> sampler_state;
    nlohmann::json run = nlohmann::json::object();
};

inline std::string serialize_checkpoint(const Model& model, const Adam* optimizer, const CheckpointExtras& extras = {}) {
    detail::BlobWriter blob;
    nlohmann::json params = nlohmann::json::array();
    for (const auto& p : model.params().all()) {
        auto e = blob.add(p.name, p.tensor.shape(), p.tensor.data());
        e["trainable"] = p.trainable;
        params.push_back(std::move(e));
    }
    const auto text = blob.add("text_vectors", model.text_vectors().shape(), model.text_vectors().data());

    nlohmann::json header{{"format_version", kCheckpointVersion},
                          {"config", model.config()},
                          {"registry", model.registry().to_json()},
                          {"seed", model.config().seed},
                          {"params", params},
                          {"text_vectors", text},
                          {"run", extras.run}};
    header["sampler_state"] = extras.sampler_state ? nlohmann::json(*extras.sampler_state) : nlohmann::json(nullptr);
    if (optimizer) {
        nlohmann::json moments = nlohmann::json::array();
        for (const auto& [name, st] : optimizer->moments()) {
            const Shape shape{st.m.size()};
            auto em = blob.add(name + "#m", shape, st.m);
            auto ev = blob.add(name + "#v", shape, st.v);
            moments.push_back({{"param", name}, {"m", em}, {"v", ev}});
        }
        header["optimizer"] = {{"config", optimizer->config()}, {"step", optimizer->step_count()}, {"moments", moments}};
    } else {
        header["optimizer"] = nullptr;
    }

    const std::string head = header.dump();
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u64(out, head.size());
    out += head;
    out += blob.bytes();
    return out;
}

inline void save_checkpoint(const std::string& path, const Model& model, const Adam* optimizer = nullptr,
                            const CheckpointExtras& extras = {}) {
    const std::string bytes = serialize_checkpoint(model, optimizer, extras);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw LoadError("cannot write checkpoint " + path);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw LoadError("failed writing checkpoint " + path);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw LoadError("cannot move checkpoint into place at " + path);
}

struct LoadedCheckpoint {
    std::unique_ptr<Model> model;
    std::optional<AdamConfig> adam_config;
    std::uint64_t adam_step = 0;
    std::map<std::string, AdamMoments> adam_moments;
    CheckpointExtras extras;
    nlohmann::json header;

    // Optimizer bound to `model`, restored to the saved state.
    std::unique_ptr<Trainer> make_trainer(LossWeights weights = {}, Aggregation agg = Aggregation::per_modality_mean) const {
        if (!adam_config) throw LoadError("checkpoint holds no optimizer state");
        auto trainer = std::make_unique<Trainer>(*model, *adam_config, weights, agg);
        restore_optimizer(trainer->optimizer());
        return trainer;
    }

    void restore_optimizer(Adam& adam) const {
        adam.set_step_count(adam_step);
        for (auto& [name, st] : adam.moments()) {
            auto it = adam_moments.find(name);
            if (it == adam_moments.end()) throw LoadError("checkpoint lacks optimizer moments for parameter '" + name + "'");
            if (it->second.m.size() != st.m.size()) throw LoadError("optimizer moment size mismatch for parameter '" + name + "'");
            st = it->second;
        }
    }
};

inline LoadedCheckpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "<memory>") {
    const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
        throw LoadError(origin + ": not a checkpoint archive");
    }
    const std::uint64_t head_len = detail::get_u64(raw + 8);
    if (16 + head_len > bytes.size()) throw LoadError(origin + ": truncated header");
    LoadedCheckpoint out;
    try {
        out.header = nlohmann::json::parse(bytes.substr(16, head_len));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(origin + ": corrupt header: " + e.what());
    }
    const auto& h = out.header;
    if (h.value("format_version", -1) != kCheckpointVersion) {
        throw LoadError(origin + ": unsupported format version " + h.value("format_version", nlohmann::json(-1)).dump());
    }
    const std::size_t blob_start = 16 + head_len;
    const std::size_t blob_values = (bytes.size() - blob_start) / 8;
    auto read = [&](const nlohmann::json& entry) {
        const auto name = entry.at("name").get<std::string>();
        const auto offset = entry.at("offset").get<std::size_t>();
        const auto count = entry.at("count").get<std::size_t>();
        if (offset + count > blob_values) throw LoadError(origin + ": truncated blob for '" + name + "'");
        std::vector<double> v(count);
        for (std::size_t i = 0; i < count; ++i) {
            v[i] = std::bit_cast<double>(detail::get_u64(raw + blob_start + 8 * (offset + i)));
        }
        return v;
    };

    ModelConfig cfg;
    Registry registry;
    try {
        cfg = h.at("config").get<ModelConfig>();
        registry = Registry::from_json(h.at("registry"));
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(origin + ": " + e.what());
    }

    const auto text_values = read(h.at("text_vectors"));
    if (text_values.size() != registry.size() * kTextEmbeddingWidth) throw LoadError(origin + ": text vector block has wrong size");
    std::map<std::string, TextVector> text;
    for (std::size_t m = 0; m < registry.size(); ++m) {
        TextVector v{};
        std::copy_n(text_values.begin() + static_cast<std::ptrdiff_t>(m * kTextEmbeddingWidth), kTextEmbeddingWidth, v.begin());
        text[registry[m].name] = v;
    }
    out.model = std::make_unique<Model>(cfg, registry, detail::StoredTextEmbedding(std::move(text)));

    std::map<std::string, const nlohmann::json*> entries;
    for (const auto& e : h.at("params")) entries[e.at("name").get<std::string>()] = &e;
    for (auto& p : out.model->params().all()) {
        auto it = entries.find(p.name);
        if (it == entries.end()) throw LoadError(origin + ": parameter '" + p.name + "' missing from checkpoint");
        const auto shape = it->second->at("shape").get<Shape>();
        if (shape != p.tensor.shape()) {
            throw LoadError(origin + ": parameter '" + p.name + "' has shape " + shape_str(shape) + ", model expects " +
                            shape_str(p.tensor.shape()));
        }
        const auto values = read(*it->second);
        std::copy(values.begin(), values.end(), p.tensor.mutable_data().begin());
        entries.erase(it);
    }
    if (!entries.empty()) throw LoadError(origin + ": unexpected parameter '" + entries.begin()->first + "' in checkpoint");

    if (!h.at("optimizer").is_null()) {
        const auto& o = h.at("optimizer");
        out.adam_config = o.at("config").get<AdamConfig>();
        out.adam_step = o.at("step").get<std::uint64_t>();
        for (const auto& m : o.at("moments")) {
            out.adam_moments[m.at("param").get<std::string>()] = {read(m.at("m")), read(m.at("v"))};
        }
    }
    if (h.contains("sampler_state") && !h["sampler_state"].is_null()) out.extras.sampler_state = h["sampler_state"].get<std::string>();
    out.extras.run = h.value("run", nlohmann::json::object());
    return out;
}

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes, path);
}

// Loads and requires the stored registry to equal `expected`.
inline LoadedCheckpoint load_checkpoint(const std::string& path, const Registry& expected) {
    auto ck = load_checkpoint(path);
    if (!(ck.model->registry() == expected)) {
        throw SchemaError(path + ": checkpoint registry differs from the expected modality registry");
    }
    return ck;
}

} // namespace tearth
