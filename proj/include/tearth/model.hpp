#pragma once

// Token construction, sequence-axis fusion, latent cross/self-attention
// encoder, and the query-driven decoder with a shared output head.

#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tearth/errors.hpp"
#include "tearth/geo_encode.hpp"
#include "tearth/modality.hpp"
#include "tearth/nn.hpp"
#include "tearth/rng.hpp"
#include "tearth/tensor.hpp"

namespace tearth {

struct ModelConfig {
    std::string preset = "custom";
    std::size_t channel_width = 32;
    std::size_t n_latents = 8;
    std::size_t cross_heads = 1;
    std::size_t self_heads = 1;
    std::size_t cross_head_dim = 64;
    std::size_t self_head_dim = 128;
    std::size_t n_self_blocks = 3;
    std::size_t n_decoder_mlps = 3;
    std::size_t mlp_expansion = 2;
    bool layer_norm = true;
    PosEncConfig pos_enc = bands_from_count(4);
    std::uint64_t seed = 0;

    void validate() const {
        if (channel_width < 1 || n_latents < 1 || cross_heads < 1 || self_heads < 1 || cross_head_dim < 1 ||
            self_head_dim < 1 || mlp_expansion < 1) {
            throw ConfigError("model config: widths, head counts and latent count must be positive");
        }
        pos_enc.validate();
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"preset", c.preset},
                       {"channel_width", c.channel_width},
                       {"n_latents", c.n_latents},
                       {"cross_heads", c.cross_heads},
                       {"self_heads", c.self_heads},
                       {"cross_head_dim", c.cross_head_dim},
                       {"self_head_dim", c.self_head_dim},
                       {"n_self_blocks", c.n_self_blocks},
                       {"n_decoder_mlps", c.n_decoder_mlps},
                       {"mlp_expansion", c.mlp_expansion},
                       {"layer_norm", c.layer_norm},
                       {"pos_enc",
                        {{"lat_bands", c.pos_enc.lat_bands},
                         {"lon_bands", c.pos_enc.lon_bands},
                         {"depth_scale_km", c.pos_enc.depth_scale_km}}},
                       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    try {
        c.preset = j.value("preset", c.preset);
        c.channel_width = j.at("channel_width").get<std::size_t>();
        c.n_latents = j.at("n_latents").get<std::size_t>();
        c.cross_heads = j.at("cross_heads").get<std::size_t>();
        c.self_heads = j.at("self_heads").get<std::size_t>();
        c.cross_head_dim = j.value("cross_head_dim", c.cross_head_dim);
        c.self_head_dim = j.value("self_head_dim", c.self_head_dim);
        c.n_self_blocks = j.value("n_self_blocks", c.n_self_blocks);
        c.n_decoder_mlps = j.value("n_decoder_mlps", c.n_decoder_mlps);
        c.mlp_expansion = j.value("mlp_expansion", c.mlp_expansion);
        c.layer_norm = j.value("layer_norm", c.layer_norm);
        const auto& pe = j.at("pos_enc");
        c.pos_enc.lat_bands = pe.at("lat_bands").get<std::vector<double>>();
        c.pos_enc.lon_bands = pe.at("lon_bands").get<std::vector<double>>();
        c.pos_enc.depth_scale_km = pe.value("depth_scale_km", kDefaultDepthScaleKm);
        c.seed = j.value("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    c.validate();
}

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"micro",   "base",    "base_x2", "base_x4",
                                                "base_x6", "base_x8", "base_x10"};
    return names;
}

// Scaling presets. The `base*` rows use 0.5 degree bands (F = 36); `micro`
// is the desk-scale test model (width 32, 8 latents, F = 4).
inline ModelConfig preset_config(const std::string& name) {
    struct Row {
        const char* name;
        std::size_t width, latents, cross, self;
    };
    static constexpr Row rows[] = {{"base", 256, 512, 4, 2},        {"base_x2", 512, 1024, 8, 4},
                                   {"base_x4", 1024, 2048, 16, 8},  {"base_x6", 1536, 3072, 24, 12},
                                   {"base_x8", 2048, 3072, 32, 16}, {"base_x10", 2560, 2048, 40, 20}};
    ModelConfig c;
    c.preset = name;
    if (name == "micro") {
        c.channel_width = 32;
        c.n_latents = 8;
        c.cross_heads = 1;
        c.self_heads = 1;
        c.pos_enc = bands_from_count(4);
        return c;
    }
    for (const auto& r : rows) {
        if (name == r.name) {
            c.channel_width = r.width;
            c.n_latents = r.latents;
            c.cross_heads = r.cross;
            c.self_heads = r.self;
            c.pos_enc = nyquist_bands(0.5);
            return c;
        }
    }
    throw ConfigError("unknown model preset '" + name + "'");
}

// Tokens fused along the sequence axis, with the (modality, observation row)
// each token came from. A null-token sequence has empty origins.
struct FusedSequence {
    Tensor tokens;
    std::vector<std::pair<std::size_t, std::size_t>> origins;
    bool null_token = false;

    std::size_t length() const { return tokens.rows(); }
};

// Contiguous (offset, width) slice of the shared head for each modality.
struct OutputLayout {
    struct Entry {
        std::size_t modality;
        std::size_t offset;
        std::size_t width;
    };
    std::vector<Entry> entries;
    std::size_t total = 0;

    static OutputLayout from_registry(const Registry& registry) {
        OutputLayout layout;
        for (std::size_t m = 0; m < registry.size(); ++m) {
            layout.entries.push_back({m, layout.total, registry[m].output_width()});
            layout.total += registry[m].output_width();
        }
        return layout;
    }

    const Entry& entry(std::size_t modality) const {
        if (modality >= entries.size()) {
            throw RegistryError("task id " + std::to_string(modality) + " is not in the output layout");
        }
        return entries[modality];
    }
};

inline std::string slug(const std::string& name) {
    std::string out;
    for (char c : name) out += (std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::tolower(c)) : '_');
    return out;
}

class Model {
public:
    Model(ModelConfig cfg, Registry registry, const TextEmbeddingSource& text = HashTextEmbedding{})
        : cfg_(std::move(cfg)), registry_(std::move(registry)) {
        cfg_.validate();
        if (registry_.empty()) throw ConfigError("model needs at least one modality");
        layout_ = OutputLayout::from_registry(registry_);
        build(text);
    }

    const ModelConfig& config() const { return cfg_; }
    const Registry& registry() const { return registry_; }
    const OutputLayout& layout() const { return layout_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }
    std::size_t output_width() const { return layout_.total; }
    std::size_t pos_dim() const { return cfg_.pos_enc.dim(); }
    const Tensor& text_vectors() const { return text_vectors_; }
    const Tensor& null_token() const { return null_token_; }
    const Tensor& latents() const { return latents_; }

    // 8-wide projected embeddings for every modality, [M x 8].
    Tensor modality_embeddings() const { return modality_proj_(text_vectors_); }

    // Task embeddings projected to the positional-encoding width, [M x (4F+1)].
    Tensor task_embeddings() const { return task_proj_(text_vectors_); }

    std::size_t token_input_width(std::size_t modality) const {
        return registry_.at(modality).feature_width() + pos_dim() + kModalityEmbeddingWidth;
    }

    // Concatenated [features | pos_enc | modality embedding] rows before projection.
    Tensor token_inputs(const ObservationBatch& obs, const Tensor& modality_emb) const {
        const auto& spec = registry_.at(obs.modality);
        if (obs.points.empty() || obs.points.size() != obs.values.size()) {
            throw SchemaError(spec.name + ": observation batch needs matching, non-empty points and values");
        }
        const std::size_t fw = spec.feature_width();
        std::vector<double> feats(obs.size() * fw);
        for (std::size_t i = 0; i < obs.size(); ++i) feature_row_into(obs.values[i], spec, feats.data() + i * fw);
        const Tensor features({obs.size(), fw}, std::move(feats));
        const Tensor emb = gather_rows(modality_emb, std::vector<std::size_t>(obs.size(), obs.modality));
        return concat({features, pos_enc_matrix(obs.points, cfg_.pos_enc), emb}, 1);
    }

    // Rows of explicit (already normalized) feature vectors; checks widths.
    Tensor build_tokens(const Tensor& features, const std::vector<GeoPoint>& points, std::size_t modality) const {
        const auto& spec = registry_.at(modality);
        if (features.rank() != 2 || features.cols() != spec.feature_width() || features.rows() != points.size()) {
            throw SchemaError(spec.name + ": feature rows " + shape_str(features.shape()) + " do not match width " +
                              std::to_string(spec.feature_width()) + " for " + std::to_string(points.size()) + " points");
        }
        const Tensor emb = gather_rows(modality_embeddings(), std::vector<std::size_t>(points.size(), modality));
        return token_proj_[modality](concat({features, pos_enc_matrix(points, cfg_.pos_enc), emb}, 1));
    }

    Tensor tokens(const ObservationBatch& obs) const {
        return token_proj_.at(obs.modality)(token_inputs(obs, modality_embeddings()));
    }

    // Concatenates the modalities' token blocks in the given order; an empty
    // list yields the trainable null token.
    FusedSequence fuse(const std::vector<ObservationBatch>& observations) const {
        FusedSequence seq;
        if (observations.empty()) {
            seq.tokens = null_token_;
            seq.null_token = true;
            return seq;
        }
        const Tensor memb = modality_embeddings();
        std::vector<Tensor> blocks;
        for (const auto& obs : observations) {
            blocks.push_back(token_proj_.at(obs.modality)(token_inputs(obs, memb)));
            for (std::size_t i = 0; i < obs.size(); ++i) seq.origins.emplace_back(obs.modality, i);
        }
        seq.tokens = blocks.size() == 1 ? blocks.front() : concat(blocks, 0);
        return seq;
    }

    // Latent array cross-attends to the tokens, then self-attention blocks.
    Tensor encode(const Tensor& tokens) const {
        if (tokens.rank() != 2 || tokens.cols() != cfg_.channel_width) {
            throw DimensionError("encode: tokens must be [n x " + std::to_string(cfg_.channel_width) + "], got " +
                                 shape_str(tokens.shape()));
        }
        Tensor x = latents_;
        x = add(x, enc_cross_.attn(enc_cross_.norm_q(x), enc_cross_.norm_kv(tokens)));
        x = add(x, enc_cross_.mlp(enc_cross_.norm_mlp(x)));
        for (const auto& block : enc_self_) {
            const Tensor h = block.norm_attn(x);
            x = add(x, block.attn(h, h));
            x = add(x, block.mlp(block.norm_mlp(x)));
        }
        return x;
    }

    Tensor encode(const FusedSequence& seq) const { return encode(seq.tokens); }

    // [pos_enc | task embedding] rows, projected to channel width.
    Tensor form_queries(const std::vector<GeoPoint>& points, const std::vector<std::size_t>& task_ids) const {
        if (points.empty() || points.size() != task_ids.size()) {
            throw ContractError("form_queries: need matching, non-empty points and task ids");
        }
        for (auto t : task_ids) registry_.at(t);
        const Tensor task = gather_rows(task_embeddings(), task_ids);
        return query_proj_(concat({pos_enc_matrix(points, cfg_.pos_enc), task}, 1));
    }

    // Each query attends to the latents independently, then MLP blocks and
    // the shared output head.
    Tensor decode(const Tensor& latents, const Tensor& queries) const {
        Tensor x = queries;
        x = add(x, dec_cross_.attn(dec_cross_.norm_q(x), dec_cross_.norm_kv(latents)));
        for (const auto& block : dec_mlps_) x = add(x, block.mlp(block.norm(x)));
        return head_(head_norm_(x));
    }

    Tensor forward(const std::vector<ObservationBatch>& observations, const std::vector<GeoPoint>& points,
                   const std::vector<std::size_t>& task_ids) const {
        const Tensor latents = encode(fuse(observations));
        return decode(latents, form_queries(points, task_ids));
    }

    Tensor forward(const StepBatch& batch) const {
        return forward(batch.observations, batch.queries.points, batch.queries.task_ids);
    }

    // Gradient-free forward pass; safe to call concurrently on a frozen model.
    Tensor predict(const std::vector<ObservationBatch>& observations, const std::vector<GeoPoint>& points,
                   const std::vector<std::size_t>& task_ids) const {
        NoGradGuard guard;
        return forward(observations, points, task_ids);
    }

    // Trainable scalar count grouped by top-level component.
    std::map<std::string, std::size_t> parameter_breakdown() const {
        std::map<std::string, std::size_t> out;
        for (const auto& p : params_.all()) {
            if (!p.trainable) continue;
            out[p.name.substr(0, p.name.find('.'))] += p.tensor.size();
        }
        return out;
    }

private:
    struct CrossBlock {
        LayerNorm norm_q, norm_kv, norm_mlp;
        MultiHeadAttention attn;
        Mlp mlp;
    };
    struct SelfBlock {
        LayerNorm norm_attn, norm_mlp;
        MultiHeadAttention attn;
        Mlp mlp;
    };
    struct MlpBlock {
        LayerNorm norm;
        Mlp mlp;
    };

    void build(const TextEmbeddingSource& text) {
        Rng rng(cfg_.seed);
        const std::size_t C = cfg_.channel_width;
        const std::size_t hidden = cfg_.mlp_expansion * C;
        const bool ln = cfg_.layer_norm;

        std::vector<double> raw;
        for (const auto& spec : registry_.specs()) {
            const auto v = text.embed(spec.name, spec.description);
            raw.insert(raw.end(), v.begin(), v.end());
        }
        text_vectors_ = Tensor({registry_.size(), kTextEmbeddingWidth}, std::move(raw));

        modality_proj_ = Linear(params_, "embed.modality", kTextEmbeddingWidth, kModalityEmbeddingWidth, rng);
        task_proj_ = Linear(params_, "embed.task", kTextEmbeddingWidth, pos_dim(), rng);
        for (std::size_t m = 0; m < registry_.size(); ++m) {
            token_proj_.emplace_back(params_, "tokens." + slug(registry_[m].name), token_input_width(m), C, rng);
        }
        latents_ = params_.normal("latents", {cfg_.n_latents, C}, 1.0, rng);
        null_token_ = params_.constant("null_token", {1, C}, 0.0);

        enc_cross_.norm_q = LayerNorm(params_, "encoder.cross.norm_q", C, ln);
        enc_cross_.norm_kv = LayerNorm(params_, "encoder.cross.norm_kv", C, ln);
        enc_cross_.attn = MultiHeadAttention(params_, "encoder.cross.attn", C, C, cfg_.cross_heads, cfg_.cross_head_dim, rng);
        enc_cross_.norm_mlp = LayerNorm(params_, "encoder.cross.norm_mlp", C, ln);
        enc_cross_.mlp = Mlp(params_, "encoder.cross.mlp", C, hidden, rng);
        for (std::size_t i = 0; i < cfg_.n_self_blocks; ++i) {
            const std::string name = "encoder.self_attn." + std::to_string(i);
            SelfBlock b;
            b.norm_attn = LayerNorm(params_, name + ".norm_attn", C, ln);
            b.attn = MultiHeadAttention(params_, name + ".attn", C, C, cfg_.self_heads, cfg_.self_head_dim, rng);
            b.norm_mlp = LayerNorm(params_, name + ".norm_mlp", C, ln);
            b.mlp = Mlp(params_, name + ".mlp", C, hidden, rng);
            enc_self_.push_back(std::move(b));
        }

        query_proj_ = Linear(params_, "decoder.query", 2 * pos_dim(), C, rng);
        dec_cross_.norm_q = LayerNorm(params_, "decoder.cross.norm_q", C, ln);
        dec_cross_.norm_kv = LayerNorm(params_, "decoder.cross.norm_kv", C, ln);
        dec_cross_.attn = MultiHeadAttention(params_, "decoder.cross.attn", C, C, cfg_.cross_heads, cfg_.cross_head_dim, rng);
        for (std::size_t i = 0; i < cfg_.n_decoder_mlps; ++i) {
            const std::string name = "decoder.mlp." + std::to_string(i);
            MlpBlock b;
            b.norm = LayerNorm(params_, name + ".norm", C, ln);
            b.mlp = Mlp(params_, name, C, hidden, rng);
            dec_mlps_.push_back(std::move(b));
        }
        head_norm_ = LayerNorm(params_, "decoder.head_norm", C, ln);
        head_ = Linear(params_, "decoder.head", C, layout_.total, rng);
    }

    ModelConfig cfg_;
    Registry registry_;
    OutputLayout layout_;
    ParameterStore params_;
    Tensor text_vectors_;
    Linear modality_proj_, task_proj_, query_proj_, head_;
    std::vector<Linear> token_proj_;
    Tensor latents_, null_token_;
    CrossBlock enc_cross_, dec_cross_;
    std::vector<SelfBlock> enc_self_;
    std::vector<MlpBlock> dec_mlps_;
    LayerNorm head_norm_;
};

// Closed-form trainable scalar count for a config and registry, grouped like
// Model::parameter_breakdown. Does not allocate the model.
inline std::map<std::string, std::size_t> parameter_breakdown(const ModelConfig& cfg, const Registry& registry) {
    cfg.validate();
    const std::size_t C = cfg.channel_width;
    const std::size_t P = cfg.pos_enc.dim();
    const std::size_t hidden = cfg.mlp_expansion * C;
    const std::size_t ln = cfg.layer_norm ? 2 * C : 0;
    auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
    auto mha = [&](std::size_t heads, std::size_t dim) {
        const std::size_t inner = heads * dim;
        return 3 * linear(C, inner) + linear(inner, C);
    };
    const std::size_t mlp = linear(C, hidden) + linear(hidden, C);

    std::map<std::string, std::size_t> out;
    out["embed"] = linear(kTextEmbeddingWidth, kModalityEmbeddingWidth) + linear(kTextEmbeddingWidth, P);
    for (const auto& spec : registry.specs()) out["tokens"] += linear(spec.feature_width() + P + kModalityEmbeddingWidth, C);
    out["latents"] = cfg.n_latents * C;
    out["null_token"] = C;
    out["encoder"] = 3 * ln + mha(cfg.cross_heads, cfg.cross_head_dim) + mlp +
                     cfg.n_self_blocks * (2 * ln + mha(cfg.self_heads, cfg.self_head_dim) + mlp);
    out["decoder"] = linear(2 * P, C) + 2 * ln + mha(cfg.cross_heads, cfg.cross_head_dim) +
                     cfg.n_decoder_mlps * (ln + mlp) + ln + linear(C, registry.output_width());
    return out;
}

inline std::size_t parameter_count(const ModelConfig& cfg, const Registry& registry) {
    std::size_t n = 0;
    for (const auto& [_, v] : parameter_breakdown(cfg, registry)) n += v;
    return n;
}

} // namespace tearth
