#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "tearth/loss.hpp"
#include "tearth/model.hpp"

using namespace tearth;

namespace {

ObservationBatch random_obs(const Registry& reg, std::size_t m, std::size_t n, Rng& rng) {
    ObservationBatch b;
    b.modality = m;
    for (std::size_t i = 0; i < n; ++i) {
        const GeoPoint p{rng.uniform(-90, 90), rng.uniform(-180, 180), rng.uniform(0, 2000)};
        b.points.push_back(p);
        b.values.push_back(synth_value(synth_kind_for(reg[m]), p));
    }
    return b;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
    return d;
}

}  // namespace

TEST(Tokens, PreProjectionWidths) {
    auto cfg = preset_config("micro");
    cfg.pos_enc = nyquist_bands(0.5);
    const Model model(cfg, default_registry());
    const auto& reg = model.registry();
    EXPECT_EQ(model.token_input_width(reg.id_of("stress angle")), 154u);
    EXPECT_EQ(model.token_input_width(reg.id_of("tectonic plates")), 205u);
    Rng rng(1);
    ObservationBatch plates;
    plates.modality = reg.id_of("tectonic plates");
    plates.points = {{10, 10, 0}, {20, 20, 0}};
    plates.values = {3, 51};
    EXPECT_EQ(model.tokens(plates).shape(), (Shape{2, 32}));
}

TEST(Tokens, FeatureWidthMismatchIsSchemaError) {
    const Model model(preset_config("micro"), default_registry());
    EXPECT_THROW(model.build_tokens(Tensor::zeros({1, 3}), {{0, 0, 0}}, 0), SchemaError);
    EXPECT_EQ(model.build_tokens(Tensor::zeros({1, 1}), {{0, 0, 0}}, 0).cols(), 32u);
}

TEST(Fuse, LengthsAndNullToken) {
    const Model model(preset_config("micro"), synthetic_registry());
    Rng rng(2);
    const auto seq = model.fuse({random_obs(model.registry(), 0, 3, rng), random_obs(model.registry(), 3, 5, rng)});
    EXPECT_EQ(seq.length(), 8u);
    EXPECT_EQ(seq.origins.size(), 8u);
    EXPECT_EQ(seq.origins[3], (std::pair<std::size_t, std::size_t>{3, 0}));
    const auto empty = model.fuse({});
    EXPECT_TRUE(empty.null_token);
    EXPECT_EQ(empty.length(), 1u);
    for (double v : empty.tokens.values()) EXPECT_EQ(v, 0.0);
}

TEST(Encoder, PermutationInvariance) {
    const Model model(preset_config("micro"), synthetic_registry());
    Rng rng(3);
    const auto seq = model.fuse({random_obs(model.registry(), 0, 20, rng), random_obs(model.registry(), 2, 13, rng)});
    std::vector<std::size_t> perm(seq.length());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    NoGradGuard guard;
    const Tensor base = model.encode(seq.tokens);
    for (int t = 0; t < 5; ++t) {
        rng.shuffle(perm.begin(), perm.end());
        EXPECT_LE(max_abs_diff(model.encode(gather_rows(seq.tokens, perm)), base), 1e-9);
    }
}

TEST(Encoder, ShapeLawAcrossSequenceLengths) {
    const Model model(preset_config("micro"), synthetic_registry());
    Rng rng(4);
    NoGradGuard guard;
    for (std::size_t n : {1u, 2u, 7u, 64u, 300u, 512u}) {
        const auto out = model.encode(model.fuse({random_obs(model.registry(), 1, n, rng)}));
        EXPECT_EQ(out.shape(), (Shape{8, 32}));
    }
    EXPECT_EQ(model.encode(model.fuse({})).shape(), (Shape{8, 32}));
}

TEST(Encoder, BasePresetShape) {
    const Model model(preset_config("base"), default_registry());
    Rng rng(5);
    NoGradGuard guard;
    EXPECT_EQ(model.encode(model.fuse({random_obs(model.registry(), 0, 4, rng)})).shape(), (Shape{512, 256}));
}

TEST(Decoder, QueryIndependence) {
    const Model model(preset_config("micro"), synthetic_registry());
    Rng rng(6);
    NoGradGuard guard;
    const Tensor latents = model.encode(model.fuse({random_obs(model.registry(), 0, 10, rng)}));
    std::vector<GeoPoint> pts;
    std::vector<std::size_t> tasks;
    for (int i = 0; i < 40; ++i) {
        pts.push_back({rng.uniform(-90, 90), rng.uniform(-180, 180), 0});
        tasks.push_back(static_cast<std::size_t>(i % 4));
    }
    const Tensor all = model.decode(latents, model.form_queries(pts, tasks));
    for (std::size_t i : {0u, 17u, 39u}) {
        const Tensor one = model.decode(latents, model.form_queries({pts[i]}, {tasks[i]}));
        for (std::size_t c = 0; c < one.cols(); ++c) EXPECT_LE(std::abs(one.at(0, c) - all.at(i, c)), 1e-12);
    }
}

TEST(Decoder, OutputWidthAndTaskSensitivity) {
    const Model model(preset_config("micro"), default_registry());
    NoGradGuard guard;
    const auto out = model.forward({}, {{10, 10, 0}, {10, 10, 0}}, {0, 4});
    EXPECT_EQ(out.shape(), (Shape{2, 106}));
    const auto q = model.form_queries({{10, 10, 0}, {10, 10, 0}}, {0, 1});
    EXPECT_NE(q.at(0, 0), q.at(1, 0));
    EXPECT_EQ(q.cols(), 32u);
}

TEST(Model, QueryWidthBeforeProjection) {
    auto cfg = preset_config("micro");
    cfg.pos_enc = nyquist_bands(0.5);
    const Model model(cfg, default_registry());
    EXPECT_EQ(model.params().get("decoder.query.weight").tensor.rows(), 290u);
}

TEST(Model, SameSeedSameParameters) {
    const Model a(preset_config("micro"), synthetic_registry()), b(preset_config("micro"), synthetic_registry());
    for (std::size_t i = 0; i < a.params().all().size(); ++i) {
        EXPECT_EQ(a.params().all()[i].tensor.values(), b.params().all()[i].tensor.values());
    }
}

TEST(Gradients, CompletenessWithAllModalitiesFused) {
    Model model(preset_config("micro"), synthetic_registry());
    Rng rng(7);
    StepBatch batch;
    for (std::size_t m = 0; m < 4; ++m) batch.observations.push_back(random_obs(model.registry(), m, 6, rng));
    for (std::size_t m = 0; m < 4; ++m)
        for (int i = 0; i < 5; ++i) {
            const GeoPoint p{rng.uniform(-80, 80), rng.uniform(-170, 170), 0};
            batch.queries.push(p, m, synth_value(synth_kind_for(model.registry()[m]), p));
        }
    const auto terms = modality_losses(model.forward(batch), batch.queries, model.registry(), model.layout(), {});
    backward(total_loss(terms));
    for (const auto& p : model.params().all()) {
        double n = 0.0;
        if (p.tensor.has_grad())
            for (double g : p.tensor.grad()) n += g * g;
        if (p.name == "null_token") {
            EXPECT_EQ(n, 0.0);
        } else {
            EXPECT_GT(n, 0.0) << p.name;
        }
    }
}

TEST(Gradients, NullTokenReceivesGradientOnEmptySubset) {
    Model model(preset_config("micro"), synthetic_registry());
    QueryBatch q;
    q.push({10, 10, 0}, 0, 45.0);
    q.push({-10, 50, 0}, 3, 2.0);
    const auto terms = modality_losses(model.forward({}, q.points, q.task_ids), q, model.registry(), model.layout(), {});
    backward(total_loss(terms));
    const auto& null = model.params().get("null_token").tensor;
    double n = 0.0;
    for (double g : null.grad()) n += g * g;
    EXPECT_GT(n, 0.0);
    EXPECT_TRUE(model.params().get("latents").tensor.has_grad());
}

TEST(ParameterCount, AnalyticMatchesBuiltModel) {
    for (const auto& reg : {synthetic_registry(), default_registry()}) {
        for (bool ln : {true, false}) {
            auto cfg = preset_config("micro");
            cfg.layer_norm = ln;
            const Model model(cfg, reg);
            EXPECT_EQ(parameter_count(cfg, reg), model.params().scalar_count());
            EXPECT_EQ(parameter_breakdown(cfg, reg), model.parameter_breakdown());
        }
    }
}

TEST(ParameterCount, TablePresets) {
    const auto reg = default_registry();
    const auto base = parameter_count(preset_config("base"), reg);
    EXPECT_GE(base, 2'000'000u);
    EXPECT_LE(base, 5'000'000u);
    const auto x2 = parameter_count(preset_config("base_x2"), reg);
    EXPECT_GE(x2, 8'000'000u);
    EXPECT_LE(x2, 15'000'000u);
    std::size_t prev = 0;
    for (const auto& name : preset_names()) {
        const auto n = parameter_count(preset_config(name), reg);
        EXPECT_GT(n, prev) << name;
        prev = n;
    }
}

TEST(Presets, TableRows) {
    const auto b = preset_config("base");
    EXPECT_EQ(b.channel_width, 256u);
    EXPECT_EQ(b.n_latents, 512u);
    EXPECT_EQ(b.cross_heads, 4u);
    EXPECT_EQ(b.self_heads, 2u);
    const auto x10 = preset_config("base_x10");
    EXPECT_EQ(x10.channel_width, 2560u);
    EXPECT_EQ(x10.n_latents, 2048u);
    EXPECT_EQ(x10.cross_heads, 40u);
    EXPECT_EQ(x10.self_heads, 20u);
    EXPECT_THROW(preset_config("huge"), ConfigError);
    const auto m = preset_config("micro");
    EXPECT_EQ(m.channel_width, 32u);
    EXPECT_EQ(m.n_latents, 8u);
    EXPECT_EQ(m.pos_enc.bands(), 4u);
}

TEST(ModelConfig, JsonRoundTrip) {
    const auto cfg = preset_config("base_x2");
    EXPECT_EQ(nlohmann::json(nlohmann::json(cfg).get<ModelConfig>()), nlohmann::json(cfg));
    auto bad = nlohmann::json(cfg);
    bad["channel_width"] = 0;
    EXPECT_THROW(bad.get<ModelConfig>(), ConfigError);
}
