#pragma once

// Modality registry, value normalization, CSV ingestion, synthetic fields,
// train/test splitting and the per-step stochastic sampler.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tearth/errors.hpp"
#include "tearth/geo_encode.hpp"
#include "tearth/rng.hpp"

namespace tearth {

enum class TaskKind { angular, scalar, classification };

inline std::string to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::angular: return "angular-regression";
        case TaskKind::scalar: return "scalar-regression";
        case TaskKind::classification: return "classification";
    }
    return "?";
}

inline TaskKind task_kind_from_string(const std::string& s) {
    if (s == "angular-regression") return TaskKind::angular;
    if (s == "scalar-regression") return TaskKind::scalar;
    if (s == "classification") return TaskKind::classification;
    throw SchemaError("unknown task kind '" + s + "'");
}

struct ModalitySpec {
    std::string name;
    TaskKind kind = TaskKind::scalar;
    double range_min = 0.0;
    double range_max = 1.0;
    std::vector<std::string> classes;
    double angular_period = 0.0;         // degrees; 180 or 360 for angular modalities
    std::optional<double> normalizer;    // divide-by value; nullopt means identity
    bool depth_varying = false;
    std::string description;
    std::optional<std::string> fill_label;

    bool is_regression() const { return kind != TaskKind::classification; }
    std::size_t feature_width() const { return is_regression() ? 1 : classes.size(); }
    std::size_t output_width() const { return feature_width(); }
    double scale() const { return normalizer.value_or(1.0); }

    void validate() const {
        if (name.empty()) throw SchemaError("modality with empty name");
        if (description.empty()) throw SchemaError("modality '" + name + "' has an empty description");
        if (kind == TaskKind::classification) {
            if (classes.size() < 2) throw SchemaError("modality '" + name + "' needs at least two classes");
            if (fill_label && std::find(classes.begin(), classes.end(), *fill_label) == classes.end()) {
                throw SchemaError("modality '" + name + "' fill label is not one of its classes");
            }
        } else {
            if (!(range_max > range_min)) throw SchemaError("modality '" + name + "' has an empty value range");
            if (normalizer && !(*normalizer > 0.0)) throw SchemaError("modality '" + name + "' normalizer must be positive");
        }
        if (kind == TaskKind::angular && angular_period != 180.0 && angular_period != 360.0) {
            throw SchemaError("modality '" + name + "' angular period must be 180 or 360");
        }
    }
};

inline void to_json(nlohmann::json& j, const ModalitySpec& s) {
    j = nlohmann::json{{"name", s.name},
                       {"task_kind", to_string(s.kind)},
                       {"description", s.description},
                       {"depth_varying", s.depth_varying}};
    if (s.kind == TaskKind::classification) {
        j["classes"] = s.classes;
        j["fill_label"] = s.fill_label ? nlohmann::json(*s.fill_label) : nlohmann::json(nullptr);
    } else {
        j["range"] = {s.range_min, s.range_max};
        j["normalizer"] = s.normalizer ? nlohmann::json(*s.normalizer) : nlohmann::json("identity");
        if (s.kind == TaskKind::angular) j["angular_period"] = s.angular_period;
    }
}

inline void from_json(const nlohmann::json& j, ModalitySpec& s) {
    try {
        s = ModalitySpec{};
        s.name = j.at("name").get<std::string>();
        s.kind = task_kind_from_string(j.at("task_kind").get<std::string>());
        s.description = j.value("description", s.name);
        s.depth_varying = j.value("depth_varying", false);
        if (s.kind == TaskKind::classification) {
            s.classes = j.at("classes").get<std::vector<std::string>>();
            if (j.contains("fill_label") && !j["fill_label"].is_null()) s.fill_label = j["fill_label"].get<std::string>();
        } else {
            const auto range = j.at("range");
            s.range_min = range.at(0).get<double>();
            s.range_max = range.at(1).get<double>();
            const auto& norm = j.at("normalizer");
            if (norm.is_string()) {
                if (norm.get<std::string>() != "identity") throw SchemaError("normalizer must be a number or \"identity\"");
            } else {
                s.normalizer = norm.get<double>();
            }
            if (s.kind == TaskKind::angular) s.angular_period = j.at("angular_period").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("modality record: ") + e.what());
    }
    s.validate();
}

// Ordered set of modalities; a modality's position is its task id.
class Registry {
public:
    Registry() = default;
    explicit Registry(std::vector<ModalitySpec> specs) : specs_(std::move(specs)) {
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            specs_[i].validate();
            if (!by_name_.emplace(specs_[i].name, i).second) {
                throw SchemaError("duplicate modality name '" + specs_[i].name + "'");
            }
        }
    }

    std::size_t size() const { return specs_.size(); }
    bool empty() const { return specs_.empty(); }
    const ModalitySpec& operator[](std::size_t id) const { return specs_.at(id); }
    const ModalitySpec& at(std::size_t id) const {
        if (id >= specs_.size()) throw RegistryError("unknown task id " + std::to_string(id));
        return specs_[id];
    }
    const std::vector<ModalitySpec>& specs() const { return specs_; }

    std::size_t id_of(const std::string& name) const {
        auto it = by_name_.find(name);
        if (it == by_name_.end()) throw RegistryError("unknown modality '" + name + "'");
        return it->second;
    }
    bool contains(const std::string& name) const { return by_name_.count(name) != 0; }

    std::size_t output_width() const {
        std::size_t n = 0;
        for (const auto& s : specs_) n += s.output_width();
        return n;
    }

    Registry subset(const std::vector<std::string>& names) const {
        std::vector<ModalitySpec> out;
        for (const auto& n : names) out.push_back(specs_[id_of(n)]);
        return Registry(std::move(out));
    }

    nlohmann::json to_json() const { return nlohmann::json(specs_); }

    static Registry from_json(const nlohmann::json& j) {
        if (!j.is_array()) throw SchemaError("registry must be a JSON list of modality records");
        return Registry(j.get<std::vector<ModalitySpec>>());
    }

    static Registry load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw LoadError("cannot open registry " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw SchemaError(path + ": " + e.what());
        }
        return from_json(j);
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw LoadError("cannot write registry " + path);
        out << to_json().dump(2) << '\n';
    }

    bool operator==(const Registry& other) const { return to_json() == other.to_json(); }

private:
    std::vector<ModalitySpec> specs_;
    std::map<std::string, std::size_t> by_name_;
};

namespace detail {

inline std::vector<std::string> numbered_classes(const std::string& first, const std::string& stem, std::size_t count) {
    std::vector<std::string> out{first};
    for (std::size_t i = 1; i < count; ++i) {
        std::string idx = std::to_string(i);
        if (idx.size() < 2) idx = "0" + idx;
        out.push_back(stem + idx);
    }
    return out;
}

} // namespace detail

// The eight global modalities: angles of maximum horizontal stress and strain,
// sediment thickness, mantle temperature, and four categorical maps.
inline Registry default_registry() {
    auto regression = [](std::string name, TaskKind kind, double lo, double hi, std::optional<double> norm,
                         double period, bool depth) {
        ModalitySpec s;
        s.name = name;
        s.description = name;
        s.kind = kind;
        s.range_min = lo;
        s.range_max = hi;
        s.normalizer = norm;
        s.angular_period = period;
        s.depth_varying = depth;
        return s;
    };
    auto categorical = [](std::string name, std::vector<std::string> classes, std::optional<std::string> fill) {
        ModalitySpec s;
        s.name = name;
        s.description = name;
        s.kind = TaskKind::classification;
        s.classes = std::move(classes);
        s.fill_label = std::move(fill);
        return s;
    };

    const std::vector<std::string> plates{
        "AF", "AM", "AN", "AP", "AR", "AS", "AT", "AU", "BH", "BR", "BS", "BU", "CA",
        "CL", "CO", "CR", "EA", "EU", "FT", "GP", "IN", "JF", "JZ", "KE", "MA", "MN",
        "MO", "MS", "NA", "NB", "ND", "NH", "NI", "NZ", "OK", "ON", "PA", "PM", "PS",
        "RI", "SA", "SB", "SC", "SL", "SO", "SS", "SU", "SW", "TI", "TO", "WL", "YA"};
    const std::vector<std::string> basin_types{"No Basin", "rift", "passive margin", "foreland", "intracratonic",
                                               "strike-slip", "forearc", "backarc", "orogenic"};
    const std::vector<std::string> basin_ages{"No Basin",  "Quaternary", "Neogene",  "Paleogene",  "Cretaceous",
                                              "Jurassic",  "Triassic",   "Permian",  "Carboniferous", "Devonian",
                                              "Silurian",  "Ordovician", "Cambrian", "Ediacaran",  "Cryogenian",
                                              "Tonian",    "Mesoproterozoic"};

    return Registry({
        regression("stress angle", TaskKind::angular, 0.0, 180.0, 180.0, 180.0, false),
        regression("strain angle", TaskKind::angular, 0.0, 180.0, 180.0, 180.0, false),
        regression("sediment thickness", TaskKind::scalar, 0.0, 22.0, std::nullopt, 0.0, false),
        regression("mantle temperature", TaskKind::scalar, 400.0, 1300.0, 1300.0, 0.0, true),
        categorical("tectonic plates", plates, std::nullopt),
        categorical("fault type", detail::numbered_classes("None", "fault class ", 24), "None"),
        categorical("basin type", basin_types, "No Basin"),
        categorical("basin age", basin_ages, "No Basin"),
    });
}

// Four analytic stand-in modalities used for desk-scale experiments.
inline Registry synthetic_registry() {
    ModalitySpec angle;
    angle.name = angle.description = "synthetic angle";
    angle.kind = TaskKind::angular;
    angle.range_min = 0.0;
    angle.range_max = 180.0;
    angle.normalizer = 180.0;
    angle.angular_period = 180.0;

    ModalitySpec scalar;
    scalar.name = scalar.description = "synthetic scalar";
    scalar.kind = TaskKind::scalar;
    scalar.normalizer = 1.0;

    ModalitySpec depth = scalar;
    depth.name = depth.description = "synthetic depth scalar";
    depth.depth_varying = true;

    ModalitySpec quadrant;
    quadrant.name = quadrant.description = "synthetic quadrant";
    quadrant.kind = TaskKind::classification;
    quadrant.classes = {"north-east", "north-west", "south-east", "south-west"};

    return Registry({angle, scalar, depth, quadrant});
}

// ---------------------------------------------------------------------------
// Normalization

inline void check_raw(double raw, const ModalitySpec& spec) {
    if (!std::isfinite(raw) || raw < spec.range_min || raw > spec.range_max) {
        std::ostringstream os;
        os << spec.name << ": value " << raw << " outside [" << spec.range_min << ", " << spec.range_max << "]";
        throw DomainError(os.str());
    }
}

inline double normalize(double raw, const ModalitySpec& spec) {
    if (!spec.is_regression()) throw SchemaError(spec.name + ": numeric normalization of a categorical modality");
    check_raw(raw, spec);
    return spec.normalizer ? raw / *spec.normalizer : raw;
}

inline double denormalize(double value, const ModalitySpec& spec) {
    if (!spec.is_regression()) throw SchemaError(spec.name + ": numeric denormalization of a categorical modality");
    return spec.normalizer ? value * *spec.normalizer : value;
}

inline std::size_t class_index(const std::string& label, const ModalitySpec& spec) {
    auto it = std::find(spec.classes.begin(), spec.classes.end(), label);
    if (it == spec.classes.end()) throw SchemaError(spec.name + ": unknown class label '" + label + "'");
    return static_cast<std::size_t>(it - spec.classes.begin());
}

inline std::vector<double> one_hot(std::size_t index, const ModalitySpec& spec) {
    if (index >= spec.classes.size()) throw SchemaError(spec.name + ": class index out of range");
    std::vector<double> row(spec.classes.size(), 0.0);
    row[index] = 1.0;
    return row;
}

// Normalized encoder feature row for a stored value (raw regression value or
// class index).
inline void feature_row_into(double stored, const ModalitySpec& spec, double* out) {
    if (spec.is_regression()) {
        out[0] = normalize(stored, spec);
        return;
    }
    const auto idx = static_cast<std::size_t>(stored);
    if (stored < 0 || idx >= spec.classes.size()) throw SchemaError(spec.name + ": class index out of range");
    std::fill(out, out + spec.classes.size(), 0.0);
    out[idx] = 1.0;
}

// ---------------------------------------------------------------------------
// Datasets

// Observations of one modality. `values` holds raw regression values or class
// indices for categorical modalities.
struct ModalityDataset {
    std::string modality;
    std::vector<GeoPoint> points;
    std::vector<double> values;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
    void push(const GeoPoint& p, double v) {
        points.push_back(p);
        values.push_back(v);
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& cell, const std::string& where) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(cell, &used);
    } catch (const std::exception&) {
        throw SchemaError(where + ": '" + cell + "' is not a number");
    }
    if (used != cell.size()) throw SchemaError(where + ": '" + cell + "' is not a number");
    return v;
}

inline std::string format_number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace detail

// Reads `lat,lon,depth_km,value` rows. A first line starting with "lat" is a
// header. Categorical values are class names.
inline ModalityDataset ingest_csv(const std::string& path, const ModalitySpec& spec) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open data file " + path);
    ModalityDataset data;
    data.modality = spec.name;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("lat", 0) == 0) continue;
        const std::string where = path + ":" + std::to_string(line_no);
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 4) {
            throw SchemaError(where + ": expected 4 columns (lat,lon,depth_km,value), got " + std::to_string(cells.size()));
        }
        GeoPoint p{detail::parse_number(detail::trim(cells[0]), where),
                   detail::parse_number(detail::trim(cells[1]), where),
                   detail::parse_number(detail::trim(cells[2]), where)};
        try {
            validate_point(p);
        } catch (const DomainError& e) {
            throw DomainError(where + ": " + e.what());
        }
        const std::string value_cell = detail::trim(cells[3]);
        double value = 0.0;
        if (spec.is_regression()) {
            value = detail::parse_number(value_cell, where);
            try {
                check_raw(value, spec);
            } catch (const DomainError& e) {
                throw DomainError(where + ": " + e.what());
            }
        } else {
            try {
                value = static_cast<double>(class_index(value_cell, spec));
            } catch (const SchemaError& e) {
                throw SchemaError(where + ": " + e.what());
            }
        }
        data.push(p, value);
    }
    return data;
}

inline void write_csv(const std::string& path, const ModalityDataset& data, const ModalitySpec& spec) {
    std::ofstream out(path);
    if (!out) throw LoadError("cannot write data file " + path);
    out << "lat,lon,depth_km,value\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& p = data.points[i];
        out << detail::format_number(p.lat) << ',' << detail::format_number(p.lon) << ','
            << detail::format_number(p.depth_km) << ',';
        if (spec.is_regression()) {
            out << detail::format_number(data.values[i]);
        } else {
            out << spec.classes.at(static_cast<std::size_t>(data.values[i]));
        }
        out << '\n';
    }
    if (!out) throw LoadError("failed writing " + path);
}

struct LabeledPoint {
    GeoPoint point;
    std::optional<std::string> label;
};

// Sampled coordinates without a source label get the modality's fill label.
inline ModalityDataset fill_missing_class(const std::vector<LabeledPoint>& points, const ModalitySpec& spec) {
    if (spec.kind != TaskKind::classification || !spec.fill_label) {
        throw ConfigError(spec.name + ": no fill label declared");
    }
    const double fill = static_cast<double>(class_index(*spec.fill_label, spec));
    ModalityDataset data;
    data.modality = spec.name;
    for (const auto& lp : points) {
        validate_point(lp.point);
        data.push(lp.point, lp.label ? static_cast<double>(class_index(*lp.label, spec)) : fill);
    }
    return data;
}

// ---------------------------------------------------------------------------
// Synthetic fields

enum class SynthKind { angular, scalar, scalar_depth, categorical };

struct SynthParams {
    double depth_scale_km = kDefaultDepthScaleKm;
};

inline double synth_scalar(double lat, double lon) {
    return 0.5 + 0.4 * std::sin(std::numbers::pi * lat / 60.0) * std::sin(std::numbers::pi * lon / 120.0);
}

// Field value at `p`: angle in [0, 180), scalar, depth-attenuated scalar, or
// quadrant index (0: lat>=0 & lon>=0, 1: lat>=0 & lon<0, 2: lat<0 & lon>=0, 3: both negative).
inline double synth_value(SynthKind kind, const GeoPoint& p, const SynthParams& params = {}) {
    switch (kind) {
        case SynthKind::angular: {
            const double theta =
                90.0 + 60.0 * std::sin(std::numbers::pi * p.lat / 90.0) * std::cos(std::numbers::pi * p.lon / 90.0);
            return std::fmod(std::fmod(theta, 180.0) + 180.0, 180.0);
        }
        case SynthKind::scalar: return synth_scalar(p.lat, p.lon);
        case SynthKind::scalar_depth:
            return synth_scalar(p.lat, p.lon) * (1.0 - (p.depth_km / params.depth_scale_km) / 2.0);
        case SynthKind::categorical: return static_cast<double>((p.lat < 0.0 ? 2 : 0) + (p.lon < 0.0 ? 1 : 0));
    }
    return 0.0;
}

inline ModalityDataset synth_field(SynthKind kind, const SynthParams& params, std::size_t n_points,
                                   std::uint64_t seed, const std::string& modality = {}) {
    if (n_points < 1) throw DomainError("synth_field: need at least one point");
    Rng rng(seed);
    ModalityDataset data;
    data.modality = modality;
    for (std::size_t i = 0; i < n_points; ++i) {
        GeoPoint p{rng.uniform(-90.0, 90.0), rng.uniform(-180.0, 180.0), 0.0};
        if (kind == SynthKind::scalar_depth) p.depth_km = rng.uniform(0.0, params.depth_scale_km);
        data.push(p, synth_value(kind, p, params));
    }
    return data;
}

inline SynthKind synth_kind_for(const ModalitySpec& spec) {
    if (spec.kind == TaskKind::angular) return SynthKind::angular;
    if (spec.kind == TaskKind::classification) return SynthKind::categorical;
    return spec.depth_varying ? SynthKind::scalar_depth : SynthKind::scalar;
}

// ---------------------------------------------------------------------------
// Splitting

struct Split {
    ModalityDataset train;
    ModalityDataset test;
};

inline Split split(const ModalityDataset& data, double test_fraction, std::uint64_t seed) {
    if (data.size() < 20) throw DomainError(data.modality + ": dataset too small to split (" + std::to_string(data.size()) + " < 20)");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in (0, 1)");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
    std::vector<std::size_t> test_rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train_rows(order.begin() + static_cast<std::ptrdiff_t>(n_test), order.end());
    std::sort(test_rows.begin(), test_rows.end());
    std::sort(train_rows.begin(), train_rows.end());
    Split out;
    out.train.modality = out.test.modality = data.modality;
    for (auto i : train_rows) out.train.push(data.points[i], data.values[i]);
    for (auto i : test_rows) out.test.push(data.points[i], data.values[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Step sampling

struct ObservationBatch {
    std::size_t modality = 0;
    std::vector<GeoPoint> points;
    std::vector<double> values;  // stored values (raw or class index)

    std::size_t size() const { return points.size(); }
};

struct QueryBatch {
    std::vector<GeoPoint> points;
    std::vector<std::size_t> task_ids;
    std::vector<double> targets;  // stored values; empty for pure inference

    std::size_t size() const { return points.size(); }
    void push(const GeoPoint& p, std::size_t task, double target) {
        points.push_back(p);
        task_ids.push_back(task);
        targets.push_back(target);
    }
};

struct StepBatch {
    std::vector<ObservationBatch> observations;  // in fusion order
    QueryBatch queries;
};

struct SamplerConfig {
    std::size_t k_max = 384;
    std::size_t q_max = 64;
    std::uint64_t seed = 0;
};

inline void to_json(nlohmann::json& j, const SamplerConfig& c) {
    j = nlohmann::json{{"k_max", c.k_max}, {"q_max", c.q_max}, {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, SamplerConfig& c) {
    c.k_max = j.value("k_max", c.k_max);
    c.q_max = j.value("q_max", c.q_max);
    c.seed = j.value("seed", c.seed);
}

// Draws, per step: a uniformly random modality subset (each of the 2^M subsets
// equally likely, empty included) in random order, U(1, k_max) observations
// with replacement per chosen modality, and U(1, q_max) queries for every
// registered modality.
class Sampler {
public:
    explicit Sampler(SamplerConfig cfg) : cfg_(cfg), rng_(cfg.seed) {
        if (cfg_.k_max < 1 || cfg_.q_max < 1) throw ConfigError("sampler bounds must be >= 1");
    }

    const SamplerConfig& config() const { return cfg_; }

    std::vector<std::size_t> draw_subset(std::size_t n_modalities) {
        std::vector<std::size_t> subset;
        for (std::size_t m = 0; m < n_modalities; ++m)
            if (rng_.coin()) subset.push_back(m);
        rng_.shuffle(subset.begin(), subset.end());
        return subset;
    }

    std::size_t draw_count(std::size_t upper) { return static_cast<std::size_t>(rng_.uniform_int(1, static_cast<std::int64_t>(upper))); }

    StepBatch sample(const std::vector<ModalityDataset>& train) {
        for (std::size_t m = 0; m < train.size(); ++m) {
            if (train[m].empty()) {
                throw ConfigError("modality '" + train[m].modality + "' has an empty training set");
            }
        }
        StepBatch batch;
        for (std::size_t m : draw_subset(train.size())) {
            ObservationBatch obs;
            obs.modality = m;
            const std::size_t k = draw_count(cfg_.k_max);
            for (std::size_t i = 0; i < k; ++i) {
                const auto row = pick(train[m].size());
                obs.points.push_back(train[m].points[row]);
                obs.values.push_back(train[m].values[row]);
            }
            batch.observations.push_back(std::move(obs));
        }
        for (std::size_t m = 0; m < train.size(); ++m) {
            const std::size_t k = draw_count(cfg_.q_max);
            for (std::size_t i = 0; i < k; ++i) {
                const auto row = pick(train[m].size());
                batch.queries.push(train[m].points[row], m, train[m].values[row]);
            }
        }
        return batch;
    }

    std::string state() const { return rng_.state(); }
    void set_state(const std::string& s) { rng_.set_state(s); }

private:
    std::size_t pick(std::size_t n) { return static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(n) - 1)); }

    SamplerConfig cfg_;
    Rng rng_;
};

} // namespace tearth
