#pragma once

// Sinusoidal geographic encodings with a depth channel, band selection from a
// target grid spacing, and deterministic text-derived modality vectors.

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tearth/errors.hpp"
#include "tearth/rng.hpp"
#include "tearth/tensor.hpp"

namespace tearth {

inline constexpr std::size_t kTextEmbeddingWidth = 64;
inline constexpr std::size_t kModalityEmbeddingWidth = 8;
inline constexpr double kDefaultDepthScaleKm = 2891.0;  // core-mantle boundary

struct GeoPoint {
    double lat = 0.0;       // degrees, [-90, 90]
    double lon = 0.0;       // degrees, [-180, 180]
    double depth_km = 0.0;  // >= 0; 0 for surface observations

    bool operator==(const GeoPoint&) const = default;
};

struct PosEncConfig {
    std::vector<double> lat_bands;
    std::vector<double> lon_bands;
    double depth_scale_km = kDefaultDepthScaleKm;

    std::size_t bands() const { return lat_bands.size(); }
    std::size_t dim() const { return 4 * bands() + 1; }

    void validate() const {
        if (lat_bands.empty() || lat_bands.size() != lon_bands.size()) {
            throw ConfigError("positional encoding needs equally many (>= 1) latitude and longitude bands");
        }
        for (const auto* bands : {&lat_bands, &lon_bands}) {
            for (double f : *bands) {
                if (!(f > 0.0) || f != std::floor(f)) {
                    throw ConfigError("positional encoding bands must be positive integers");
                }
            }
        }
        if (!(depth_scale_km > 0.0)) throw ConfigError("depth scale must be positive");
    }
};

// F integer bands spaced linearly from 1 to `highest` (rounded). With
// highest == F this is 1..F.
inline std::vector<double> linear_bands(std::size_t count, double highest) {
    std::vector<double> out;
    for (std::size_t i = 0; i < count; ++i) {
        const double t = count == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(count - 1);
        out.push_back(std::round(1.0 + t * (highest - 1.0)));
    }
    return out;
}

// Latitude bands 1..F; longitude bands linear from 1 to 2F. Frequency 1 is
// always present on both axes so a full period spans the whole coordinate
// range and distinct longitudes never share an encoding.
inline PosEncConfig bands_from_count(std::size_t count, double depth_scale_km = kDefaultDepthScaleKm) {
    if (count < 1) throw ConfigError("positional encoding needs at least one band");
    PosEncConfig cfg;
    cfg.depth_scale_km = depth_scale_km;
    cfg.lat_bands = linear_bands(count, static_cast<double>(count));
    cfg.lon_bands = linear_bands(count, static_cast<double>(2 * count));
    return cfg;
}

// Highest latitude frequency for a target grid spacing: 36 cycles at 0.5
// degrees, scaling inversely with spacing; longitude uses twice that maximum.
inline double max_lat_frequency(double resolution_deg) {
    if (!(resolution_deg > 0.0)) throw ConfigError("resolution must be positive");
    constexpr double kCyclesPerUnit = 36.0;
    return kCyclesPerUnit / (2.0 * resolution_deg);
}

inline double max_lon_frequency(double resolution_deg) { return 2.0 * max_lat_frequency(resolution_deg); }

inline PosEncConfig nyquist_bands(double resolution_deg, double depth_scale_km = kDefaultDepthScaleKm) {
    const double fmax = max_lat_frequency(resolution_deg);
    const auto count = static_cast<std::size_t>(std::floor(fmax + 1e-9));
    if (count < 1) {
        throw ConfigError("resolution " + std::to_string(resolution_deg) + " deg yields fewer than one band");
    }
    return bands_from_count(count, depth_scale_km);
}

inline void validate_point(const GeoPoint& p) {
    if (!std::isfinite(p.lat) || p.lat < -90.0 || p.lat > 90.0) {
        throw DomainError("latitude " + std::to_string(p.lat) + " outside [-90, 90]");
    }
    if (!std::isfinite(p.lon) || p.lon < -180.0 || p.lon > 180.0) {
        throw DomainError("longitude " + std::to_string(p.lon) + " outside [-180, 180]");
    }
    if (!std::isfinite(p.depth_km) || p.depth_km < 0.0) {
        throw DomainError("depth " + std::to_string(p.depth_km) + " km is negative");
    }
}

// Writes the 4F+1 encoding of `p` into `out`:
// [sin(pi*lat'*f_lat), cos(pi*lat'*f_lat), sin(pi*lon'*f_lon), cos(pi*lon'*f_lon), depth'].
inline void pos_enc_into(const GeoPoint& p, const PosEncConfig& cfg, double* out) {
    validate_point(p);
    const double lat = p.lat / 90.0;
    const double lon = p.lon / 180.0;
    const double depth = std::min(p.depth_km / cfg.depth_scale_km, 1.0);
    const std::size_t f = cfg.bands();
    for (std::size_t i = 0; i < f; ++i) {
        const double a = std::numbers::pi * lat * cfg.lat_bands[i];
        const double b = std::numbers::pi * lon * cfg.lon_bands[i];
        out[i] = std::sin(a);
        out[f + i] = std::cos(a);
        out[2 * f + i] = std::sin(b);
        out[3 * f + i] = std::cos(b);
    }
    out[4 * f] = depth;
}

inline std::vector<double> pos_enc(const GeoPoint& p, const PosEncConfig& cfg) {
    std::vector<double> out(cfg.dim());
    pos_enc_into(p, cfg, out.data());
    return out;
}

inline Tensor pos_enc_matrix(const std::vector<GeoPoint>& points, const PosEncConfig& cfg) {
    const std::size_t d = cfg.dim();
    std::vector<double> out(points.size() * d);
    for (std::size_t i = 0; i < points.size(); ++i) pos_enc_into(points[i], cfg, out.data() + i * d);
    return Tensor({points.size(), d}, std::move(out));
}

using TextVector = std::array<double, kTextEmbeddingWidth>;

// Unit-norm Gaussian vector keyed by the UTF-8 bytes of `description`.
inline TextVector text_embed(std::string_view description) {
    if (description.empty()) throw DomainError("text_embed: empty description");
    const std::uint64_t seed = stable_hash(description);
    TextVector v{};
    for (std::size_t i = 0; i < kTextEmbeddingWidth; i += 2) {
        const double u1 = bits_to_open_unit(splitmix64(seed + 0x9e3779b97f4a7c15ULL * (i + 1)));
        const double u2 = bits_to_open_unit(splitmix64(seed + 0x9e3779b97f4a7c15ULL * (i + 2)));
        const double radius = std::sqrt(-2.0 * std::log(u1));
        v[i] = radius * std::cos(2.0 * std::numbers::pi * u2);
        v[i + 1] = radius * std::sin(2.0 * std::numbers::pi * u2);
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

// Source of the raw per-modality text vectors.
class TextEmbeddingSource {
public:
    virtual ~TextEmbeddingSource() = default;
    virtual TextVector embed(const std::string& modality_name, const std::string& description) const = 0;
};

class HashTextEmbedding final : public TextEmbeddingSource {
public:
    TextVector embed(const std::string&, const std::string& description) const override {
        return text_embed(description);
    }
};

// Precomputed vectors from a `modality_name,v0..v63` CSV sidecar.
class FileTextEmbedding final : public TextEmbeddingSource {
public:
    explicit FileTextEmbedding(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw LoadError("cannot open embedding file " + path);
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty() || line.rfind("modality_name", 0) == 0) continue;
            std::stringstream ss(line);
            std::string name, cell;
            std::getline(ss, name, ',');
            TextVector v{};
            std::size_t i = 0;
            while (std::getline(ss, cell, ',')) {
                if (i >= kTextEmbeddingWidth) break;
                try {
                    v[i++] = std::stod(cell);
                } catch (const std::exception&) {
                    throw SchemaError(path + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
                }
            }
            if (i != kTextEmbeddingWidth) {
                throw SchemaError(path + ":" + std::to_string(line_no) + ": expected 64 values");
            }
            vectors_[name] = v;
        }
    }

    TextVector embed(const std::string& modality_name, const std::string&) const override {
        auto it = vectors_.find(modality_name);
        if (it == vectors_.end()) throw RegistryError("no precomputed embedding for modality '" + modality_name + "'");
        return it->second;
    }

private:
    std::map<std::string, TextVector> vectors_;
};

} // namespace tearth
