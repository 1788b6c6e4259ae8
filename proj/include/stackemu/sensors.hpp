#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "stackemu/errors.hpp"
#include "stackemu/field_io.hpp"
#include "stackemu/grid.hpp"
#include "stackemu/thermal.hpp"

namespace stackemu {

/// A point inside one layer, die coordinates in mm.
struct SensorSite {
    int layer = 0;
    double x_mm = 0, y_mm = 0;

    auto operator<=>(const SensorSite&) const = default;
};

struct SensorSpec {
    SensorSite location;
    double noise_sigma = 0.5;         // K
    double quantization_step = 0.25;  // K
    double sample_period = 1e-3;      // s
};

struct SensorNetwork {
    std::vector<SensorSpec> sensors;
    std::vector<SensorSite> candidate_sites;
    std::uint64_t rng_seed = 0;
};

inline void check_site(const SensorSite& s, const VoxelGrid& grid) {
    if (s.layer < 0 || s.layer >= grid.layer_count())
        throw InvalidArgument("sensor site references layer " + std::to_string(s.layer) + ", which does not exist");
    if (!(s.x_mm >= 0 && s.x_mm <= grid.die_width_mm && s.y_mm >= 0 && s.y_mm <= grid.die_length_mm))
        throw InvalidArgument("sensor site lies outside the die outline");
}

inline void check_network(const SensorNetwork& net, const VoxelGrid& grid) {
    std::set<SensorSite> seen;
    for (const auto& s : net.sensors) {
        check_site(s.location, grid);
        if (!(s.noise_sigma >= 0) || !(s.quantization_step >= 0) || !(s.sample_period > 0))
            throw InvalidArgument("sensor needs sigma >= 0, step >= 0 and a positive sample period");
        if (!seen.insert(s.location).second)
            throw InvalidArgument("two sensors share the same site");
    }
}

/// Voxel a sensor reads: nearest lateral cell in the layer's heat slab.
inline std::size_t sensor_voxel(const SensorSite& s, const VoxelGrid& grid) {
    check_site(s, grid);
    auto [ix, iy] = grid.cell_at(s.x_mm, s.y_mm);
    return grid.index(ix, iy, grid.heat_slab(s.layer));
}

/// Rounds to the nearest multiple of `step`, halves away from zero; step 0 is a no-op.
inline double quantize(double v, double step) { return step > 0 ? std::round(v / step) * step : v; }

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Gaussian noise draw for one (seed, sensor, sample) triple. Every triple
/// maps to its own generator, so readings never depend on call order.
inline double sensor_noise(std::uint64_t seed, std::size_t sensor, std::int64_t sample, double sigma) {
    if (sigma == 0.0)
        return 0.0;
    std::uint64_t key = detail::splitmix64(seed);
    key = detail::splitmix64(key ^ static_cast<std::uint64_t>(sensor));
    key = detail::splitmix64(key ^ static_cast<std::uint64_t>(sample));
    std::mt19937_64 gen(key);
    std::normal_distribution<double> dist(0.0, sigma);
    return dist(gen);
}

inline std::vector<double> read_sensors(const SensorNetwork& net, const TemperatureField& field, const VoxelGrid& grid,
                                        double t) {
    check_field_on_grid(field, grid);
    if (!(t >= 0))
        throw InvalidArgument("sensor read time must be non-negative");
    std::vector<double> out;
    out.reserve(net.sensors.size());
    for (std::size_t k = 0; k < net.sensors.size(); ++k) {
        const auto& s = net.sensors[k];
        const double truth = field.values[sensor_voxel(s.location, grid)];
        const auto sample = static_cast<std::int64_t>(std::floor(t / s.sample_period));
        out.push_back(quantize(truth + sensor_noise(net.rng_seed, k, sample, s.noise_sigma), s.quantization_step));
    }
    return out;
}

/// Per-layer and global maxima estimated from readings; nullopt means no sensor saw it.
struct Reconstruction {
    std::vector<std::optional<double>> layer_max;
    std::optional<double> hotspot;
};

inline Reconstruction reconstruct_field(const SensorNetwork& net, const std::vector<double>& readings,
                                        int layer_count) {
    if (readings.size() != net.sensors.size())
        throw InvalidArgument("reading count does not match the sensor count");
    Reconstruction r;
    r.layer_max.assign(layer_count, std::nullopt);
    for (std::size_t k = 0; k < readings.size(); ++k) {
        auto& slot = r.layer_max.at(net.sensors[k].location.layer);
        slot = slot ? std::max(*slot, readings[k]) : readings[k];
        r.hotspot = r.hotspot ? std::max(*r.hotspot, readings[k]) : readings[k];
    }
    return r;
}

/// A noiseless network at the given sites.
inline SensorNetwork ideal_network(const std::vector<SensorSite>& sites) {
    SensorNetwork net;
    for (const auto& s : sites)
        net.sensors.push_back({s, 0.0, 0.0, 1.0});
    return net;
}

struct HotspotError {
    double mean = 0, max = 0;
};

/// Hotspot tracking error of a placement with noiseless sensors. An empty
/// placement observes nothing and yields nullopt rather than a number.
inline std::optional<HotspotError> hotspot_error(const std::vector<SensorSite>& placement,
                                                 const std::vector<TemperatureField>& fields, const VoxelGrid& grid) {
    if (fields.empty())
        throw InvalidArgument("hotspot_error needs at least one evaluation field");
    if (placement.empty())
        return std::nullopt;
    const auto net = ideal_network(placement);
    HotspotError e;
    for (const auto& f : fields) {
        const auto rec = reconstruct_field(net, read_sensors(net, f, grid, 0.0), grid.layer_count());
        const double err = std::abs(f.max() - *rec.hotspot);
        e.mean += err;
        e.max = std::max(e.max, err);
    }
    e.mean /= static_cast<double>(fields.size());
    return e;
}

/// Tile centers of every die layer.
inline std::vector<SensorSite> default_candidates(const VoxelGrid& grid) {
    std::vector<SensorSite> out;
    for (int l = 0; l < grid.layer_count(); ++l) {
        if (!is_device(grid.layer_roles[l]))
            continue;
        for (int t = 0; t < grid.tile_count(l); ++t) {
            const Rect r = grid.tile_rect(l, t);
            out.push_back({l, 0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1)});
        }
    }
    return out;
}

/// Candidate readings per training field: values[field][candidate].
inline std::vector<std::vector<double>> candidate_values(const std::vector<SensorSite>& candidates,
                                                         const std::vector<TemperatureField>& fields,
                                                         const VoxelGrid& grid) {
    std::vector<std::vector<double>> v(fields.size());
    for (std::size_t f = 0; f < fields.size(); ++f) {
        check_field_on_grid(fields[f], grid);
        for (const auto& c : candidates)
            v[f].push_back(fields[f].values[sensor_voxel(c, grid)]);
    }
    return v;
}

/// Mean hotspot error of a candidate subset; +inf for the empty set.
inline double placement_objective(const std::vector<int>& chosen, const std::vector<std::vector<double>>& values,
                                  const std::vector<double>& true_max) {
    if (chosen.empty())
        return std::numeric_limits<double>::infinity();
    double sum = 0;
    for (std::size_t f = 0; f < values.size(); ++f) {
        double est = -std::numeric_limits<double>::infinity();
        for (int c : chosen)
            est = std::max(est, values[f][c]);
        sum += std::abs(true_max[f] - est);
    }
    return sum / static_cast<double>(values.size());
}

struct Placement {
    std::vector<int> chosen;  // candidate indices in selection order
    std::vector<SensorSite> sites;
    double objective = 0;
};

/// Greedy forward selection of K sites minimizing mean hotspot error over
/// the training fields. Ties go to the lowest candidate index.
inline Placement place_sensors_greedy(const std::vector<SensorSite>& candidates, int K,
                                      const std::vector<TemperatureField>& training, const VoxelGrid& grid) {
    if (K <= 0)
        throw InvalidArgument("place_sensors_greedy: K must be positive");
    if (training.empty())
        throw InvalidArgument("place_sensors_greedy: need at least one training field");
    if (static_cast<std::size_t>(K) > candidates.size())
        throw InvalidArgument("place_sensors_greedy: K exceeds the number of candidates");

    const auto values = candidate_values(candidates, training, grid);
    std::vector<double> true_max;
    for (const auto& f : training)
        true_max.push_back(f.max());

    Placement p;
    std::vector<char> used(candidates.size(), 0);
    for (int round = 0; round < K; ++round) {
        int best = -1;
        double best_obj = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            if (used[c])
                continue;
            auto trial = p.chosen;
            trial.push_back(static_cast<int>(c));
            const double obj = placement_objective(trial, values, true_max);
            if (best < 0 || obj < best_obj) {
                best = static_cast<int>(c);
                best_obj = obj;
            }
        }
        used[best] = 1;
        p.chosen.push_back(best);
        p.sites.push_back(candidates[best]);
        p.objective = best_obj;
    }
    return p;
}

inline void write_placement_csv(const std::string& path, const std::vector<SensorSite>& sites, bool force) {
    auto out = open_output(path, force);
    out << "layer,x_mm,y_mm\n";
    for (const auto& s : sites)
        out << s.layer << ',' << format_exact(s.x_mm) << ',' << format_exact(s.y_mm) << '\n';
    if (!out)
        throw IoError(path, "write failed");
}

} // namespace stackemu
