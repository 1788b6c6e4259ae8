#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "stackemu/errors.hpp"
#include "stackemu/grid.hpp"
#include "stackemu/stack.hpp"

namespace stackemu {

// Power densities are areal, W/cm^2; times are seconds.
namespace profile {

struct Constant {
    double p = 0.0;
    bool operator==(const Constant&) const = default;
};

struct Step {
    double p0 = 0.0, p1 = 0.0, t_switch = 0.0;
    bool operator==(const Step&) const = default;
};

/// Square wave: p_high for the first `duty` fraction of each period.
struct Periodic {
    double p_low = 0.0, p_high = 0.0, period = 1.0, duty = 0.5;
    bool operator==(const Periodic&) const = default;
};

/// Piecewise-linear samples; holds the first value before and the last after.
struct Trace {
    std::vector<std::pair<double, double>> samples;
    bool operator==(const Trace&) const = default;
};

} // namespace profile

using TemporalProfile = std::variant<profile::Constant, profile::Step, profile::Periodic, profile::Trace>;

inline void check_profile(const TemporalProfile& prof) {
    auto bad = [](const std::string& m) { throw InvalidArgument("temporal profile: " + m); };
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, profile::Constant>) {
                if (!(p.p >= 0)) bad("power must be non-negative");
            } else if constexpr (std::is_same_v<T, profile::Step>) {
                if (!(p.p0 >= 0) || !(p.p1 >= 0)) bad("power must be non-negative");
                if (!std::isfinite(p.t_switch)) bad("t_switch must be finite");
            } else if constexpr (std::is_same_v<T, profile::Periodic>) {
                if (!(p.p_low >= 0) || !(p.p_high >= 0)) bad("power must be non-negative");
                if (!(p.period > 0)) bad("period must be positive");
                if (!(p.duty >= 0 && p.duty <= 1)) bad("duty must lie in [0, 1]");
            } else {
                if (p.samples.empty()) bad("trace needs at least one sample");
                for (std::size_t i = 0; i < p.samples.size(); ++i) {
                    if (!(p.samples[i].second >= 0)) bad("power must be non-negative");
                    if (i > 0 && !(p.samples[i].first > p.samples[i - 1].first))
                        bad("trace timestamps must be strictly increasing");
                }
            }
        },
        prof);
}

/// Power density at time t, W/cm^2.
inline double evaluate(const TemporalProfile& prof, double t) {
    return std::visit(
        [t](const auto& p) -> double {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, profile::Constant>) {
                return p.p;
            } else if constexpr (std::is_same_v<T, profile::Step>) {
                return t < p.t_switch ? p.p0 : p.p1;
            } else if constexpr (std::is_same_v<T, profile::Periodic>) {
                double phase = std::fmod(t, p.period) / p.period;
                if (phase < 0) phase += 1.0;
                return phase < p.duty ? p.p_high : p.p_low;
            } else {
                const auto& s = p.samples;
                if (t <= s.front().first) return s.front().second;
                if (t >= s.back().first) return s.back().second;
                auto it = std::upper_bound(s.begin(), s.end(), t,
                                           [](double v, const auto& e) { return v < e.first; });
                const auto& [t1, p1] = *it;
                const auto& [t0, p0] = *(it - 1);
                return p0 + (p1 - p0) * (t - t0) / (t1 - t0);
            }
        },
        prof);
}

/// Reads a trace from CSV with header `t_seconds,power_w_per_cm2`.
inline profile::Trace load_trace_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError(path, "cannot open trace file");
    std::string line;
    if (!std::getline(in, line))
        throw IoError(path, "empty trace file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t_seconds,power_w_per_cm2")
        throw InvalidArgument(path + ": trace header must be 't_seconds,power_w_per_cm2'");
    profile::Trace tr;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ls(line);
        double t = 0, p = 0;
        char comma = 0;
        if (!(ls >> t >> comma >> p) || comma != ',')
            throw InvalidArgument(path + ":" + std::to_string(lineno) + ": malformed row");
        if (!tr.samples.empty() && !(t > tr.samples.back().first))
            throw InvalidArgument(path + ":" + std::to_string(lineno) + ": time must be strictly increasing");
        tr.samples.emplace_back(t, p);
    }
    check_profile(tr);
    return tr;
}

/// Named spatial activity pattern, scaled by base_density.
struct CoreProxyPreset {
    std::string name;
    std::vector<std::vector<double>> pattern;  // [row][col], unitless
    double base_density = 0.0;                 // W/cm^2
};

inline void check_preset(const CoreProxyPreset& p) {
    bool positive = false;
    for (const auto& row : p.pattern)
        for (double v : row) {
            if (!(v >= 0)) throw InvalidArgument("preset '" + p.name + "': multipliers must be non-negative");
            positive |= v > 0;
        }
    if (!positive) throw InvalidArgument("preset '" + p.name + "': needs at least one positive multiplier");
    if (!(p.base_density >= 0)) throw InvalidArgument("preset '" + p.name + "': base density must be non-negative");
}

/// Tile power profiles for every die in a stack.
class PowerMap {
  public:
    PowerMap() = default;

    explicit PowerMap(const StackConfig& config)
        : die_width_(config.die_width), die_length_(config.die_length) {
        for (const auto& l : config.layers) {
            const bool dev = is_device(l.role);
            rows_.push_back(dev ? l.tile_rows : 0);
            cols_.push_back(dev ? l.tile_cols : 0);
            tiles_.emplace_back(dev ? l.tile_rows * l.tile_cols : 0, profile::Constant{0.0});
        }
    }

    int layer_count() const { return static_cast<int>(tiles_.size()); }
    int tile_count(int layer) const { return static_cast<int>(tiles_.at(layer).size()); }
    int tile_rows(int layer) const { return rows_.at(layer); }
    int tile_cols(int layer) const { return cols_.at(layer); }
    double die_width() const { return die_width_; }
    double die_length() const { return die_length_; }

    const TemporalProfile& tile(int layer, int tile) const {
        check_index(layer, tile);
        return tiles_[layer][tile];
    }

    TemporalProfile& tile(int layer, int tile) {
        check_index(layer, tile);
        return tiles_[layer][tile];
    }

    double tile_area_m2(int layer) const { return die_width_ * die_length_ * 1e-6 / (rows_[layer] * cols_[layer]); }

    bool operator==(const PowerMap&) const = default;

  private:
    void check_index(int layer, int tile) const {
        if (layer < 0 || layer >= layer_count() || tile < 0 || tile >= tile_count(layer))
            throw InvalidArgument("power map index out of range: layer " + std::to_string(layer) + ", tile " +
                                  std::to_string(tile));
    }

    double die_width_ = 0, die_length_ = 0;
    std::vector<int> rows_, cols_;
    std::vector<std::vector<TemporalProfile>> tiles_;
};

inline PowerMap set_tile_power(PowerMap map, int layer, int tile, TemporalProfile prof) {
    check_profile(prof);
    map.tile(layer, tile) = std::move(prof);
    return map;
}

inline PowerMap apply_preset(PowerMap map, int layer, const CoreProxyPreset& preset) {
    check_preset(preset);
    if (layer < 0 || layer >= map.layer_count() || map.tile_count(layer) == 0)
        throw InvalidArgument("apply_preset: layer " + std::to_string(layer) + " is not a die layer");
    const int rows = map.tile_rows(layer), cols = map.tile_cols(layer);
    if (static_cast<int>(preset.pattern.size()) != rows)
        throw InvalidArgument("apply_preset: preset '" + preset.name + "' shape does not match the tile grid");
    for (int r = 0; r < rows; ++r) {
        if (static_cast<int>(preset.pattern[r].size()) != cols)
            throw InvalidArgument("apply_preset: preset '" + preset.name + "' shape does not match the tile grid");
        for (int c = 0; c < cols; ++c)
            map.tile(layer, r * cols + c) = profile::Constant{preset.base_density * preset.pattern[r][c]};
    }
    return map;
}

/// Tile densities at time t, W/cm^2, indexed [layer][tile].
inline std::vector<std::vector<double>> tile_densities(const PowerMap& map, double t) {
    if (!(t >= 0))
        throw InvalidArgument("power evaluation time must be non-negative");
    std::vector<std::vector<double>> d(map.layer_count());
    for (int l = 0; l < map.layer_count(); ++l)
        for (int k = 0; k < map.tile_count(l); ++k)
            d[l].push_back(evaluate(map.tile(l, k), t));
    return d;
}

/// Volumetric heat source per voxel, W/m^3, from explicit tile densities.
/// Each die's power lands in its heat slab; tiles that only partly cover a
/// cell contribute in proportion to the covered area.
inline std::vector<double> power_density_field(const std::vector<std::vector<double>>& densities,
                                               const VoxelGrid& grid) {
    if (static_cast<int>(densities.size()) != grid.layer_count())
        throw InvalidArgument("power map and grid come from different stacks");
    std::vector<double> q(grid.size(), 0.0);
    const double cell_area = grid.dx_mm() * grid.dy_mm();
    for (int l = 0; l < grid.layer_count(); ++l) {
        if (!is_device(grid.layer_roles[l]))
            continue;
        if (static_cast<int>(densities[l].size()) != grid.tile_count(l))
            throw InvalidArgument("power map tile grid does not match the voxel grid");
        const int iz = grid.heat_slab(l);
        const double thickness_m = grid.slabs[iz].thickness_um * 1e-6;
        const double tw = grid.die_width_mm / grid.tile_cols[l], tl = grid.die_length_mm / grid.tile_rows[l];
        for (int iy = 0; iy < grid.ny; ++iy) {
            for (int ix = 0; ix < grid.nx; ++ix) {
                const Rect cell = grid.cell_rect(ix, iy);
                const int c0 = std::max(0, static_cast<int>(cell.x0 / tw) - 1);
                const int c1 = std::min(grid.tile_cols[l] - 1, static_cast<int>(cell.x1 / tw) + 1);
                const int r0 = std::max(0, static_cast<int>(cell.y0 / tl) - 1);
                const int r1 = std::min(grid.tile_rows[l] - 1, static_cast<int>(cell.y1 / tl) + 1);
                double areal = 0.0;  // W/m^2 averaged over the cell
                for (int r = r0; r <= r1; ++r)
                    for (int c = c0; c <= c1; ++c) {
                        const int tile = r * grid.tile_cols[l] + c;
                        const double d = densities[l][tile];
                        if (d != 0.0)
                            areal += d * 1e4 * overlap_area(cell, grid.tile_rect(l, tile)) / cell_area;
                    }
                q[grid.index(ix, iy, iz)] = areal / thickness_m;
            }
        }
    }
    return q;
}

inline std::vector<double> power_density_field(const PowerMap& map, const VoxelGrid& grid, double t) {
    return power_density_field(tile_densities(map, t), grid);
}

/// Total dissipated power at time t, W.
inline double total_power(const PowerMap& map, double t) {
    double total = 0.0;
    const auto d = tile_densities(map, t);
    for (int l = 0; l < map.layer_count(); ++l)
        for (double v : d[l])
            total += v * 1e4 * map.tile_area_m2(l);
    return total;
}

inline double total_power(const PowerMap& map, const StackConfig&, double t) { return total_power(map, t); }

} // namespace stackemu
