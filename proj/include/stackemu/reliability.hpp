#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "stackemu/errors.hpp"
#include "stackemu/grid.hpp"
#include "stackemu/stack.hpp"
#include "stackemu/thermal.hpp"

namespace stackemu {

inline constexpr double boltzmann_ev = 8.617333262e-5;  // eV/K
inline constexpr double zero_celsius_k = 273.15;

struct ReliabilityParams {
    double activation_energy = 0.7;       // eV
    double reference_temperature = 105.0;  // degC
    double cycling_exponent = 2.0;        // Coffin-Manson
    double reference_swing = 10.0;        // K; one full cycle of this range scores 1
    double stress_percentile = 99.0;
    // Thermal-expansion mismatch weight keyed "fill/base", e.g. "copper/silicon".
    std::map<std::string, double> cte_weights{{"copper/silicon", 3.0}, {"tungsten/silicon", 1.5}};
    double default_cte_weight = 2.0;

    double cte_weight(const std::string& fill, const std::string& base) const {
        auto it = cte_weights.find(fill + "/" + base);
        return it == cte_weights.end() ? default_cte_weight : it->second;
    }
};

inline void check_params(const ReliabilityParams& p) {
    if (!(p.activation_energy > 0) || !(p.cycling_exponent > 0) || !(p.reference_swing > 0))
        throw InvalidArgument("reliability parameters Ea, cycling exponent and reference swing must be positive");
    if (!(p.reference_temperature > -zero_celsius_k))
        throw InvalidArgument("reference temperature is below absolute zero");
    if (!(p.stress_percentile >= 0 && p.stress_percentile <= 100))
        throw InvalidArgument("stress percentile must lie in [0, 100]");
}

/// Arrhenius (Black's equation, fixed current density) electromigration
/// acceleration relative to the reference temperature.
inline double em_acceleration(double temperature_c, const ReliabilityParams& p = {}) {
    if (!(temperature_c > -zero_celsius_k) || !std::isfinite(temperature_c))
        throw InvalidArgument("temperature must be above absolute zero");
    check_params(p);
    const double t_ref = p.reference_temperature + zero_celsius_k;
    const double t = temperature_c + zero_celsius_k;
    return std::exp(p.activation_energy / boltzmann_ev * (1.0 / t_ref - 1.0 / t));
}

/// Turning points of a series, endpoints included; flat runs collapse to one point.
inline std::vector<double> extrema(const std::vector<double>& series) {
    std::vector<double> pts;
    for (double v : series) {
        if (!pts.empty() && v == pts.back())
            continue;
        if (pts.size() >= 2 && (pts.back() - pts[pts.size() - 2]) * (v - pts.back()) > 0)
            pts.back() = v;  // still moving the same direction
        else
            pts.push_back(v);
    }
    return pts;
}

struct Cycle {
    double range = 0.0;
    double count = 0.0;  // 0.5 or 1
};

/// Three-point rainflow count over an extrema sequence. Ranges still on the
/// stack at the end count as half cycles.
inline std::vector<Cycle> rainflow(const std::vector<double>& peaks) {
    std::vector<Cycle> out;
    std::vector<double> stack;
    for (double v : peaks) {
        stack.push_back(v);
        while (stack.size() >= 3) {
            const std::size_t n = stack.size();
            const double x = std::abs(stack[n - 1] - stack[n - 2]);
            const double y = std::abs(stack[n - 2] - stack[n - 3]);
            if (x < y)
                break;
            if (n == 3) {
                out.push_back({y, 0.5});
                stack.erase(stack.begin());
            } else {
                out.push_back({y, 1.0});
                stack.erase(stack.end() - 3, stack.end() - 1);
            }
        }
    }
    for (std::size_t i = 1; i < stack.size(); ++i)
        out.push_back({std::abs(stack[i] - stack[i - 1]), 0.5});
    return out;
}

/// Coffin-Manson damage index of a temperature series.
inline double cycling_damage(const std::vector<double>& series, const ReliabilityParams& p = {}) {
    check_params(p);
    if (series.size() < 2)
        throw InvalidArgument("cycling_damage needs at least two samples");
    double d = 0.0;
    for (const auto& c : rainflow(extrema(series)))
        d += c.count * std::pow(c.range / p.reference_swing, p.cycling_exponent);
    return d;
}

/// Damage per layer; `series[layer]` is that layer's max-temperature trace.
inline std::vector<double> cycling_damage(const std::vector<std::vector<double>>& series,
                                          const ReliabilityParams& p = {}) {
    std::vector<double> out;
    for (const auto& s : series)
        out.push_back(cycling_damage(s, p));
    return out;
}

struct StressHotspot {
    int layer = 0;
    int ix = 0, iy = 0, iz = 0;
    double score = 0.0;
};

/// |grad T| in K/mm, central differences inside, one-sided at the faces.
inline std::vector<double> gradient_magnitude(const TemperatureField& f, const VoxelGrid& g) {
    check_field_on_grid(f, g);
    std::vector<double> out(g.size());
    const double dx = g.dx_mm(), dy = g.dy_mm();
    std::vector<double> zc(g.nz);
    for (int k = 0; k < g.nz; ++k)
        zc[k] = g.slabs[k].z_center_um() * 1e-3;
    auto diff = [&](int lo_i, int hi_i, std::size_t a, std::size_t b, double span) {
        return lo_i == hi_i ? 0.0 : (f.values[b] - f.values[a]) / span;
    };
    for (int iz = 0; iz < g.nz; ++iz)
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) {
                const int x0 = std::max(ix - 1, 0), x1 = std::min(ix + 1, g.nx - 1);
                const int y0 = std::max(iy - 1, 0), y1 = std::min(iy + 1, g.ny - 1);
                const int z0 = std::max(iz - 1, 0), z1 = std::min(iz + 1, g.nz - 1);
                const double gx = diff(x0, x1, g.index(x0, iy, iz), g.index(x1, iy, iz), (x1 - x0) * dx);
                const double gy = diff(y0, y1, g.index(ix, y0, iz), g.index(ix, y1, iz), (y1 - y0) * dy);
                const double gz = diff(z0, z1, g.index(ix, iy, z0), g.index(ix, iy, z1), zc[z1] - zc[z0]);
                out[g.index(ix, iy, iz)] = std::sqrt(gx * gx + gy * gy + gz * gz);
            }
    return out;
}

/// Thermomechanical stress screening score: gradient magnitude, weighted by
/// the fill/base expansion mismatch inside a TSV farm or within one voxel ring
/// of it. Returns voxels at or above the configured percentile, highest first.
inline std::vector<StressHotspot> stress_proxy(const TemperatureField& f, const VoxelGrid& g,
                                               const StackConfig& config, const ReliabilityParams& p = {}) {
    check_params(p);
    if (g.layer_count() != static_cast<int>(config.layers.size()))
        throw InvalidArgument("grid was not built from this stack configuration");
    auto score = gradient_magnitude(f, g);

    for (int l = 0; l < g.layer_count(); ++l) {
        const auto& spec = config.layers[l];
        if (spec.tsv_farms.empty())
            continue;
        std::vector<double> w(g.cells_per_slab(), 1.0);
        for (const auto& farm : spec.tsv_farms) {
            const Rect& fp = farm.footprint;
            const Rect ring{fp.x0 - g.dx_mm(), fp.y0 - g.dy_mm(), fp.x1 + g.dx_mm(), fp.y1 + g.dy_mm()};
            const double weight = p.cte_weight(farm.fill_material.name, spec.material.name);
            for (int iy = 0; iy < g.ny; ++iy)
                for (int ix = 0; ix < g.nx; ++ix)
                    if (overlap_area(g.cell_rect(ix, iy), ring) > 0)
                        w[iy * g.nx + ix] = std::max(w[iy * g.nx + ix], weight);
        }
        for (int iz = g.layer_first_slab[l]; iz < g.layer_first_slab[l] + g.layer_slab_count[l]; ++iz)
            for (std::size_t c = 0; c < w.size(); ++c)
                score[iz * g.cells_per_slab() + c] *= w[c];
    }

    std::vector<double> sorted(score);
    std::sort(sorted.begin(), sorted.end());
    const auto rank = static_cast<std::size_t>(std::ceil(p.stress_percentile / 100.0 * sorted.size()));
    const double threshold = sorted[rank == 0 ? 0 : rank - 1];

    std::vector<StressHotspot> out;
    for (int iz = 0; iz < g.nz; ++iz)
        for (int iy = 0; iy < g.ny; ++iy)
            for (int ix = 0; ix < g.nx; ++ix) {
                const double s = score[g.index(ix, iy, iz)];
                if (s > 0 && s >= threshold)
                    out.push_back({g.slabs[iz].layer, ix, iy, iz, s});
            }
    std::stable_sort(out.begin(), out.end(),
                     [](const StressHotspot& a, const StressHotspot& b) { return a.score > b.score; });
    return out;
}

struct LayerReliability {
    int layer = 0;
    LayerRole role = LayerRole::S0;
    double max_temperature = 0.0;
    double em_acceleration = 1.0;
    double cycling_damage = 0.0;
    std::vector<StressHotspot> stress_hotspots;
};

struct ReliabilityReport {
    std::vector<LayerReliability> layers;  // die layers, bottom to top
    int min_mttf_layer = -1;               // stack layer index
};

/// Combines the three screening scores per die. `traces[k]` is the max
/// temperature history of the k-th die (bottom to top); pass an empty list
/// when no transient ran.
inline ReliabilityReport reliability_report(const TemperatureField& steady, const VoxelGrid& g,
                                            const StackConfig& config,
                                            const std::vector<std::vector<double>>& traces,
                                            const ReliabilityParams& p = {}) {
    const auto summary = layer_summary(steady, g);
    if (!traces.empty() && traces.size() != summary.size())
        throw InvalidArgument("need one temperature trace per die layer");
    const auto hotspots = stress_proxy(steady, g, config, p);

    ReliabilityReport rep;
    double best = -1.0;
    for (std::size_t k = 0; k < summary.size(); ++k) {
        LayerReliability lr;
        lr.layer = summary[k].layer;
        lr.role = summary[k].role;
        lr.max_temperature = summary[k].max;
        lr.em_acceleration = em_acceleration(summary[k].max, p);
        lr.cycling_damage = traces.empty() ? 0.0 : cycling_damage(traces[k], p);
        for (const auto& h : hotspots)
            if (h.layer == lr.layer)
                lr.stress_hotspots.push_back(h);
        // Strict comparison keeps the die farthest from the heat sink on ties.
        if (lr.em_acceleration > best) {
            best = lr.em_acceleration;
            rep.min_mttf_layer = lr.layer;
        }
        rep.layers.push_back(std::move(lr));
    }
    return rep;
}

} // namespace stackemu
