#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <queue>
#include <string>
#include <vector>

#include "stackemu/errors.hpp"
#include "stackemu/power.hpp"
#include "stackemu/sparse.hpp"
#include "stackemu/stack.hpp"

namespace stackemu {

/// Electrical defaults for the single-rail power delivery network.
struct PdnParams {
    double vdd = 1.0;              // V
    double sheet_resistance = 0.02;  // ohm/sq
    double r_c4 = 5e-3;            // ohm per package bump
    double r_uc4 = 15e-3;          // ohm per die-to-die bump
    double r_tsv = 20e-3;          // ohm per TSV column
    double decap = 1e-9;           // F per node
    double loop_inductance = 1e-12;  // H, first-order droop proxy
    int nx = 8, ny = 4;            // nodes per die plane
    int via_stride = 1;            // bump/TSV column on every via_stride-th node in x and y
};

struct Resistor {
    std::size_t a = 0;
    long b = -1;  // -1 is the ideal supply
    double r = 0.0;
};

/// Per-die resistive planes tied to each other through TSV/uC4 columns and to
/// the package through C4 bumps. Node index is (plane * ny + iy) * nx + ix.
struct PdnGrid {
    int nx = 0, ny = 0;
    double die_width = 0, die_length = 0;
    std::vector<int> plane_layer;  // stack layer index per plane
    std::vector<LayerRole> plane_role;
    std::vector<Resistor> resistors;
    std::vector<double> decap;     // F per node
    double vdd = 1.0;
    double loop_inductance = 1e-12;
    CsrMatrix conductance;

    int planes() const { return static_cast<int>(plane_layer.size()); }
    std::size_t nodes_per_plane() const { return static_cast<std::size_t>(nx) * ny; }
    std::size_t size() const { return nodes_per_plane() * plane_layer.size(); }
    std::size_t node(int plane, int ix, int iy) const {
        return (static_cast<std::size_t>(plane) * ny + iy) * nx + ix;
    }

    int plane_of_layer(int layer) const {
        for (int p = 0; p < planes(); ++p)
            if (plane_layer[p] == layer)
                return p;
        throw InvalidArgument("layer " + std::to_string(layer) + " has no PDN plane");
    }
};

namespace detail {

inline CsrMatrix pdn_matrix(std::size_t n, const std::vector<Resistor>& rs) {
    CsrBuilder b(n);
    for (const auto& r : rs) {
        if (r.b < 0)
            b.add(r.a, r.a, 1.0 / r.r);
        else
            b.add_conductance(r.a, static_cast<std::size_t>(r.b), 1.0 / r.r);
    }
    return b.build();
}

/// Nodes with no resistive path to the supply.
inline std::vector<std::size_t> unreachable_nodes(std::size_t n, const std::vector<Resistor>& rs) {
    std::vector<std::vector<std::size_t>> adj(n);
    std::vector<char> seen(n, 0);
    std::queue<std::size_t> q;
    for (const auto& r : rs) {
        if (r.b < 0) {
            if (!seen[r.a]) { seen[r.a] = 1; q.push(r.a); }
        } else {
            adj[r.a].push_back(static_cast<std::size_t>(r.b));
            adj[static_cast<std::size_t>(r.b)].push_back(r.a);
        }
    }
    while (!q.empty()) {
        auto u = q.front();
        q.pop();
        for (auto v : adj[u])
            if (!seen[v]) { seen[v] = 1; q.push(v); }
    }
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < n; ++i)
        if (!seen[i]) out.push_back(i);
    return out;
}

} // namespace detail

/// Validates connectivity and assembles the nodal conductance matrix.
inline PdnGrid finalize_pdn(PdnGrid g) {
    for (const auto& r : g.resistors)
        if (!(r.r > 0))
            throw InvalidConfiguration("PDN resistances must be positive");
    if (std::none_of(g.resistors.begin(), g.resistors.end(), [](const Resistor& r) { return r.b < 0; }))
        throw InvalidConfiguration("PDN has no supply connection");
    if (auto lost = detail::unreachable_nodes(g.size(), g.resistors); !lost.empty()) {
        std::vector<std::string> names;
        for (auto i : lost) {
            const auto p = i / g.nodes_per_plane(), c = i % g.nodes_per_plane();
            names.push_back("plane " + std::to_string(p) + " (" + std::string(to_string(g.plane_role[p])) +
                            ") node (" + std::to_string(c % g.nx) + "," + std::to_string(c / g.nx) + ")");
        }
        throw InvalidConfiguration(std::to_string(lost.size()) + " PDN node(s) have no path to the supply", names);
    }
    g.conductance = detail::pdn_matrix(g.size(), g.resistors);
    return g;
}

/// One plane per die. C4 bumps tie the lowest die to the supply; each die
/// with TSVs feeds the die above it through TSV + uC4 columns.
inline PdnGrid build_pdn(const StackConfig& config, const PdnParams& p = {}) {
    if (auto vs = validate_stack(config); !vs.empty())
        throw InvalidConfiguration("stack configuration is invalid:\n" + describe(vs));
    if (p.nx < 1 || p.ny < 1 || p.via_stride < 1)
        throw InvalidArgument("PDN grid needs nx, ny, via_stride >= 1");
    if (!(p.vdd > 0) || !(p.sheet_resistance > 0) || !(p.r_c4 > 0) || !(p.r_uc4 > 0) || !(p.r_tsv > 0) ||
        !(p.decap > 0) || !(p.loop_inductance >= 0))
        throw InvalidArgument("PDN electrical parameters must be positive");

    PdnGrid g;
    g.nx = p.nx;
    g.ny = p.ny;
    g.die_width = config.die_width;
    g.die_length = config.die_length;
    g.vdd = p.vdd;
    g.loop_inductance = p.loop_inductance;
    for (int l : config.device_layers()) {
        g.plane_layer.push_back(l);
        g.plane_role.push_back(config.layers[l].role);
    }
    g.decap.assign(g.size(), p.decap);

    const double dx = config.die_width / p.nx, dy = config.die_length / p.ny;
    auto is_via_site = [&](int ix, int iy) { return ix % p.via_stride == 0 && iy % p.via_stride == 0; };

    for (int pl = 0; pl < g.planes(); ++pl) {
        for (int iy = 0; iy < p.ny; ++iy)
            for (int ix = 0; ix < p.nx; ++ix) {
                const auto i = g.node(pl, ix, iy);
                if (ix + 1 < p.nx)
                    g.resistors.push_back({i, static_cast<long>(g.node(pl, ix + 1, iy)), p.sheet_resistance * dx / dy});
                if (iy + 1 < p.ny)
                    g.resistors.push_back({i, static_cast<long>(g.node(pl, ix, iy + 1)), p.sheet_resistance * dy / dx});
                if (!is_via_site(ix, iy))
                    continue;
                if (pl == 0)
                    g.resistors.push_back({i, -1, p.r_c4});
                if (pl + 1 < g.planes() && config.layers[g.plane_layer[pl]].has_tsvs)
                    g.resistors.push_back({i, static_cast<long>(g.node(pl + 1, ix, iy)), p.r_tsv + p.r_uc4});
            }
    }
    return finalize_pdn(std::move(g));
}

/// Per-node current draw, A.
using CurrentMap = std::vector<double>;

/// I = P / Vdd per tile, spread over the nodes whose cells overlap the tile.
inline CurrentMap currents_from_power(const PdnGrid& pdn, const PowerMap& map, double t) {
    const auto dens = tile_densities(map, t);
    CurrentMap cur(pdn.size(), 0.0);
    const double dx = pdn.die_width / pdn.nx, dy = pdn.die_length / pdn.ny;
    for (int pl = 0; pl < pdn.planes(); ++pl) {
        const int l = pdn.plane_layer[pl];
        if (l >= map.layer_count() || map.tile_count(l) == 0)
            throw InvalidArgument("power map does not match the PDN stack");
        const int rows = map.tile_rows(l), cols = map.tile_cols(l);
        const double tw = map.die_width() / cols, tl = map.die_length() / rows;
        for (int iy = 0; iy < pdn.ny; ++iy)
            for (int ix = 0; ix < pdn.nx; ++ix) {
                const Rect cell{ix * dx, iy * dy, (ix + 1) * dx, (iy + 1) * dy};
                double amps = 0.0;
                for (int r = 0; r < rows; ++r)
                    for (int c = 0; c < cols; ++c) {
                        const Rect tile{c * tw, r * tl, (c + 1) * tw, (r + 1) * tl};
                        const double a = overlap_area(cell, tile);  // mm^2
                        if (a > 0)
                            amps += dens[l][r * cols + c] * 1e4 * a * 1e-6 / pdn.vdd;
                    }
                cur[pdn.node(pl, ix, iy)] = amps;
            }
    }
    return cur;
}

/// Static IR drop per node (V), from nodal analysis G * drop = I.
inline std::vector<double> solve_ir_drop(const PdnGrid& pdn, const CurrentMap& currents,
                                         const SolveOptions& options = {}) {
    if (currents.size() != pdn.size())
        throw InvalidArgument("current map length does not match the PDN");
    for (double i : currents)
        if (!(i >= 0))
            throw InvalidArgument("node currents must be non-negative");
    std::vector<double> drop(pdn.size(), 0.0);
    solve_linear(pdn.conductance, currents, drop, options);
    return drop;
}

/// Current delivered by the supply through the C4 bumps, A.
inline double supply_current(const PdnGrid& pdn, const std::vector<double>& drop) {
    double s = 0.0;
    for (const auto& r : pdn.resistors)
        if (r.b < 0)
            s += drop[r.a] / r.r;
    return s;
}

/// Largest value per plane.
inline std::vector<double> plane_max(const PdnGrid& pdn, const std::vector<double>& v) {
    std::vector<double> out(pdn.planes(), 0.0);
    for (int p = 0; p < pdn.planes(); ++p)
        for (std::size_t c = 0; c < pdn.nodes_per_plane(); ++c)
            out[p] = std::max(out[p], v[p * pdn.nodes_per_plane() + c]);
    return out;
}

/// First-order peak droop per plane for a load step: static drop after the
/// step plus the local current increase times the decap/loop surge impedance.
inline std::vector<double> worst_case_droop(const PdnGrid& pdn, const CurrentMap& before, const CurrentMap& after,
                                            const SolveOptions& options = {}) {
    if (before.size() != pdn.size())
        throw InvalidArgument("current map length does not match the PDN");
    auto droop = solve_ir_drop(pdn, after, options);
    for (std::size_t i = 0; i < droop.size(); ++i)
        droop[i] += std::max(0.0, after[i] - before[i]) * std::sqrt(pdn.loop_inductance / pdn.decap[i]);
    return plane_max(pdn, droop);
}

struct CouplingEntry {
    int layer = 0;
    LayerRole role = LayerRole::S0;
    double max_induced_drop = 0.0;  // V
};

/// Extra drop seen by every other die when each node of the aggressor die
/// draws `step` more amps. Superposition makes this a single solve.
inline std::vector<CouplingEntry> coupling_report(const PdnGrid& pdn, int aggressor_layer, double step,
                                                  const SolveOptions& options = {}) {
    const int ap = pdn.plane_of_layer(aggressor_layer);
    if (!(step >= 0))
        throw InvalidArgument("aggressor current step must be non-negative");
    CurrentMap delta(pdn.size(), 0.0);
    for (std::size_t c = 0; c < pdn.nodes_per_plane(); ++c)
        delta[ap * pdn.nodes_per_plane() + c] = step;
    const auto maxes = plane_max(pdn, solve_ir_drop(pdn, delta, options));
    std::vector<CouplingEntry> out;
    for (int p = 0; p < pdn.planes(); ++p)
        if (p != ap)
            out.push_back({pdn.plane_layer[p], pdn.plane_role[p], maxes[p]});
    return out;
}

} // namespace stackemu
