#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "stackemu/errors.hpp"
#include "stackemu/stack.hpp"
#include "stackemu/tsv.hpp"

namespace stackemu {

/// One z-slab of the grid. Each physical layer is split into one or more slabs.
struct Slab {
    double thickness_um = 0.0;
    double z_bottom_um = 0.0;
    int layer = 0;
    int sub_index = 0;

    double z_center_um() const { return z_bottom_um + 0.5 * thickness_um; }
};

/// Finite-volume discretization of a stack. Voxel (ix, iy, iz) has linear
/// index (iz * ny + iy) * nx + ix; iz = 0 is the package side.
struct VoxelGrid {
    int nx = 0, ny = 0, nz = 0;
    double die_width_mm = 0.0, die_length_mm = 0.0;
    std::vector<Slab> slabs;

    std::vector<double> kxy;            // W/(m K)
    std::vector<double> kz;             // W/(m K)
    std::vector<double> heat_capacity;  // J/(m^3 K)

    // Per physical layer.
    std::vector<LayerRole> layer_roles;
    std::vector<int> layer_first_slab;
    std::vector<int> layer_slab_count;
    std::vector<int> tile_rows, tile_cols;
    std::vector<std::vector<int>> tile_of_cell;  // [layer][iy * nx + ix], -1 for non-device layers

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny * nz; }
    std::size_t cells_per_slab() const { return static_cast<std::size_t>(nx) * ny; }
    int layer_count() const { return static_cast<int>(layer_roles.size()); }

    std::size_t index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(iz) * ny + iy) * nx + ix;
    }

    double dx_mm() const { return die_width_mm / nx; }
    double dy_mm() const { return die_length_mm / ny; }
    double cell_area_m2() const { return dx_mm() * dy_mm() * 1e-6; }
    double voxel_volume_m3(int iz) const { return cell_area_m2() * slabs[iz].thickness_um * 1e-6; }

    Rect cell_rect(int ix, int iy) const {
        return {ix * dx_mm(), iy * dy_mm(), (ix + 1) * dx_mm(), (iy + 1) * dy_mm()};
    }

    Rect tile_rect(int layer, int tile) const {
        const int r = tile / tile_cols[layer], c = tile % tile_cols[layer];
        const double tw = die_width_mm / tile_cols[layer], tl = die_length_mm / tile_rows[layer];
        return {c * tw, r * tl, (c + 1) * tw, (r + 1) * tl};
    }

    int tile_count(int layer) const { return tile_rows[layer] * tile_cols[layer]; }

    /// Slab that receives a die's dissipated power: the bottom sub-slab, next
    /// to the BEOL of a face-down die.
    int heat_slab(int layer) const { return layer_first_slab[layer]; }

    /// Nearest lateral cell for a point in die coordinates (mm).
    std::pair<int, int> cell_at(double x_mm, double y_mm) const {
        auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
        return {clampi(static_cast<int>(x_mm / dx_mm()), nx - 1), clampi(static_cast<int>(y_mm / dy_mm()), ny - 1)};
    }
};

/// Split `config` into an nx x ny lateral grid with `sub_slabs_per_layer`
/// equal slabs per layer. Voxels covered by a TSV farm take the farm's
/// homogenized properties in proportion to the covered cell area.
inline VoxelGrid discretize(const StackConfig& config, int nx, int ny, int sub_slabs_per_layer) {
    if (nx < 1 || ny < 1 || sub_slabs_per_layer < 1)
        throw InvalidArgument("discretize: nx, ny and sub_slabs_per_layer must be positive");
    if (auto vs = validate_stack(config); !vs.empty()) {
        std::vector<std::string> details;
        for (const auto& v : vs)
            details.push_back(describe({v}));
        throw InvalidConfiguration("stack configuration is invalid:\n" + describe(vs), details);
    }

    VoxelGrid g;
    g.nx = nx;
    g.ny = ny;
    g.die_width_mm = config.die_width;
    g.die_length_mm = config.die_length;
    const int n_layers = static_cast<int>(config.layers.size());
    g.nz = n_layers * sub_slabs_per_layer;

    double z = 0.0;
    for (int l = 0; l < n_layers; ++l) {
        const auto& spec = config.layers[l];
        g.layer_roles.push_back(spec.role);
        g.layer_first_slab.push_back(static_cast<int>(g.slabs.size()));
        g.layer_slab_count.push_back(sub_slabs_per_layer);
        g.tile_rows.push_back(is_device(spec.role) ? spec.tile_rows : 1);
        g.tile_cols.push_back(is_device(spec.role) ? spec.tile_cols : 1);
        const double t = spec.thickness / sub_slabs_per_layer;
        const double layer_start = z;
        for (int s = 0; s < sub_slabs_per_layer; ++s) {
            // Last sub-slab closes the layer exactly so slab sums match the stack height.
            const double top = (s + 1 == sub_slabs_per_layer) ? layer_start + spec.thickness : z + t;
            g.slabs.push_back({top - z, z, l, s});
            z = top;
        }
    }

    const std::size_t cells = g.cells_per_slab();
    g.kxy.assign(g.size(), 0.0);
    g.kz.assign(g.size(), 0.0);
    g.heat_capacity.assign(g.size(), 0.0);
    g.tile_of_cell.assign(n_layers, std::vector<int>(cells, -1));

    const double cell_area = g.dx_mm() * g.dy_mm();
    for (int l = 0; l < n_layers; ++l) {
        const auto& spec = config.layers[l];

        std::vector<EffectiveConductivity> farm_props;
        for (const auto& farm : spec.tsv_farms)
            farm_props.push_back(effective_conductivity(farm, spec.material));

        std::vector<double> c_kxy(cells), c_kz(cells), c_cap(cells);
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const std::size_t c = static_cast<std::size_t>(iy) * nx + ix;
                const Rect cell = g.cell_rect(ix, iy);
                double covered = 0.0, kxy = 0.0, kz = 0.0, cap = 0.0;
                for (std::size_t f = 0; f < spec.tsv_farms.size(); ++f) {
                    const double frac = overlap_area(cell, spec.tsv_farms[f].footprint) / cell_area;
                    if (frac <= 0)
                        continue;
                    covered += frac;
                    kxy += frac * farm_props[f].kxy;
                    kz += frac * farm_props[f].kz;
                    cap += frac * farm_props[f].volumetric_heat_capacity;
                }
                const double rest = 1.0 - covered;
                c_kxy[c] = kxy + rest * spec.material.k_in_plane();
                c_kz[c] = kz + rest * spec.material.k_vertical();
                c_cap[c] = cap + rest * spec.material.volumetric_heat_capacity;

                if (is_device(spec.role)) {
                    const double xc = (ix + 0.5) * g.dx_mm(), yc = (iy + 0.5) * g.dy_mm();
                    int tc = static_cast<int>(xc / (config.die_width / spec.tile_cols));
                    int tr = static_cast<int>(yc / (config.die_length / spec.tile_rows));
                    tc = std::min(tc, spec.tile_cols - 1);
                    tr = std::min(tr, spec.tile_rows - 1);
                    g.tile_of_cell[l][c] = tr * spec.tile_cols + tc;
                }
            }
        }
        for (int s = 0; s < sub_slabs_per_layer; ++s) {
            const int iz = g.layer_first_slab[l] + s;
            for (std::size_t c = 0; c < cells; ++c) {
                const std::size_t i = static_cast<std::size_t>(iz) * cells + c;
                g.kxy[i] = c_kxy[c];
                g.kz[i] = c_kz[c];
                g.heat_capacity[i] = c_cap[c];
            }
        }
    }
    return g;
}

} // namespace stackemu
