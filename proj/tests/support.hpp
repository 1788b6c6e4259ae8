#pragma once

// Independent oracles and generators shared by the test programs.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "stackemu/stackemu.hpp"

namespace testsupport {

using Dense = std::vector<std::vector<double>>;

inline Dense to_dense(const stackemu::CsrMatrix& m) {
    Dense d(m.rows, std::vector<double>(m.rows, 0.0));
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t k = m.row_ptr[i]; k < m.row_ptr[i + 1]; ++k)
            d[i][m.cols[k]] += m.vals[k];
    return d;
}

/// Gaussian elimination with partial pivoting.
inline std::vector<double> dense_solve(Dense a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[p][c]))
                p = r;
        std::swap(a[c], a[p]);
        std::swap(b[c], b[p]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            if (f == 0.0)
                continue;
            for (std::size_t k = c; k < n; ++k)
                a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k)
            s -= a[i][k] * x[k];
        x[i] = s / a[i][i];
    }
    return x;
}

/// Direct steady solution of an assembled thermal system, degC.
inline std::vector<double> dense_steady(const stackemu::DiscreteSystem& sys, const std::vector<double>& source) {
    auto x = dense_solve(to_dense(sys.conductance), sys.rhs(source));
    for (double& v : x)
        v += sys.ambient;
    return x;
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline double rel_diff(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Cycle counting by repeated removal: any interior range no larger than both
/// neighbouring ranges closes a full cycle; what remains counts as half cycles.
inline std::vector<stackemu::Cycle> brute_rainflow(std::vector<double> x) {
    std::vector<stackemu::Cycle> out;
    bool found = true;
    while (found) {
        found = false;
        for (std::size_t i = 1; i + 2 < x.size(); ++i) {
            const double before = std::abs(x[i] - x[i - 1]);
            const double mid = std::abs(x[i + 1] - x[i]);
            const double after = std::abs(x[i + 2] - x[i + 1]);
            if (mid <= before && mid <= after) {
                out.push_back({mid, 1.0});
                x.erase(x.begin() + static_cast<long>(i), x.begin() + static_cast<long>(i) + 2);
                found = true;
                break;
            }
        }
    }
    for (std::size_t i = 1; i < x.size(); ++i)
        out.push_back({std::abs(x[i] - x[i - 1]), 0.5});
    return out;
}

/// Alternating extrema sequence with distinct values.
inline std::vector<double> random_extrema(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> step(0.5, 20.0);
    std::vector<double> x{std::uniform_real_distribution<double>(20, 80)(rng)};
    double dir = rng() % 2 ? 1.0 : -1.0;
    for (int i = 1; i < n; ++i) {
        x.push_back(x.back() + dir * step(rng));
        dir = -dir;
    }
    return x;
}

/// Random device-layer tile powers in [0, max_density] W/cm^2.
inline stackemu::PowerMap random_power(const stackemu::StackConfig& cfg, std::mt19937_64& rng,
                                       double max_density = 2.0) {
    stackemu::PowerMap map(cfg);
    std::uniform_real_distribution<double> u(0.0, max_density);
    for (int l = 0; l < map.layer_count(); ++l)
        for (int t = 0; t < map.tile_count(l); ++t)
            map = stackemu::set_tile_power(map, l, t, stackemu::profile::Constant{u(rng)});
    return map;
}

inline stackemu::PowerMap uniform_power(const stackemu::StackConfig& cfg, double density) {
    stackemu::PowerMap map(cfg);
    for (int l = 0; l < map.layer_count(); ++l)
        for (int t = 0; t < map.tile_count(l); ++t)
            map = stackemu::set_tile_power(map, l, t, stackemu::profile::Constant{density});
    return map;
}

/// A preset stack with randomized thicknesses, materials, tile grids and an
/// optional TSV farm; always valid.
inline stackemu::StackConfig random_stack(std::mt19937_64& rng) {
    using namespace stackemu;
    std::uniform_int_distribution<int> nl(2, 4);
    auto cfg = preset_stack(nl(rng));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    cfg.die_width = 4 + 10 * u(rng);
    cfg.die_length = 3 + 6 * u(rng);
    cfg.heat_sink_h = 2000 + 2e4 * u(rng);
    cfg.package_resistance = 1e-4 + 2e-3 * u(rng);
    for (auto& l : cfg.layers) {
        l.thickness *= 0.5 + u(rng);
        if (is_device(l.role)) {
            l.tile_rows = 1 + static_cast<int>(rng() % 3);
            l.tile_cols = 1 + static_cast<int>(rng() % 4);
            l.material.k = 100 + 60 * u(rng);
        }
        if (l.has_tsvs && u(rng) < 0.6) {
            TsvFarmSpec f;
            const double x0 = u(rng) * cfg.die_width * 0.6, y0 = u(rng) * cfg.die_length * 0.6;
            f.footprint = {x0, y0, x0 + cfg.die_width * 0.3, y0 + cfg.die_length * 0.3};
            if (u(rng) < 0.5) {
                f.fill_material = materials::tungsten();
                f.liner_thickness = 0.5;
            }
            l.tsv_farms.push_back(f);
        }
    }
    return cfg;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() / ("stackemu_test_" + tag);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// One-column stack with a single device layer and N uniform slabs.
inline stackemu::StackConfig column_stack(double thickness_um, double k) {
    using namespace stackemu;
    StackConfig cfg;
    cfg.die_width = 1.0;
    cfg.die_length = 1.0;
    LayerSpec s0;
    s0.role = LayerRole::S0;
    s0.thickness = thickness_um;
    s0.material = {"uniform", k, 1.6e6, std::nullopt};
    s0.tile_rows = 1;
    s0.tile_cols = 1;
    cfg.layers = {s0};
    return cfg;
}

} // namespace testsupport
