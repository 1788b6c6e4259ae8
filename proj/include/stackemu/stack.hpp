#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stackemu/errors.hpp"
#include "stackemu/material.hpp"

namespace stackemu {

enum class LayerRole {
    PackageInterface,  // C4 bumps + underfill to the package
    SP,                // package-adjacent thinned die
    SN2,
    SN1,
    S0,                // heat-sink-adjacent die, no TSVs
    BondInterface,     // uC4 + underfill between dies
    BEOL,
    HeatSinkInterface,
};

inline bool is_device(LayerRole r) {
    return r == LayerRole::SP || r == LayerRole::SN2 || r == LayerRole::SN1 || r == LayerRole::S0;
}

inline std::string_view to_string(LayerRole r) {
    switch (r) {
    case LayerRole::PackageInterface: return "PackageInterface";
    case LayerRole::SP: return "SP";
    case LayerRole::SN2: return "SN2";
    case LayerRole::SN1: return "SN1";
    case LayerRole::S0: return "S0";
    case LayerRole::BondInterface: return "BondInterface";
    case LayerRole::BEOL: return "BEOL";
    case LayerRole::HeatSinkInterface: return "HeatSinkInterface";
    }
    return "?";
}

inline std::optional<LayerRole> parse_role(std::string_view s) {
    for (auto r : {LayerRole::PackageInterface, LayerRole::SP, LayerRole::SN2, LayerRole::SN1, LayerRole::S0,
                   LayerRole::BondInterface, LayerRole::BEOL, LayerRole::HeatSinkInterface})
        if (to_string(r) == s)
            return r;
    return std::nullopt;
}

/// Axis-aligned rectangle in die coordinates, mm.
struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    bool contains(double x, double y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }

    bool operator==(const Rect&) const = default;
};

/// Area of the intersection of two rectangles (0 when disjoint).
inline double overlap_area(const Rect& a, const Rect& b) {
    double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    return (w > 0 && h > 0) ? w * h : 0.0;
}

struct TsvFarmSpec {
    Rect footprint;                 // mm
    double via_diameter = 5.0;      // um
    double via_pitch = 10.0;        // um
    Material fill_material = materials::copper();
    double liner_thickness = 0.0;   // um
    Material liner_material = materials::silicon_dioxide();

    double fill_fraction() const {
        double r = via_diameter / 2.0;
        return std::numbers::pi * r * r / (via_pitch * via_pitch);
    }
    double liner_fraction() const {
        double r = via_diameter / 2.0, b = r + liner_thickness;
        return std::numbers::pi * (b * b - r * r) / (via_pitch * via_pitch);
    }
};

struct LayerSpec {
    LayerRole role = LayerRole::S0;
    double thickness = 0.0;         // um
    Material material = materials::silicon();
    bool has_tsvs = false;
    std::vector<TsvFarmSpec> tsv_farms;
    int tile_rows = 4;
    int tile_cols = 8;
};

struct StackConfig {
    double die_width = 12.0;        // mm, along x
    double die_length = 6.0;        // mm, along y
    std::vector<LayerSpec> layers;  // bottom (package) to top (heat sink)
    double ambient_temperature = 25.0;   // degC
    double heat_sink_h = 8700.0;         // W/(m^2 K)
    double package_resistance = 5e-4;    // K m^2 / W

    double total_thickness_um() const {
        double t = 0;
        for (const auto& l : layers)
            t += l.thickness;
        return t;
    }

    Rect outline() const { return {0.0, 0.0, die_width, die_length}; }

    std::vector<int> device_layers() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(layers.size()); ++i)
            if (is_device(layers[i].role))
                out.push_back(i);
        return out;
    }
};

/// One broken invariant. `layer` is -1 for stack-wide problems.
struct Violation {
    int layer = -1;
    std::string rule;
    std::string message;
};

inline std::string describe(const std::vector<Violation>& vs) {
    std::ostringstream os;
    for (const auto& v : vs) {
        if (v.layer >= 0)
            os << "layer " << v.layer << ": ";
        os << "[" << v.rule << "] " << v.message << "\n";
    }
    return os.str();
}

namespace defaults {
inline constexpr double thinned_die_um = 50.0;
inline constexpr double top_die_um = 500.0;
inline constexpr double bond_um = 20.0;
inline constexpr double package_um = 80.0;
inline constexpr double heat_sink_interface_um = 25.0;
inline constexpr double beol_um = 10.0;
} // namespace defaults

/// The emulator's 2-, 3- and 4-layer configurations.
inline StackConfig preset_stack(int n_layers) {
    if (n_layers < 2 || n_layers > 4)
        throw InvalidArgument("preset_stack: n_layers must be 2, 3 or 4, got " + std::to_string(n_layers));

    std::vector<LayerRole> dies{LayerRole::SP};
    if (n_layers == 4)
        dies.push_back(LayerRole::SN2);
    if (n_layers >= 3)
        dies.push_back(LayerRole::SN1);
    dies.push_back(LayerRole::S0);

    StackConfig cfg;
    cfg.layers.push_back({LayerRole::PackageInterface, defaults::package_um, materials::underfill(), false, {}, 1, 1});
    for (std::size_t i = 0; i < dies.size(); ++i) {
        if (i > 0)
            cfg.layers.push_back({LayerRole::BondInterface, defaults::bond_um, materials::underfill(), false, {}, 1, 1});
        bool top = dies[i] == LayerRole::S0;
        cfg.layers.push_back({dies[i], top ? defaults::top_die_um : defaults::thinned_die_um, materials::silicon(),
                              !top, {}, 4, 8});
    }
    cfg.layers.push_back({LayerRole::HeatSinkInterface, defaults::heat_sink_interface_um,
                          materials::thermal_interface(), false, {}, 1, 1});
    return cfg;
}

/// Every broken invariant of `config`, stack-wide issues first, then by layer index.
inline std::vector<Violation> validate_stack(const StackConfig& config) {
    std::vector<Violation> out;
    auto add = [&](int layer, std::string rule, std::string msg) {
        out.push_back({layer, std::move(rule), std::move(msg)});
    };

    if (!(config.die_width > 0) || !(config.die_length > 0))
        add(-1, "die-size", "die width and length must be positive");
    if (!(config.heat_sink_h > 0))
        add(-1, "heat-sink", "heat_sink_h must be positive");
    if (!(config.package_resistance >= 0))
        add(-1, "package", "package_resistance must be non-negative");
    if (config.layers.empty())
        add(-1, "empty", "stack has no layers");

    int n_s0 = 0;
    for (const auto& l : config.layers)
        n_s0 += l.role == LayerRole::S0;
    if (!config.layers.empty() && n_s0 != 1)
        add(-1, "s0-count", "stack needs exactly one S0 layer, found " + std::to_string(n_s0));

    auto device_rank = [](LayerRole r) {
        switch (r) {
        case LayerRole::SP: return 0;
        case LayerRole::SN2: return 1;
        case LayerRole::SN1: return 2;
        case LayerRole::S0: return 3;
        default: return -1;
        }
    };

    const auto devices = config.device_layers();
    const int first_device = devices.empty() ? -1 : devices.front();
    const int last_device = devices.empty() ? -1 : devices.back();
    bool has_sp = std::any_of(config.layers.begin(), config.layers.end(),
                              [](const LayerSpec& l) { return l.role == LayerRole::SP; });
    const Rect die = config.outline();

    int prev_rank = -1;
    for (int i = 0; i < static_cast<int>(config.layers.size()); ++i) {
        const auto& l = config.layers[i];
        if (!(l.thickness > 0))
            add(i, "thickness", "layer thickness must be positive");
        if (!(l.material.k > 0) || !(l.material.volumetric_heat_capacity > 0) ||
            (l.material.k_lateral && !(*l.material.k_lateral > 0)))
            add(i, "material", "material '" + l.material.name + "' needs positive k and heat capacity");
        if (l.tile_rows < 1 || l.tile_cols < 1)
            add(i, "tile-grid", "tile grid must be at least 1x1");

        if (int rank = device_rank(l.role); rank >= 0) {
            if (rank <= prev_rank)
                add(i, "role-order", std::string(to_string(l.role)) + " is out of order; dies go SP, SN2, SN1, S0 bottom to top");
            prev_rank = std::max(prev_rank, rank);
            if ((l.role == LayerRole::SN1 || l.role == LayerRole::SN2) && !has_sp)
                add(i, "role-order", "SN layers require an SP layer below them");
        } else if (l.role == LayerRole::PackageInterface && first_device >= 0 && i > first_device) {
            add(i, "role-order", "PackageInterface must sit below every die");
        } else if (l.role == LayerRole::HeatSinkInterface && last_device >= 0 && i < last_device) {
            add(i, "role-order", "HeatSinkInterface must sit above S0");
        }

        if (l.role == LayerRole::S0 && l.has_tsvs)
            add(i, "s0-tsv", "S0 is heat-sink adjacent and may not carry TSVs");
        if (!l.tsv_farms.empty() && !l.has_tsvs)
            add(i, "tsv-flag", "layer has TSV farms but has_tsvs is false");
        if (!l.tsv_farms.empty() && !is_device(l.role))
            add(i, "tsv-layer", "TSV farms are only allowed in die layers");

        for (std::size_t f = 0; f < l.tsv_farms.size(); ++f) {
            const auto& farm = l.tsv_farms[f];
            const std::string tag = "farm " + std::to_string(f) + ": ";
            const Rect& fp = farm.footprint;
            if (!(fp.width() > 0) || !(fp.height() > 0) || fp.x0 < die.x0 || fp.y0 < die.y0 || fp.x1 > die.x1 ||
                fp.y1 > die.y1)
                add(i, "tsv-footprint", tag + "footprint must be a non-empty rectangle inside the die outline");
            if (!(farm.via_diameter > 0) || !(farm.liner_thickness >= 0) ||
                !(farm.via_pitch > farm.via_diameter + 2 * farm.liner_thickness))
                add(i, "tsv-geometry", tag + "via_pitch must exceed via_diameter + 2*liner_thickness");
            if (!(farm.fill_material.k > 0) || !(farm.liner_material.k > 0) ||
                !(farm.fill_material.volumetric_heat_capacity > 0) ||
                !(farm.liner_material.volumetric_heat_capacity > 0))
                add(i, "tsv-material", tag + "fill and liner materials need positive properties");
            for (std::size_t g = f + 1; g < l.tsv_farms.size(); ++g)
                if (overlap_area(fp, l.tsv_farms[g].footprint) > 0)
                    add(i, "tsv-overlap", tag + "overlaps farm " + std::to_string(g));
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Violation& a, const Violation& b) { return a.layer < b.layer; });
    return out;
}

} // namespace stackemu
