#pragma once

#include <optional>
#include <string>

#include "stackemu/errors.hpp"

namespace stackemu {

/// Bulk thermal properties of one material.
///
/// `k` is the vertical (through-thickness) conductivity. Layered films such as
/// BEOL stacks conduct better in-plane, so an optional lateral value can be
/// given; when absent the material is isotropic.
struct Material {
    std::string name;
    double k = 0.0;                          // W/(m K)
    double volumetric_heat_capacity = 0.0;   // J/(m^3 K)
    std::optional<double> k_lateral;         // W/(m K)

    double k_vertical() const { return k; }
    double k_in_plane() const { return k_lateral.value_or(k); }

    bool operator==(const Material&) const = default;
};

inline void check_material(const Material& m) {
    if (!(m.k > 0.0) || !(m.volumetric_heat_capacity > 0.0) || (m.k_lateral && !(*m.k_lateral > 0.0)))
        throw InvalidArgument("material '" + m.name + "' needs positive conductivity and heat capacity");
}

namespace materials {

// Literature room-temperature values; every one can be overridden from config.
inline Material silicon() { return {"silicon", 150.0, 1.63e6, std::nullopt}; }
inline Material copper() { return {"copper", 400.0, 3.45e6, std::nullopt}; }
inline Material tungsten() { return {"tungsten", 174.0, 2.58e6, std::nullopt}; }
inline Material silicon_dioxide() { return {"sio2", 1.4, 1.8e6, std::nullopt}; }
inline Material beol() { return {"beol", 1.0, 1.8e6, 2.25}; }
inline Material underfill() { return {"underfill", 1.5, 1.8e6, std::nullopt}; }
inline Material thermal_interface() { return {"tim", 4.0, 2.0e6, std::nullopt}; }

inline std::optional<Material> by_name(const std::string& name) {
    for (auto m : {silicon(), copper(), tungsten(), silicon_dioxide(), beol(), underfill(), thermal_interface()})
        if (m.name == name)
            return m;
    return std::nullopt;
}

} // namespace materials
} // namespace stackemu
