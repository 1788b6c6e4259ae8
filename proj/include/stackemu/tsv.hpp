#pragma once

#include "stackemu/errors.hpp"
#include "stackemu/material.hpp"
#include "stackemu/stack.hpp"

namespace stackemu {

/// Homogenized properties of a via farm region.
struct EffectiveConductivity {
    double kz = 0.0;   // vertical, W/(m K)
    double kxy = 0.0;  // lateral, W/(m K)
    double fill_fraction = 0.0;
    double liner_fraction = 0.0;
    double volumetric_heat_capacity = 0.0;  // J/(m^3 K), volume-weighted
};

namespace detail {

// Two-dimensional Maxwell form for aligned cylinders of conductivity k_inc at
// area fraction f in a matrix k_mat.
inline double maxwell_cylinders(double k_mat, double k_inc, double f) {
    double s = k_inc + k_mat, d = k_inc - k_mat;
    return k_mat * (s + d * f) / (s - d * f);
}

} // namespace detail

/// Transverse conductivity of a core cylinder (radius a) wrapped in a shell
/// (outer radius b). With no shell this returns k_core.
inline double coated_cylinder_conductivity(double k_core, double k_shell, double a, double b) {
    if (b <= a)
        return k_core;
    double c = (a / b) * (a / b);
    return detail::maxwell_cylinders(k_shell, k_core, c);
}

/// Anisotropic conductivity of a via farm embedded in `base`.
///
/// Vertical heat flow sees fill, liner and base in parallel, so kz is the
/// area-weighted mean. Lateral flow crosses each via as a coated cylinder:
/// core and liner collapse to one equivalent cylinder, which is then embedded
/// in the base material at the combined via+liner area fraction. An
/// insulating liner therefore pulls kxy below the base value even when the
/// fill itself conducts well.
inline EffectiveConductivity effective_conductivity(const TsvFarmSpec& farm, const Material& base) {
    if (!(farm.via_diameter >= 0) || !(farm.liner_thickness >= 0) ||
        !(farm.via_pitch > farm.via_diameter + 2 * farm.liner_thickness))
        throw InvalidArgument("TSV farm geometry is degenerate: pitch must exceed diameter + 2*liner");
    check_material(base);
    check_material(farm.fill_material);
    check_material(farm.liner_material);

    const double phi_fill = farm.fill_fraction();
    const double phi_liner = farm.liner_fraction();
    const double phi_base = 1.0 - phi_fill - phi_liner;
    const double k_fill = farm.fill_material.k;
    const double k_liner = farm.liner_material.k;

    EffectiveConductivity out;
    out.fill_fraction = phi_fill;
    out.liner_fraction = phi_liner;
    out.kz = phi_fill * k_fill + phi_liner * k_liner + phi_base * base.k_vertical();

    const double a = farm.via_diameter / 2.0;
    const double k_via = coated_cylinder_conductivity(k_fill, k_liner, a, a + farm.liner_thickness);
    out.kxy = detail::maxwell_cylinders(base.k_in_plane(), k_via, phi_fill + phi_liner);

    out.volumetric_heat_capacity = phi_fill * farm.fill_material.volumetric_heat_capacity +
                                   phi_liner * farm.liner_material.volumetric_heat_capacity +
                                   phi_base * base.volumetric_heat_capacity;
    return out;
}

} // namespace stackemu
