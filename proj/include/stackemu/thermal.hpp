#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "stackemu/errors.hpp"
#include "stackemu/grid.hpp"
#include "stackemu/power.hpp"
#include "stackemu/sparse.hpp"
#include "stackemu/stack.hpp"

namespace stackemu {

/// Finite-volume heat equation on a voxel grid, in temperature rise above
/// ambient: G * theta = q, with C * dtheta/dt added for transients.
struct DiscreteSystem {
    int nx = 0, ny = 0, nz = 0;
    CsrMatrix conductance;              // W/K, boundary terms included
    std::vector<double> top_coupling;   // W/K to the heat sink, per voxel
    std::vector<double> bottom_coupling;  // W/K to the package, per voxel
    std::vector<double> capacitance;    // J/K
    std::vector<double> volume;         // m^3
    double ambient = 25.0;              // degC

    std::size_t size() const { return conductance.rows; }

    /// Right-hand side (W) from a volumetric source (W/m^3).
    std::vector<double> rhs(const std::vector<double>& source) const {
        if (source.size() != size())
            throw InvalidArgument("source field length does not match the system");
        std::vector<double> b(size());
        for (std::size_t i = 0; i < b.size(); ++i)
            b[i] = source[i] * volume[i];
        return b;
    }

    /// Operator with the boundary couplings stripped off.
    CsrMatrix interior_conductance() const {
        std::vector<double> neg(size());
        for (std::size_t i = 0; i < neg.size(); ++i)
            neg[i] = -(top_coupling[i] + bottom_coupling[i]);
        return conductance.plus_diagonal(neg);
    }
};

struct TemperatureField {
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> values;     // degC
    std::optional<double> time;     // seconds; empty for steady state

    std::size_t size() const { return values.size(); }
    double max() const {
        double m = -std::numeric_limits<double>::infinity();
        for (double v : values) m = std::max(m, v);
        return m;
    }
    double min() const {
        double m = std::numeric_limits<double>::infinity();
        for (double v : values) m = std::min(m, v);
        return m;
    }
    double at(const VoxelGrid& g, int ix, int iy, int iz) const { return values[g.index(ix, iy, iz)]; }
};

inline void check_field_on_grid(const TemperatureField& f, const VoxelGrid& g) {
    if (f.nx != g.nx || f.ny != g.ny || f.nz != g.nz || f.values.size() != g.size())
        throw InvalidArgument("field does not belong to this grid");
}

/// 7-point stencil with series (harmonic) face conductances. The heat sink is
/// a convective film on the top face, the package an areal resistance on the
/// bottom face; each is reached through the half-thickness of the boundary
/// voxel. Sidewalls are adiabatic.
inline DiscreteSystem assemble(const VoxelGrid& grid, const StackConfig& config) {
    if (grid.layer_count() != static_cast<int>(config.layers.size()) ||
        std::abs(grid.die_width_mm - config.die_width) > 1e-12 ||
        std::abs(grid.die_length_mm - config.die_length) > 1e-12 || grid.kz.size() != grid.size())
        throw InvalidArgument("assemble: grid was not built from this stack configuration");

    const int nx = grid.nx, ny = grid.ny, nz = grid.nz;
    const std::size_t n = grid.size();
    const double dx = grid.dx_mm() * 1e-3, dy = grid.dy_mm() * 1e-3;

    DiscreteSystem sys;
    sys.nx = nx;
    sys.ny = ny;
    sys.nz = nz;
    sys.ambient = config.ambient_temperature;
    sys.top_coupling.assign(n, 0.0);
    sys.bottom_coupling.assign(n, 0.0);
    sys.capacitance.resize(n);
    sys.volume.resize(n);

    CsrBuilder b(n);
    for (int iz = 0; iz < nz; ++iz) {
        const double dz = grid.slabs[iz].thickness_um * 1e-6;
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const std::size_t i = grid.index(ix, iy, iz);
                sys.volume[i] = dx * dy * dz;
                sys.capacitance[i] = grid.heat_capacity[i] * sys.volume[i];
                b.add(i, i, 0.0);
                if (ix + 1 < nx) {
                    const std::size_t j = grid.index(ix + 1, iy, iz);
                    b.add_conductance(i, j, dy * dz / (dx / (2 * grid.kxy[i]) + dx / (2 * grid.kxy[j])));
                }
                if (iy + 1 < ny) {
                    const std::size_t j = grid.index(ix, iy + 1, iz);
                    b.add_conductance(i, j, dx * dz / (dy / (2 * grid.kxy[i]) + dy / (2 * grid.kxy[j])));
                }
                if (iz + 1 < nz) {
                    const std::size_t j = grid.index(ix, iy, iz + 1);
                    const double dz_up = grid.slabs[iz + 1].thickness_um * 1e-6;
                    b.add_conductance(i, j, dx * dy / (dz / (2 * grid.kz[i]) + dz_up / (2 * grid.kz[j])));
                }
                if (iz == nz - 1) {
                    const double g = dx * dy / (dz / (2 * grid.kz[i]) + 1.0 / config.heat_sink_h);
                    sys.top_coupling[i] = g;
                    b.add(i, i, g);
                }
                if (iz == 0) {
                    const double g = dx * dy / (dz / (2 * grid.kz[i]) + config.package_resistance);
                    sys.bottom_coupling[i] = g;
                    b.add(i, i, g);
                }
            }
        }
    }
    sys.conductance = b.build();
    return sys;
}

namespace detail {

inline TemperatureField to_field(const DiscreteSystem& sys, const std::vector<double>& rise, std::optional<double> t) {
    TemperatureField f{sys.nx, sys.ny, sys.nz, rise, t};
    for (double& v : f.values) {
        if (!std::isfinite(v))
            throw NumericalFailure("non-finite temperature in solution");
        v += sys.ambient;
    }
    return f;
}

inline std::vector<double> rise_of(const DiscreteSystem& sys, const TemperatureField& f) {
    if (f.values.size() != sys.size())
        throw InvalidArgument("field does not match the system size");
    std::vector<double> r(f.values);
    for (double& v : r)
        v -= sys.ambient;
    return r;
}

} // namespace detail

inline TemperatureField solve_steady(const DiscreteSystem& sys, const std::vector<double>& source,
                                     const SolveOptions& options = {}) {
    const auto b = sys.rhs(source);
    std::vector<double> x(sys.size(), 0.0);
    solve_linear(sys.conductance, b, x, options);
    return detail::to_field(sys, x, std::nullopt);
}

/// Net heat leaving through the heat sink and package faces, W.
inline double boundary_heat_flow(const DiscreteSystem& sys, const TemperatureField& f) {
    double q = 0.0;
    for (std::size_t i = 0; i < sys.size(); ++i)
        q += (sys.top_coupling[i] + sys.bottom_coupling[i]) * (f.values[i] - sys.ambient);
    return q;
}

/// Backward-Euler stepper; caches (C/dt + G) for a fixed step size.
class TransientStepper {
  public:
    TransientStepper(const DiscreteSystem& sys, double dt, SolveOptions options = {})
        : sys_(&sys), dt_(dt), options_(options) {
        if (!(dt > 0))
            throw InvalidArgument("transient step dt must be positive");
        std::vector<double> c_over_dt(sys.size());
        for (std::size_t i = 0; i < c_over_dt.size(); ++i)
            c_over_dt[i] = sys.capacitance[i] / dt;
        matrix_ = sys.conductance.plus_diagonal(c_over_dt);
        c_over_dt_ = std::move(c_over_dt);
    }

    double dt() const { return dt_; }

    TemperatureField step(const TemperatureField& T, const std::vector<double>& source) const {
        const auto q = sys_->rhs(source);
        std::vector<double> x = detail::rise_of(*sys_, T);
        std::vector<double> b(x.size());
        for (std::size_t i = 0; i < b.size(); ++i)
            b[i] = c_over_dt_[i] * x[i] + q[i];
        solve_linear(matrix_, b, x, options_);
        return detail::to_field(*sys_, x, T.time.value_or(0.0) + dt_);
    }

  private:
    const DiscreteSystem* sys_;
    double dt_;
    SolveOptions options_;
    CsrMatrix matrix_;
    std::vector<double> c_over_dt_;
};

inline TemperatureField step_transient(const DiscreteSystem& sys, const TemperatureField& T,
                                       const std::vector<double>& source, double dt,
                                       const SolveOptions& options = {}) {
    return TransientStepper(sys, dt, options).step(T, source);
}

/// Integrates from T0 (at t = T0.time or 0) to t_end. The source is evaluated
/// from the power map at the start of each step. Returns every
/// `sample_stride`-th field plus the final one.
inline std::vector<TemperatureField> solve_transient(const DiscreteSystem& sys, const VoxelGrid& grid,
                                                     const TemperatureField& T0, const PowerMap& power,
                                                     double t_end, double dt, const SolveOptions& options = {},
                                                     int sample_stride = 1) {
    if (!(t_end > 0) || !(dt > 0))
        throw InvalidArgument("solve_transient: t_end and dt must be positive");
    if (sample_stride < 1)
        throw InvalidArgument("solve_transient: sample_stride must be at least 1");

    const double t0 = T0.time.value_or(0.0);
    const long steps = static_cast<long>(std::ceil((t_end - t0) / dt - 1e-9));
    TransientStepper stepper(sys, dt, options);
    std::optional<TransientStepper> last;

    std::vector<TemperatureField> out;
    TemperatureField T = T0;
    T.time = t0;
    for (long k = 1; k <= steps; ++k) {
        const double t = t0 + (k - 1) * dt;
        const auto source = power_density_field(power, grid, t);
        const double h = std::min(dt, t_end - t);
        if (h < dt * (1 - 1e-12)) {
            if (!last) last.emplace(sys, h, options);
            T = last->step(T, source);
        } else {
            T = stepper.step(T, source);
        }
        T.time = t0 + (k - 1) * dt + h;
        if (k % sample_stride == 0 || k == steps)
            out.push_back(T);
    }
    return out;
}

struct LayerStats {
    int layer = 0;
    LayerRole role = LayerRole::S0;
    double mean = 0, max = 0, min = 0;
    int hot_ix = 0, hot_iy = 0, hot_iz = 0;
    double hot_x_mm = 0, hot_y_mm = 0;
};

/// Statistics over every die layer; ties for the hotspot go to the lowest linear index.
inline std::vector<LayerStats> layer_summary(const TemperatureField& field, const VoxelGrid& grid) {
    check_field_on_grid(field, grid);
    std::vector<LayerStats> out;
    for (int l = 0; l < grid.layer_count(); ++l) {
        if (!is_device(grid.layer_roles[l]))
            continue;
        LayerStats s;
        s.layer = l;
        s.role = grid.layer_roles[l];
        s.max = -std::numeric_limits<double>::infinity();
        s.min = std::numeric_limits<double>::infinity();
        double sum = 0;
        std::size_t count = 0;
        const int z0 = grid.layer_first_slab[l], z1 = z0 + grid.layer_slab_count[l];
        for (int iz = z0; iz < z1; ++iz)
            for (int iy = 0; iy < grid.ny; ++iy)
                for (int ix = 0; ix < grid.nx; ++ix) {
                    const double v = field.values[grid.index(ix, iy, iz)];
                    sum += v;
                    ++count;
                    s.min = std::min(s.min, v);
                    if (v > s.max) {
                        s.max = v;
                        s.hot_ix = ix;
                        s.hot_iy = iy;
                        s.hot_iz = iz;
                    }
                }
        s.mean = sum / static_cast<double>(count);
        s.hot_x_mm = (s.hot_ix + 0.5) * grid.dx_mm();
        s.hot_y_mm = (s.hot_iy + 0.5) * grid.dy_mm();
        out.push_back(s);
    }
    return out;
}

} // namespace stackemu
