#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stackemu/errors.hpp"
#include "stackemu/grid.hpp"
#include "stackemu/thermal.hpp"

namespace stackemu {

/// Shortest decimal that parses back to the same double.
inline std::string format_exact(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

inline double parse_double(std::string_view s, const std::string& context) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw InvalidArgument(context + ": cannot parse number '" + std::string(s) + "'");
    return v;
}

/// Opens `path` for writing; refuses to clobber an existing file unless forced.
inline std::ofstream open_output(const std::string& path, bool force) {
    if (!force && std::filesystem::exists(path))
        throw IoError(path, "file exists (use --force to overwrite)");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError(path, "cannot open for writing");
    return out;
}

/// One row per voxel, `layer,z,y,x,<value_name>`, row-major in (z, y, x).
inline void write_field_csv(const std::string& path, const std::vector<double>& values, const VoxelGrid& grid,
                            bool force, const std::string& value_name = "temperature_c") {
    if (values.size() != grid.size())
        throw InvalidArgument("field does not belong to this grid");
    auto out = open_output(path, force);
    out << "layer,z,y,x," << value_name << "\n";
    for (int iz = 0; iz < grid.nz; ++iz)
        for (int iy = 0; iy < grid.ny; ++iy)
            for (int ix = 0; ix < grid.nx; ++ix)
                out << grid.slabs[iz].layer << ',' << iz << ',' << iy << ',' << ix << ','
                    << format_exact(values[grid.index(ix, iy, iz)]) << '\n';
    if (!out)
        throw IoError(path, "write failed");
}

inline void write_field_csv(const std::string& path, const TemperatureField& field, const VoxelGrid& grid,
                            bool force) {
    check_field_on_grid(field, grid);
    write_field_csv(path, field.values, grid, force);
}

/// Reads a field written by write_field_csv back onto `grid`.
inline TemperatureField read_field_csv(const std::string& path, const VoxelGrid& grid) {
    std::ifstream in(path);
    if (!in)
        throw IoError(path, "cannot open field file");
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("layer,z,y,x,", 0) != 0)
        throw InvalidArgument(path + ": field header must start with 'layer,z,y,x,'");

    TemperatureField f{grid.nx, grid.ny, grid.nz, std::vector<double>(grid.size(), 0.0), std::nullopt};
    std::vector<char> seen(grid.size(), 0);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string_view> cols;
        std::string_view rest(line);
        for (std::size_t pos; (pos = rest.find(',')) != std::string_view::npos; rest.remove_prefix(pos + 1))
            cols.push_back(rest.substr(0, pos));
        cols.push_back(rest);
        const std::string ctx = path + ":" + std::to_string(lineno);
        if (cols.size() != 5)
            throw InvalidArgument(ctx + ": expected 5 columns");
        const int iz = static_cast<int>(parse_double(cols[1], ctx));
        const int iy = static_cast<int>(parse_double(cols[2], ctx));
        const int ix = static_cast<int>(parse_double(cols[3], ctx));
        if (ix < 0 || ix >= grid.nx || iy < 0 || iy >= grid.ny || iz < 0 || iz >= grid.nz)
            throw InvalidArgument(ctx + ": voxel index outside the grid");
        const auto i = grid.index(ix, iy, iz);
        f.values[i] = parse_double(cols[4], ctx);
        seen[i] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end())
        throw InvalidArgument(path + ": field file does not cover every voxel");
    return f;
}

/// Per-column maximum over a layer's slabs, nx*ny values row-major in y.
inline std::vector<double> layer_image(const std::vector<double>& values, const VoxelGrid& grid, int layer) {
    std::vector<double> img(grid.cells_per_slab(), -INFINITY);
    const int z0 = grid.layer_first_slab.at(layer);
    for (int iz = z0; iz < z0 + grid.layer_slab_count[layer]; ++iz)
        for (std::size_t c = 0; c < img.size(); ++c)
            img[c] = std::max(img[c], values[iz * grid.cells_per_slab() + c]);
    return img;
}

/// Plain (P2) grayscale map. Values are mapped linearly from [lo, hi] onto
/// [0, 255]; the comment line records both ends of the scale.
inline void write_pgm(const std::string& path, const std::vector<double>& image, int nx, int ny, double lo,
                      double hi, bool force, const std::string& unit = "c") {
    if (image.size() != static_cast<std::size_t>(nx) * ny)
        throw InvalidArgument("image size does not match its dimensions");
    auto out = open_output(path, force);
    out << "P2\n# min_" << unit << "=" << format_exact(lo) << " max_" << unit << "=" << format_exact(hi) << "\n"
        << nx << ' ' << ny << "\n255\n";
    const double span = hi - lo;
    for (int iy = 0; iy < ny; ++iy) {
        for (int ix = 0; ix < nx; ++ix) {
            const double v = image[static_cast<std::size_t>(iy) * nx + ix];
            int level = span > 0 ? static_cast<int>(std::lround(255.0 * (v - lo) / span)) : 0;
            level = std::clamp(level, 0, 255);
            out << level << (ix + 1 < nx ? " " : "\n");
        }
    }
    if (!out)
        throw IoError(path, "write failed");
}

} // namespace stackemu
