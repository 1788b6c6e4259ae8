#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "stackemu/errors.hpp"
#include "stackemu/scenario.hpp"

#ifndef STACKEMU_DATA_DIR
#define STACKEMU_DATA_DIR "data"
#endif

namespace stackemu {

using json = nlohmann::json;

// Scenario documents are JSON. Every object is checked against its allowed
// key set so a misspelt key fails loudly instead of silently using a default.
namespace config {

inline void allow_keys(const json& j, std::initializer_list<const char*> keys, const std::string& ctx) {
    if (!j.is_object())
        throw InvalidConfiguration(ctx + ": expected an object");
    std::vector<std::string> unknown;
    for (const auto& [k, v] : j.items()) {
        if (k.rfind("_comment", 0) == 0)
            continue;
        bool ok = false;
        for (const char* a : keys)
            ok |= k == a;
        if (!ok)
            unknown.push_back(ctx + "." + k);
    }
    if (!unknown.empty()) {
        std::string msg = ctx + ": unknown key(s):";
        for (const auto& u : unknown)
            msg += " " + u;
        throw InvalidConfiguration(msg, unknown);
    }
}

inline double number(const json& j, const char* key, double fallback, const std::string& ctx) {
    if (!j.contains(key))
        return fallback;
    if (!j[key].is_number())
        throw InvalidConfiguration(ctx + "." + key + ": expected a number");
    return j[key].get<double>();
}

inline double required_number(const json& j, const char* key, const std::string& ctx) {
    if (!j.contains(key))
        throw InvalidConfiguration(ctx + ": missing required key '" + key + "'");
    return number(j, key, 0.0, ctx);
}

inline int integer(const json& j, const char* key, int fallback, const std::string& ctx) {
    if (!j.contains(key))
        return fallback;
    if (!j[key].is_number_integer())
        throw InvalidConfiguration(ctx + "." + key + ": expected an integer");
    return j[key].get<int>();
}

inline bool boolean(const json& j, const char* key, bool fallback, const std::string& ctx) {
    if (!j.contains(key))
        return fallback;
    if (!j[key].is_boolean())
        throw InvalidConfiguration(ctx + "." + key + ": expected true or false");
    return j[key].get<bool>();
}

inline std::string string(const json& j, const char* key, const std::string& fallback, const std::string& ctx) {
    if (!j.contains(key))
        return fallback;
    if (!j[key].is_string())
        throw InvalidConfiguration(ctx + "." + key + ": expected a string");
    return j[key].get<std::string>();
}

inline bool is_keyword(const json& j, const char* word) { return j.is_string() && j.get<std::string>() == word; }

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).string();
}

using MaterialTable = std::map<std::string, Material>;

inline MaterialTable builtin_materials() {
    MaterialTable t;
    for (auto m : {materials::silicon(), materials::copper(), materials::tungsten(), materials::silicon_dioxide(),
                   materials::beol(), materials::underfill(), materials::thermal_interface()})
        t[m.name] = m;
    return t;
}

inline Material material(const json& j, const MaterialTable& table, const std::string& ctx) {
    if (!j.is_string())
        throw InvalidConfiguration(ctx + ": material must be referenced by name");
    auto it = table.find(j.get<std::string>());
    if (it == table.end())
        throw InvalidConfiguration(ctx + ": unknown material '" + j.get<std::string>() + "'");
    return it->second;
}

inline Rect rect(const json& j, const std::string& ctx) {
    if (!j.is_array() || j.size() != 4)
        throw InvalidConfiguration(ctx + ": footprint_mm must be [x0, y0, x1, y1]");
    for (const auto& v : j)
        if (!v.is_number())
            throw InvalidConfiguration(ctx + ": footprint_mm entries must be numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

inline TsvFarmSpec tsv_farm(const json& j, const MaterialTable& mats, const std::string& ctx) {
    allow_keys(j, {"footprint_mm", "via_diameter_um", "via_pitch_um", "fill", "liner_thickness_um", "liner"}, ctx);
    TsvFarmSpec f;
    if (!j.contains("footprint_mm"))
        throw InvalidConfiguration(ctx + ": missing footprint_mm");
    f.footprint = rect(j["footprint_mm"], ctx);
    f.via_diameter = number(j, "via_diameter_um", f.via_diameter, ctx);
    f.via_pitch = number(j, "via_pitch_um", f.via_pitch, ctx);
    f.liner_thickness = number(j, "liner_thickness_um", f.liner_thickness, ctx);
    if (j.contains("fill")) f.fill_material = material(j["fill"], mats, ctx + ".fill");
    if (j.contains("liner")) f.liner_material = material(j["liner"], mats, ctx + ".liner");
    return f;
}

inline LayerSpec layer(const json& j, const MaterialTable& mats, const std::string& ctx) {
    allow_keys(j, {"role", "thickness_um", "material", "has_tsvs", "tsv_farms", "tile_rows", "tile_cols"}, ctx);
    LayerSpec l;
    const auto role = parse_role(string(j, "role", "", ctx));
    if (!role)
        throw InvalidConfiguration(ctx + ".role: expected one of PackageInterface, SP, SN2, SN1, S0, BondInterface, "
                                         "BEOL, HeatSinkInterface");
    l.role = *role;
    l.thickness = required_number(j, "thickness_um", ctx);
    l.material = j.contains("material") ? material(j["material"], mats, ctx + ".material") : materials::silicon();
    l.has_tsvs = boolean(j, "has_tsvs", false, ctx);
    l.tile_rows = integer(j, "tile_rows", is_device(l.role) ? 4 : 1, ctx);
    l.tile_cols = integer(j, "tile_cols", is_device(l.role) ? 8 : 1, ctx);
    if (j.contains("tsv_farms")) {
        if (!j["tsv_farms"].is_array())
            throw InvalidConfiguration(ctx + ".tsv_farms: expected an array");
        for (std::size_t i = 0; i < j["tsv_farms"].size(); ++i)
            l.tsv_farms.push_back(tsv_farm(j["tsv_farms"][i], mats, ctx + ".tsv_farms[" + std::to_string(i) + "]"));
    }
    return l;
}

inline StackConfig stack(const json& j, const MaterialTable& mats) {
    const std::string ctx = "stack";
    allow_keys(j, {"preset", "die_width_mm", "die_length_mm", "ambient_c", "heat_sink_h", "package_resistance",
                   "layers"},
               ctx);
    StackConfig s;
    if (j.contains("preset")) {
        if (j.contains("layers"))
            throw InvalidConfiguration("stack: give either 'preset' or 'layers', not both");
        try {
            s = preset_stack(integer(j, "preset", 0, ctx));
        } catch (const InvalidArgument& e) {
            throw InvalidConfiguration(std::string("stack.preset: ") + e.what());
        }
    } else {
        if (!j.contains("layers") || !j["layers"].is_array())
            throw InvalidConfiguration("stack: needs 'preset' or a 'layers' array");
        for (std::size_t i = 0; i < j["layers"].size(); ++i)
            s.layers.push_back(layer(j["layers"][i], mats, "stack.layers[" + std::to_string(i) + "]"));
    }
    s.die_width = number(j, "die_width_mm", s.die_width, ctx);
    s.die_length = number(j, "die_length_mm", s.die_length, ctx);
    s.ambient_temperature = number(j, "ambient_c", s.ambient_temperature, ctx);
    s.heat_sink_h = number(j, "heat_sink_h", s.heat_sink_h, ctx);
    s.package_resistance = number(j, "package_resistance", s.package_resistance, ctx);
    return s;
}

/// Layer reference: a stack layer index or a role name such as "SP".
inline int layer_ref(const json& j, const StackConfig& s, const std::string& ctx) {
    if (j.is_number_integer()) {
        const int i = j.get<int>();
        if (i < 0 || i >= static_cast<int>(s.layers.size()))
            throw InvalidConfiguration(ctx + ": layer index " + std::to_string(i) + " is out of range");
        return i;
    }
    if (j.is_string()) {
        const auto role = parse_role(j.get<std::string>());
        for (int i = 0; role && i < static_cast<int>(s.layers.size()); ++i)
            if (s.layers[i].role == *role)
                return i;
        throw InvalidConfiguration(ctx + ": no layer with role '" + j.get<std::string>() + "'");
    }
    throw InvalidConfiguration(ctx + ": layer must be an index or a role name");
}

inline TemporalProfile temporal_profile(const json& j, const std::filesystem::path& base, const std::string& ctx) {
    allow_keys(j, {"constant", "step", "periodic", "trace", "trace_csv"}, ctx);
    if (j.size() != 1)
        throw InvalidConfiguration(ctx + ": exactly one of constant, step, periodic, trace, trace_csv");
    TemporalProfile p;
    if (j.contains("constant")) {
        if (!j["constant"].is_number())
            throw InvalidConfiguration(ctx + ".constant: expected a number");
        p = profile::Constant{j["constant"].get<double>()};
    } else if (j.contains("step")) {
        const auto& s = j["step"];
        allow_keys(s, {"p0", "p1", "t_switch"}, ctx + ".step");
        p = profile::Step{required_number(s, "p0", ctx), required_number(s, "p1", ctx),
                          required_number(s, "t_switch", ctx)};
    } else if (j.contains("periodic")) {
        const auto& s = j["periodic"];
        allow_keys(s, {"p_low", "p_high", "period", "duty"}, ctx + ".periodic");
        p = profile::Periodic{required_number(s, "p_low", ctx), required_number(s, "p_high", ctx),
                              required_number(s, "period", ctx), number(s, "duty", 0.5, ctx)};
    } else if (j.contains("trace")) {
        profile::Trace tr;
        if (!j["trace"].is_array())
            throw InvalidConfiguration(ctx + ".trace: expected [[t, p], ...]");
        for (const auto& e : j["trace"]) {
            if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
                throw InvalidConfiguration(ctx + ".trace: expected [[t, p], ...]");
            tr.samples.emplace_back(e[0].get<double>(), e[1].get<double>());
        }
        p = tr;
    } else {
        p = load_trace_csv(resolve_path(string(j, "trace_csv", "", ctx), base));
    }
    try {
        check_profile(p);
    } catch (const InvalidArgument& e) {
        throw InvalidConfiguration(ctx + ": " + e.what());
    }
    return p;
}

inline CoreProxyPreset preset(const std::string& name, const json& j, const std::string& ctx) {
    allow_keys(j, {"base_density", "pattern"}, ctx);
    CoreProxyPreset p;
    p.name = name;
    p.base_density = required_number(j, "base_density", ctx);
    if (!j.contains("pattern") || !j["pattern"].is_array())
        throw InvalidConfiguration(ctx + ": pattern must be an array of rows");
    for (const auto& row : j["pattern"]) {
        if (!row.is_array())
            throw InvalidConfiguration(ctx + ": pattern must be an array of rows");
        std::vector<double> r;
        for (const auto& v : row) {
            if (!v.is_number())
                throw InvalidConfiguration(ctx + ": pattern entries must be numbers");
            r.push_back(v.get<double>());
        }
        p.pattern.push_back(std::move(r));
    }
    try {
        check_preset(p);
    } catch (const InvalidArgument& e) {
        throw InvalidConfiguration(ctx + ": " + e.what());
    }
    return p;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw IoError(path, "cannot open");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidConfiguration(path + ": " + e.what());
    }
}

inline std::map<std::string, CoreProxyPreset> preset_library(const std::string& path) {
    const json doc = read_json_file(path);
    allow_keys(doc, {"presets"}, "preset library");
    std::map<std::string, CoreProxyPreset> out;
    for (const auto& [name, body] : doc.at("presets").items())
        out[name] = preset(name, body, "presets." + name);
    return out;
}

inline std::string default_preset_library() { return std::string(STACKEMU_DATA_DIR) + "/presets.json"; }

inline PowerMap power(const json& j, const StackConfig& s, const std::filesystem::path& base) {
    const std::string ctx = "power";
    allow_keys(j, {"preset_library", "presets", "layers"}, ctx);
    PowerMap map(s);
    auto library = preset_library(j.contains("preset_library")
                                      ? resolve_path(string(j, "preset_library", "", ctx), base)
                                      : default_preset_library());
    if (j.contains("presets"))
        for (const auto& [name, body] : j["presets"].items())
            library[name] = preset(name, body, ctx + ".presets." + name);

    if (!j.contains("layers"))
        return map;
    if (!j["layers"].is_array())
        throw InvalidConfiguration("power.layers: expected an array");
    for (std::size_t i = 0; i < j["layers"].size(); ++i) {
        const auto& e = j["layers"][i];
        const std::string lc = "power.layers[" + std::to_string(i) + "]";
        allow_keys(e, {"layer", "preset", "uniform", "tiles"}, lc);
        if (!e.contains("layer"))
            throw InvalidConfiguration(lc + ": missing 'layer'");
        const int l = layer_ref(e["layer"], s, lc + ".layer");
        if (!is_device(s.layers[l].role))
            throw InvalidConfiguration(lc + ": layer " + std::to_string(l) + " is not a die");
        try {
            if (e.contains("preset")) {
                const auto name = string(e, "preset", "", lc);
                auto it = library.find(name);
                if (it == library.end())
                    throw InvalidConfiguration(lc + ": unknown preset '" + name + "'");
                map = apply_preset(std::move(map), l, it->second);
            }
            if (e.contains("uniform")) {
                const auto prof = temporal_profile(e["uniform"], base, lc + ".uniform");
                for (int t = 0; t < map.tile_count(l); ++t)
                    map = set_tile_power(std::move(map), l, t, prof);
            }
            if (e.contains("tiles")) {
                for (std::size_t k = 0; k < e["tiles"].size(); ++k) {
                    const auto& te = e["tiles"][k];
                    const std::string tc = lc + ".tiles[" + std::to_string(k) + "]";
                    allow_keys(te, {"tile", "profile"}, tc);
                    if (!te.contains("profile"))
                        throw InvalidConfiguration(tc + ": missing 'profile'");
                    map = set_tile_power(std::move(map), l, integer(te, "tile", -1, tc),
                                         temporal_profile(te["profile"], base, tc + ".profile"));
                }
            }
        } catch (const InvalidArgument& err) {
            throw InvalidConfiguration(lc + ": " + err.what());
        }
    }
    return map;
}

inline SensorSite site(const json& j, const StackConfig& s, const std::string& ctx) {
    allow_keys(j, {"layer", "x_mm", "y_mm"}, ctx);
    if (!j.contains("layer"))
        throw InvalidConfiguration(ctx + ": missing 'layer'");
    return {layer_ref(j["layer"], s, ctx + ".layer"), required_number(j, "x_mm", ctx), required_number(j, "y_mm", ctx)};
}

inline SensorSetup sensors(const json& j, const StackConfig& s, const std::filesystem::path& base) {
    const std::string ctx = "sensors";
    allow_keys(j, {"sites", "count", "candidates", "training_csv", "noise_sigma", "quantization_step", "sample_period"},
               ctx);
    SensorSetup out;
    out.noise_sigma = number(j, "noise_sigma", out.noise_sigma, ctx);
    out.quantization_step = number(j, "quantization_step", out.quantization_step, ctx);
    out.sample_period = number(j, "sample_period", out.sample_period, ctx);
    out.greedy_count = integer(j, "count", 0, ctx);
    if (out.greedy_count < 0)
        throw InvalidConfiguration("sensors.count must be non-negative");
    if (j.contains("sites"))
        for (std::size_t i = 0; i < j["sites"].size(); ++i)
            out.fixed.push_back({site(j["sites"][i], s, ctx + ".sites[" + std::to_string(i) + "]"), out.noise_sigma,
                                 out.quantization_step, out.sample_period});
    if (j.contains("candidates") && !is_keyword(j["candidates"], "tile_centers")) {
        std::vector<SensorSite> c;
        for (std::size_t i = 0; i < j["candidates"].size(); ++i)
            c.push_back(site(j["candidates"][i], s, ctx + ".candidates[" + std::to_string(i) + "]"));
        out.candidates = c;
    }
    if (j.contains("training_csv"))
        for (const auto& p : j["training_csv"])
            out.training_csv.push_back(resolve_path(p.get<std::string>(), base));
    if (out.fixed.empty() && out.greedy_count == 0)
        throw InvalidConfiguration("sensors: give 'sites', a positive 'count', or use \"disabled\"");
    return out;
}

inline PdnSetup pdn(const json& j, const StackConfig& s) {
    const std::string ctx = "pdn";
    allow_keys(j, {"vdd", "sheet_resistance", "r_c4", "r_uc4", "r_tsv", "decap", "loop_inductance", "nx", "ny",
                   "via_stride", "aggressor", "aggressor_step_a"},
               ctx);
    PdnSetup out;
    auto& p = out.params;
    p.vdd = number(j, "vdd", p.vdd, ctx);
    p.sheet_resistance = number(j, "sheet_resistance", p.sheet_resistance, ctx);
    p.r_c4 = number(j, "r_c4", p.r_c4, ctx);
    p.r_uc4 = number(j, "r_uc4", p.r_uc4, ctx);
    p.r_tsv = number(j, "r_tsv", p.r_tsv, ctx);
    p.decap = number(j, "decap", p.decap, ctx);
    p.loop_inductance = number(j, "loop_inductance", p.loop_inductance, ctx);
    p.nx = integer(j, "nx", p.nx, ctx);
    p.ny = integer(j, "ny", p.ny, ctx);
    p.via_stride = integer(j, "via_stride", p.via_stride, ctx);
    if (j.contains("aggressor"))
        out.aggressor_layer = layer_ref(j["aggressor"], s, ctx + ".aggressor");
    out.aggressor_step = number(j, "aggressor_step_a", out.aggressor_step, ctx);
    return out;
}

inline ReliabilityParams reliability(const json& j) {
    const std::string ctx = "reliability";
    allow_keys(j, {"activation_energy_ev", "reference_c", "cycling_exponent", "reference_swing_k", "stress_percentile",
                   "cte_weights", "default_cte_weight"},
               ctx);
    ReliabilityParams p;
    p.activation_energy = number(j, "activation_energy_ev", p.activation_energy, ctx);
    p.reference_temperature = number(j, "reference_c", p.reference_temperature, ctx);
    p.cycling_exponent = number(j, "cycling_exponent", p.cycling_exponent, ctx);
    p.reference_swing = number(j, "reference_swing_k", p.reference_swing, ctx);
    p.stress_percentile = number(j, "stress_percentile", p.stress_percentile, ctx);
    p.default_cte_weight = number(j, "default_cte_weight", p.default_cte_weight, ctx);
    if (j.contains("cte_weights"))
        for (const auto& [k, v] : j["cte_weights"].items())
            p.cte_weights[k] = v.get<double>();
    try {
        check_params(p);
    } catch (const InvalidArgument& e) {
        throw InvalidConfiguration(std::string("reliability: ") + e.what());
    }
    return p;
}

inline SolveOptions solve(const json& j) {
    const std::string ctx = "solve";
    allow_keys(j, {"method", "tolerance", "max_iterations", "sor_omega", "deterministic"}, ctx);
    SolveOptions o;
    const auto m = string(j, "method", "cg", ctx);
    if (m == "cg") o.method = SolveMethod::CG;
    else if (m == "sor") o.method = SolveMethod::SOR;
    else throw InvalidConfiguration("solve.method: expected 'cg' or 'sor'");
    o.tolerance = number(j, "tolerance", o.tolerance, ctx);
    o.max_iterations = integer(j, "max_iterations", o.max_iterations, ctx);
    o.sor_omega = number(j, "sor_omega", o.sor_omega, ctx);
    o.deterministic = boolean(j, "deterministic", o.deterministic, ctx);
    try {
        check_options(o);
    } catch (const InvalidArgument& e) {
        throw InvalidConfiguration(std::string("solve: ") + e.what());
    }
    return o;
}

inline TransientSpec transient(const json& j) {
    const std::string ctx = "transient";
    allow_keys(j, {"t_end", "dt", "sample_stride", "policy_period", "initial"}, ctx);
    TransientSpec t;
    t.t_end = required_number(j, "t_end", ctx);
    t.dt = required_number(j, "dt", ctx);
    t.sample_stride = integer(j, "sample_stride", t.sample_stride, ctx);
    t.policy_period = integer(j, "policy_period", t.policy_period, ctx);
    const auto init = string(j, "initial", "ambient", ctx);
    if (init != "ambient" && init != "steady")
        throw InvalidConfiguration("transient.initial: expected 'ambient' or 'steady'");
    t.start_from_steady = init == "steady";
    if (!(t.t_end > 0) || !(t.dt > 0) || t.sample_stride < 1 || t.policy_period < 1)
        throw InvalidConfiguration("transient: t_end, dt must be positive; sample_stride, policy_period >= 1");
    return t;
}

inline TileRef tile_ref(const json& j, const StackConfig& s, const std::string& ctx) {
    allow_keys(j, {"layer", "tile"}, ctx);
    if (!j.contains("layer"))
        throw InvalidConfiguration(ctx + ": missing 'layer'");
    TileRef t{layer_ref(j["layer"], s, ctx + ".layer"), integer(j, "tile", -1, ctx)};
    const auto& l = s.layers[t.layer];
    if (!is_device(l.role) || t.tile < 0 || t.tile >= l.tile_rows * l.tile_cols)
        throw InvalidConfiguration(ctx + ": tile reference out of range");
    return t;
}

inline DtmPolicy policy(const json& j, const StackConfig& s) {
    const std::string ctx = "policy";
    allow_keys(j, {"throttle", "core_swap"}, ctx);
    if (j.size() != 1)
        throw InvalidConfiguration("policy: exactly one of 'throttle' or 'core_swap'");
    DtmPolicy p;
    if (j.contains("throttle")) {
        const auto& t = j["throttle"];
        allow_keys(t, {"trigger_c", "release_c", "factor"}, ctx + ".throttle");
        p = ThrottlePolicy{required_number(t, "trigger_c", ctx), required_number(t, "release_c", ctx),
                           required_number(t, "factor", ctx)};
    } else {
        const auto& t = j["core_swap"];
        allow_keys(t, {"trigger_c", "release_c", "pairs"}, ctx + ".core_swap");
        CoreSwapPolicy cs{required_number(t, "trigger_c", ctx), required_number(t, "release_c", ctx), {}};
        if (t.contains("pairs"))
            for (std::size_t i = 0; i < t["pairs"].size(); ++i) {
                const auto& pr = t["pairs"][i];
                const std::string pc = ctx + ".core_swap.pairs[" + std::to_string(i) + "]";
                if (!pr.is_array() || pr.size() != 2)
                    throw InvalidConfiguration(pc + ": expected a two-element array");
                cs.pairs.emplace_back(tile_ref(pr[0], s, pc + "[0]"), tile_ref(pr[1], s, pc + "[1]"));
            }
        p = cs;
    }
    try {
        check_policy(p);
    } catch (const InvalidArgument& e) {
        throw InvalidConfiguration(std::string("policy: ") + e.what());
    }
    return p;
}

inline std::string fnv1a_hex(const std::string& text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

} // namespace config

/// Builds a Scenario from a parsed document; relative paths resolve against `base`.
inline Scenario parse_scenario(const json& doc, const std::filesystem::path& base = ".") {
    using namespace config;
    allow_keys(doc, {"name", "seed", "materials", "stack", "grid", "power", "sensors", "pdn", "reliability", "solve",
                     "transient", "policy"},
               "scenario");
    Scenario sc;
    sc.name = string(doc, "name", sc.name, "scenario");
    if (doc.contains("seed")) {
        const auto& js = doc["seed"];
        if (!js.is_number_integer() || (!js.is_number_unsigned() && js.get<std::int64_t>() < 0))
            throw InvalidConfiguration("scenario.seed: expected a non-negative integer");
        sc.seed = doc["seed"].get<std::uint64_t>();
    }

    auto mats = builtin_materials();
    if (doc.contains("materials"))
        for (const auto& [name, body] : doc["materials"].items()) {
            const std::string mc = "materials." + name;
            allow_keys(body, {"k", "k_lateral", "heat_capacity"}, mc);
            Material m{name, required_number(body, "k", mc), required_number(body, "heat_capacity", mc),
                       std::nullopt};
            if (body.contains("k_lateral"))
                m.k_lateral = number(body, "k_lateral", 0, mc);
            mats[name] = m;
        }

    if (!doc.contains("stack"))
        throw InvalidConfiguration("scenario: missing 'stack'");
    sc.stack = stack(doc["stack"], mats);
    if (auto vs = validate_stack(sc.stack); !vs.empty()) {
        std::vector<std::string> details;
        for (const auto& v : vs)
            details.push_back(describe({v}));
        throw InvalidConfiguration("stack configuration is invalid:\n" + describe(vs), details);
    }

    if (doc.contains("grid")) {
        const auto& g = doc["grid"];
        allow_keys(g, {"nx", "ny", "sub_slabs"}, "grid");
        sc.nx = integer(g, "nx", sc.nx, "grid");
        sc.ny = integer(g, "ny", sc.ny, "grid");
        sc.sub_slabs = integer(g, "sub_slabs", sc.sub_slabs, "grid");
        if (sc.nx < 1 || sc.ny < 1 || sc.sub_slabs < 1)
            throw InvalidConfiguration("grid: nx, ny and sub_slabs must be positive");
    }

    sc.power = doc.contains("power") ? power(doc["power"], sc.stack, base) : PowerMap(sc.stack);

    if (doc.contains("sensors") && !is_keyword(doc["sensors"], "disabled"))
        sc.sensors = sensors(doc["sensors"], sc.stack, base);
    if (doc.contains("pdn") && !is_keyword(doc["pdn"], "disabled"))
        sc.pdn = pdn(doc["pdn"], sc.stack);
    if (doc.contains("reliability") && !is_keyword(doc["reliability"], "disabled"))
        sc.reliability = reliability(doc["reliability"]);
    if (doc.contains("solve"))
        sc.solve = solve(doc["solve"]);
    if (doc.contains("transient") && !is_keyword(doc["transient"], "steady-only"))
        sc.transient = transient(doc["transient"]);
    if (doc.contains("policy") && !is_keyword(doc["policy"], "none")) {
        sc.policy = policy(doc["policy"], sc.stack);
        if (!sc.sensors)
            throw InvalidConfiguration("policy: a thermal management policy needs sensors");
        if (!sc.transient)
            throw InvalidConfiguration("policy: a thermal management policy needs a transient section");
    }
    sc.config_hash = fnv1a_hex(doc.dump());
    return sc;
}

inline Scenario load_scenario(const std::string& path) {
    const json doc = config::read_json_file(path);
    return parse_scenario(doc, std::filesystem::path(path).parent_path());
}

} // namespace stackemu
