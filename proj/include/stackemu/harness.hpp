#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <future>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "stackemu/config.hpp"
#include "stackemu/errors.hpp"
#include "stackemu/field_io.hpp"
#include "stackemu/grid.hpp"
#include "stackemu/pdn.hpp"
#include "stackemu/power.hpp"
#include "stackemu/reliability.hpp"
#include "stackemu/scenario.hpp"
#include "stackemu/sensors.hpp"
#include "stackemu/thermal.hpp"

namespace stackemu {

inline constexpr const char* version_string = "stackemu 0.1.0";

enum class ErrorKind { Validation, Numerical, Io };

/// Any failure inside run_scenario, tagged with the pipeline stage.
class StageError : public std::runtime_error {
  public:
    StageError(std::string stage, ErrorKind kind, const std::string& what)
        : std::runtime_error(stage + ": " + what), stage_(std::move(stage)), kind_(kind) {}

    const std::string& stage() const noexcept { return stage_; }
    ErrorKind kind() const noexcept { return kind_; }

  private:
    std::string stage_;
    ErrorKind kind_;
};

/// Maps exception types onto the CLI's exit-code classes.
inline ErrorKind classify(const std::exception& e) {
    if (auto* s = dynamic_cast<const StageError*>(&e)) return s->kind();
    if (dynamic_cast<const IoError*>(&e)) return ErrorKind::Io;
    if (dynamic_cast<const ConvergenceFailure*>(&e) || dynamic_cast<const NumericalFailure*>(&e))
        return ErrorKind::Numerical;
    return ErrorKind::Validation;
}

template <class F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, classify(e), e.what());
    }
}

// ---------------------------------------------------------------------------
// Run-time thermal management

struct PolicyEvent {
    double time = 0;
    std::string action;  // throttle, release, swap, unswap
    int layer = -1;      // stack layer acted on; -1 for stack-wide actions
    int sensor = -1;     // sensor whose reading crossed the threshold
    double reading = 0;
};

struct PolicyEvaluation {
    double time = 0;
    std::vector<double> readings;
};

/// Hysteresis controller acting on sensor readings only. The engine is a pure
/// state machine: feeding it the same evaluations yields the same events.
class PolicyEngine {
  public:
    PolicyEngine(DtmPolicy policy, std::vector<int> sensor_layers, int layer_count)
        : policy_(std::move(policy)), sensor_layers_(std::move(sensor_layers)), throttled_(layer_count, false) {
        check_policy(policy_);
    }

    std::vector<PolicyEvent> evaluate(double time, const std::vector<double>& readings) {
        if (readings.size() != sensor_layers_.size())
            throw InvalidArgument("policy: reading count does not match the sensor count");
        std::vector<PolicyEvent> events;
        if (auto* th = std::get_if<ThrottlePolicy>(&policy_)) {
            for (int l = 0; l < static_cast<int>(throttled_.size()); ++l) {
                int hot = -1;
                for (std::size_t k = 0; k < readings.size(); ++k)
                    if (sensor_layers_[k] == l && (hot < 0 || readings[k] > readings[hot]))
                        hot = static_cast<int>(k);
                if (hot < 0)
                    continue;
                if (!throttled_[l] && readings[hot] >= th->trigger_c) {
                    throttled_[l] = true;
                    events.push_back({time, "throttle", l, hot, readings[hot]});
                } else if (throttled_[l] && readings[hot] < th->release_c) {
                    throttled_[l] = false;
                    events.push_back({time, "release", l, hot, readings[hot]});
                }
            }
        } else {
            const auto& cs = std::get<CoreSwapPolicy>(policy_);
            if (readings.empty())
                return events;
            const int hot = static_cast<int>(std::max_element(readings.begin(), readings.end()) - readings.begin());
            if (!swapped_ && readings[hot] >= cs.trigger_c) {
                swapped_ = true;
                events.push_back({time, "swap", -1, hot, readings[hot]});
            } else if (swapped_ && readings[hot] < cs.release_c) {
                swapped_ = false;
                events.push_back({time, "unswap", -1, hot, readings[hot]});
            }
        }
        return events;
    }

    /// Tile densities after the active management actions.
    std::vector<std::vector<double>> apply(std::vector<std::vector<double>> dens) const {
        if (auto* th = std::get_if<ThrottlePolicy>(&policy_)) {
            for (std::size_t l = 0; l < dens.size(); ++l)
                if (throttled_[l])
                    for (double& d : dens[l])
                        d *= th->throttle_factor;
        } else if (swapped_) {
            for (const auto& [a, b] : std::get<CoreSwapPolicy>(policy_).pairs)
                std::swap(dens.at(a.layer).at(a.tile), dens.at(b.layer).at(b.tile));
        }
        return dens;
    }

  private:
    DtmPolicy policy_;
    std::vector<int> sensor_layers_;
    std::vector<bool> throttled_;
    bool swapped_ = false;
};

// ---------------------------------------------------------------------------
// Report

struct SteadySection {
    std::vector<LayerStats> layers;
    double total_power = 0;     // W
    double boundary_flow = 0;   // W
};

struct SensorSection {
    std::vector<SensorSite> sites;
    std::optional<double> placement_objective;
    std::optional<HotspotError> hotspot_error;
    std::vector<double> steady_readings;
};

struct TransientSection {
    std::vector<double> times;
    std::vector<std::vector<double>> layer_max;  // [sample][die]
    std::vector<LayerStats> final_layers;
    std::optional<double> final_max_reading;
    std::vector<PolicyEvaluation> evaluations;
    std::vector<PolicyEvent> events;
};

struct PdnSection {
    std::vector<int> layers;
    std::vector<LayerRole> roles;
    std::vector<double> max_drop, mean_drop, droop;  // V
    double total_current = 0, supply_current = 0;     // A
    std::optional<int> aggressor;
    std::vector<CouplingEntry> coupling;
};

struct ScenarioReport {
    std::string name;
    std::uint64_t seed = 0;
    std::string config_hash;
    bool deterministic = true;

    SteadySection steady;
    std::optional<SensorSection> sensors;
    std::optional<TransientSection> transient;
    std::optional<PdnSection> pdn;
    std::optional<ReliabilityReport> reliability;

    // Retained for export.
    std::shared_ptr<const VoxelGrid> grid;
    TemperatureField steady_field;
    std::optional<TemperatureField> final_field;
    std::optional<PdnGrid> pdn_grid;
    std::vector<double> pdn_drop;
};

namespace detail {

inline TemperatureField ambient_field(const VoxelGrid& g, double ambient) {
    return {g.nx, g.ny, g.nz, std::vector<double>(g.size(), ambient), 0.0};
}

inline SensorNetwork build_network(const Scenario& sc, const VoxelGrid& grid, const TemperatureField& steady,
                                   SensorSection& section) {
    const auto& setup = *sc.sensors;
    SensorNetwork net;
    net.rng_seed = sc.seed;
    net.sensors = setup.fixed;
    net.candidate_sites = setup.candidates.value_or(default_candidates(grid));

    std::vector<TemperatureField> training{steady};
    for (const auto& p : setup.training_csv)
        training.push_back(read_field_csv(p, grid));

    if (setup.greedy_count > 0) {
        std::vector<SensorSite> pool;
        for (const auto& c : net.candidate_sites)
            if (std::none_of(net.sensors.begin(), net.sensors.end(),
                             [&](const SensorSpec& s) { return s.location == c; }))
                pool.push_back(c);
        const auto placed = place_sensors_greedy(pool, setup.greedy_count, training, grid);
        section.placement_objective = placed.objective;
        for (const auto& s : placed.sites)
            net.sensors.push_back({s, setup.noise_sigma, setup.quantization_step, setup.sample_period});
    }
    check_network(net, grid);
    for (const auto& s : net.sensors)
        section.sites.push_back(s.location);
    section.hotspot_error = hotspot_error(section.sites, training, grid);
    section.steady_readings = read_sensors(net, steady, grid, 0.0);
    return net;
}

} // namespace detail

/// Runs the full pipeline: discretize, steady solve, sensors, transient with
/// optional management policy, power delivery and reliability.
inline ScenarioReport run_scenario(const Scenario& sc) {
    ScenarioReport rep;
    rep.name = sc.name;
    rep.seed = sc.seed;
    rep.config_hash = sc.config_hash;
    rep.deterministic = sc.solve.deterministic;

    auto grid = run_stage("stack", [&] {
        return std::make_shared<const VoxelGrid>(discretize(sc.stack, sc.nx, sc.ny, sc.sub_slabs));
    });
    rep.grid = grid;
    const auto sys = run_stage("assemble", [&] { return assemble(*grid, sc.stack); });

    rep.steady_field = run_stage("steady", [&] {
        return solve_steady(sys, power_density_field(sc.power, *grid, 0.0), sc.solve);
    });
    rep.steady.layers = layer_summary(rep.steady_field, *grid);
    rep.steady.total_power = total_power(sc.power, 0.0);
    rep.steady.boundary_flow = boundary_heat_flow(sys, rep.steady_field);

    std::optional<SensorNetwork> net;
    if (sc.sensors) {
        rep.sensors.emplace();
        net = run_stage("sensors", [&] { return detail::build_network(sc, *grid, rep.steady_field, *rep.sensors); });
    }

    std::vector<std::vector<double>> die_traces;  // [die][sample]
    if (sc.transient) {
        rep.transient = run_stage("transient", [&] {
            const auto& tr = *sc.transient;
            TransientSection out;
            std::optional<PolicyEngine> engine;
            if (sc.policy) {
                std::vector<int> layers;
                for (const auto& s : net->sensors)
                    layers.push_back(s.location.layer);
                engine.emplace(*sc.policy, layers, grid->layer_count());
            }
            TemperatureField T = tr.start_from_steady ? rep.steady_field : detail::ambient_field(*grid, sc.stack.ambient_temperature);
            T.time = 0.0;
            const auto first = layer_summary(T, *grid);
            die_traces.assign(first.size(), {});
            for (std::size_t d = 0; d < first.size(); ++d)
                die_traces[d].push_back(first[d].max);

            const long steps = static_cast<long>(std::ceil(tr.t_end / tr.dt - 1e-9));
            TransientStepper stepper(sys, tr.dt, sc.solve);
            for (long k = 1; k <= steps; ++k) {
                const double t = (k - 1) * tr.dt;
                const double h = std::min(tr.dt, tr.t_end - t);
                auto dens = tile_densities(sc.power, t);
                if (engine)
                    dens = engine->apply(std::move(dens));
                const auto src = power_density_field(dens, *grid);
                T = h < tr.dt * (1 - 1e-12) ? step_transient(sys, T, src, h, sc.solve) : stepper.step(T, src);
                T.time = k == steps ? tr.t_end : k * tr.dt;
                if (k % tr.sample_stride == 0 || k == steps) {
                    out.times.push_back(*T.time);
                    std::vector<double> row;
                    for (const auto& s : layer_summary(T, *grid))
                        row.push_back(s.max);
                    for (std::size_t d = 0; d < row.size(); ++d)
                        die_traces[d].push_back(row[d]);
                    out.layer_max.push_back(std::move(row));
                }
                if (engine && k % tr.policy_period == 0) {
                    auto readings = read_sensors(*net, T, *grid, *T.time);
                    for (auto& e : engine->evaluate(*T.time, readings))
                        out.events.push_back(std::move(e));
                    out.evaluations.push_back({*T.time, std::move(readings)});
                }
            }
            out.final_layers = layer_summary(T, *grid);
            if (net) {
                const auto r = read_sensors(*net, T, *grid, *T.time);
                if (!r.empty())
                    out.final_max_reading = *std::max_element(r.begin(), r.end());
            }
            rep.final_field = T;
            return out;
        });
    }

    if (sc.pdn) {
        rep.pdn = run_stage("pdn", [&] {
            PdnSection out;
            auto pdn = build_pdn(sc.stack, sc.pdn->params);
            const auto cur = currents_from_power(pdn, sc.power, 0.0);
            rep.pdn_drop = solve_ir_drop(pdn, cur, sc.solve);
            out.layers = pdn.plane_layer;
            out.roles = pdn.plane_role;
            out.max_drop = plane_max(pdn, rep.pdn_drop);
            for (int p = 0; p < pdn.planes(); ++p) {
                double s = 0;
                for (std::size_t c = 0; c < pdn.nodes_per_plane(); ++c)
                    s += rep.pdn_drop[p * pdn.nodes_per_plane() + c];
                out.mean_drop.push_back(s / static_cast<double>(pdn.nodes_per_plane()));
            }
            out.droop = worst_case_droop(pdn, CurrentMap(pdn.size(), 0.0), cur, sc.solve);
            for (double c : cur)
                out.total_current += c;
            out.supply_current = supply_current(pdn, rep.pdn_drop);
            if (sc.pdn->aggressor_layer) {
                out.aggressor = sc.pdn->aggressor_layer;
                out.coupling = coupling_report(pdn, *sc.pdn->aggressor_layer, sc.pdn->aggressor_step, sc.solve);
            }
            rep.pdn_grid = std::move(pdn);
            return out;
        });
    }

    if (sc.reliability) {
        rep.reliability = run_stage("reliability", [&] {
            return reliability_report(rep.steady_field, *grid, sc.stack, die_traces, *sc.reliability);
        });
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Text rendering

namespace detail {

using ojson = nlohmann::ordered_json;

inline ojson layer_stats_json(const std::vector<LayerStats>& ls) {
    ojson a = ojson::array();
    for (const auto& s : ls)
        a.push_back({{"layer", s.layer},
                     {"role", std::string(to_string(s.role))},
                     {"mean_c", s.mean},
                     {"max_c", s.max},
                     {"min_c", s.min},
                     {"hotspot", {{"ix", s.hot_ix}, {"iy", s.hot_iy}, {"iz", s.hot_iz}, {"x_mm", s.hot_x_mm}, {"y_mm", s.hot_y_mm}}}});
    return a;
}

} // namespace detail

/// Everything except provenance; identical inputs give identical bodies.
inline nlohmann::ordered_json report_body(const ScenarioReport& r) {
    using detail::ojson;
    ojson doc;
    doc["scenario"] = r.name;
    doc["steady"] = {{"total_power_w", r.steady.total_power},
                     {"boundary_heat_flow_w", r.steady.boundary_flow},
                     {"layers", detail::layer_stats_json(r.steady.layers)}};

    if (r.sensors) {
        ojson s;
        ojson sites = ojson::array();
        for (const auto& site : r.sensors->sites)
            sites.push_back({{"layer", site.layer}, {"x_mm", site.x_mm}, {"y_mm", site.y_mm}});
        s["sites"] = sites;
        s["placement_objective_k"] = r.sensors->placement_objective ? ojson(*r.sensors->placement_objective) : ojson(nullptr);
        if (r.sensors->hotspot_error)
            s["hotspot_error_k"] = {{"mean", r.sensors->hotspot_error->mean}, {"max", r.sensors->hotspot_error->max}};
        else
            s["hotspot_error_k"] = "unobserved";
        s["steady_readings_c"] = r.sensors->steady_readings;
        doc["sensors"] = s;
    } else {
        doc["sensors"] = "disabled";
    }

    if (r.transient) {
        const auto& t = *r.transient;
        ojson s;
        s["samples"] = ojson::array();
        for (std::size_t i = 0; i < t.times.size(); ++i)
            s["samples"].push_back({{"t_s", t.times[i]}, {"layer_max_c", t.layer_max[i]}});
        s["final_layers"] = detail::layer_stats_json(t.final_layers);
        s["final_max_reading_c"] = t.final_max_reading ? ojson(*t.final_max_reading) : ojson(nullptr);
        s["policy_evaluations"] = ojson::array();
        for (const auto& e : t.evaluations)
            s["policy_evaluations"].push_back({{"t_s", e.time}, {"readings_c", e.readings}});
        s["events"] = ojson::array();
        for (const auto& e : t.events)
            s["events"].push_back({{"t_s", e.time}, {"action", e.action}, {"layer", e.layer}, {"sensor", e.sensor},
                                   {"reading_c", e.reading}});
        doc["transient"] = s;
    } else {
        doc["transient"] = "steady-only";
    }

    if (r.pdn) {
        const auto& p = *r.pdn;
        ojson s;
        s["layers"] = ojson::array();
        for (std::size_t i = 0; i < p.layers.size(); ++i)
            s["layers"].push_back({{"layer", p.layers[i]},
                                   {"role", std::string(to_string(p.roles[i]))},
                                   {"max_drop_mv", p.max_drop[i] * 1e3},
                                   {"mean_drop_mv", p.mean_drop[i] * 1e3},
                                   {"peak_droop_mv", p.droop[i] * 1e3}});
        s["total_current_a"] = p.total_current;
        s["supply_current_a"] = p.supply_current;
        if (p.aggressor) {
            s["aggressor_layer"] = *p.aggressor;
            s["coupling"] = ojson::array();
            for (const auto& c : p.coupling)
                s["coupling"].push_back({{"layer", c.layer}, {"role", std::string(to_string(c.role))},
                                         {"max_induced_drop_mv", c.max_induced_drop * 1e3}});
        }
        doc["pdn"] = s;
    } else {
        doc["pdn"] = "disabled";
    }

    if (r.reliability) {
        ojson s;
        s["layers"] = ojson::array();
        for (const auto& l : r.reliability->layers) {
            ojson hs = ojson::array();
            for (std::size_t i = 0; i < l.stress_hotspots.size() && i < 10; ++i) {
                const auto& h = l.stress_hotspots[i];
                hs.push_back({{"ix", h.ix}, {"iy", h.iy}, {"iz", h.iz}, {"score", h.score}});
            }
            s["layers"].push_back({{"layer", l.layer},
                                   {"role", std::string(to_string(l.role))},
                                   {"max_c", l.max_temperature},
                                   {"em_acceleration", l.em_acceleration},
                                   {"cycling_damage", l.cycling_damage},
                                   {"stress_hotspot_count", l.stress_hotspots.size()},
                                   {"top_stress_hotspots", hs}});
        }
        s["min_mttf_layer"] = r.reliability->min_mttf_layer;
        doc["reliability"] = s;
    } else {
        doc["reliability"] = "disabled";
    }
    return doc;
}

inline std::string report_text(const ScenarioReport& r) {
    auto doc = report_body(r);
    doc["provenance"] = {{"config_hash", r.config_hash},
                         {"seed", r.seed},
                         {"deterministic", r.deterministic},
                         {"version", version_string}};
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Comparison

/// Worker cap from STACKEMU_THREADS (0 or unset: hardware concurrency).
inline unsigned worker_count() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* v = std::getenv("STACKEMU_THREADS")) {
        const long n = std::strtol(v, nullptr, 10);
        if (n > 0)
            return static_cast<unsigned>(n);
    }
    return hw;
}

struct ComparisonRow {
    std::string name;
    std::vector<std::pair<std::string, double>> layer_max;  // (role, max degC)
    double max_temperature = 0;
    std::optional<double> max_pdn_drop;      // V
    std::optional<std::string> min_mttf_layer;  // role
};

/// Runs every scenario (concurrently, up to the worker cap) and tabulates
/// the results sorted by scenario name.
inline std::vector<ComparisonRow> compare_scenarios(const std::vector<Scenario>& scenarios) {
    if (scenarios.size() < 2)
        throw InvalidArgument("compare needs at least two scenarios");
    std::vector<ScenarioReport> reports(scenarios.size());
    const unsigned workers = worker_count();
    for (std::size_t start = 0; start < scenarios.size(); start += workers) {
        std::vector<std::future<ScenarioReport>> batch;
        for (std::size_t i = start; i < std::min(scenarios.size(), start + workers); ++i)
            batch.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred,
                                       [&sc = scenarios[i]] { return run_scenario(sc); }));
        for (std::size_t i = 0; i < batch.size(); ++i)
            reports[start + i] = batch[i].get();
    }

    std::vector<ComparisonRow> rows;
    for (const auto& r : reports) {
        ComparisonRow row;
        row.name = r.name;
        row.max_temperature = r.steady_field.max();
        for (const auto& s : r.steady.layers)
            row.layer_max.emplace_back(std::string(to_string(s.role)), s.max);
        if (r.pdn && !r.pdn->max_drop.empty())
            row.max_pdn_drop = *std::max_element(r.pdn->max_drop.begin(), r.pdn->max_drop.end());
        if (r.reliability && r.reliability->min_mttf_layer >= 0)
            row.min_mttf_layer = std::string(to_string(r.grid->layer_roles[r.reliability->min_mttf_layer]));
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return rows;
}

inline std::string comparison_text(const std::vector<ComparisonRow>& rows) {
    std::vector<std::string> roles;
    for (const auto& r : rows)
        for (const auto& [role, v] : r.layer_max)
            if (std::find(roles.begin(), roles.end(), role) == roles.end())
                roles.push_back(role);
    std::size_t name_w = 8;
    for (const auto& r : rows)
        name_w = std::max(name_w, r.name.size());

    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w)) << "scenario";
    for (const auto& role : roles)
        os << "  " << std::right << std::setw(10) << ("max_" + role);
    os << "  " << std::setw(12) << "max_drop_mv" << "  " << std::setw(8) << "min_mttf" << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : rows) {
        os << std::left << std::setw(static_cast<int>(name_w)) << r.name << std::right;
        for (const auto& role : roles) {
            auto it = std::find_if(r.layer_max.begin(), r.layer_max.end(), [&](const auto& p) { return p.first == role; });
            os << "  " << std::setw(10);
            if (it == r.layer_max.end()) os << "-";
            else os << it->second;
        }
        os << "  " << std::setw(12);
        if (r.max_pdn_drop) os << *r.max_pdn_drop * 1e3;
        else os << "-";
        os << "  " << std::setw(8) << r.min_mttf_layer.value_or("-") << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Export

enum class ExportFormat { Csv, Pgm, Text };

inline std::optional<ExportFormat> parse_export_format(const std::string& s) {
    if (s == "csv") return ExportFormat::Csv;
    if (s == "pgm") return ExportFormat::Pgm;
    if (s == "text") return ExportFormat::Text;
    return std::nullopt;
}

/// Writes the report in one format under `prefix`; returns the written paths.
/// Nothing is written if any target already exists and `force` is false.
inline std::vector<std::string> export_report(const ScenarioReport& r, ExportFormat format, const std::string& prefix,
                                              bool force) {
    if (!r.grid)
        throw InvalidArgument("report is incomplete: no grid");
    const auto& g = *r.grid;
    struct Job {
        std::string path;
        std::function<void(const std::string&)> write;
    };
    std::vector<Job> jobs;

    auto plane_values_mv = [&](int plane) {
        std::vector<double> v(r.pdn_grid->nodes_per_plane());
        for (std::size_t c = 0; c < v.size(); ++c)
            v[c] = r.pdn_drop[plane * r.pdn_grid->nodes_per_plane() + c] * 1e3;
        return v;
    };

    switch (format) {
    case ExportFormat::Csv:
        jobs.push_back({prefix + "_steady_field.csv",
                        [&](const std::string& p) { write_field_csv(p, r.steady_field, g, true); }});
        if (r.final_field)
            jobs.push_back({prefix + "_transient_final_field.csv",
                            [&](const std::string& p) { write_field_csv(p, *r.final_field, g, true); }});
        if (r.sensors)
            jobs.push_back({prefix + "_sensors.csv",
                            [&](const std::string& p) { write_placement_csv(p, r.sensors->sites, true); }});
        if (r.reliability)
            jobs.push_back({prefix + "_stress_hotspots.csv", [&](const std::string& p) {
                                auto out = open_output(p, true);
                                out << "layer,z,y,x,score\n";
                                for (const auto& l : r.reliability->layers)
                                    for (const auto& h : l.stress_hotspots)
                                        out << h.layer << ',' << h.iz << ',' << h.iy << ',' << h.ix << ','
                                            << format_exact(h.score) << '\n';
                                if (!out) throw IoError(p, "write failed");
                            }});
        if (r.pdn_grid)
            jobs.push_back({prefix + "_pdn_drop.csv", [&](const std::string& p) {
                                const auto& pg = *r.pdn_grid;
                                auto out = open_output(p, true);
                                out << "layer,z,y,x,drop_mv\n";
                                for (int pl = 0; pl < pg.planes(); ++pl)
                                    for (int iy = 0; iy < pg.ny; ++iy)
                                        for (int ix = 0; ix < pg.nx; ++ix)
                                            out << pg.plane_layer[pl] << ',' << pl << ',' << iy << ',' << ix << ','
                                                << format_exact(r.pdn_drop[pg.node(pl, ix, iy)] * 1e3) << '\n';
                                if (!out) throw IoError(p, "write failed");
                            }});
        break;
    case ExportFormat::Pgm: {
        const double lo = r.steady_field.min(), hi = r.steady_field.max();
        for (const auto& s : r.steady.layers)
            jobs.push_back({prefix + "_T_" + std::string(to_string(s.role)) + ".pgm", [&, s](const std::string& p) {
                                write_pgm(p, layer_image(r.steady_field.values, g, s.layer), g.nx, g.ny, lo, hi, true);
                            }});
        if (r.pdn_grid) {
            double mx = 0;
            for (double d : r.pdn_drop) mx = std::max(mx, d * 1e3);
            for (int pl = 0; pl < r.pdn_grid->planes(); ++pl)
                jobs.push_back({prefix + "_drop_" + std::string(to_string(r.pdn_grid->plane_role[pl])) + ".pgm",
                                [&, pl, mx](const std::string& p) {
                                    write_pgm(p, plane_values_mv(pl), r.pdn_grid->nx, r.pdn_grid->ny, 0.0, mx, true, "mv");
                                }});
        }
        break;
    }
    case ExportFormat::Text:
        jobs.push_back({prefix + "_report.json", [&](const std::string& p) {
                            auto out = open_output(p, true);
                            out << report_text(r);
                            if (!out) throw IoError(p, "write failed");
                        }});
        break;
    }

    if (!force)
        for (const auto& j : jobs)
            if (std::filesystem::exists(j.path))
                throw IoError(j.path, "file exists (use --force to overwrite)");
    if (auto dir = std::filesystem::path(prefix).parent_path(); !dir.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(dir, ec);
        if (ec)
            throw IoError(dir.string(), "cannot create output directory: " + ec.message());
    }
    std::vector<std::string> manifest;
    for (const auto& j : jobs) {
        j.write(j.path);
        manifest.push_back(j.path);
    }
    return manifest;
}

} // namespace stackemu
