// stackemu: command-line front end for the 3D stack emulator.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stackemu/stackemu.hpp"

namespace {

struct Options {
    std::vector<std::string> configs;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool deterministic = false;
    bool force = false;
};

int exit_code(stackemu::ErrorKind k) {
    switch (k) {
    case stackemu::ErrorKind::Validation: return 1;
    case stackemu::ErrorKind::Numerical: return 2;
    case stackemu::ErrorKind::Io: return 3;
    }
    return 1;
}

void add_common(CLI::App* cmd, Options& o, bool many_configs = false) {
    auto* c = cmd->add_option("--config", o.configs, many_configs ? "scenario files (repeatable)" : "scenario file")
                  ->required();
    if (!many_configs)
        c->expected(1);
    cmd->add_option("--out", o.out, "output path prefix");
    cmd->add_option("--seed", o.seed, "override the scenario seed");
    cmd->add_flag("--deterministic", o.deterministic, "fixed-order reductions, no solver threading");
    cmd->add_flag("--force", o.force, "overwrite existing output files");
}

stackemu::Scenario load(const std::string& path, const Options& o) {
    auto sc = stackemu::run_stage("config", [&] { return stackemu::load_scenario(path); });
    if (o.seed)
        sc.seed = *o.seed;
    if (o.deterministic)
        sc.solve.deterministic = true;
    return sc;
}

void print_section(const stackemu::ScenarioReport& r, const char* key) {
    auto body = stackemu::report_body(r);
    nlohmann::ordered_json doc;
    doc["scenario"] = body["scenario"];
    doc[key] = body[key];
    std::cout << doc.dump(2) << "\n";
}

void write_exports(const stackemu::ScenarioReport& r, const Options& o, std::vector<stackemu::ExportFormat> formats) {
    if (o.out.empty())
        return;
    for (auto f : formats)
        for (const auto& p : stackemu::export_report(r, f, o.out, o.force))
            std::cerr << "wrote " << p << "\n";
}

void require(bool ok, const std::string& what) {
    if (!ok)
        throw stackemu::StageError("config", stackemu::ErrorKind::Validation, what);
}

} // namespace

int main(int argc, char** argv) {
    using namespace stackemu;
    CLI::App app{"stackemu: thermal, power-delivery and reliability emulation of 3D-stacked dies"};
    app.require_subcommand(1);
    Options o;

    auto* validate = app.add_subcommand("validate", "check a scenario file and print any violations");
    auto* steady = app.add_subcommand("steady", "steady-state thermal solve");
    auto* transient = app.add_subcommand("transient", "transient run with the configured policy");
    auto* place = app.add_subcommand("place-sensors", "greedy sensor placement");
    auto* pdn = app.add_subcommand("pdn", "power-delivery IR drop and droop");
    auto* compare = app.add_subcommand("compare", "run several scenarios and tabulate them");
    auto* report = app.add_subcommand("report", "full pipeline with all exports");
    for (auto* c : {validate, steady, transient, place, pdn, report})
        add_common(c, o);
    add_common(compare, o, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*validate) {
            const auto sc = load(o.configs.front(), o);
            std::cout << "ok: " << sc.name << " (" << sc.stack.layers.size() << " layers, config " << sc.config_hash
                      << ")\n";
            return 0;
        }
        if (*compare) {
            require(o.configs.size() >= 2, "compare needs at least two --config files");
            std::vector<Scenario> scs;
            for (const auto& c : o.configs)
                scs.push_back(load(c, o));
            const auto rows = run_stage("compare", [&] { return compare_scenarios(scs); });
            const auto table = comparison_text(rows);
            std::cout << table;
            if (!o.out.empty()) {
                run_stage("export", [&] {
                    const std::string path = o.out + "_compare.txt";
                    if (!o.force && std::filesystem::exists(path))
                        throw IoError(path, "file exists (use --force to overwrite)");
                    auto f = open_output(path, true);
                    f << table;
                    std::cerr << "wrote " << path << "\n";
                    return 0;
                });
            }
            return 0;
        }

        auto sc = load(o.configs.front(), o);
        if (*steady) {
            sc.transient.reset();
            sc.policy.reset();
            sc.sensors.reset();
            sc.pdn.reset();
            sc.reliability.reset();
            const auto r = run_scenario(sc);
            print_section(r, "steady");
            run_stage("export", [&] { write_exports(r, o, {ExportFormat::Csv, ExportFormat::Pgm}); return 0; });
        } else if (*transient) {
            require(sc.transient.has_value(), "transient: scenario has no transient section");
            sc.pdn.reset();
            sc.reliability.reset();
            const auto r = run_scenario(sc);
            print_section(r, "transient");
            run_stage("export", [&] { write_exports(r, o, {ExportFormat::Csv}); return 0; });
        } else if (*place) {
            require(sc.sensors.has_value(), "place-sensors: scenario has no sensors section");
            sc.transient.reset();
            sc.policy.reset();
            sc.pdn.reset();
            sc.reliability.reset();
            const auto r = run_scenario(sc);
            print_section(r, "sensors");
            run_stage("export", [&] { write_exports(r, o, {ExportFormat::Csv}); return 0; });
        } else if (*pdn) {
            require(sc.pdn.has_value(), "pdn: scenario has no pdn section");
            sc.transient.reset();
            sc.policy.reset();
            sc.sensors.reset();
            sc.reliability.reset();
            const auto r = run_scenario(sc);
            print_section(r, "pdn");
            run_stage("export", [&] { write_exports(r, o, {ExportFormat::Csv, ExportFormat::Pgm}); return 0; });
        } else if (*report) {
            const auto r = run_scenario(sc);
            std::cout << report_text(r);
            run_stage("export", [&] {
                write_exports(r, o, {ExportFormat::Csv, ExportFormat::Pgm, ExportFormat::Text});
                return 0;
            });
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (auto* ic = dynamic_cast<const InvalidConfiguration*>(&e))
            for (const auto& d : ic->details())
                std::cerr << "  " << d << "\n";
        return exit_code(classify(e));
    }
}
