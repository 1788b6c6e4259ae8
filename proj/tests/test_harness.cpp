#include "support.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <stackemu/stackemu.hpp>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

using namespace stackemu;
using Catch::Approx;
using json = nlohmann::json;

namespace {

json small_doc() {
    return json::parse(R"({
      "name": "small",
      "seed": 3,
      "stack": {"preset": 2},
      "grid": {"nx": 12, "ny": 6},
      "power": {"layers": [{"layer": "SP", "uniform": {"constant": 2.0}},
                           {"layer": "S0", "tiles": [{"tile": 3, "profile": {"constant": 8.0}}]}]}
    })");
}

json throttle_doc(double trigger) {
    auto d = small_doc();
    d["power"]["layers"][0]["tiles"] = json::array({json{{"tile", 10}, {"profile", {{"constant", 60.0}}}}});
    d["sensors"] = {{"count", 3}, {"noise_sigma", 0.2}, {"quantization_step", 0.125}};
    d["transient"] = {{"t_end", 0.4}, {"dt", 0.005}, {"policy_period", 4}};
    d["policy"] = {{"throttle", {{"trigger_c", trigger}, {"release_c", trigger - 1.0}, {"factor", 0.3}}}};
    return d;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

int run_cli(const std::string& args) {
    const std::string cmd = std::string("\"") + STACKEMU_CLI + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<int> sensor_layers(const ScenarioReport& r) {
    std::vector<int> out;
    for (const auto& s : r.sensors->sites)
        out.push_back(s.layer);
    return out;
}

} // namespace

TEST_CASE("config parsing rejects unknown keys and accepts comments", "[config]") {
    auto d = small_doc();
    d["_comment"] = "free text";
    d["stack"]["_comment_2"] = "also fine";
    REQUIRE_NOTHROW(parse_scenario(d));

    auto bad = small_doc();
    bad["grid"]["nz"] = 3;
    REQUIRE_THROWS_AS(parse_scenario(bad), InvalidConfiguration);
    bad = small_doc();
    bad["power"]["layers"][0]["unifrom"] = 1;
    REQUIRE_THROWS_AS(parse_scenario(bad), InvalidConfiguration);
}

TEST_CASE("layer references accept role names and indices", "[config]") {
    auto by_role = parse_scenario(small_doc());
    auto d = small_doc();
    d["power"]["layers"][0]["layer"] = 1;
    d["power"]["layers"][1]["layer"] = 3;
    auto by_index = parse_scenario(d);
    REQUIRE(tile_densities(by_role.power, 0.0) == tile_densities(by_index.power, 0.0));

    d["power"]["layers"][0]["layer"] = "BondInterface";
    REQUIRE_THROWS_AS(parse_scenario(d), InvalidConfiguration);
    d["power"]["layers"][0]["layer"] = "SN1";
    REQUIRE_THROWS_AS(parse_scenario(d), InvalidConfiguration);
}

TEST_CASE("a policy requires sensors and a transient section", "[config]") {
    auto d = throttle_doc(30);
    REQUIRE_NOTHROW(parse_scenario(d));
    auto no_sensors = d;
    no_sensors.erase("sensors");
    REQUIRE_THROWS_AS(parse_scenario(no_sensors), InvalidConfiguration);
    auto no_transient = d;
    no_transient["transient"] = "steady-only";
    REQUIRE_THROWS_AS(parse_scenario(no_transient), InvalidConfiguration);
    auto inverted = d;
    inverted["policy"]["throttle"]["release_c"] = 31.0;
    REQUIRE_THROWS(parse_scenario(inverted));
}

TEST_CASE("invalid stacks surface every violation", "[config]") {
    auto d = small_doc();
    d["stack"] = json::parse(R"({"layers": [
        {"role": "SP", "thickness_um": -5},
        {"role": "S0", "thickness_um": 500}]})");
    d.erase("power");
    try {
        parse_scenario(d);
        FAIL("expected InvalidConfiguration");
    } catch (const InvalidConfiguration& e) {
        REQUIRE(!e.details().empty());
    }
}

TEST_CASE("trace files resolve relative to the config file", "[config]") {
    const auto dir = testsupport::scratch_dir("trace_rel");
    std::filesystem::create_directories(dir / "traces");
    write_text(dir / "traces" / "p.csv", "t_seconds,power_w_per_cm2\n0,1\n0.1,3\n");
    auto d = small_doc();
    d["power"]["layers"][0]["tiles"] = json::array({json{{"tile", 0}, {"profile", {{"trace_csv", "traces/p.csv"}}}}});
    write_text(dir / "scenario.json", d.dump());
    const auto sc = load_scenario((dir / "scenario.json").string());
    REQUIRE(tile_densities(sc.power, 0.05)[1][0] == Approx(2.0));

    d["power"]["layers"][0]["tiles"][0]["profile"]["trace_csv"] = "traces/missing.csv";
    write_text(dir / "scenario.json", d.dump());
    REQUIRE_THROWS_AS(load_scenario((dir / "scenario.json").string()), IoError);
}

TEST_CASE("load errors distinguish IO from malformed content", "[config]") {
    const auto dir = testsupport::scratch_dir("load_errors");
    REQUIRE_THROWS_AS(load_scenario((dir / "nope.json").string()), IoError);
    write_text(dir / "broken.json", "{ \"name\": ");
    REQUIRE_THROWS_AS(load_scenario((dir / "broken.json").string()), InvalidConfiguration);
}

TEST_CASE("shipped configs and presets load", "[config]") {
    REQUIRE(config::preset_library(config::default_preset_library()).size() >= 6);
    int count = 0;
    for (const auto& e : std::filesystem::directory_iterator(STACKEMU_CONFIG_DIR)) {
        if (e.path().extension() != ".json")
            continue;
        INFO(e.path());
        REQUIRE_NOTHROW(load_scenario(e.path().string()));
        ++count;
    }
    REQUIRE(count >= 5);
}

TEST_CASE("the config hash tracks the document", "[config]") {
    auto a = parse_scenario(small_doc());
    auto b = parse_scenario(small_doc());
    REQUIRE(a.config_hash == b.config_hash);
    auto d = small_doc();
    d["seed"] = 4;
    REQUIRE(parse_scenario(d).config_hash != a.config_hash);
}

TEST_CASE("zero power stays at ambient with no events", "[harness]") {
    auto d = throttle_doc(26.0);
    d["power"] = json::object();
    const auto sc = parse_scenario(d);
    const auto r = run_scenario(sc);
    REQUIRE(r.steady_field.max() == Approx(sc.stack.ambient_temperature).margin(1e-9));
    REQUIRE(r.steady_field.min() == Approx(sc.stack.ambient_temperature).margin(1e-9));
    REQUIRE(r.transient->events.empty());
    REQUIRE(r.final_field->max() == Approx(sc.stack.ambient_temperature).margin(1e-9));
}

TEST_CASE("steady section balances power against boundary flow", "[harness]") {
    const auto r = run_scenario(parse_scenario(small_doc()));
    REQUIRE(r.steady.total_power > 0);
    REQUIRE(r.steady.boundary_flow == Approx(r.steady.total_power).epsilon(1e-6));
    REQUIRE(r.steady.layers.size() == 2);
    REQUIRE(!r.sensors);
    REQUIRE(!r.transient);
}

TEST_CASE("transient sampling times are exact and end at t_end", "[harness]") {
    auto d = small_doc();
    d["transient"] = {{"t_end", 0.1}, {"dt", 0.01}, {"sample_stride", 3}};
    const auto r = run_scenario(parse_scenario(d));
    const std::vector<double> expect{0.03, 0.06, 0.09, 0.1};
    REQUIRE(r.transient->times.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i)
        REQUIRE(r.transient->times[i] == Approx(expect[i]).margin(1e-12));
    REQUIRE(r.transient->layer_max.size() == expect.size());
}

TEST_CASE("throttling fires and lowers the final reading", "[harness][policy]") {
    auto unmanaged_doc = throttle_doc(30.0);
    unmanaged_doc["policy"] = "none";
    const auto unmanaged = run_scenario(parse_scenario(unmanaged_doc));
    const double peak = *unmanaged.transient->final_max_reading;
    REQUIRE(peak > 31.0);

    const auto managed = run_scenario(parse_scenario(throttle_doc(30.0)));
    const auto& ev = managed.transient->events;
    REQUIRE(std::count_if(ev.begin(), ev.end(), [](const auto& e) { return e.action == "throttle"; }) >= 1);
    REQUIRE(*managed.transient->final_max_reading < peak);
}

TEST_CASE("events are sound with respect to the logged readings", "[harness][policy]") {
    const auto sc = parse_scenario(throttle_doc(29.5));
    const auto r = run_scenario(sc);
    const auto& th = std::get<ThrottlePolicy>(*sc.policy);
    const auto& tr = *r.transient;
    REQUIRE(!tr.events.empty());
    for (const auto& e : tr.events) {
        auto it = std::find_if(tr.evaluations.begin(), tr.evaluations.end(),
                               [&](const auto& ev) { return ev.time == e.time; });
        REQUIRE(it != tr.evaluations.end());
        REQUIRE(e.reading == it->readings.at(e.sensor));
        REQUIRE(r.sensors->sites.at(e.sensor).layer == e.layer);
        if (e.action == "throttle")
            REQUIRE(e.reading >= th.trigger_c);
        else
            REQUIRE(e.reading < th.release_c);
    }
}

TEST_CASE("policy decisions replay from the logged evaluations", "[harness][policy]") {
    const auto sc = parse_scenario(throttle_doc(29.5));
    const auto r = run_scenario(sc);
    PolicyEngine engine(*sc.policy, sensor_layers(r), r.grid->layer_count());
    std::vector<PolicyEvent> replay;
    for (const auto& ev : r.transient->evaluations)
        for (auto& e : engine.evaluate(ev.time, ev.readings))
            replay.push_back(e);
    REQUIRE(replay.size() == r.transient->events.size());
    for (std::size_t i = 0; i < replay.size(); ++i) {
        REQUIRE(replay[i].time == r.transient->events[i].time);
        REQUIRE(replay[i].action == r.transient->events[i].action);
        REQUIRE(replay[i].layer == r.transient->events[i].layer);
        REQUIRE(replay[i].sensor == r.transient->events[i].sensor);
    }
}

TEST_CASE("core swap exchanges tile powers while active", "[harness][policy]") {
    CoreSwapPolicy cs{30.0, 28.0, {{TileRef{1, 0}, TileRef{3, 2}}}};
    PolicyEngine engine(cs, {1, 3}, 5);
    const std::vector<std::vector<double>> dens{{}, {5, 1}, {}, {0, 0, 9}, {}};
    REQUIRE(engine.apply(dens) == dens);
    auto ev = engine.evaluate(0.1, {31.0, 20.0});
    REQUIRE(ev.size() == 1);
    REQUIRE(ev[0].action == "swap");
    auto swapped = engine.apply(dens);
    REQUIRE(swapped[1][0] == 9);
    REQUIRE(swapped[3][2] == 5);
    REQUIRE(engine.evaluate(0.2, {29.0, 29.5}).empty());
    ev = engine.evaluate(0.3, {27.0, 27.9});
    REQUIRE(ev.size() == 1);
    REQUIRE(ev[0].action == "unswap");
    REQUIRE(ev[0].sensor == 1);
    REQUIRE(engine.apply(dens) == dens);
}

TEST_CASE("throttle hysteresis is per layer", "[harness][policy]") {
    PolicyEngine engine(ThrottlePolicy{30, 28, 0.5}, {1, 1, 3}, 5);
    auto ev = engine.evaluate(0, {29, 31, 35});
    REQUIRE(ev.size() == 2);
    REQUIRE(ev[0].layer == 1);
    REQUIRE(ev[0].sensor == 1);
    REQUIRE(ev[1].layer == 3);
    REQUIRE(engine.evaluate(1, {29, 29, 29}).empty());
    ev = engine.evaluate(2, {27, 27.5, 29});
    REQUIRE(ev.size() == 1);
    REQUIRE(ev[0].action == "release");
    REQUIRE(ev[0].sensor == 1);
    const auto out = engine.apply({{1}, {2}, {3}, {4}, {5}});
    REQUIRE(out == std::vector<std::vector<double>>{{1}, {2}, {3}, {2}, {5}});
    REQUIRE_THROWS_AS(engine.evaluate(3, {1, 2}), InvalidArgument);
}

TEST_CASE("identical inputs give identical report bodies", "[harness]") {
    auto d = throttle_doc(29.5);
    d["pdn"] = {{"aggressor", "SP"}};
    d["reliability"] = json::object();
    const auto sc = parse_scenario(d);
    const auto a = report_body(run_scenario(sc)).dump();
    const auto b = report_body(run_scenario(sc)).dump();
    REQUIRE(a == b);

    auto other = sc;
    other.seed = sc.seed + 1;
    REQUIRE(report_body(run_scenario(other)).dump() != a);
}

TEST_CASE("report text carries provenance and disabled markers", "[harness]") {
    const auto sc = parse_scenario(small_doc());
    const auto doc = json::parse(report_text(run_scenario(sc)));
    REQUIRE(doc["sensors"] == "disabled");
    REQUIRE(doc["transient"] == "steady-only");
    REQUIRE(doc["pdn"] == "disabled");
    REQUIRE(doc["reliability"] == "disabled");
    REQUIRE(doc["provenance"]["config_hash"] == sc.config_hash);
    REQUIRE(doc["provenance"]["seed"] == sc.seed);
    REQUIRE(doc["provenance"]["version"] == version_string);
}

TEST_CASE("throttling never heats any cell relative to the unmanaged run", "[harness][policy][property]") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 8; ++trial) {
        Scenario sc;
        sc.name = "random";
        sc.seed = rng();
        sc.stack = testsupport::random_stack(rng);
        sc.nx = 10;
        sc.ny = 6;
        sc.power = testsupport::random_power(sc.stack, rng, 40.0);
        SensorSetup ss;
        ss.greedy_count = 3;
        ss.noise_sigma = 0.3;
        ss.quantization_step = 0.125;
        sc.sensors = ss;
        sc.transient = TransientSpec{0.2, 0.01, 5, 2, false};

        auto plain = sc;
        const auto base = run_scenario(plain);
        const double trigger = sc.stack.ambient_temperature +
                               0.5 * (*base.transient->final_max_reading - sc.stack.ambient_temperature);
        sc.policy = ThrottlePolicy{trigger, trigger - 0.5, 0.5};
        const auto managed = run_scenario(sc);

        INFO("trial " << trial);
        REQUIRE(*managed.transient->final_max_reading <= *base.transient->final_max_reading);
        const auto& a = managed.final_field->values;
        const auto& b = base.final_field->values;
        for (std::size_t i = 0; i < a.size(); ++i)
            REQUIRE(a[i] <= b[i] + 1e-9);
    }
}

TEST_CASE("compare orders rows by name and reflects the stack", "[compare]") {
    auto two = parse_scenario(small_doc());
    two.name = "b_two";
    auto d4 = small_doc();
    d4["stack"]["preset"] = 4;
    auto four = parse_scenario(d4);
    four.name = "a_four";
    const auto rows = compare_scenarios({two, four});
    REQUIRE(rows.size() == 2);
    REQUIRE(rows[0].name == "a_four");
    REQUIRE(rows[1].name == "b_two");
    REQUIRE(rows[0].layer_max.size() == 4);
    REQUIRE(rows[1].layer_max.size() == 2);

    const auto text = comparison_text(rows);
    REQUIRE(text.find("a_four") < text.find("b_two"));

    REQUIRE_THROWS_AS(compare_scenarios({two}), InvalidArgument);
}

TEST_CASE("compare matches single runs and scales with power", "[compare]") {
    auto a = parse_scenario(small_doc());
    a.name = "base";
    auto dbl = small_doc();
    dbl["power"]["layers"][0]["uniform"]["constant"] = 4.0;
    dbl["power"]["layers"][1]["tiles"][0]["profile"]["constant"] = 16.0;
    auto b = parse_scenario(dbl);
    b.name = "double";
    auto same = a;
    same.name = "copy";
    const auto rows = compare_scenarios({a, b, same});
    const auto& base = rows[0];
    const auto& copy = rows[1];
    const auto& twice = rows[2];
    REQUIRE(base.name == "base");
    REQUIRE(base.max_temperature == copy.max_temperature);
    REQUIRE(base.max_temperature == run_scenario(a).steady_field.max());
    const double amb = a.stack.ambient_temperature;
    REQUIRE(twice.max_temperature - amb == Approx(2 * (base.max_temperature - amb)).epsilon(1e-5));
}

TEST_CASE("worker count honours the environment cap", "[compare]") {
    ::setenv("STACKEMU_THREADS", "1", 1);
    REQUIRE(worker_count() == 1);
    auto a = parse_scenario(small_doc());
    auto b = a;
    b.name = "other";
    REQUIRE(compare_scenarios({a, b}).size() == 2);
    ::setenv("STACKEMU_THREADS", "3", 1);
    REQUIRE(worker_count() == 3);
    ::unsetenv("STACKEMU_THREADS");
    REQUIRE(worker_count() >= 1);
}

TEST_CASE("exports write every artifact and refuse to overwrite", "[export]") {
    auto d = throttle_doc(29.5);
    d["pdn"] = {{"aggressor", "SP"}};
    d["reliability"] = json::object();
    const auto r = run_scenario(parse_scenario(d));
    const auto dir = testsupport::scratch_dir("export");
    const auto prefix = (dir / "nested" / "run").string();

    const auto csv = export_report(r, ExportFormat::Csv, prefix, false);
    REQUIRE(csv.size() == 5);
    for (const auto& p : csv)
        REQUIRE(std::filesystem::exists(p));
    const auto pgm = export_report(r, ExportFormat::Pgm, prefix, false);
    REQUIRE(pgm.size() == 4);
    const auto txt = export_report(r, ExportFormat::Text, prefix, false);
    REQUIRE(txt.size() == 1);
    REQUIRE(json::parse(slurp(txt[0]))["scenario"] == "small");

    std::ifstream img(prefix + "_T_SP.pgm");
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    img >> magic;
    img >> std::ws;
    if (img.peek() == '#') {
        std::string comment;
        std::getline(img, comment);
    }
    img >> w >> h >> maxval;
    REQUIRE(magic == "P2");
    REQUIRE(w == 12);
    REQUIRE(h == 6);
    REQUIRE(maxval == 255);

    REQUIRE_THROWS_AS(export_report(r, ExportFormat::Csv, prefix, false), IoError);
    REQUIRE_NOTHROW(export_report(r, ExportFormat::Csv, prefix, true));
}

TEST_CASE("field CSV export round-trips exactly", "[export]") {
    const auto r = run_scenario(parse_scenario(small_doc()));
    const auto dir = testsupport::scratch_dir("roundtrip");
    export_report(r, ExportFormat::Csv, (dir / "rt").string(), false);
    std::ifstream in(dir / "rt_steady_field.csv");
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    const auto& g = *r.grid;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::vector<std::string> cols;
        std::string c;
        while (std::getline(ss, c, ','))
            cols.push_back(c);
        REQUIRE(cols.size() >= 4);
        const int iz = std::stoi(cols[cols.size() - 4]);
        const int iy = std::stoi(cols[cols.size() - 3]);
        const int ix = std::stoi(cols[cols.size() - 2]);
        REQUIRE(std::stod(cols.back()) == r.steady_field.values[g.index(ix, iy, iz)]);
        ++rows;
    }
    REQUIRE(rows == r.steady_field.values.size());
}

TEST_CASE("error stages classify into exit categories", "[harness]") {
    REQUIRE(classify(IoError("x", "y")) == ErrorKind::Io);
    REQUIRE(classify(InvalidConfiguration("bad")) == ErrorKind::Validation);
    auto d = small_doc();
    d["solve"] = {{"max_iterations", 1}, {"tolerance", 1e-14}};
    try {
        run_scenario(parse_scenario(d));
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        REQUIRE(e.stage() == "steady");
        REQUIRE(e.kind() == ErrorKind::Numerical);
    }
}

TEST_CASE("CLI exit codes", "[cli]") {
    const auto dir = testsupport::scratch_dir("cli");
    const std::string good = std::string(STACKEMU_CONFIG_DIR) + "/two_layer_cpu.json";
    REQUIRE(run_cli("validate --config \"" + good + "\"") == 0);
    REQUIRE(run_cli("steady --config \"" + good + "\"") == 0);

    auto bad = small_doc();
    bad["grid"]["nx"] = 0;
    write_text(dir / "bad.json", bad.dump());
    REQUIRE(run_cli("validate --config \"" + (dir / "bad.json").string() + "\"") == 1);
    REQUIRE(run_cli("steady --config \"" + (dir / "missing.json").string() + "\"") == 3);

    auto stiff = small_doc();
    stiff["solve"] = {{"max_iterations", 1}, {"tolerance", 1e-14}};
    write_text(dir / "stiff.json", stiff.dump());
    REQUIRE(run_cli("steady --config \"" + (dir / "stiff.json").string() + "\"") == 2);

    const std::string out = (dir / "o" / "run").string();
    REQUIRE(run_cli("steady --config \"" + good + "\" --out \"" + out + "\"") == 0);
    REQUIRE(std::filesystem::exists(out + "_steady_field.csv"));
    REQUIRE(run_cli("steady --config \"" + good + "\" --out \"" + out + "\"") == 3);
    REQUIRE(run_cli("steady --config \"" + good + "\" --out \"" + out + "\" --force") == 0);

    REQUIRE(run_cli("compare --config \"" + good + "\"") != 0);
    REQUIRE(run_cli("compare --config \"" + good + "\" --config \"" + std::string(STACKEMU_CONFIG_DIR) +
                    "/four_layer_uniform.json\"") == 0);
}

TEST_CASE("CLI report is reproducible under --deterministic", "[cli]") {
    const auto dir = testsupport::scratch_dir("cli_det");
    const std::string cfg = std::string(STACKEMU_CONFIG_DIR) + "/four_layer_throttle.json";
    for (const char* tag : {"a", "b"}) {
        const std::string cmd = std::string("\"") + STACKEMU_CLI + "\" report --deterministic --seed 11 --config \"" +
                                cfg + "\" > \"" + (dir / tag).string() + "\" 2>/dev/null";
        REQUIRE(std::system(cmd.c_str()) == 0);
    }
    const auto a = json::parse(slurp(dir / "a"));
    const auto b = json::parse(slurp(dir / "b"));
    REQUIRE(a == b);
    REQUIRE(a["provenance"]["seed"] == 11);
    REQUIRE(a["provenance"]["deterministic"] == true);
}
