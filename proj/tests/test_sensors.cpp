#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <functional>
#include <numeric>

#include "support.hpp"

using namespace stackemu;

namespace {

struct Fixture {
    StackConfig cfg = preset_stack(2);
    VoxelGrid grid = discretize(cfg, 16, 8, 1);
    DiscreteSystem sys = assemble(grid, cfg);

    TemperatureField solve(const PowerMap& m) const { return solve_steady(sys, power_density_field(m, grid, 0)); }
};

// Gaussian bump centred on cell (cx, cy) of the SP heat slab.
TemperatureField gaussian_field(const VoxelGrid& g, int cx, int cy, double amplitude, double width_mm) {
    TemperatureField f{g.nx, g.ny, g.nz, std::vector<double>(g.size(), 25.0), std::nullopt};
    const int iz = g.heat_slab(1);
    for (int iy = 0; iy < g.ny; ++iy)
        for (int ix = 0; ix < g.nx; ++ix) {
            const double dx = (ix - cx) * g.dx_mm(), dy = (iy - cy) * g.dy_mm();
            f.values[g.index(ix, iy, iz)] = 25.0 + amplitude * std::exp(-(dx * dx + dy * dy) / (2 * width_mm * width_mm));
        }
    return f;
}

SensorSite cell_center(const VoxelGrid& g, int layer, int ix, int iy) {
    return {layer, (ix + 0.5) * g.dx_mm(), (iy + 0.5) * g.dy_mm()};
}

} // namespace

TEST_CASE("noiseless unquantized reading is the voxel value", "[sensors]") {
    Fixture fx;
    const auto T = fx.solve(testsupport::uniform_power(fx.cfg, 1.5));
    SensorNetwork net;
    net.sensors.push_back({{1, 3.3, 2.1}, 0.0, 0.0, 1e-3});
    net.sensors.push_back({{3, 11.9, 5.9}, 0.0, 0.0, 1e-3});
    const auto r = read_sensors(net, T, fx.grid, 0.5);
    CHECK(r[0] == T.values[fx.grid.index(4, 2, fx.grid.heat_slab(1))]);
    CHECK(r[1] == T.values[fx.grid.index(15, 7, fx.grid.heat_slab(3))]);
}

TEST_CASE("quantization rounds to the nearest step", "[sensors]") {
    CHECK(quantize(30.12, 0.25) == 30.0);
    CHECK(quantize(30.13, 0.25) == 30.25);
    CHECK(quantize(0.125, 0.25) == 0.25);
    CHECK(quantize(-0.125, 0.25) == -0.25);
    CHECK(quantize(1.2345, 0.0) == 1.2345);

    Fixture fx;
    TemperatureField f{fx.grid.nx, fx.grid.ny, fx.grid.nz, std::vector<double>(fx.grid.size(), 30.12), std::nullopt};
    SensorNetwork net;
    net.sensors.push_back({{1, 1, 1}, 0.0, 0.25, 1e-3});
    CHECK(read_sensors(net, f, fx.grid, 0)[0] == 30.0);
}

TEST_CASE("readings are reproducible per seed and sample", "[sensors]") {
    Fixture fx;
    const auto T = fx.solve(testsupport::uniform_power(fx.cfg, 1.0));
    SensorNetwork net;
    net.rng_seed = 42;
    for (int k = 0; k < 5; ++k)
        net.sensors.push_back({{1, 1.0 + 2 * k, 3.0}, 0.5, 0.0, 1e-3});
    const auto a = read_sensors(net, T, fx.grid, 0.0105);
    CHECK(read_sensors(net, T, fx.grid, 0.0105) == a);
    CHECK(read_sensors(net, T, fx.grid, 0.0101) == a);  // same sample index
    CHECK(read_sensors(net, T, fx.grid, 0.0115) != a);
    net.rng_seed = 43;
    CHECK(read_sensors(net, T, fx.grid, 0.0105) != a);
}

TEST_CASE("noise has the configured spread", "[sensors][property]") {
    double s = 0, s2 = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const double v = sensor_noise(7, static_cast<std::size_t>(i % 13), i, 0.5);
        s += v;
        s2 += v * v;
    }
    const double mean = s / n, sd = std::sqrt(s2 / n - mean * mean);
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(sd - 0.5) < 0.02);
    CHECK(sensor_noise(7, 0, 0, 0.0) == 0.0);
}

TEST_CASE("site validation", "[sensors]") {
    Fixture fx;
    TemperatureField f{fx.grid.nx, fx.grid.ny, fx.grid.nz, std::vector<double>(fx.grid.size(), 25.0), std::nullopt};
    SensorNetwork net;
    net.sensors.push_back({{1, 12.5, 1}, 0.0, 0.0, 1e-3});
    CHECK_THROWS_AS(read_sensors(net, f, fx.grid, 0), InvalidArgument);
    net.sensors[0].location = {7, 1, 1};
    CHECK_THROWS_AS(read_sensors(net, f, fx.grid, 0), InvalidArgument);
    net.sensors[0].location = {1, 1, 1};
    net.sensors.push_back({{1, 1, 1}, 0.0, 0.0, 1e-3});
    CHECK_THROWS_AS(check_network(net, fx.grid), InvalidArgument);
}

TEST_CASE("reconstruction", "[sensors]") {
    Fixture fx;
    std::mt19937_64 rng(1);
    const auto T = fx.solve(testsupport::random_power(fx.cfg, rng));
    SECTION("a sensor on every cell of every layer sees the true max") {
        std::vector<SensorSite> all;
        for (int l = 0; l < fx.grid.layer_count(); ++l)
            for (int iy = 0; iy < fx.grid.ny; ++iy)
                for (int ix = 0; ix < fx.grid.nx; ++ix)
                    all.push_back(cell_center(fx.grid, l, ix, iy));
        const auto net = ideal_network(all);
        const auto rec = reconstruct_field(net, read_sensors(net, T, fx.grid, 0), fx.grid.layer_count());
        CHECK(*rec.hotspot == T.max());
    }
    SECTION("layers without sensors are unobserved") {
        const auto net = ideal_network({{1, 6, 3}});
        const auto rec = reconstruct_field(net, read_sensors(net, T, fx.grid, 0), fx.grid.layer_count());
        CHECK(rec.layer_max[1].has_value());
        CHECK_FALSE(rec.layer_max[3].has_value());
        CHECK_THROWS_AS(reconstruct_field(net, {}, fx.grid.layer_count()), InvalidArgument);
    }
    SECTION("underestimate grows with distance from a Gaussian hotspot") {
        const auto g = gaussian_field(fx.grid, 8, 4, 10.0, 1.5);
        double prev = -1;
        for (int d = 0; d < 8; ++d) {
            const auto net = ideal_network({cell_center(fx.grid, 1, 8 - d, 4)});
            const double under = g.max() - *reconstruct_field(net, read_sensors(net, g, fx.grid, 0), 5).hotspot;
            CHECK(under >= 0);
            CHECK(under > prev);
            prev = under;
        }
    }
    SECTION("noiseless estimates never exceed the truth") {
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<SensorSite> sites;
            std::set<SensorSite> seen;
            for (int k = 0; k < 6; ++k) {
                const SensorSite s = cell_center(fx.grid, rng() % 2 ? 1 : 3, static_cast<int>(rng() % 16),
                                                 static_cast<int>(rng() % 8));
                if (seen.insert(s).second)
                    sites.push_back(s);
            }
            const auto net = ideal_network(sites);
            CHECK(*reconstruct_field(net, read_sensors(net, T, fx.grid, 0), 5).hotspot <= T.max());
        }
    }
}

TEST_CASE("hotspot error", "[sensors]") {
    Fixture fx;
    const auto g = gaussian_field(fx.grid, 5, 2, 8.0, 1.0);
    CHECK(hotspot_error({cell_center(fx.grid, 1, 5, 2)}, {g}, fx.grid)->max == 0.0);
    CHECK_FALSE(hotspot_error({}, {g}, fx.grid).has_value());
    TemperatureField flat{fx.grid.nx, fx.grid.ny, fx.grid.nz, std::vector<double>(fx.grid.size(), 31.0), std::nullopt};
    const auto e = hotspot_error({{3, 2, 2}, {1, 9, 1}}, {flat, flat}, fx.grid);
    CHECK(e->mean == 0.0);
    CHECK(e->max == 0.0);
    CHECK_THROWS_AS(hotspot_error({{3, 2, 2}}, {}, fx.grid), InvalidArgument);
}

TEST_CASE("greedy placement", "[sensors]") {
    Fixture fx;
    const auto cands = default_candidates(fx.grid);
    REQUIRE(cands.size() == 64);
    std::mt19937_64 rng(77);
    std::vector<TemperatureField> training;
    for (int k = 0; k < 4; ++k)
        training.push_back(fx.solve(testsupport::random_power(fx.cfg, rng)));

    SECTION("one hotspot, one sensor: the nearest candidate wins") {
        const auto g = gaussian_field(fx.grid, 13, 5, 10.0, 1.2);  // hotspot at (10.125, 4.125) mm
        const auto p = place_sensors_greedy(cands, 1, {g}, fx.grid);
        double best = 1e9;
        std::size_t nearest = 0;
        for (std::size_t c = 0; c < cands.size(); ++c) {
            if (cands[c].layer != 1)
                continue;
            const double d = std::hypot(cands[c].x_mm - 10.125, cands[c].y_mm - 4.125);
            if (d < best) {
                best = d;
                nearest = c;
            }
        }
        CHECK(p.chosen == std::vector<int>{static_cast<int>(nearest)});
    }
    SECTION("objective is nonincreasing in K and floors at the full set") {
        double prev = std::numeric_limits<double>::infinity();
        for (int K : {1, 2, 3, 5, 8, 16, 64}) {
            const auto p = place_sensors_greedy(cands, K, training, fx.grid);
            CHECK(static_cast<int>(p.sites.size()) == K);
            CHECK(p.objective <= prev);
            prev = p.objective;
        }
        std::vector<int> all(cands.size());
        std::iota(all.begin(), all.end(), 0);
        std::vector<double> tm;
        for (const auto& f : training) tm.push_back(f.max());
        CHECK(prev == placement_objective(all, candidate_values(cands, training, fx.grid), tm));
    }
    SECTION("deterministic") {
        CHECK(place_sensors_greedy(cands, 4, training, fx.grid).chosen ==
              place_sensors_greedy(cands, 4, training, fx.grid).chosen);
    }
    SECTION("ties go to the lowest index") {
        TemperatureField flat{fx.grid.nx, fx.grid.ny, fx.grid.nz, std::vector<double>(fx.grid.size(), 30.0),
                              std::nullopt};
        CHECK(place_sensors_greedy(cands, 3, {flat}, fx.grid).chosen == std::vector<int>{0, 1, 2});
    }
    SECTION("argument checks") {
        CHECK_THROWS_AS(place_sensors_greedy(cands, 0, training, fx.grid), InvalidArgument);
        CHECK_THROWS_AS(place_sensors_greedy(cands, 1, {}, fx.grid), InvalidArgument);
        CHECK_THROWS_AS(place_sensors_greedy(cands, 65, training, fx.grid), InvalidArgument);
    }
}

TEST_CASE("greedy is close to the exhaustive optimum on small instances", "[sensors][property]") {
    Fixture fx;
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 10; ++trial) {
        auto all = default_candidates(fx.grid);
        std::shuffle(all.begin(), all.end(), rng);
        std::vector<SensorSite> cands(all.begin(), all.begin() + 12);
        std::vector<TemperatureField> training;
        for (int k = 0; k < 3; ++k)
            training.push_back(fx.solve(testsupport::random_power(fx.cfg, rng)));
        const auto vals = candidate_values(cands, training, fx.grid);
        std::vector<double> tm;
        for (const auto& f : training) tm.push_back(f.max());
        for (int K = 1; K <= 3; ++K) {
            double opt = std::numeric_limits<double>::infinity();
            std::vector<int> pick;
            std::function<void(int)> rec = [&](int start) {
                if (static_cast<int>(pick.size()) == K) {
                    opt = std::min(opt, placement_objective(pick, vals, tm));
                    return;
                }
                for (int c = start; c < 12; ++c) {
                    pick.push_back(c);
                    rec(c + 1);
                    pick.pop_back();
                }
            };
            rec(0);
            CHECK(place_sensors_greedy(cands, K, training, fx.grid).objective <= 1.2 * opt + 1e-12);
        }
    }
}

TEST_CASE("placement and training field files", "[sensors]") {
    Fixture fx;
    const auto dir = testsupport::scratch_dir("sensors");
    const auto path = (dir / "p.csv").string();
    write_placement_csv(path, {{1, 0.75, 0.1}, {3, 11.25, 5.0}}, false);
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "layer,x_mm,y_mm\n1,0.75,0.1\n3,11.25,5\n");
    CHECK_THROWS_AS(write_placement_csv(path, {}, false), IoError);

    const auto T = fx.solve(testsupport::uniform_power(fx.cfg, 1.0));
    const auto fp = (dir / "train.csv").string();
    write_field_csv(fp, T, fx.grid, false);
    const auto back = read_field_csv(fp, fx.grid);
    CHECK(back.values == T.values);
    CHECK(place_sensors_greedy(default_candidates(fx.grid), 2, {back}, fx.grid).chosen ==
          place_sensors_greedy(default_candidates(fx.grid), 2, {T}, fx.grid).chosen);
}
