#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "stackemu/pdn.hpp"
#include "stackemu/power.hpp"
#include "stackemu/reliability.hpp"
#include "stackemu/sensors.hpp"
#include "stackemu/sparse.hpp"
#include "stackemu/stack.hpp"

namespace stackemu {

/// Scale a die's tile powers down while its sensors read hot.
struct ThrottlePolicy {
    double trigger_c = 85.0;
    double release_c = 80.0;
    double throttle_factor = 0.5;
};

struct TileRef {
    int layer = 0;
    int tile = 0;
    bool operator==(const TileRef&) const = default;
};

/// Exchange the power profiles of paired tiles while any sensor reads hot.
struct CoreSwapPolicy {
    double trigger_c = 85.0;
    double release_c = 80.0;
    std::vector<std::pair<TileRef, TileRef>> pairs;
};

using DtmPolicy = std::variant<ThrottlePolicy, CoreSwapPolicy>;

inline void check_policy(const DtmPolicy& policy) {
    std::visit(
        [](const auto& p) {
            if (!(p.release_c < p.trigger_c))
                throw InvalidArgument("policy release temperature must be below its trigger temperature");
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, ThrottlePolicy>) {
                if (!(p.throttle_factor > 0 && p.throttle_factor < 1))
                    throw InvalidArgument("throttle_factor must lie in (0, 1)");
            } else {
                std::vector<TileRef> seen;
                for (const auto& [a, b] : p.pairs) {
                    for (const auto& t : {a, b}) {
                        if (std::find(seen.begin(), seen.end(), t) != seen.end())
                            throw InvalidArgument("core swap pairs must be disjoint");
                        seen.push_back(t);
                    }
                }
            }
        },
        policy);
}

struct TransientSpec {
    double t_end = 1.0;   // s
    double dt = 0.01;     // s
    int sample_stride = 1;
    int policy_period = 10;  // steps between policy evaluations
    bool start_from_steady = false;
};

struct SensorSetup {
    std::vector<SensorSpec> fixed;                 // explicitly placed sensors
    int greedy_count = 0;                          // extra sensors placed greedily
    std::optional<std::vector<SensorSite>> candidates;  // default: tile centers
    std::vector<std::string> training_csv;
    double noise_sigma = 0.5;
    double quantization_step = 0.25;
    double sample_period = 1e-3;
};

struct PdnSetup {
    PdnParams params;
    std::optional<int> aggressor_layer;
    double aggressor_step = 0.01;  // A per node
};

/// A fully resolved scenario, ready to run.
struct Scenario {
    std::string name = "scenario";
    StackConfig stack;
    int nx = 32, ny = 16, sub_slabs = 1;
    PowerMap power;
    std::optional<SensorSetup> sensors;
    std::optional<PdnSetup> pdn;
    std::optional<ReliabilityParams> reliability;
    SolveOptions solve;
    std::optional<TransientSpec> transient;
    std::optional<DtmPolicy> policy;
    std::uint64_t seed = 0;
    std::string config_hash;  // of the source document
};

} // namespace stackemu
