#pragma once

#include "agritag/error.hpp"
#include "agritag/geo.hpp"
#include "agritag/mission.hpp"
#include "agritag/mqtt.hpp"
#include "agritag/pipeline.hpp"
#include "agritag/runlog.hpp"
#include "agritag/scenario.hpp"
#include "agritag/store.hpp"

#include <filesystem>
#include <limits>
#include <set>
#include <memory>
#include <optional>
#include <vector>

namespace agritag::sim {

class PreflightFailed : public Error {
public:
    explicit PreflightFailed(std::vector<mission::Violation> v);
    const std::vector<mission::Violation>& violations() const noexcept { return violations_; }

private:
    std::vector<mission::Violation> violations_;
};

struct RunOptions {
    /// Run decrypt and ingest as separate threads fed by message queues. Results are
    /// identical to the inline schedule.
    bool concurrent_pipeline = false;
    /// Extra publish target (MQTT wire mode); the in-process queue is always used.
    mqtt::MessageSink* wire = nullptr;
    std::optional<std::filesystem::path> store_path;
    std::optional<uint64_t> seed;
    size_t store_capacity = std::numeric_limits<size_t>::max();
    /// Flight mode logs a pose every this many steps (transitions are always logged).
    int pose_every_steps = 10;
};

struct RunResult {
    RunMode mode = RunMode::Flight;
    RunLog log;
    std::unique_ptr<store::TelemetryStore> store;
    pipeline::ServiceMetrics metrics;
    std::optional<mission::DroneState> final_drone;
    std::vector<mission::Transition> transitions;
};

/// Tags whose activation range reaches the linger point of `waypoint`.
std::set<uint32_t> tags_in_range(const ScenarioConfig& sc, const geo::GeoPoint& waypoint);

/// Fixed-step simulation of drone, tags, links and the backend pipeline.
/// Flight mode needs `mission` and `raster`; test-stand and scripted modes ignore them.
/// Throws PreflightFailed or ConfigError.
RunResult run(const ScenarioConfig& sc, const mission::MissionParams* mission, const geo::ElevationRaster* raster,
              const RunOptions& opt = {});

} // namespace agritag::sim
