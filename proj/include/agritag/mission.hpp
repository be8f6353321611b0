#pragma once

#include "agritag/geo.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace agritag::mission {

struct MissionParams {
    std::vector<geo::GeoPoint> waypoints; // alt_agl_m is the linger altitude
    double cruise_alt_agl_m = 10.0;
    double max_linger_s = 180.0;
    double battery_land_soc = 0.25;
    double safety_margin_m = 1.0;
    geo::BoundaryPolygon boundary;
    int sufficient_packets_per_tag = 1;
};

/// Throws InvariantViolation when the mission contract does not hold.
void validate(const MissionParams& m);

/// Parses the YAML mission file. Throws ParseError or InvariantViolation.
MissionParams load_mission(std::string_view yaml_text);

enum class FlightState { Preflight, Takeoff, Cruise, Descend, Linger, Climb, Land, Done, Abort };

std::string_view to_string(FlightState s);

struct DroneState {
    geo::GeoPoint pos;
    double soc = 1.0;
    bool armed = false;
    bool motors_active = false;
    FlightState state = FlightState::Preflight;
    size_t waypoint_index = 0;
    double linger_elapsed_s = 0.0;

    bool operator==(const DroneState&) const = default;
};

DroneState initial_drone_state(const geo::GeoPoint& home);

enum class BatteryPhase { Ground, Hover, Translate, Climb };

struct BatteryRates {
    double ground = 0.0001;
    double hover = 0.001;
    double translate = 0.0012;
    double climb = 0.0015;

    double rate(BatteryPhase phase) const;
};

double battery_step(double soc, BatteryPhase phase, double dt_s, const BatteryRates& rates = {});

struct FlightConfig {
    double horizontal_speed_mps = 5.0;
    double vertical_speed_mps = 2.0;
    double arrival_tolerance_m = 0.5;
    BatteryRates battery;
};

/// Every expected tag has at least `threshold` stored temperature packets.
bool linger_satisfied(const std::map<uint32_t, int>& collected, const std::set<uint32_t>& expected_tags,
                      int threshold);

struct FsmInputs {
    std::map<uint32_t, int> temperature_packets_per_tag;
    std::set<uint32_t> expected_tags; // tags in range of the current waypoint
    double dt_s = 0.1;
    bool preflight_passed = false;
};

struct Transition {
    FlightState from;
    FlightState to;
};

struct StepResult {
    DroneState drone;
    std::vector<Transition> transitions;
    double commanded_alt_agl_m = 0.0;
};

/// Deterministic flight-plan transition function. Throws InvalidDt for dt_s <= 0.
StepResult fsm_step(const DroneState& d, const MissionParams& m, const FsmInputs& in,
                    const FlightConfig& cfg = {});

/// True for the edges fsm_step is allowed to take (self-loops are not transitions).
bool is_allowed_transition(FlightState from, FlightState to);

bool is_airborne_state(FlightState s);

enum class ViolationKind { OutsideBoundary, LegOutsideBoundary, GroundClearance, RasterCoverage };

std::string_view to_string(ViolationKind k);

struct Violation {
    ViolationKind kind;
    int waypoint_index; // -1 refers to the home position
    std::string detail;
};

/// Pre-takeoff validation of every waypoint (and the legs between them, starting
/// from `home` when given). An empty result means the mission may fly.
std::vector<Violation> preflight_check(const MissionParams& m, const geo::ElevationRaster& r,
                                       const std::optional<geo::GeoPoint>& home = std::nullopt);

} // namespace agritag::mission
