#pragma once

#include "agritag/geo.hpp"
#include "agritag/mission.hpp"
#include "agritag/pipeline.hpp"
#include "agritag/rf.hpp"
#include "agritag/tag.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agritag::sim {

/// Piecewise-linear ambient temperature over simulated time, held constant past the ends.
struct AmbientSchedule {
    struct Point {
        double t_s;
        double temp_c;
    };
    std::vector<Point> points{{0.0, 24.0}};

    double at(double t_s) const;
};

enum class PhoneMode { InPayload, OnTop, OnTable, Default };

std::string_view to_string(PhoneMode m);

enum class InterferenceTarget { Gateway, TagLink };

struct InterferenceConfig {
    bool enabled = true;
    double power_dbm_at_ref = -50.0;
    double ref_m = 0.15;
    double decay_exp = 2.0;
    InterferenceTarget target = InterferenceTarget::Gateway;
};

/// Phone mount offsets from the motor noise source (metres east, north, up).
inline constexpr double kInPayloadOffsetM = 0.15;
inline constexpr double kOnTopOffsetM = 0.30;
inline constexpr double kOnTableDefaultM = 3.0;

struct ScriptPoint {
    double t_s;
    geo::GeoPoint pos;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::vector<tag::TagConfig> tags;
    AmbientSchedule ambient_c;

    rf::RadioParams drone_radios = rf::default_harvest_radio(); // 918 MHz harvest emitter
    rf::RadioParams tag_radio = rf::default_tag_radio();        // tag -> bridge advertisements
    pipeline::UplinkConfig uplink;                              // phone cellular link

    InterferenceConfig interference;
    PhoneMode phone_mode = PhoneMode::Default;
    double on_table_dist_m = kOnTableDefaultM;
    std::optional<std::array<double, 3>> phone_offset_m; // overrides phone_mode geometry

    std::optional<bool> armed_override; // test stand: hold at `stand`, motors per flag
    geo::GeoPoint stand;
    geo::GeoPoint home;
    std::vector<ScriptPoint> manual_path; // scripted hover, motors running

    double duration_s = 180.0;
    uint64_t seed = 1;
    double dt_s = 0.1;

    std::string bridge_id = "br01";
    std::string gateway_id = "gw01";
    double expiry_window_s = pipeline::kDefaultExpiryWindowS;
    double dedup_window_s = 10.0;

    mission::FlightConfig flight;

    /// East/north/up offset of the phone from the drone body for the configured mode.
    std::array<double, 3> phone_offset() const;
};

/// Throws ConfigError when the scenario contract does not hold.
void validate(const ScenarioConfig& s);

/// Parses a YAML scenario file. Throws ConfigError (with line when available).
ScenarioConfig load_scenario(std::string_view yaml_text);

enum class RunMode { Flight, TestStand, Scripted };

RunMode mode_of(const ScenarioConfig& s);
std::string_view to_string(RunMode m);

} // namespace agritag::sim
